"""Length-prefixed binary framing for the verification messages.

Frame layout::

    u32 length (big-endian, counts tag + body) | u8 tag | body

Bodies, in field order:

    0x01 AuthRequest  u16 len | utf-8 user_id
    0x02 Challenge    20-byte light params | w (packed n bits) | n x 3 x u16 helper positions
    0x03 Response     z_a (packed n bits)
    0x04 Decision     u8 accept (0 or 1)
    0x05 Abort        u8 reason code

Bit vectors are packed MSB first; their length comes from the session's key
length ``n``, which both endpoints know out of band.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np

from .errors import ProtocolError, ShapeError, ParameterDomainError, CorruptHelperError
from .key_extraction import Bits, HelperData
from .puf_model import PARAMS_NBYTES, LightParams

_LEN = struct.Struct(">I")
MAX_FRAME = 1 << 20


class Tag(enum.IntEnum):
    AUTH_REQUEST = 0x01
    CHALLENGE = 0x02
    RESPONSE = 0x03
    DECISION = 0x04
    ABORT = 0x05


class AbortReason(enum.IntEnum):
    PIN_REJECTED = 1
    CORRUPT_HELPER = 2
    PROTOCOL_VIOLATION = 3
    CHANNEL_FAILURE = 4
    EXHAUSTED = 5


@dataclass(frozen=True)
class AuthRequest:
    user_id: str
    tag = Tag.AUTH_REQUEST


@dataclass(frozen=True)
class ChallengeMsg:
    params: LightParams
    w: Bits
    helper_a: HelperData
    tag = Tag.CHALLENGE


@dataclass(frozen=True)
class ResponseMsg:
    z_a: Bits
    tag = Tag.RESPONSE


@dataclass(frozen=True)
class DecisionMsg:
    accept: bool
    tag = Tag.DECISION


@dataclass(frozen=True)
class AbortMsg:
    reason: AbortReason
    tag = Tag.ABORT


Message = Union[AuthRequest, ChallengeMsg, ResponseMsg, DecisionMsg, AbortMsg]


def _nbytes(n: int) -> int:
    return (n + 7) // 8


def encode_body(msg: Message, n: int) -> bytes:
    if isinstance(msg, AuthRequest):
        raw = msg.user_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ProtocolError("user_id too long")
        return struct.pack(">H", len(raw)) + raw
    if isinstance(msg, ChallengeMsg):
        if len(msg.w) != n or len(msg.helper_a) != n:
            raise ProtocolError(f"challenge fields must carry {n} bits")
        pos = msg.helper_a.positions
        if pos.size and pos.max() > 0xFFFF:
            raise ProtocolError("helper position does not fit in 16 bits")
        return msg.params.to_bytes() + msg.w.to_bytes() + pos.astype(">u2").tobytes()
    if isinstance(msg, ResponseMsg):
        if len(msg.z_a) != n:
            raise ProtocolError(f"response must carry {n} bits")
        return msg.z_a.to_bytes()
    if isinstance(msg, DecisionMsg):
        return bytes([1 if msg.accept else 0])
    if isinstance(msg, AbortMsg):
        return bytes([int(msg.reason)])
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def encode(msg: Message, n: int) -> bytes:
    body = bytes([int(msg.tag)]) + encode_body(msg, n)
    return _LEN.pack(len(body)) + body


def decode_body(tag: int, body: bytes, n: int) -> Message:
    try:
        tag = Tag(tag)
    except ValueError as exc:
        raise ProtocolError(f"unknown message tag 0x{tag:02x}") from exc
    try:
        if tag is Tag.AUTH_REQUEST:
            if len(body) < 2:
                raise ProtocolError("truncated AuthRequest")
            (ln,) = struct.unpack_from(">H", body)
            if len(body) != 2 + ln:
                raise ProtocolError("AuthRequest length mismatch")
            return AuthRequest(body[2:].decode("utf-8"))
        if tag is Tag.CHALLENGE:
            nb = _nbytes(n)
            if len(body) != PARAMS_NBYTES + nb + 6 * n:
                raise ProtocolError(f"Challenge body is {len(body)} bytes, expected {PARAMS_NBYTES + nb + 6 * n}")
            params = LightParams.from_bytes(body[:PARAMS_NBYTES])
            w = Bits.from_bytes(body[PARAMS_NBYTES : PARAMS_NBYTES + nb], n)
            pos = np.frombuffer(body[PARAMS_NBYTES + nb :], dtype=">u2").astype(np.int64).reshape(n, 3)
            return ChallengeMsg(params, w, HelperData(tuple(map(tuple, pos.tolist()))))
        if tag is Tag.RESPONSE:
            return ResponseMsg(Bits.from_bytes(body, n))
        if tag is Tag.DECISION:
            if body not in (b"\x00", b"\x01"):
                raise ProtocolError("Decision body must be a single 0/1 byte")
            return DecisionMsg(body == b"\x01")
        if len(body) != 1:
            raise ProtocolError("Abort body must be one byte")
        return AbortMsg(AbortReason(body[0]))
    except (ShapeError, ParameterDomainError, CorruptHelperError, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, ProtocolError):
            raise
        raise ProtocolError(f"malformed {tag.name} body: {exc}") from exc


def decode(frame: bytes, n: int) -> Message:
    if len(frame) < 5:
        raise ProtocolError("frame shorter than header")
    (ln,) = _LEN.unpack_from(frame)
    if ln != len(frame) - 4:
        raise ProtocolError(f"length prefix {ln} does not match frame of {len(frame) - 4} bytes")
    return decode_body(frame[4], frame[5:], n)


def split_frames(buffer: bytes) -> tuple[list[bytes], bytes]:
    """Cut complete frames off the front of a byte stream."""
    frames = []
    i = 0
    while len(buffer) - i >= 4:
        (ln,) = _LEN.unpack_from(buffer, i)
        if ln < 1 or ln > MAX_FRAME:
            raise ProtocolError(f"implausible frame length {ln}")
        if len(buffer) - i - 4 < ln:
            break
        frames.append(buffer[i : i + 4 + ln])
        i += 4 + ln
    return frames, buffer[i:]


def read_frame(stream: BinaryIO) -> bytes | None:
    """Read one frame from a blocking stream; ``None`` at clean EOF."""
    head = stream.read(4)
    if not head:
        return None
    if len(head) < 4:
        raise ProtocolError("truncated length prefix")
    (ln,) = _LEN.unpack(head)
    if ln < 1 or ln > MAX_FRAME:
        raise ProtocolError(f"implausible frame length {ln}")
    body = stream.read(ln)
    if len(body) != ln:
        raise ProtocolError("truncated frame")
    return head + body
