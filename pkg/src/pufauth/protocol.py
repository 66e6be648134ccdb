"""Verification state machines: local PIN check and one-time-pad token check.

The terminal side reads whatever token is inserted, so the same code serves
the honest user and an impostor.  The verifier removes the chosen row from
its database the moment the challenge is issued, which keeps a row from ever
being served twice even when a session crashes or is aborted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .enrollment import CrpDatabase
from .errors import (
    ChannelError,
    CorruptHelperError,
    DegenerateInputError,
    ExhaustedDatabaseError,
    PinDerivationError,
    ProtocolError,
)
from .key_extraction import Bits, HelperData, Key, Pin, derive_pin, reproduce_key
from .puf_model import P_DEF, LightParams, NoiseModel, TokenDisorder, interrogate
from . import wire
from .wire import AbortMsg, AbortReason, AuthRequest, ChallengeMsg, DecisionMsg, Message, ResponseMsg

TO_VERIFIER = "T>V"
TO_TERMINAL = "V>T"


class TerminalState(enum.Enum):
    AWAIT_PIN = "AwaitPin"
    PIN_VERIFIED = "PinVerified"
    AWAIT_CHALLENGE = "AwaitChallenge"
    RESPONSE_SENT = "ResponseSent"
    ABORTED = "Aborted"


class VerifierState(enum.Enum):
    IDLE = "Idle"
    CHALLENGE_SENT = "ChallengeSent"
    DECIDED = "Decided"


class Outcome(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    ABORT = "abort"


@dataclass
class TerminalSession:
    token: TokenDisorder
    noise: NoiseModel
    n: int = 128
    pin_retry_limit: int = 1
    state: TerminalState = TerminalState.AWAIT_PIN
    failed_attempts: int = 0
    abort_reason: AbortReason | None = None

    def _abort(self, reason: AbortReason) -> None:
        self.state = TerminalState.ABORTED
        self.abort_reason = reason


@dataclass
class VerifierSession:
    n: int
    state: VerifierState = VerifierState.IDLE
    chosen_row_id: int | None = None
    z_b: Bits | None = field(default=None, repr=False)
    outcome: Outcome | None = None
    reason: AbortReason | None = None


def terminal_stage_v1(
    session: TerminalSession,
    typed_pin: Pin,
    p_def: LightParams = P_DEF,
    e1_helper: HelperData | None = None,
) -> bool:
    """Check the typed PIN against the PIN re-derived from the inserted token.

    Runs entirely inside the terminal.  A wrong PIN leaves the session in
    ``AwaitPin`` until the retry limit is used up, then aborts it.
    """
    if session.state is not TerminalState.AWAIT_PIN:
        raise ProtocolError(f"stage V1 not allowed in state {session.state.value}")
    if e1_helper is None:
        raise ProtocolError("stage V1 needs the public E1 helper data")
    try:
        speckle = interrogate(session.token, p_def, session.noise)
        pin = derive_pin(reproduce_key(speckle, e1_helper))
    except (PinDerivationError, CorruptHelperError, DegenerateInputError):
        session._abort(AbortReason.PIN_REJECTED)
        return False
    if pin == typed_pin:
        session.state = TerminalState.PIN_VERIFIED
        return True
    session.failed_attempts += 1
    if session.failed_attempts >= session.pin_retry_limit:
        session._abort(AbortReason.PIN_REJECTED)
    return False


def terminal_request(session: TerminalSession, user_id: str) -> AuthRequest:
    if session.state is not TerminalState.PIN_VERIFIED:
        raise ProtocolError(f"cannot contact the verifier in state {session.state.value}")
    session.state = TerminalState.AWAIT_CHALLENGE
    return AuthRequest(user_id)


@lru_cache(maxsize=1 << 16)
def _verifier_key(token_b: TokenDisorder, params: LightParams, helper_b: HelperData) -> Key:
    # noiseless read of the verifier's own token is a pure function
    return reproduce_key(interrogate(token_b, params, None), helper_b)


def verifier_begin(
    db: CrpDatabase,
    token_b: TokenDisorder,
    rng: np.random.Generator,
    z_b: Bits | None = None,
) -> tuple[ChallengeMsg, VerifierSession]:
    """Pick and consume a random row, then mask a fresh secret with k_A.

    ``z_b`` overrides the fresh secret and exists for tests only.
    """
    row = db.take_random(rng)
    session = VerifierSession(db.n, VerifierState.CHALLENGE_SENT, row.row_id)
    k_b = _verifier_key(token_b, row.params, row.helper_b)
    session.z_b = Bits.random(db.n, rng) if z_b is None else z_b
    w = session.z_b ^ row.joint_key ^ k_b
    return ChallengeMsg(row.params, w, row.helper_a), session


def terminal_respond(session: TerminalSession, msg: Message) -> ResponseMsg | AbortMsg:
    """Unmask the challenge with the key read from the inserted token."""
    if session.state not in (TerminalState.PIN_VERIFIED, TerminalState.AWAIT_CHALLENGE):
        raise ProtocolError(f"cannot respond in state {session.state.value}")
    if not isinstance(msg, ChallengeMsg) or len(msg.w) != session.n or len(msg.helper_a) != session.n:
        session._abort(AbortReason.PROTOCOL_VIOLATION)
        return AbortMsg(AbortReason.PROTOCOL_VIOLATION)
    try:
        k_a = reproduce_key(interrogate(session.token, msg.params, session.noise), msg.helper_a)
    except (CorruptHelperError, DegenerateInputError):
        session._abort(AbortReason.CORRUPT_HELPER)
        return AbortMsg(AbortReason.CORRUPT_HELPER)
    session.state = TerminalState.RESPONSE_SENT
    return ResponseMsg(k_a ^ msg.w)


def verifier_decide(session: VerifierSession, msg: Message) -> DecisionMsg:
    """Accept iff the returned vector equals the secret bit for bit."""
    if session.state is not VerifierState.CHALLENGE_SENT:
        raise ProtocolError(f"cannot decide in state {session.state.value}")
    session.state = VerifierState.DECIDED
    if isinstance(msg, AbortMsg):
        session.outcome, session.reason = Outcome.ABORT, msg.reason
        return DecisionMsg(False)
    if not isinstance(msg, ResponseMsg) or len(msg.z_a) != session.n:
        session.outcome, session.reason = Outcome.REJECT, AbortReason.PROTOCOL_VIOLATION
        return DecisionMsg(False)
    accept = msg.z_a == session.z_b
    session.outcome = Outcome.ACCEPT if accept else Outcome.REJECT
    return DecisionMsg(accept)


class LoopbackChannel:
    """In-process transport that still pushes every message through the wire codec."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.frames_sent = 0

    def deliver(self, direction: str, frame: bytes) -> bytes | None:
        return frame

    def transmit(self, direction: str, msg: Message) -> Message:
        frame = wire.encode(msg, self.n)
        self.frames_sent += 1
        out = self.deliver(direction, frame)
        if out is None:
            raise ChannelError(f"frame dropped on {direction}")
        return wire.decode(out, self.n)


Responder = Callable[[ChallengeMsg], "ResponseMsg | AbortMsg"]


@dataclass
class SessionResult:
    outcome: Outcome
    verifier: VerifierSession | None = None
    challenge: ChallengeMsg | None = None
    response: Message | None = None


def run_v2(
    db: CrpDatabase,
    token_b: TokenDisorder,
    responder: Responder,
    channel: LoopbackChannel,
    rng: np.random.Generator,
    request: AuthRequest | None = None,
) -> SessionResult:
    """One challenge-response exchange between a terminal endpoint and the verifier."""
    vs = None
    try:
        req = channel.transmit(TO_VERIFIER, request or AuthRequest("alice"))
        if not isinstance(req, AuthRequest):
            return SessionResult(Outcome.ABORT)
        try:
            challenge, vs = verifier_begin(db, token_b, rng)
        except ExhaustedDatabaseError:
            channel.transmit(TO_TERMINAL, AbortMsg(AbortReason.EXHAUSTED))
            raise
        received = channel.transmit(TO_TERMINAL, challenge)
        reply = responder(received)
        response = channel.transmit(TO_VERIFIER, reply)
        decision = verifier_decide(vs, response)
        channel.transmit(TO_TERMINAL, decision)
    except (ChannelError, ProtocolError) as exc:
        if vs is not None and vs.state is VerifierState.CHALLENGE_SENT:
            reason = AbortReason.CHANNEL_FAILURE if isinstance(exc, ChannelError) else AbortReason.PROTOCOL_VIOLATION
            vs.state, vs.outcome, vs.reason = VerifierState.DECIDED, Outcome.ABORT, reason
        return SessionResult(Outcome.ABORT, vs)
    return SessionResult(vs.outcome, vs, challenge, response)


def run_full_session(
    db: CrpDatabase,
    token_b: TokenDisorder,
    terminal: TerminalSession,
    typed_pin: Pin | Sequence[Pin],
    channel: LoopbackChannel,
    rng: np.random.Generator,
    e1_helper: HelperData,
    p_def: LightParams = P_DEF,
    user_id: str = "alice",
) -> SessionResult:
    """PIN check at the terminal, then the remote exchange if the PIN was right.

    ``typed_pin`` may be a list of successive attempts; at most
    ``terminal.pin_retry_limit`` of them are tried.
    """
    attempts = [typed_pin] if isinstance(typed_pin, Pin) else list(typed_pin)
    for pin in attempts:
        if terminal.state is not TerminalState.AWAIT_PIN:
            break
        if terminal_stage_v1(terminal, pin, p_def, e1_helper):
            break
    if terminal.state is not TerminalState.PIN_VERIFIED:
        if terminal.state is TerminalState.AWAIT_PIN:
            terminal._abort(AbortReason.PIN_REJECTED)
        return SessionResult(Outcome.ABORT)
    request = terminal_request(terminal, user_id)
    return run_v2(db, token_b, lambda ch: terminal_respond(terminal, ch), channel, rng, request)
