"""Plain-text file formats: token store, helper data, CRP database, transcripts.

Database layout::

    PUFAUTH-DB v1 n=<int> token_b=<hex> consumed=<int>
    row_id<TAB>params-hex<TAB>joint-key-hex<TAB>helper_a<TAB>helper_b

Helper columns list triples as ``a b c`` separated by commas.  Writers go
through a temporary file and an atomic rename.
"""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path
from typing import Iterable

from .adversary import Frame
from .enrollment import CrpDatabase, DatabaseRow
from .errors import CorruptHelperError, FormatError, ParameterDomainError, ShapeError
from .key_extraction import Bits, HelperData
from .puf_model import LightParams, TokenDisorder

DB_MAGIC = "PUFAUTH-DB"
DB_VERSION = "v1"
_HEADER = re.compile(rf"^{DB_MAGIC} {DB_VERSION} n=(\d+) token_b=([0-9a-f]+)(?: consumed=(\d+))?$")


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_tokens(tokens: Iterable[TokenDisorder]) -> str:
    return "".join(f"{t.hex}\n" for t in tokens)


def load_tokens(text: str, **kwargs) -> list[TokenDisorder]:
    try:
        return [TokenDisorder.from_hex(line, **kwargs) for line in text.splitlines() if line.strip()]
    except ParameterDomainError as exc:
        raise FormatError(f"token store: {exc}") from exc


def dump_helper(helper: HelperData) -> str:
    return helper.to_lines()


def load_helper(text: str) -> HelperData:
    return HelperData.from_lines(text)


def _helper_field(helper: HelperData) -> str:
    return ",".join(f"{a} {b} {c}" for a, b, c in helper.groups)


def _parse_helper_field(text: str) -> HelperData:
    if not text:
        return HelperData(())
    try:
        return HelperData(tuple(tuple(int(p) for p in part.split()) for part in text.split(",")))
    except ValueError as exc:
        raise CorruptHelperError(f"bad helper field {text[:40]!r}") from exc


def dump_database(db: CrpDatabase) -> str:
    lines = [f"{DB_MAGIC} {DB_VERSION} n={db.n} token_b={db.token_b_ref} consumed={db.consumed_count}"]
    for row in db.rows.values():
        lines.append(
            "\t".join(
                (
                    str(row.row_id),
                    row.params.to_bytes().hex(),
                    row.joint_key.hex(),
                    _helper_field(row.helper_a),
                    _helper_field(row.helper_b),
                )
            )
        )
    return "\n".join(lines) + "\n"


def load_database(text: str) -> CrpDatabase:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty database file")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise FormatError(f"bad database header {lines[0]!r}")
    n, ref, consumed = int(m.group(1)), m.group(2), int(m.group(3) or 0)
    rows: dict[int, DatabaseRow] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FormatError(f"line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
        try:
            rid = int(parts[0])
            row = DatabaseRow(
                rid,
                LightParams.from_bytes(bytes.fromhex(parts[1])),
                Bits.from_hex(parts[2], n),
                _parse_helper_field(parts[3]),
                _parse_helper_field(parts[4]),
            )
        except (ValueError, ShapeError, ParameterDomainError, CorruptHelperError) as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        if rid in rows:
            raise FormatError(f"line {lineno}: duplicate row_id {rid}")
        rows[rid] = row
    try:
        return CrpDatabase(n, ref, rows, consumed)
    except ParameterDomainError as exc:
        raise FormatError(str(exc)) from exc


def dump_transcript(frames: Iterable[Frame]) -> str:
    return "".join(f.to_line() + "\n" for f in frames)


def load_transcript(text: str) -> list[Frame]:
    return [Frame.from_line(line) for line in text.splitlines() if line.strip()]
