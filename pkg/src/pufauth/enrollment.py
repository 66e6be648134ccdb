"""Manufacturer-side enrollment: the PIN stage and the masked CRP database."""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ExhaustedDatabaseError, ParameterDomainError
from .key_extraction import HelperData, Key, Pin, derive_pin, enroll_key, reproduce_key
from .puf_model import GRID_SIZE, P_DEF, LightParams, NoiseModel, TokenDisorder, interrogate, random_params

PIN_KEY_BITS = 448
"""Length of the key the PIN is cut from.

With 32 candidate 14-bit windows the chance that none falls below 10000 is
about 1e-13; a 128-bit key would fail roughly once per 5000 tokens.
"""


def token_fingerprint(token: TokenDisorder) -> str:
    """Public reference to a token that does not reveal its seed."""
    return hashlib.sha256(token.seed.to_bytes(32, "big")).hexdigest()[:16]


@dataclass(frozen=True)
class DatabaseRow:
    row_id: int
    params: LightParams
    joint_key: Key
    helper_a: HelperData
    helper_b: HelperData

    def __post_init__(self) -> None:
        n = len(self.joint_key)
        if len(self.helper_a) != n or len(self.helper_b) != n:
            raise ParameterDomainError("helper data length must equal the joint key length")


@dataclass
class CrpDatabase:
    """Verifier-side challenge-response database; rows are removed, never edited."""

    n: int
    token_b_ref: str
    rows: dict[int, DatabaseRow] = field(default_factory=dict)
    consumed_count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        seen = set()
        for rid, row in self.rows.items():
            if rid != row.row_id:
                raise ParameterDomainError(f"row keyed {rid} carries row_id {row.row_id}")
            if len(row.joint_key) != self.n:
                raise ParameterDomainError(f"row {rid} has a {len(row.joint_key)}-bit joint key, expected {self.n}")
            if row.params in seen:
                raise ParameterDomainError(f"duplicate challenge in row {rid}")
            seen.add(row.params)

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, row_id: int) -> bool:
        return row_id in self.rows

    def get(self, row_id: int) -> DatabaseRow:
        return self.rows[row_id]

    def take_random(self, rng: np.random.Generator) -> DatabaseRow:
        """Atomically select a uniformly random row and remove it."""
        with self._lock:
            if not self.rows:
                raise ExhaustedDatabaseError("database exhausted: a new token has to be assigned to the user")
            ids = list(self.rows)
            row = self.rows.pop(ids[int(rng.integers(len(ids)))])
            self.consumed_count += 1
            return row

    def copy(self) -> CrpDatabase:
        """Independent copy sharing the immutable rows (no re-validation)."""
        with self._lock:
            new = object.__new__(type(self))
            new.n, new.token_b_ref, new.consumed_count = self.n, self.token_b_ref, self.consumed_count
            new.rows = dict(self.rows)
            new._lock = threading.Lock()
            return new


class ReusingDatabase(CrpDatabase):
    """Deliberately broken database that keeps serving the first row it hands out."""

    _pinned: DatabaseRow | None = None

    def take_random(self, rng: np.random.Generator) -> DatabaseRow:
        with self._lock:
            if self._pinned is None:
                if not self.rows:
                    raise ExhaustedDatabaseError("database exhausted")
                ids = list(self.rows)
                self._pinned = self.rows[ids[int(rng.integers(len(ids)))]]
            self.consumed_count += 1
            return self._pinned

    @classmethod
    def wrap(cls, db: CrpDatabase) -> ReusingDatabase:
        return cls(db.n, db.token_b_ref, dict(db.rows), db.consumed_count)


@dataclass
class EnrollmentOutput:
    token_a: TokenDisorder
    pin: Pin
    e1_helper: HelperData
    database: CrpDatabase


def enroll_stage_e1(
    token_a: TokenDisorder, p_def: LightParams = P_DEF, key_bits: int = PIN_KEY_BITS
) -> tuple[Pin, HelperData]:
    """Derive the user's PIN from a noiseless read of ``token_a`` at the public parameters."""
    if p_def != P_DEF:
        raise ParameterDomainError("stage E1 must use the public default parameters")
    key, helper = enroll_key(interrogate(token_a, p_def, NoiseModel.noiseless()), key_bits)
    return derive_pin(key), helper


def enroll_stage_e2(
    token_a: TokenDisorder,
    token_b: TokenDisorder,
    num_rows: int,
    rng_seed=None,
    n: int = 128,
) -> CrpDatabase:
    """Build ``num_rows`` rows of (challenge, k_A xor k_B, helper_a, helper_b)."""
    if num_rows < 0:
        raise CapacityError("num_rows must be nonnegative")
    if num_rows >= GRID_SIZE:
        raise CapacityError("not enough distinct challenges on the parameter grid")
    rng = np.random.default_rng(rng_seed)
    quiet = NoiseModel.noiseless()
    chosen: set[LightParams] = set()
    rows: dict[int, DatabaseRow] = {}
    while len(rows) < num_rows:
        params = random_params(rng)
        if params == P_DEF or params in chosen:
            continue
        chosen.add(params)
        k_a, helper_a = enroll_key(interrogate(token_a, params, quiet), n)
        k_b, helper_b = enroll_key(interrogate(token_b, params, quiet), n)
        rid = len(rows)
        rows[rid] = DatabaseRow(rid, params, k_a ^ k_b, helper_a, helper_b)
        del k_a, k_b
    return CrpDatabase(n, token_fingerprint(token_b), rows)


def enroll(
    token_a: TokenDisorder,
    token_b: TokenDisorder,
    num_rows: int,
    n: int = 128,
    rng_seed=None,
) -> EnrollmentOutput:
    pin, e1_helper = enroll_stage_e1(token_a)
    db = enroll_stage_e2(token_a, token_b, num_rows, rng_seed=rng_seed, n=n)
    return EnrollmentOutput(token_a, pin, e1_helper, db)


def reproduce_row_key(token: TokenDisorder, row: DatabaseRow, side: str = "a", noise: NoiseModel | None = None) -> Key:
    """Re-read one side's key for a row (test and audit instrumentation)."""
    helper = row.helper_a if side == "a" else row.helper_b
    return reproduce_key(interrogate(token, row.params, noise), helper)
