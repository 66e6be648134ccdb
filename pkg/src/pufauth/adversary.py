"""Attack campaigns against the verification protocol, plus transcript auditing.

Every attacker plugs in as the terminal endpoint or as a channel hook; the
protocol code is the same one honest sessions use.  Campaign trials are
independent: each one works on its own copy of an enrolled database.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import wire
from .enrollment import CrpDatabase, ReusingDatabase, enroll_stage_e1, enroll_stage_e2, reproduce_row_key
from .errors import FormatError, ProtocolError
from .key_extraction import Bits, derive_pins, reproduce_key, reproduce_keys
from .protocol import (
    TO_TERMINAL,
    TO_VERIFIER,
    LoopbackChannel,
    Outcome,
    TerminalSession,
    TerminalState,
    run_v2,
    terminal_request,
    terminal_respond,
)
from .puf_model import P_DEF, NoiseModel, TokenDisorder, interrogate, interrogate_many
from .stats import binomial_interval, bit_frequency_findings, wilson_interval
from .wire import AuthRequest, ChallengeMsg, ResponseMsg, Tag

PIN_SPACE = 10_000


@dataclass(frozen=True)
class Frame:
    direction: str
    tag: int
    payload: bytes

    @property
    def frame(self) -> bytes:
        body = bytes([self.tag]) + self.payload
        return len(body).to_bytes(4, "big") + body

    @classmethod
    def from_frame(cls, direction: str, frame: bytes) -> Frame:
        return cls(direction, frame[4], bytes(frame[5:]))

    def to_line(self) -> str:
        return f"{self.direction}\t{self.tag:02x}\t{self.payload.hex()}"

    @classmethod
    def from_line(cls, line: str) -> Frame:
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3 or parts[0] not in (TO_VERIFIER, TO_TERMINAL):
            raise FormatError(f"bad transcript line {line!r}")
        try:
            return cls(parts[0], int(parts[1], 16), bytes.fromhex(parts[2]))
        except ValueError as exc:
            raise FormatError(f"bad transcript line {line!r}") from exc


Hook = Callable[[str, bytes], "bytes | None"]


class RecordingChannel(LoopbackChannel):
    """Loopback channel that logs every delivered frame and lets a hook tamper.

    The hook sees ``(direction, frame)`` and returns the frame to deliver,
    a replacement, or ``None`` to drop it.
    """

    def __init__(self, n: int, hook: Hook | None = None, transcript: list[Frame] | None = None) -> None:
        super().__init__(n)
        self.hook = hook
        self.transcript: list[Frame] = [] if transcript is None else transcript

    def deliver(self, direction: str, frame: bytes) -> bytes | None:
        out = frame if self.hook is None else self.hook(direction, frame)
        if out is not None:
            self.transcript.append(Frame.from_frame(direction, out))
        return out


class AttackKind(enum.Enum):
    PIN_GUESS = "pin-guess"
    BLIND_RESPONSE_GUESS = "blind-guess"
    REPLAY_WITH_REUSE = "replay-reuse"
    REPLAY_WITH_DELETION = "replay-delete"
    STOLEN_DATABASE = "stolen-db"
    STOLEN_TOKEN_NO_PIN = "stolen-token"


@dataclass
class AttackConfig:
    n: int = 128
    sigma: float = 0.02
    rows: int = 64
    seed: int = 0
    retry_limit: int = 1
    token_pool: int = 1000


@dataclass
class AttackStats:
    kind: AttackKind
    successes: int
    trials: int
    expected_rate: float
    control: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if self.trials < 1 or not 0 <= self.successes <= self.trials:
            raise ValueError("need trials >= 1 and 0 <= successes <= trials")

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def wilson_interval(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)

    @property
    def envelope(self) -> tuple[float, float]:
        """Range of success rates consistent with the scenario's expectation."""
        if self.control:
            return 0.99, 1.0
        lo, hi = binomial_interval(self.trials, self.expected_rate, 0.99)
        return lo / self.trials, hi / self.trials

    @property
    def within_envelope(self) -> bool:
        lo, hi = self.envelope
        return lo <= self.success_rate <= hi


@dataclass
class _World:
    token_a: TokenDisorder
    token_b: TokenDisorder
    db: CrpDatabase
    rng: np.random.Generator


def _spawn(seed: int, k: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def _world(cfg: AttackConfig, rows: int | None = None) -> _World:
    g_tok, g_db, g_run = _spawn(cfg.seed, 3)
    ta, tb = TokenDisorder.random(g_tok), TokenDisorder.random(g_tok)
    db = enroll_stage_e2(ta, tb, cfg.rows if rows is None else rows, rng_seed=g_db, n=cfg.n)
    return _World(ta, tb, db, g_run)


def _verified_terminal(token: TokenDisorder, noise: NoiseModel, n: int) -> tuple[TerminalSession, AuthRequest]:
    # the PIN stage already succeeded for this trial
    term = TerminalSession(token, noise, n, state=TerminalState.PIN_VERIFIED)
    return term, terminal_request(term, "alice")


def _random_guesses(rng: np.random.Generator, trials: int, attempts: int) -> np.ndarray:
    """``attempts`` distinct uniform PIN guesses per trial."""
    g = rng.integers(0, PIN_SPACE, size=(trials, attempts))
    if attempts > 1:
        while True:
            s = np.sort(g, axis=1)
            dup = np.any(s[:, 1:] == s[:, :-1], axis=1)
            if not dup.any():
                break
            g[dup] = rng.integers(0, PIN_SPACE, size=(int(dup.sum()), attempts))
    return g


def _v1_batch(cfg: AttackConfig, trials: int, know_pin: bool, rng: np.random.Generator):
    """Run the PIN stage for every trial; yields (token, trial_count, accepted_mask)."""
    pool = max(1, min(cfg.token_pool, trials))
    sizes = np.full(pool, trials // pool)
    sizes[: trials % pool] += 1
    for size in sizes:
        token = TokenDisorder.random(rng)
        pin, helper = enroll_stage_e1(token)
        noise = NoiseModel(cfg.sigma, int(rng.integers(2**63)))
        r = cfg.retry_limit
        guesses = np.full((size, r), pin.value) if know_pin else _random_guesses(rng, int(size), r)
        reads = interrogate_many(token, P_DEF, noise, int(size) * r)
        pins = derive_pins(reproduce_keys(reads, helper)).reshape(int(size), r)
        yield token, int(size), np.any(pins == guesses, axis=1)


def attack_pin_guess(trials: int, cfg: AttackConfig | None = None, know_pin: bool = False) -> AttackStats:
    """Attacker holds a freshly enrolled token and guesses the PIN at the terminal."""
    cfg = cfg or AttackConfig()
    (rng,) = _spawn(cfg.seed, 1)
    ok = sum(int(mask.sum()) for _, _, mask in _v1_batch(cfg, trials, know_pin, rng))
    return AttackStats(AttackKind.PIN_GUESS, ok, trials, min(1.0, cfg.retry_limit / PIN_SPACE), control=know_pin)


def attack_stolen_token_no_pin(trials: int, cfg: AttackConfig | None = None, know_pin: bool = False) -> AttackStats:
    """Attacker holds the user's token; PIN guesses at V1, then an honest V2 exchange."""
    cfg = cfg or AttackConfig()
    rng, g_db = _spawn(cfg.seed, 2)
    ok = 0
    for token, _, mask in _v1_batch(cfg, trials, know_pin, rng):
        wins = int(mask.sum())
        if not wins:
            continue
        tb = TokenDisorder.random(g_db)
        db = enroll_stage_e2(token, tb, min(cfg.rows, wins), rng_seed=g_db, n=cfg.n)
        noise = NoiseModel(cfg.sigma, int(rng.integers(2**63)))
        for _ in range(wins):
            term, req = _verified_terminal(token, noise, cfg.n)
            res = run_v2(db.copy(), tb, lambda ch: terminal_respond(term, ch), LoopbackChannel(cfg.n), rng, req)
            ok += res.outcome is Outcome.ACCEPT
    return AttackStats(AttackKind.STOLEN_TOKEN_NO_PIN, ok, trials, min(1.0, cfg.retry_limit / PIN_SPACE),
                       control=know_pin)


def attack_blind_response(trials: int, cfg: AttackConfig | None = None, hold_token: bool = False) -> AttackStats:
    """Attacker without a token answers every challenge with a uniform random vector."""
    cfg = cfg or AttackConfig()
    w = _world(cfg)
    noise = NoiseModel(cfg.sigma, int(w.rng.integers(2**63)))
    ok = 0
    for _ in range(trials):
        if hold_token:
            term, req = _verified_terminal(w.token_a, noise, cfg.n)
            responder = lambda ch, term=term: terminal_respond(term, ch)
        else:
            req = AuthRequest("alice")
            responder = lambda ch: ResponseMsg(Bits.random(cfg.n, w.rng))
        res = run_v2(w.db.copy(), w.token_b, responder, LoopbackChannel(cfg.n), w.rng, req)
        ok += res.outcome is Outcome.ACCEPT
    return AttackStats(AttackKind.BLIND_RESPONSE_GUESS, ok, trials, 2.0 ** -cfg.n, control=hold_token)


def _extract_key_from_transcript(frames: Iterable[Frame], n: int) -> Bits | None:
    """k_A = w xor z_A from the last challenge/response pair seen on the wire."""
    w = z = None
    for f in frames:
        if f.direction == TO_TERMINAL and f.tag == Tag.CHALLENGE:
            w = wire.decode(f.frame, n).w
        elif f.direction == TO_VERIFIER and f.tag == Tag.RESPONSE and w is not None:
            z = wire.decode(f.frame, n).z_a
    return None if w is None or z is None else w ^ z


def attack_replay(trials: int, cfg: AttackConfig | None = None, reuse_rows: bool = False) -> AttackStats:
    """Record one accepted honest exchange, recover k_A, then impersonate in a new session.

    With ``reuse_rows`` the verifier's database is the broken kind that
    serves the recorded row again; otherwise the row is gone.
    """
    cfg = cfg or AttackConfig()
    w = _world(cfg)
    noise = NoiseModel(cfg.sigma, int(w.rng.integers(2**63)))
    ok = 0
    for _ in range(trials):
        db = w.db.copy()
        if reuse_rows:
            db = ReusingDatabase.wrap(db)
        k_cand = None
        for _attempt in range(5):
            tap = RecordingChannel(cfg.n)
            term, req = _verified_terminal(w.token_a, noise, cfg.n)
            honest = run_v2(db, w.token_b, lambda ch: terminal_respond(term, ch), tap, w.rng, req)
            if honest.outcome is Outcome.ACCEPT:
                k_cand = _extract_key_from_transcript(tap.transcript, cfg.n)
                break
        if k_cand is None:
            continue
        res = run_v2(db, w.token_b, lambda ch: ResponseMsg(k_cand ^ ch.w), LoopbackChannel(cfg.n), w.rng)
        ok += res.outcome is Outcome.ACCEPT
    kind = AttackKind.REPLAY_WITH_REUSE if reuse_rows else AttackKind.REPLAY_WITH_DELETION
    return AttackStats(kind, ok, trials, 1.0 if reuse_rows else 2.0 ** -cfg.n, control=reuse_rows)


def attack_stolen_database(trials: int, cfg: AttackConfig | None = None, grant: str | None = None) -> AttackStats:
    """Attacker holds a copy of the whole database but, by default, neither token.

    ``grant`` of ``"token_a"`` or ``"token_b"`` hands over one token as a
    control: with k_B the joint key yields k_A directly.
    """
    cfg = cfg or AttackConfig()
    w = _world(cfg)
    stolen = {row.params: row for row in w.db.copy().rows.values()}
    noise = NoiseModel(cfg.sigma, int(w.rng.integers(2**63)))

    def respond(ch: ChallengeMsg) -> ResponseMsg:
        row = stolen[ch.params]
        if grant == "token_b":
            k_a = row.joint_key ^ reproduce_key(interrogate(w.token_b, row.params, noise), row.helper_b)
        elif grant == "token_a":
            k_a = reproduce_key(interrogate(w.token_a, ch.params, noise), ch.helper_a)
        else:
            k_a = Bits.random(cfg.n, w.rng)
        return ResponseMsg(k_a ^ ch.w)

    ok = 0
    for _ in range(trials):
        res = run_v2(w.db.copy(), w.token_b, respond, LoopbackChannel(cfg.n), w.rng)
        ok += res.outcome is Outcome.ACCEPT
    return AttackStats(AttackKind.STOLEN_DATABASE, ok, trials, 2.0 ** -cfg.n, control=grant is not None)


def exhaustive_joint_key_strategy(cfg: AttackConfig) -> AttackStats:
    """Best lookup table from joint key to k_A, learned on half the rows, scored on the rest.

    The table is built with ground-truth k_A values, which is more than a real
    attacker has; a success rate at the 2^-n guessing level means the joint
    key carries no usable information about k_A.
    """
    if cfg.n > 12:
        raise ValueError("exhaustive strategy is only tractable for n <= 12")
    w = _world(cfg)
    rows = list(w.db.rows.values())
    joint = np.array([int(r.joint_key.to_string(), 2) for r in rows])
    k_a = np.array([int(reproduce_row_key(w.token_a, r, "a").to_string(), 2) for r in rows])
    half = len(rows) // 2
    table = np.zeros((2**cfg.n, 2**cfg.n), dtype=np.int64)
    np.add.at(table, (joint[:half], k_a[:half]), 1)
    # unseen joint values fall back to the globally most common k_A
    fallback = int(np.bincount(k_a[:half], minlength=2**cfg.n).argmax())
    guess = np.where(table.sum(axis=1) > 0, table.argmax(axis=1), fallback)
    hits = int(np.sum(guess[joint[half:]] == k_a[half:]))
    return AttackStats(AttackKind.STOLEN_DATABASE, hits, len(rows) - half, 2.0 ** -cfg.n, label="exhaustive")


ATTACKS = {
    "pin-guess": AttackKind.PIN_GUESS,
    "blind-guess": AttackKind.BLIND_RESPONSE_GUESS,
    "replay": None,  # resolved by the reuse flag
    "stolen-db": AttackKind.STOLEN_DATABASE,
    "stolen-token": AttackKind.STOLEN_TOKEN_NO_PIN,
}


def run_scenario(kind: AttackKind, trials: int, cfg: AttackConfig) -> AttackStats:
    if kind is AttackKind.PIN_GUESS:
        return attack_pin_guess(trials, cfg)
    if kind is AttackKind.BLIND_RESPONSE_GUESS:
        return attack_blind_response(trials, cfg)
    if kind is AttackKind.REPLAY_WITH_REUSE:
        return attack_replay(trials, cfg, reuse_rows=True)
    if kind is AttackKind.REPLAY_WITH_DELETION:
        return attack_replay(trials, cfg, reuse_rows=False)
    if kind is AttackKind.STOLEN_DATABASE:
        return attack_stolen_database(trials, cfg)
    return attack_stolen_token_no_pin(trials, cfg)


@dataclass
class Finding:
    kind: str
    frame_index: int | None
    detail: str

    def __str__(self) -> str:
        where = "-" if self.frame_index is None else str(self.frame_index)
        return f"{self.kind}\tframe={where}\t{self.detail}"


@dataclass
class AuditReport:
    frames: int
    sessions: int
    findings: list[Finding] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.findings

    def to_text(self) -> str:
        head = f"# audit: {self.frames} frames, {self.sessions} challenges, {len(self.findings)} findings\n"
        return head + "".join(f"{f}\n" for f in self.findings)


def transcript_audit(
    transcript: list[Frame],
    n: int,
    z_b_values: Iterable[Bits] = (),
    individual_keys: Iterable[Bits] = (),
) -> AuditReport:
    """Check a transcript for leaked secrets and for bias in the masked challenges.

    ``z_b_values`` are the verifier's secrets; they may legitimately come back
    from the terminal as z_A, so only verifier-to-terminal frames are scanned
    for them.  ``individual_keys`` (k_A and k_B values) must appear nowhere.
    """
    z_b = {z.to_bytes() for z in z_b_values}
    keys = {k.to_bytes() for k in individual_keys}
    report = AuditReport(len(transcript), 0)
    ws = []
    for i, f in enumerate(transcript):
        if f.direction == TO_TERMINAL:
            for s in z_b:
                if s in f.payload:
                    report.findings.append(Finding("z_b_exposed", i, f"tag 0x{f.tag:02x} carries a verifier secret"))
                    break
        for k in keys:
            if k in f.payload:
                report.findings.append(Finding("plaintext_key", i, f"tag 0x{f.tag:02x} carries an individual key"))
                break
        if f.direction == TO_TERMINAL and f.tag == Tag.CHALLENGE:
            try:
                ws.append(wire.decode(f.frame, n).w.array)
            except ProtocolError as exc:
                report.findings.append(Finding("malformed_frame", i, str(exc)))
    report.sessions = len(ws)
    if len(ws) >= 2:
        for bit, z in bit_frequency_findings(np.array(ws)):
            report.findings.append(Finding("biased_w_bit", None, f"bit {bit} z={z:+.2f}"))
    return report
