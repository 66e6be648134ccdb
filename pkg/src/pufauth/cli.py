"""Command-line front end: ``pufauth enroll | verify | attack | stats | inspect-db``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .adversary import (
    ATTACKS,
    AttackConfig,
    AttackKind,
    AttackStats,
    RecordingChannel,
    run_scenario,
)
from .enrollment import enroll, token_fingerprint
from .errors import ExhaustedDatabaseError, PufAuthError
from .key_extraction import Pin
from .protocol import LoopbackChannel, Outcome, TerminalSession, TerminalState, run_full_session
from .puf_model import DEFAULT_N_IN, DEFAULT_N_OUT, NoiseModel, TokenDisorder
from .stats import SuiteConfig, run_suite

log = logging.getLogger("pufauth")

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ABORT = 2
EXIT_EXHAUSTED = 3
EXIT_ERROR = 4

_OUTCOME_EXIT = {Outcome.ACCEPT: EXIT_ACCEPT, Outcome.REJECT: EXIT_REJECT, Outcome.ABORT: EXIT_ABORT}


@dataclass
class Config:
    n: int = 128
    sigma: float = 0.02
    num_rows: int = 100
    n_in: int = DEFAULT_N_IN
    n_out: int = DEFAULT_N_OUT
    seed: int | None = None
    pin_retry_limit: int = 1

    def __post_init__(self) -> None:
        if not 8 <= self.n <= 512:
            raise ValueError("--n must lie in [8, 512]")
        if 6 * self.n > self.n_out:
            raise ValueError(f"--n {self.n} needs at least {6 * self.n} output pixels")
        if self.sigma < 0 or self.num_rows < 0 or self.pin_retry_limit < 1:
            raise ValueError("sigma and rows must be nonnegative, retries at least 1")


def _side_paths(args) -> tuple[Path, Path]:
    db = Path(args.db)
    vt = Path(args.verifier_token) if args.verifier_token else db.with_name(db.name + ".tokenb")
    tc = Path(args.terminal_config) if args.terminal_config else db.with_name(db.name + ".e1helper")
    return vt, tc


def cmd_enroll(args) -> int:
    cfg = Config(n=args.n, num_rows=args.rows, seed=args.seed)
    g_tok, g_db = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    token_a, token_b = TokenDisorder.random(g_tok), TokenDisorder.random(g_tok)
    out = enroll(token_a, token_b, cfg.num_rows, n=cfg.n, rng_seed=g_db)
    vt, tc = _side_paths(args)
    formats.atomic_write(args.token, formats.dump_tokens([token_a]))
    formats.atomic_write(vt, formats.dump_tokens([token_b]))
    formats.atomic_write(tc, formats.dump_helper(out.e1_helper))
    formats.atomic_write(args.db, formats.dump_database(out.database))
    log.info("enrolled user %s: %d rows, n=%d -> %s", args.user, len(out.database), cfg.n, args.db)
    print(f"PIN: {out.pin}")
    return EXIT_ACCEPT


def cmd_verify(args) -> int:
    cfg = Config(n=args.n, sigma=args.sigma, seed=args.seed, pin_retry_limit=args.retries)
    db = formats.load_database(Path(args.db).read_text())
    vt, tc = _side_paths(args)
    (token,) = formats.load_tokens(Path(args.token).read_text())
    (token_b,) = formats.load_tokens(vt.read_text())
    if token_fingerprint(token_b) != db.token_b_ref:
        raise PufAuthError("verifier token does not match the database")
    e1_helper = formats.load_helper(tc.read_text())
    g_noise, g_ver = np.random.SeedSequence(cfg.seed).spawn(2)
    terminal = TerminalSession(token, NoiseModel(cfg.sigma, g_noise), db.n, cfg.pin_retry_limit)
    channel = RecordingChannel(db.n) if args.transcript else LoopbackChannel(db.n)
    before = len(db)
    try:
        result = run_full_session(
            db, token_b, terminal, Pin.parse(args.pin), channel, np.random.default_rng(g_ver), e1_helper,
            user_id=args.user,
        )
    except ExhaustedDatabaseError:
        print("exhausted: no challenge-response rows left; enroll a new token for this user", file=sys.stderr)
        return EXIT_EXHAUSTED
    finally:
        if args.transcript and isinstance(channel, RecordingChannel):
            formats.atomic_write(args.transcript, formats.dump_transcript(channel.transcript))
    if len(db) != before:
        formats.atomic_write(args.db, formats.dump_database(db))
    if terminal.state is TerminalState.ABORTED and result.verifier is None:
        print("abort: PIN rejected at the terminal", file=sys.stderr)
    else:
        print(result.outcome.value)
    return _OUTCOME_EXIT[result.outcome]


def _stats_table(rows: list[AttackStats]) -> str:
    head = "scenario\ttrials\tsuccesses\trate\twilson_lo\twilson_hi\texpected\tenv_lo\tenv_hi\tstatus"
    lines = [head]
    for s in rows:
        lo, hi = s.wilson_interval
        elo, ehi = s.envelope
        status = "PASS" if s.within_envelope else "FAIL"
        lines.append(
            f"{s.label or s.kind.value}\t{s.trials}\t{s.successes}\t{s.success_rate:.6g}\t{lo:.6g}\t{hi:.6g}"
            f"\t{s.expected_rate:.6g}\t{elo:.6g}\t{ehi:.6g}\t{status}"
        )
    return "\n".join(lines) + "\n"


def cmd_attack(args) -> int:
    kind = ATTACKS[args.scenario]
    if kind is None:
        kind = AttackKind.REPLAY_WITH_REUSE if args.reuse else AttackKind.REPLAY_WITH_DELETION
    cfg = AttackConfig(n=args.n, sigma=args.sigma, rows=args.rows, seed=args.seed or 0, retry_limit=args.retries)
    stats = run_scenario(kind, args.trials, cfg)
    table = _stats_table([stats])
    sys.stdout.write(table)
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "attack.tsv").write_text(table)
        from .plotting import attack_rates

        attack_rates([stats], out / "attack.png")
    return 0 if stats.within_envelope else 1


def cmd_stats(args) -> int:
    cfg = SuiteConfig(
        n=args.n, sigma=args.sigma, n_out=args.n_out, tokens=args.tokens, pin_tokens=args.pin_tokens,
        stability_trials=args.trials, seed=args.seed or 0,
    )
    results, data = run_suite(cfg)
    lines = ["check\tvalue\tlo\thi\tstatus\tdetail"]
    lines += [f"{r.name}\t{r.value:.6g}\t{r.lo:.6g}\t{r.hi:.6g}\t{r.status}\t{r.detail}" for r in results]
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.report_dir:
        from . import plotting

        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.tsv").write_text(table)
        plotting.speckle_image(data.example_pattern, out / "speckle.png")
        plotting.intensity_histogram(data.example_pattern, out / "intensity_hist.png")
        if data.distances:
            plotting.distance_histogram(data.distances, cfg.n, out / "hamming_hist.png")
        if data.pins:
            plotting.pin_histogram(data.pins, out / "pin_hist.png")
    return 0 if all(r.passed for r in results) else 1


def cmd_inspect_db(args) -> int:
    db = formats.load_database(Path(args.db).read_text())
    print(f"n\t{db.n}")
    print(f"token_b\t{db.token_b_ref}")
    print(f"rows\t{len(db)}")
    print(f"consumed\t{db.consumed_count}")
    for row in list(db.rows.values())[: args.limit]:
        p = row.params
        print(
            f"row\t{row.row_id}\twl={p.wavelength_index}\tpoint={p.incidence_point[0]},{p.incidence_point[1]}"
            f"\tangle={p.incidence_angle_index}\tmask={p.phase_mask_seed:016x}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pufauth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n=128, rows=100):
        p.add_argument("--n", type=int, default=n, help="key length in bits")
        p.add_argument("--sigma", type=float, default=0.02, help="terminal intensity noise")
        p.add_argument("--rows", type=int, default=rows, help="database rows")
        p.add_argument("--seed", type=int, default=None)

    def files(p):
        p.add_argument("--db", required=True)
        p.add_argument("--token", required=True, help="user token store")
        p.add_argument("--verifier-token", default=None, help="default: <db>.tokenb")
        p.add_argument("--terminal-config", default=None, help="public E1 helper; default: <db>.e1helper")
        p.add_argument("--user", default="alice")

    p = sub.add_parser("enroll", help="create token, database and PIN")
    common(p)
    files(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="run one authentication session")
    common(p)
    files(p)
    p.add_argument("--pin", required=True)
    p.add_argument("--retries", type=int, default=1)
    p.add_argument("--transcript", default=None, help="write the wire transcript here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attack", help="run an attack campaign")
    p.add_argument("scenario", choices=sorted(ATTACKS))
    common(p, rows=64)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--reuse", action="store_true", help="replay against a database that reuses rows")
    p.add_argument("--retries", type=int, default=1)
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("stats", help="run the statistical quality suite")
    common(p)
    p.add_argument("--n-out", type=int, default=DEFAULT_N_OUT)
    p.add_argument("--tokens", type=int, default=100)
    p.add_argument("--pin-tokens", type=int, default=10_000)
    p.add_argument("--trials", type=int, default=1000, help="noisy re-reads for the stability check")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("inspect-db", help="summarize a database file")
    p.add_argument("--db", required=True)
    p.add_argument("--limit", type=int, default=10)
    p.set_defaults(func=cmd_inspect_db)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (PufAuthError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
