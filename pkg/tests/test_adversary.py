import numpy as np
import pytest

from pufauth.adversary import (
    AttackConfig,
    AttackKind,
    AttackStats,
    Frame,
    RecordingChannel,
    attack_blind_response,
    attack_pin_guess,
    attack_replay,
    attack_stolen_database,
    attack_stolen_token_no_pin,
    exhaustive_joint_key_strategy,
    run_scenario,
    transcript_audit,
)
from pufauth.key_extraction import Bits
from pufauth.protocol import TO_TERMINAL, TO_VERIFIER, TerminalSession, TerminalState, run_v2, terminal_respond
from pufauth.puf_model import NoiseModel
from pufauth.wire import ResponseMsg


def test_frame_line_round_trip():
    f = Frame(TO_TERMINAL, 4, b"\x01")
    assert Frame.from_line(f.to_line()) == f
    assert f.frame == b"\x00\x00\x00\x02\x04\x01"
    assert Frame.from_frame(TO_VERIFIER, f.frame).payload == b"\x01"


def test_recording_channel_hook_can_tamper(enrolled, token_pair, rng):
    def flip(direction, frame):
        if frame[4] == 3:
            return frame[:-1] + bytes([frame[-1] ^ 1])
        return frame

    tap = RecordingChannel(128, hook=flip)
    term = TerminalSession(token_pair[0], NoiseModel(0.02, 0), 128, state=TerminalState.PIN_VERIFIED)
    res = run_v2(enrolled.database.copy(), token_pair[1], lambda ch: terminal_respond(term, ch), tap, rng)
    assert res.outcome.value == "reject"
    assert [f.tag for f in tap.transcript] == [1, 2, 3, 4]


def test_attack_stats_envelope():
    s = AttackStats(AttackKind.BLIND_RESPONSE_GUESS, 40, 10_000, 1 / 256)
    lo, hi = s.envelope
    assert lo < 1 / 256 < hi and s.within_envelope
    assert not AttackStats(AttackKind.BLIND_RESPONSE_GUESS, 200, 10_000, 1 / 256).within_envelope
    assert AttackStats(AttackKind.REPLAY_WITH_REUSE, 99, 100, 1.0, control=True).within_envelope
    with pytest.raises(ValueError):
        AttackStats(AttackKind.PIN_GUESS, 3, 2, 0.5)


def test_pin_guess_small_campaign():
    s = attack_pin_guess(20_000, AttackConfig(seed=1, token_pool=20))
    assert s.within_envelope and s.successes <= 8
    control = attack_pin_guess(300, AttackConfig(seed=1, token_pool=3), know_pin=True)
    assert control.successes == 300


def test_pin_guess_retry_limit_scales_rate():
    s = attack_pin_guess(6000, AttackConfig(seed=2, token_pool=20, retry_limit=3))
    assert s.expected_rate == pytest.approx(3e-4) and s.within_envelope


def test_stolen_token_without_pin():
    s = attack_stolen_token_no_pin(20_000, AttackConfig(seed=3, token_pool=20, rows=4))
    assert s.within_envelope
    control = attack_stolen_token_no_pin(40, AttackConfig(seed=3, token_pool=2, rows=4), know_pin=True)
    assert control.successes == 40


def test_blind_guess_small_n():
    s = attack_blind_response(4000, AttackConfig(n=8, seed=4, rows=32))
    assert s.within_envelope
    honest = attack_blind_response(50, AttackConfig(n=8, seed=4, rows=32), hold_token=True)
    assert honest.successes == 50


def test_replay_dichotomy():
    reuse = attack_replay(20, AttackConfig(seed=5, rows=8), reuse_rows=True)
    assert reuse.successes == 20
    deletion = attack_replay(100, AttackConfig(seed=5, rows=8))
    assert deletion.successes == 0


def test_stolen_database():
    s = attack_stolen_database(4000, AttackConfig(n=8, seed=6, rows=32))
    assert s.within_envelope
    for grant in ("token_a", "token_b"):
        assert attack_stolen_database(100, AttackConfig(n=8, seed=6, rows=32), grant=grant).successes == 100


def test_exhaustive_lookup_learns_nothing():
    s = exhaustive_joint_key_strategy(AttackConfig(n=8, seed=7, rows=2000))
    assert s.within_envelope
    with pytest.raises(ValueError):
        exhaustive_joint_key_strategy(AttackConfig(n=13))


def test_run_scenario_dispatch():
    cfg = AttackConfig(n=8, seed=8, rows=8, token_pool=2)
    for kind in AttackKind:
        s = run_scenario(kind, 20, cfg)
        assert s.kind is kind and s.trials == 20


def test_audit_flags_leaks(enrolled, token_pair, rng):
    tap = RecordingChannel(128)
    term = TerminalSession(token_pair[0], NoiseModel(0.02, 0), 128, state=TerminalState.PIN_VERIFIED)
    res = run_v2(enrolled.database.copy(), token_pair[1], lambda ch: terminal_respond(term, ch), tap, rng)
    z_b = res.verifier.z_b
    assert transcript_audit(tap.transcript, 128, [z_b]).clean
    leak = tap.transcript + [Frame.from_frame(TO_TERMINAL, _encode_response(z_b))]
    report = transcript_audit(leak, 128, [z_b])
    assert [f.kind for f in report.findings] == ["z_b_exposed"]
    k_a = res.challenge.w ^ res.response.z_a
    report = transcript_audit(tap.transcript + [Frame.from_frame(TO_VERIFIER, _encode_response(k_a))], 128, [], [k_a])
    assert [f.kind for f in report.findings] == ["plaintext_key"]


def _encode_response(bits):
    from pufauth import wire

    return wire.encode(ResponseMsg(bits), len(bits))


def test_audit_flags_biased_w():
    from pufauth import wire
    from pufauth.key_extraction import HelperData
    from pufauth.puf_model import LightParams
    from pufauth.wire import ChallengeMsg

    g = np.random.default_rng(0)
    helper = HelperData(tuple((3 * i, 3 * i + 1, 3 * i + 2) for i in range(16)))
    frames = []
    for _ in range(500):
        w = g.integers(0, 2, 16)
        w[5] = 1 if g.random() < 0.7 else 0
        frames.append(Frame.from_frame(TO_TERMINAL, wire.encode(ChallengeMsg(LightParams(), Bits(w), helper), 16)))
    report = transcript_audit(frames, 16)
    assert report.sessions == 500
    assert [f.kind for f in report.findings] == ["biased_w_bit"] and "bit 5 " in report.findings[0].detail
