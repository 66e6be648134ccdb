import re

import pytest

from pufauth import cli, formats


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def workspace(tmp_path, capsys):
    db, tok = tmp_path / "alice.db", tmp_path / "alice.tok"
    code, out, _ = _run(capsys, "enroll", "--n", "64", "--rows", "3", "--seed", "5", "--db", str(db), "--token", str(tok))
    assert code == 0
    (pin,) = re.findall(r"^PIN: (\d{4})$", out, re.M)
    return db, tok, pin


def test_enroll_writes_files(workspace):
    db, tok, _ = workspace
    assert len(formats.load_database(db.read_text())) == 3
    assert len(formats.load_tokens(tok.read_text())) == 1
    assert db.with_name("alice.db.tokenb").exists() and db.with_name("alice.db.e1helper").exists()


def test_verify_accept_until_exhausted(workspace, capsys, tmp_path):
    db, tok, pin = workspace
    transcript = tmp_path / "t.tsv"
    args = ["verify", "--db", str(db), "--token", str(tok), "--pin", pin, "--seed", "1"]
    code, out, _ = _run(capsys, *args, "--transcript", str(transcript))
    assert (code, out.strip()) == (0, "accept")
    assert len(formats.load_transcript(transcript.read_text())) == 4
    assert formats.load_database(db.read_text()).consumed_count == 1
    for _ in range(2):
        assert _run(capsys, *args)[0] == cli.EXIT_ACCEPT
    code, _, err = _run(capsys, *args)
    assert code == cli.EXIT_EXHAUSTED and "exhausted" in err


def test_verify_wrong_pin_keeps_database(workspace, capsys):
    db, tok, pin = workspace
    before = db.read_text()
    wrong = f"{(int(pin) + 1) % 10_000:04d}"
    code, _, err = _run(capsys, "verify", "--db", str(db), "--token", str(tok), "--pin", wrong)
    assert code == cli.EXIT_ABORT and "PIN" in err
    assert db.read_text() == before


def test_verify_with_foreign_token_is_rejected(workspace, capsys, tmp_path):
    db, tok, pin = workspace
    other_db, other_tok = tmp_path / "b.db", tmp_path / "b.tok"
    _run(capsys, "enroll", "--n", "64", "--rows", "1", "--seed", "9", "--db", str(other_db), "--token", str(other_tok))
    # right PIN for alice typed with someone else's token: the PIN stage stops it
    code, _, _ = _run(capsys, "verify", "--db", str(db), "--token", str(other_tok), "--pin", pin)
    assert code in (cli.EXIT_ABORT, cli.EXIT_REJECT)


def test_verify_mismatched_verifier_token(workspace, capsys, tmp_path):
    db, tok, pin = workspace
    _run(capsys, "enroll", "--n", "64", "--rows", "1", "--seed", "9", "--db", str(tmp_path / "b.db"), "--token", str(tmp_path / "b.tok"))
    code, _, err = _run(capsys, "verify", "--db", str(db), "--token", str(tok), "--pin", pin,
                        "--verifier-token", str(tmp_path / "b.db.tokenb"))
    assert code == cli.EXIT_ERROR and "does not match" in err


def test_inspect_db(workspace, capsys):
    db, _, _ = workspace
    code, out, _ = _run(capsys, "inspect-db", "--db", str(db), "--limit", "2")
    assert code == 0
    assert "rows\t3" in out and out.count("\nrow\t") + out.startswith("row\t") == 2


def test_bad_arguments(capsys, tmp_path):
    code, _, err = _run(capsys, "enroll", "--n", "4", "--db", str(tmp_path / "x"), "--token", str(tmp_path / "y"))
    assert code == cli.EXIT_ERROR and "[8, 512]" in err
    code, _, err = _run(capsys, "verify", "--db", str(tmp_path / "missing"), "--token", "t", "--pin", "1234")
    assert code == cli.EXIT_ERROR


def test_attack_report(capsys, tmp_path):
    rep = tmp_path / "rep"
    code, out, _ = _run(capsys, "attack", "blind-guess", "--n", "8", "--trials", "500", "--rows", "16", "--seed", "3",
                        "--report-dir", str(rep))
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.split("\t")[0] == "scenario" and row.endswith("PASS")
    assert (rep / "attack.tsv").read_text() == out
    assert (rep / "attack.png").stat().st_size > 1000


def test_attack_replay_reuse_flag(capsys):
    code, out, _ = _run(capsys, "attack", "replay", "--reuse", "--trials", "5", "--rows", "4", "--seed", "1")
    assert code == 0 and out.splitlines()[1].split("\t")[2] == "5"


def test_stats_report(capsys, tmp_path):
    rep = tmp_path / "stats"
    code, out, _ = _run(capsys, "stats", "--tokens", "20", "--pin-tokens", "300", "--trials", "100", "--seed", "2",
                        "--report-dir", str(rep))
    assert code == 0, out
    assert len(out.strip().splitlines()) == 7
    for name in ("stats.tsv", "speckle.png", "intensity_hist.png", "hamming_hist.png", "pin_hist.png"):
        assert (rep / name).exists()


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "pufauth", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "inspect-db" in r.stdout
