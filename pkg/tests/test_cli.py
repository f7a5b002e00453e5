from __future__ import annotations

import json
import subprocess
import sys

import pytest

from causalseq.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_query_backdoor(capsys):
    code, out, _ = run(capsys, "query", "--process", "prize-or-frog", "--target", "O", "--evidence", "do(A=1)")
    assert code == 0 and out.strip() == "0.500000 0.500000"


def test_query_conditioned_action(capsys):
    code, out, _ = run(capsys, "query", "--process", "prize-or-frog", "--target", "Theta", "--evidence", "A=1")
    assert code == 0 and out.strip() == "1.000000 0.000000"


def test_query_bandit_horizon(capsys):
    code, out, _ = run(capsys, "query", "--process", "bandit", "--horizon", "2", "--target", "A_2",
                       "--evidence", "do(A_1=1), O_1=1")
    assert code == 0
    assert float(out.split()[0]) == pytest.approx(2.2 / 7, abs=1e-6)


@pytest.mark.parametrize("evidence", ["do(A=1", "A", "A==1", "do A=1", "A=1,,O=+1"])
def test_query_malformed_evidence(capsys, evidence):
    code, _, err = run(capsys, "query", "--process", "prize-or-frog", "--target", "Theta", "--evidence", evidence)
    assert code == 2 and "error" in err


def test_query_unknown_symbol_or_variable(capsys):
    assert run(capsys, "query", "--process", "prize-or-frog", "--target", "Theta", "--evidence", "A=3")[0] == 2
    assert run(capsys, "query", "--process", "prize-or-frog", "--target", "Nope")[0] == 2


def test_query_zero_probability(capsys):
    code, _, err = run(capsys, "query", "--process", "prize-or-frog", "--target", "Theta", "--evidence", "A=1,O=-1")
    assert code == 1 and "probability zero" in err


def test_unknown_process_lists_names(capsys):
    code, _, err = run(capsys, "query", "--process", "frogs", "--target", "A")
    assert code == 2
    assert "prize-or-frog" in err and "bandit" in err


def test_zero_episodes_is_usage_error(capsys, tmp_path):
    for cmd in ("experiment", "simulate", "metatrain", "offline"):
        assert run(capsys, cmd, "--episodes", "0", "--out", str(tmp_path))[0] == 2


def test_unwritable_output(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, _ = run(capsys, "simulate", "--episodes", "1", "--horizon", "2", "--out", str(blocker / "sub"))
    assert code == 1


def test_experiment_outputs_and_replay(capsys, tmp_path):
    out = tmp_path / "exp"
    code, text, _ = run(capsys, "experiment", "--process", "bandit", "--policy", "both", "--horizon", "5",
                        "--episodes", "200", "--seed", "7", "--out", str(out))
    assert code == 0 and "interventional" in text and "conditional" in text
    summary = (out / "summary.csv").read_text()
    assert summary.splitlines()[0].startswith("process,policy,horizon,episodes")
    assert len(summary.splitlines()) == 3
    echo = json.loads((out / "config.json").read_text())
    assert echo["version"] == "0.1.0" and echo["params"]["seed"] == 7
    logs = (out / "episodes.jsonl").read_bytes()
    assert main(["replay", str(out / "config.json")]) == 0
    capsys.readouterr()
    assert (out / "summary.csv").read_text() == summary
    assert (out / "episodes.jsonl").read_bytes() == logs


def test_env_var_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CAUSALSEQ_OUT", str(tmp_path / "envdir"))
    assert run(capsys, "simulate", "--episodes", "1", "--horizon", "3", "--seed", "1")[0] == 0
    assert (tmp_path / "envdir" / "episodes.jsonl").exists()


def test_metatrain_then_learned_simulation(capsys, tmp_path):
    out = tmp_path / "mt"
    code, text, _ = run(capsys, "metatrain", "--horizon", "2", "--episodes", "3000", "--seed", "3", "--out", str(out))
    assert code == 0 and "max TV" in text
    assert (out / "learner.txt").read_text().startswith("# learner-table v1")
    assert len((out / "convergence.csv").read_text().splitlines()) == 1 + 11 + 55
    code, _, _ = run(capsys, "simulate", "--policy", "learned", "--learner", str(out / "learner.txt"),
                     "--horizon", "2", "--episodes", "2", "--out", str(tmp_path / "sim"))
    assert code == 0
    assert run(capsys, "simulate", "--policy", "learned", "--horizon", "2", "--out", str(tmp_path / "x"))[0] == 2


def test_offline(capsys, tmp_path):
    code, text, _ = run(capsys, "offline", "--episodes", "2000", "--seed", "1", "--out", str(tmp_path))
    assert code == 0 and "A_1=1, O_1=1" in text
    assert len((tmp_path / "offline.csv").read_text().splitlines()) == 11


def test_mint_matches_checked_in_constants(tmp_path, derived):
    target = tmp_path / "c.json"
    assert main(["mint", "--output", str(target)]) == 0
    assert json.loads(target.read_text()) == derived


def test_serialize_and_spec_file(capsys, tmp_path):
    code, text, _ = run(capsys, "serialize", "--process", "prize-or-frog")
    assert code == 0
    spec = tmp_path / "pf.txt"
    spec.write_text(text)
    code, out, _ = run(capsys, "query", "--spec", str(spec), "--target", "O", "--evidence", "do(A=2)")
    assert code == 0 and out.strip() == "0.500000 0.500000"
    spec.write_text(text.replace("0.5 0.5", "0.5 0.6"))
    code, _, err = run(capsys, "query", "--spec", str(spec), "--target", "O")
    assert code == 2 and "normalization" in err


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "causalseq.cli", "query", "--process", "prize-or-frog", "--target", "A"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "0.500000 0.500000"
    proc = subprocess.run([sys.executable, "-m", "causalseq.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
