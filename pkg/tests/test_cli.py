import json
import subprocess
import sys

import numpy as np
import pytest

from hdqnn.cli import main
from hdqnn.config import RunConfig


def write_config(tmp_path, payload):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(payload))
    return p


class TestVerifyGradients:
    def test_pass(self, capsys):
        assert main(["verify-gradients", "--qubits", "3", "--layers", "2", "--probes", "2"]) == 0
        out = capsys.readouterr().out
        assert "dp/dtheta at theta=pi/3: 0.4330127" in out
        assert out.strip().endswith("PASS")

    def test_wrong_shift_fails(self, capsys):
        code = main(["verify-gradients", "--qubits", "2", "--layers", "1", "--probes", "1", "--shift", str(np.pi / 4)])
        out = capsys.readouterr().out
        assert code == 1 and out.strip().endswith("FAIL")


class TestBenchCost:
    def test_defaults(self, capsys):
        assert main(["bench-cost"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["total_shots_per_update"] == 5_632_000
        assert report["total_seconds_per_update"] == pytest.approx(2.816)

    def test_heavy(self, capsys):
        main(["bench-cost", "--S", "1000"])
        assert json.loads(capsys.readouterr().out)["total_seconds_per_update"] == 281.6

    def test_bad_value(self, capsys):
        assert main(["bench-cost", "--S", "0"]) == 2
        assert "error" in capsys.readouterr().err


class TestUsageErrors:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "none.json")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_schema_error(self, tmp_path, capsys):
        p = write_config(tmp_path, {"pqc": {"shots": 0}})
        assert main(["train", "--config", str(p)]) == 2
        assert "pqc.shots" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as info:
            main(["dance"])
        assert info.value.code == 2

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "x.npz")]) == 2


def test_train_eval_fidelity_round_trip(tmp_path, tiny_config, capsys):
    cfg = write_config(tmp_path, tiny_config)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--override", "total_steps=30", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    loaded = RunConfig.from_dict(manifest["config"])
    assert loaded.seeds == [3] and loaded.total_steps == 30
    assert "pqc_calls 30" in capsys.readouterr().out

    ckpt = out / "seed_3" / "checkpoint.npz"
    assert main(["eval", "--checkpoint", str(ckpt), "--episodes", "1"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["episodes"] == 1 and result["eval_pqc_calls"] == 200

    report_path = tmp_path / "fid.json"
    assert main(["fidelity-report", "--checkpoint", str(ckpt), "--probes", "4", "--out", str(report_path)]) == 0
    reports = json.loads(report_path.read_text())
    assert 1 <= len(reports) <= 4
    assert all(r["eps1"] >= 0 and "bce" in r and "update" in r for r in reports)


def test_fidelity_needs_quantum_checkpoint(tmp_path, tiny_config, capsys):
    cfg = write_config(tmp_path, {**tiny_config, "variant": "fc", "seeds": [0], "total_steps": 20})
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")])
    code = main(["fidelity-report", "--checkpoint", str(tmp_path / "r" / "seed_0" / "checkpoint.npz")])
    assert code == 2 and "no fitted qtDNN" in capsys.readouterr().err


def test_ablate_prints_table(tmp_path, tiny_config, capsys):
    cfg = write_config(tmp_path, {**tiny_config, "seeds": [0], "total_steps": 20, "grid": {"variants": ["zero", "rbg"]}})
    assert main(["ablate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("variant,shots,qubits") and len(lines) == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hdqnn", "bench-cost", "--K", "2"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["total_shots_per_update"] == 5_632_000
