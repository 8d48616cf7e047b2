import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from hdqnn.config import RunConfig
from hdqnn.harness import (
    ablation_cells,
    aggregate_rows,
    final_score,
    read_jsonl,
    rolling_mean,
    run_ablation,
    run_training,
    summary_rows,
    write_csv,
)

GOLDEN = Path(__file__).parent / "golden"


def header(path):
    return Path(path).read_text().splitlines()[0]


def golden(name):
    return (GOLDEN / name).read_text().strip()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRolling:
    def test_trailing_window(self):
        assert np.allclose(rolling_mean([1, 2, 3, 4, 5], window=2), [1, 1.5, 2.5, 3.5, 4.5])

    def test_window_longer_than_series(self):
        assert np.allclose(rolling_mean([2, 4, 6], window=10), [2, 3, 4])

    def test_matches_loop(self, rng):
        x = rng.normal(size=40)
        ref = [np.mean(x[max(0, i - 9) : i + 1]) for i in range(40)]
        assert np.allclose(rolling_mean(x), ref)


class TestAggregate:
    def test_recomputed_independently(self, rng):
        curves = rng.normal(size=(3, 12))
        per_seed = [[{"step": 10 * (j + 1), "mean_return": v} for j, v in enumerate(c)] for c in curves]
        rows = aggregate_rows(per_seed, window=4)
        last = rows[-1]
        smooth = [c[-4:].mean() for c in curves]
        assert last["mean_return"] == pytest.approx(curves[:, -1].mean())
        assert last["rolling_mean"] == pytest.approx(np.mean(smooth))
        half = 1.96 * np.std(smooth, ddof=1) / math.sqrt(3)
        assert last["ci_low"] == pytest.approx(np.mean(smooth) - half)
        assert last["ci_high"] == pytest.approx(np.mean(smooth) + half)

    def test_only_common_steps(self):
        a = [{"step": s, "mean_return": 1.0} for s in (10, 20, 30)]
        b = [{"step": s, "mean_return": 2.0} for s in (10, 20)]
        assert [r["step"] for r in aggregate_rows([a, b])] == [10, 20]

    def test_single_seed_has_zero_width_band(self):
        rows = aggregate_rows([[{"step": 1, "mean_return": 5.0}]])
        assert rows[0]["ci_low"] == rows[0]["ci_high"] == 5.0

    def test_empty(self):
        assert aggregate_rows([]) == [] and aggregate_rows([[]]) == []


def test_summary_rows_average_losses_between_evals():
    records = [
        {"type": "update", "policy_loss": None, "bce": 0.5},
        {"type": "update", "policy_loss": 2.0, "bce": 0.3},
        {"type": "eval", "step": 2, "episode": 0, "mean_return": -5.0, "std_return": 1.0, "pqc_calls": 2},
        {"type": "update", "policy_loss": 4.0, "bce": None},
        {"type": "eval", "step": 3, "episode": 1, "mean_return": -4.0, "std_return": 0.0, "pqc_calls": 3},
    ]
    rows = summary_rows(records, {2: 0.1})
    assert rows[0]["policy_loss"] == 2.0 and rows[0]["bce_loss"] == pytest.approx(0.4)
    assert rows[1]["policy_loss"] == 4.0 and rows[1]["bce_loss"] is None
    assert rows[0]["minutes"] == 0.1 and rows[1]["minutes"] is None


def test_final_score():
    rows = [{"mean_return": float(v)} for v in range(30)]
    assert final_score(rows) == pytest.approx(np.mean(range(10, 30)))
    assert math.isnan(final_score([]))


def test_csv_blank_for_missing(tmp_path):
    write_csv(tmp_path / "x.csv", ("a", "b", "c"), [{"a": 1, "b": None, "c": float("nan")}])
    assert (tmp_path / "x.csv").read_text() == "a,b,c\n1,,\n"


def test_csv_floats_round_trip(tmp_path):
    v = 0.1 + 0.2
    write_csv(tmp_path / "x.csv", ("v",), [{"v": v}])
    assert float(read_csv(tmp_path / "x.csv")[0]["v"]) == v


class TestRunTraining:
    @pytest.fixture
    def run(self, tmp_path, tiny_config):
        cfg = RunConfig.from_dict(tiny_config)
        return cfg, run_training(cfg, tmp_path), tmp_path

    def test_layout_and_headers(self, run):
        _, _, out = run
        for seed in (0, 1):
            d = out / f"seed_{seed}"
            assert (d / "metrics.jsonl").is_file() and (d / "checkpoint.npz").is_file()
            assert header(d / "summary.csv") == golden("summary_header.csv")
        assert header(out / "aggregate.csv") == golden("aggregate_header.csv")

    def test_summary_matches_stream(self, run):
        _, _, out = run
        rows = read_csv(out / "seed_0" / "summary.csv")
        evals = [r for r in read_jsonl(out / "seed_0" / "metrics.jsonl") if r["type"] == "eval"]
        assert [int(r["step"]) for r in rows] == [10, 20, 30, 40]
        assert [float(r["mean_return"]) for r in rows] == [e["mean_return"] for e in evals]
        assert int(rows[-1]["pqc_calls"]) == 40

    def test_aggregate_recomputed_from_summaries(self, run):
        _, _, out = run
        curves = np.array([[float(r["mean_return"]) for r in read_csv(out / f"seed_{s}" / "summary.csv")] for s in (0, 1)])
        agg = read_csv(out / "aggregate.csv")
        assert [float(r["mean_return"]) for r in agg] == pytest.approx(curves.mean(axis=0).tolist())
        assert all(r["seeds"] == "2" for r in agg)

    def test_manifest_round_trips_config(self, run):
        cfg, manifest, out = run
        on_disk = json.loads((out / "manifest.json").read_text())
        assert RunConfig.from_dict(on_disk["config"]) == cfg
        assert on_disk["code_version"] and on_disk["started"] <= on_disk["finished"]
        assert [s["pqc_calls"] for s in on_disk["seeds"]] == [40, 40]
        assert all(s["update_quantum_calls"] == 0 for s in on_disk["seeds"])

    def test_zero_steps(self, tmp_path, tiny_config):
        cfg = RunConfig.from_dict({**tiny_config, "total_steps": 0, "seeds": [0]})
        manifest = run_training(cfg, tmp_path)
        assert read_csv(tmp_path / "seed_0" / "summary.csv") == []
        assert manifest["seeds"][0]["final_mean_return"] is None


class TestAblation:
    def test_cells(self, tiny_config):
        cfg = RunConfig.from_dict({**tiny_config, "grid": {"variants": ["pqc", "fc"], "shots": [10, 100], "qubits": [2, 3]}})
        names = [n for n, _ in ablation_cells(cfg)]
        assert names == ["pqc_n2_s10", "pqc_n2_s100", "pqc_n3_s10", "pqc_n3_s100", "fc"]
        pqc_cell = dict(ablation_cells(cfg))["pqc_n3_s100"]
        assert (pqc_cell.pqc.num_qubits, pqc_cell.pqc.shots) == (3, 100)

    def test_table(self, tmp_path, tiny_config):
        cfg = RunConfig.from_dict({**tiny_config, "seeds": [0], "total_steps": 20,
                                   "grid": {"variants": ["pqc", "zero"], "shots": [10], "qubits": [2]}})
        run_ablation(cfg, tmp_path)
        assert header(tmp_path / "ablation.csv") == golden("ablation_header.csv")
        rows = read_csv(tmp_path / "ablation.csv")
        assert [(r["variant"], r["shots"], r["pqc_calls"], r["status"]) for r in rows] == [
            ("pqc", "10", "20", "ok"), ("zero", "", "0", "ok"),
        ]

    def test_failing_cell_is_recorded(self, tmp_path, tiny_config, monkeypatch):
        import hdqnn.harness as harness

        real = harness.run_training

        def flaky(cell, out, log=None):
            if cell.variant == "rbg":
                raise RuntimeError("simulated crash")
            return real(cell, out, log)

        monkeypatch.setattr(harness, "run_training", flaky)
        cfg = RunConfig.from_dict({**tiny_config, "seeds": [0], "total_steps": 20,
                                   "grid": {"variants": ["rbg", "zero"]}})
        rows = run_ablation(cfg, tmp_path)
        assert rows[0]["status"].startswith("failed: RuntimeError") and rows[1]["status"] == "ok"
        assert (tmp_path / "ablation.csv").is_file()
