"""Run orchestration and artifact output for training and ablation grids.

Layout of one training run under its output directory::

    seed_<s>/metrics.jsonl   one record per update and per evaluation
    seed_<s>/summary.csv     one row per evaluation (SUMMARY_COLUMNS)
    seed_<s>/checkpoint.npz  final agent state, resumable
    aggregate.csv            across-seed curve with rolling mean and CI band
    manifest.json            config snapshot, timestamps, paths, final stats
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from dataclasses import replace
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import RunConfig
from .envs import make_env
from .rl_agent import MetricsStream, train

SUMMARY_COLUMNS = ("step", "episode", "mean_return", "std_return", "policy_loss", "bce_loss", "pqc_calls", "minutes")
AGGREGATE_COLUMNS = ("step", "seeds", "mean_return", "std_return", "rolling_mean", "rolling_std", "ci_low", "ci_high")
ABLATION_COLUMNS = ("variant", "shots", "qubits", "mean_return", "std_return", "best_return", "minutes", "pqc_calls", "status")
ROLLING_WINDOW = 10
FINAL_EVALS = 20
CI_Z = 1.96


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_json_atomic(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def summary_rows(records: list[dict], minutes_at_eval: dict | None = None) -> list[dict]:
    """Fold a metrics stream into one row per evaluation.

    ``policy_loss`` and ``bce_loss`` average the update records since the
    previous evaluation; ``minutes`` comes from the wall clock seen at each
    evaluation (it is not part of the metrics stream).
    """
    minutes_at_eval = minutes_at_eval or {}
    rows, policy, bce = [], [], []
    for rec in records:
        if rec["type"] == "update":
            if rec.get("policy_loss") is not None:
                policy.append(rec["policy_loss"])
            if rec.get("bce") is not None:
                bce.append(rec["bce"])
        elif rec["type"] == "eval":
            rows.append(
                {
                    "step": rec["step"],
                    "episode": rec["episode"],
                    "mean_return": rec["mean_return"],
                    "std_return": rec["std_return"],
                    "policy_loss": float(np.mean(policy)) if policy else None,
                    "bce_loss": float(np.mean(bce)) if bce else None,
                    "pqc_calls": rec["pqc_calls"],
                    "minutes": minutes_at_eval.get(rec["step"]),
                }
            )
            policy, bce = [], []
    return rows


def rolling_mean(values, window: int = ROLLING_WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    values = np.asarray(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def aggregate_rows(per_seed: list[list[dict]], window: int = ROLLING_WINDOW) -> list[dict]:
    """Across-seed curve at the evaluation steps every seed reached.

    Each seed's returns are smoothed with a trailing window first; the band is
    a normal-approximation 95% interval of the across-seed mean of the
    smoothed curves.
    """
    if not per_seed or any(not rows for rows in per_seed):
        return []
    common = sorted(set.intersection(*({r["step"] for r in rows} for rows in per_seed)))
    raw = np.array([[r["mean_return"] for r in rows if r["step"] in common] for rows in per_seed])
    smooth = np.array([rolling_mean(curve, window) for curve in raw])
    n = raw.shape[0]
    out = []
    for j, step in enumerate(common):
        sm = smooth[:, j]
        half = CI_Z * sm.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
        out.append(
            {
                "step": step,
                "seeds": n,
                "mean_return": float(raw[:, j].mean()),
                "std_return": float(raw[:, j].std()),
                "rolling_mean": float(sm.mean()),
                "rolling_std": float(sm.std()),
                "ci_low": float(sm.mean() - half),
                "ci_high": float(sm.mean() + half),
            }
        )
    return out


def final_score(rows: list[dict], last: int = FINAL_EVALS) -> float:
    """Mean return over the final ``last`` evaluations (nan without any)."""
    if not rows:
        return float("nan")
    return float(np.mean([r["mean_return"] for r in rows[-last:]]))


def run_seed(config: RunConfig, seed: int, seed_dir: Path, log=None) -> dict:
    """Train one seed and write its metrics, summary and checkpoint."""
    seed_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = seed_dir / "metrics.jsonl"
    metrics_path.unlink(missing_ok=True)
    minutes = {}

    def on_eval(rec):
        minutes[rec["step"]] = rec["minutes"]
        if log:
            log(f"seed {seed} step {rec['step']}: return {rec['mean_return']:.1f} ({rec['minutes']:.2f} min)")

    stream = MetricsStream(metrics_path)
    t0 = time.perf_counter()
    try:
        agent = train(
            make_env(config.env),
            config.variant,
            config.pqc,
            config.agent,
            config.qt,
            config.train_settings(),
            seed=seed,
            metrics=stream,
            checkpoint_path=seed_dir / "checkpoint.npz",
            on_eval=on_eval,
        )
    finally:
        stream.close()
    rows = summary_rows(stream.records, minutes)
    write_csv(seed_dir / "summary.csv", SUMMARY_COLUMNS, rows)
    return {
        "seed": seed,
        "metrics": str(metrics_path),
        "summary": str(seed_dir / "summary.csv"),
        "checkpoint": str(seed_dir / "checkpoint.npz"),
        "final_mean_return": final_score(rows),
        "best_return": max((r["mean_return"] for r in rows), default=None),
        "pqc_calls": agent.counter.pqc_calls,
        "eval_pqc_calls": agent.eval_counter.pqc_calls,
        "update_quantum_calls": agent.update_quantum_calls,
        "minutes": (time.perf_counter() - t0) / 60.0,
        "rows": rows,
    }


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def run_training(config: RunConfig, out_dir: Path | None = None, log=None) -> dict:
    """Run every seed of ``config``; write per-seed files, aggregate and manifest."""
    out_dir = Path(out_dir) if out_dir is not None else config.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    results = [run_seed(config, seed, out_dir / f"seed_{seed}", log) for seed in config.seeds]
    write_csv(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows([r["rows"] for r in results]))
    manifest = {
        "config": config.to_dict(),
        "code_version": code_version(),
        "started": started,
        "finished": _now(),
        "aggregate": str(out_dir / "aggregate.csv"),
        "seeds": [{k: _jsonable(v) for k, v in r.items() if k != "rows"} for r in results],
    }
    write_json_atomic(out_dir / "manifest.json", manifest)
    return manifest


def ablation_cells(config: RunConfig) -> list[tuple[str, RunConfig]]:
    """One cell per classical variant plus one per (qubits, shots) PQC pair."""
    cells = []
    for variant in config.grid.variants:
        if variant == "pqc":
            for n in config.grid.qubits:
                for s in config.grid.shots:
                    pqc = replace(config.pqc, num_qubits=n, shots=s)
                    cells.append((f"pqc_n{n}_s{s}", replace(config, variant="pqc", pqc=pqc)))
        else:
            cells.append((variant, replace(config, variant=variant)))
    return cells


def run_ablation(config: RunConfig, out_dir: Path | None = None, log=None) -> list[dict]:
    """Run the grid under identical budgets and seeds; a failing cell is recorded, not fatal."""
    out_dir = Path(out_dir) if out_dir is not None else config.resolved_output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _now()
    table = []
    for name, cell in ablation_cells(config):
        row = {
            "variant": cell.variant,
            "shots": cell.pqc.shots if cell.variant == "pqc" else None,
            "qubits": cell.pqc.num_qubits,
        }
        try:
            manifest = run_training(cell, out_dir / name, log)
        except Exception as exc:  # noqa: BLE001 - the grid must keep going
            row["status"] = f"failed: {type(exc).__name__}: {exc}"
            table.append(row)
            continue
        seeds = manifest["seeds"]
        finals = np.array([s["final_mean_return"] for s in seeds], dtype=float)
        row.update(
            mean_return=float(np.mean(finals)),
            std_return=float(np.std(finals)),
            best_return=max((s["best_return"] for s in seeds if s["best_return"] is not None), default=None),
            minutes=float(sum(s["minutes"] for s in seeds)),
            pqc_calls=int(round(np.mean([s["pqc_calls"] for s in seeds]))),
            status="ok",
        )
        table.append(row)
    write_csv(out_dir / "ablation.csv", ABLATION_COLUMNS, table)
    write_json_atomic(
        out_dir / "manifest.json",
        {
            "config": config.to_dict(),
            "code_version": code_version(),
            "started": started,
            "finished": _now(),
            "table": str(out_dir / "ablation.csv"),
            "cells": [name for name, _ in ablation_cells(config)],
        },
    )
    return table
