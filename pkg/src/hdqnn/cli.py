"""Command-line front end: ``python -m hdqnn <subcommand>``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error. Relative output directories resolve against ``$HDQNN_OUTPUT_ROOT``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .envs import make_env
from .grad_oracle import SHIFT, finite_diff_jacobian, parameter_shift_jacobian, shift_cost_report
from .harness import ABLATION_COLUMNS, run_ablation, run_training
from .neural import DenseNet, gradient_check
from .pqc_layer import PqcConfig
from .rl_agent import agent_from_checkpoint, evaluate, noiseless_view, read_checkpoint
from .surrogate import QtDnn, fidelity_report

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("hdqnn")

# small stand-ins for every activation pairing the agent uses
CHECK_TOPOLOGIES = (
    ([6, 8, 5], "linear"),
    ([6, 8, 5], "sigmoid"),
    ([6, 8, 3], "tanh"),
    ([6, 8], "leaky_relu"),
)


def _config_from_args(args):
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seeds=[{args.seed}]")
    return load_config(args.config, overrides)


def cmd_train(args) -> int:
    config = _config_from_args(args)
    out = Path(args.out) if args.out else None
    manifest = run_training(config, out, log=log.info)
    for s in manifest["seeds"]:
        print(f"seed {s['seed']}: final mean return {s['final_mean_return']}, pqc_calls {s['pqc_calls']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    out = Path(args.out) if args.out else None
    table = run_ablation(config, out, log=log.info)
    print(",".join(ABLATION_COLUMNS))
    for row in table:
        print(",".join("" if row.get(c) is None else str(row.get(c)) for c in ABLATION_COLUMNS))
    return EXIT_OK


def verify_gradients(num_qubits=5, num_layers=5, probes=10, seed=0, tol=1e-6, net_tol=1e-4, shift=SHIFT, out=print) -> bool:
    """Shift rule against finite differences, then network backprop checks."""
    rng = np.random.default_rng(seed)
    ok = True

    one = PqcConfig(num_qubits=1, num_layers=1, shots=1)
    theta = np.pi / 3
    d_theta = parameter_shift_jacobian(np.array([theta, 0.0, 0.0, 0.0]), one, shift=shift)[0, 0]
    closed = np.sin(theta) / 2
    out(f"single-qubit dp/dtheta at theta=pi/3: {d_theta:.7f} (closed form {closed:.7f})")
    if abs(d_theta - closed) > tol:
        out(f"FAIL single-qubit: deviation {abs(d_theta - closed):.3e}")
        ok = False

    config = PqcConfig(num_qubits=num_qubits, num_layers=num_layers, shots=1)
    worst = 0.0
    for k in range(probes):
        q_i = np.concatenate(
            [rng.uniform(-np.pi, np.pi, config.angle_dim), rng.integers(0, num_qubits, 2 * num_layers).astype(float)]
        )
        dev = float(np.max(np.abs(parameter_shift_jacobian(q_i, config, shift=shift) - finite_diff_jacobian(q_i, config))))
        worst = max(worst, dev)
        if dev > tol:
            out(f"FAIL probe {k}: shift-rule vs finite-difference deviation {dev:.3e} > {tol:.0e}")
            ok = False
    out(f"shift rule vs finite differences: max deviation {worst:.3e} over {probes} probes (N={num_qubits}, M={num_layers})")

    for sizes, act in CHECK_TOPOLOGIES:
        net = DenseNet(sizes, rng, output_activation=act)
        err = gradient_check(net, rng.standard_normal((4, sizes[0])), rng)
        out(f"net {sizes} ({act} output): max relative error {err:.3e}")
        if err > net_tol:
            out(f"FAIL net {sizes}: relative error {err:.3e} > {net_tol:.0e}")
            ok = False
    out("PASS" if ok else "FAIL")
    return ok


def cmd_verify_gradients(args) -> int:
    ok = verify_gradients(args.qubits, args.layers, args.probes, args.seed, args.tol, args.net_tol, shift=args.shift)
    return EXIT_OK if ok else EXIT_VERIFY


def _load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    return read_checkpoint(path)


def cmd_fidelity_report(args) -> int:
    meta, arrays = _load_checkpoint(args.checkpoint)
    if "net:qtdnn" not in arrays:
        raise ConfigError(f"{args.checkpoint}: checkpoint has no fitted qtDNN (variant {meta['variant']!r})")
    config = PqcConfig.from_dict(meta["pqc"])
    qtdnn = QtDnn(config, meta["qt"]["hidden"], np.random.default_rng(0))
    qtdnn.net.set_flat_params(arrays["net:qtdnn"])
    rng = np.random.default_rng(args.seed)
    reports = []
    for rec in meta.get("fit_records", []):
        radius = rec["radius"] if args.radius is None else args.radius
        report = fidelity_report(qtdnn, config, rec["center"], radius, args.probes, rng).to_dict()
        report["bce"] = rec["bce"]
        report["update"] = rec.get("update")
        reports.append(report)
    text = json.dumps(reports, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_bench_cost(args) -> int:
    try:
        report = shift_cost_report(args.I, args.O, args.S, args.N_b, args.K, args.per_shot_time)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(report.to_json(indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    meta, arrays = _load_checkpoint(args.checkpoint)
    env = make_env(meta.get("env_id") or "pendulum")
    agent = agent_from_checkpoint(meta, arrays, env)
    agent.eval_counter.pqc_calls = agent.eval_counter.shot_executions = 0
    actor = noiseless_view(agent.actor) if args.noiseless else agent.actor
    mean, std = evaluate(actor, env, args.episodes, seed=args.seed, counter=agent.eval_counter)
    print(json.dumps({"mean_return": mean, "std_return": std, "episodes": args.episodes,
                      "eval_pqc_calls": agent.eval_counter.pqc_calls}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdqnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, helptext in (
        ("train", cmd_train, "train one variant over the configured seeds"),
        ("ablate", cmd_ablate, "run the variant / qubits / shots grid"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON run config (defaults apply when omitted)")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="dotted-key override, repeatable")
        p.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.set_defaults(func=func)

    p = sub.add_parser("verify-gradients", help="check gradient oracles and network backprop")
    p.add_argument("--qubits", type=int, default=5)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6, help="shift rule vs finite differences, sup norm")
    p.add_argument("--net-tol", type=float, default=1e-4, help="backprop vs finite differences, relative")
    p.add_argument("--shift", type=float, default=SHIFT, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify_gradients)

    p = sub.add_parser("fidelity-report", help="surrogate vs exact layer map around recorded fit centers")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--radius", type=float, help="override the recorded ball radius")
    p.add_argument("--probes", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_fidelity_report)

    p = sub.add_parser("bench-cost", help="parameter-shift cost model as JSON")
    p.add_argument("--I", type=int, default=220, help="control inputs per layer")
    p.add_argument("--O", type=int, default=10, help="layer outputs")
    p.add_argument("--S", type=int, default=10, help="shots per circuit")
    p.add_argument("--N-b", dest="N_b", type=int, default=256, help="mini-batch size")
    p.add_argument("--K", type=int, default=1, help="number of updates")
    p.add_argument("--per-shot-time", type=float, default=0.5e-6, help="seconds per shot")
    p.set_defaults(func=cmd_bench_cost)

    p = sub.add_parser("eval", help="evaluate a checkpointed actor")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noiseless", action="store_true", help="run the quantum layer without gate noise")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
