"""Command-line entry point.

Every subcommand prints one JSON document on stdout. Failures exit with
status 1 (2 for usage errors) and print a single JSON line
``{"error": ..., "type": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import asymptotic, harness, hcre, steady
from .config import load_problem
from .errors import PreconditionError
from .model import path_topology, validate, variant_weights

PRESET_ALIASES = {
    "scalar": "SCALAR_EXAMPLE",
    "scalar_example": "SCALAR_EXAMPLE",
    "random6d": "RANDOM6D",
    "target": "TARGET_TRACKING",
    "target_tracking": "TARGET_TRACKING",
    "target-tracking": "TARGET_TRACKING",
}


def _preset(name: str) -> str:
    key = name.lower()
    if key not in PRESET_ALIASES:
        raise PreconditionError(f"unknown preset {name!r}; choose from {sorted(set(PRESET_ALIASES))}")
    return PRESET_ALIASES[key]


def resolve(args):
    """Return ``(model, weights, topology)`` for the requested preset or config."""
    if args.config:
        prob = load_problem(args.config, {
            "variant": args.variant, "depth": args.depth, "epsilon": args.epsilon, "seed": args.seed,
        })
        return prob.model, prob.weights, prob.topology
    preset = _preset(args.preset or "scalar")
    if preset == "SCALAR_EXAMPLE":
        topo = path_topology(3)
        model, weights = harness.preset_scalar_example()
        if (args.variant or "cidf").upper() != "CIDF" or args.depth not in (None, 1):
            weights = variant_weights(topo, args.variant or "cidf", args.depth, args.epsilon)
        return model, weights, topo
    builder = harness.preset_random6d if preset == "RANDOM6D" else harness.preset_target_tracking
    seed = harness.DEFAULT_NETWORK_SEED if args.seed is None else args.seed
    model, recipe = builder(seed)
    topo = recipe.build()
    weights = variant_weights(topo, args.variant or "cidf", args.depth, args.epsilon)
    return model, weights, topo


def _floats(a) -> list:
    return [float(x) for x in np.ravel(a)]


def _write(prefix: str | None, suffix: str, text: str) -> str | None:
    if not prefix:
        return None
    path = Path(f"{prefix}{suffix}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return str(path)


def _require_valid(model, weights) -> None:
    rep = validate(model, weights)
    if not rep.ok:
        raise PreconditionError("validation failed: " + "; ".join(rep.failures()))


def cmd_solve(args) -> dict:
    model, weights, _ = resolve(args)
    _require_valid(model, weights)
    P, rep = hcre.solve_fixed_point(model, weights, args.init, args.tol, args.max_iter)
    out = {
        "variant": weights.variant,
        "depth": weights.fusion_depth,
        "report": rep.summary(),
        "contraction_ratio": rep.contraction_ratio(),
    }
    if model.n == 1:
        out["P"] = _floats(P)
    written = _write(args.out, "trace_history.csv", rep.to_csv())
    if written:
        out["files"] = [written]
    return out


def cmd_certify(args) -> dict:
    model, weights, _ = resolve(args)
    rep = validate(model, weights)
    out = {"validation": rep.as_dict()}
    if not rep.ok:
        raise PreconditionError("validation failed: " + "; ".join(rep.failures()))
    gap = hcre.verify_uniqueness(model, weights, (0.01, "identity", 100.0), args.tol, args.max_iter)
    P, _ = hcre.solve_fixed_point(model, weights, "identity", args.tol, args.max_iter)
    cc = hcre.contraction_certificate(P, model, weights)
    ops = steady.build_error_operators(P, model, weights)
    sc = steady.schur_certificate(ops, P, weights)
    out.update({
        "uniqueness_gap": gap,
        "uniqueness_certified": gap <= hcre.uniqueness_threshold(P, args.tol),
        "contraction": {"rho": cc.rho, "linear_rho": cc.linear_rho, "certified": cc.certified},
        "schur": {"rho": sc.rho, "beta": sc.beta, "lyapunov_ok": sc.lyapunov_ok},
    })
    return out


def cmd_steady(args) -> dict:
    model, weights, _ = resolve(args)
    _require_valid(model, weights)
    P, rep = hcre.solve_fixed_point(model, weights, "identity", args.tol, args.max_iter)
    sc = steady.theory(P, model, weights)
    out = {
        "per_node_trace": _floats(sc.per_node_trace),
        "network_mse": sc.network_mse,
        "solver_residual": rep.residual,
    }
    files = [_write(args.out, "steady.csv", sc.to_csv())]
    if args.dump_pcal:
        files.append(_write(args.out, "pcal.txt", sc.pcal_text()))
    files = [f for f in files if f]
    if files:
        out["files"] = files
    return out


def cmd_sweep(args) -> dict:
    model, weights, topo = resolve(args)
    if topo is None:
        raise PreconditionError("sweep needs a topology (preset or config topology section)")
    depths = [int(x) for x in args.depths.split(",")]
    res = asymptotic.fusion_depth_sweep(
        model, topo, args.variant or "cidf", depths, tol=args.tol, epsilon=args.epsilon,
        metropolis=args.metropolis, max_iter=args.max_iter,
    )
    out = {
        "variant": res.variant,
        "weights": res.label,
        "depths": res.depths,
        "traces": [_floats(r) for r in res.traces],
        "spread": _floats(res.spread()),
        "centralized_trace": res.centralized_trace,
        "asymptotic_trace": res.asymptotic_trace,
    }
    written = _write(args.out, "sweep.csv", res.to_csv())
    if written:
        out["files"] = [written]
    return out


def cmd_simulate(args) -> dict:
    cfg_kwargs = dict(
        trials=args.trials, horizon=args.horizon, seed=args.seed or 0,
        variant=args.variant or "cidf", depth=args.depth, epsilon=args.epsilon,
        noise_scale=args.noise_scale, simulation=args.simulation,
    )
    if args.config:
        model, weights, _ = resolve(args)
        cfg = harness.ExperimentConfig(preset="CUSTOM", model=model, weights=weights, **cfg_kwargs)
    else:
        cfg = harness.ExperimentConfig(
            preset=_preset(args.preset or "target"),
            network_seed=harness.DEFAULT_NETWORK_SEED if args.network_seed is None else args.network_seed,
            **cfg_kwargs,
        )
    report = harness.monte_carlo(cfg)
    out = report.summary()
    if args.out:
        out["files"] = [str(p) for p in harness.emit_report(report, args.out)]
    return out


def cmd_demo_bound(args) -> dict:
    bound, exact = hcre.classical_bound_demo()
    return {"bound": bound, "exact": exact, "bound_exceeds_exact": bound > exact}


def _init_arg(value: str):
    try:
        return float(value)
    except ValueError:
        return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", help="scalar | random6d | target-tracking")
    common.add_argument("--config", help="YAML problem description")
    common.add_argument("--variant", type=str.lower, choices=["cidf", "icf", "cmci"])
    common.add_argument("--depth", type=int, help="fusion depth L (default 3 for icf, else 1)")
    common.add_argument("--epsilon", type=float, help="ICF consensus step")
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, default=10_000)
    common.add_argument("--seed", type=int, help="network seed (simulate: first trial seed)")
    common.add_argument("--out", help="output path prefix")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hcre", description="Harmonic-coupled Riccati equation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="fixed point of the coupled equations")
    s.add_argument("--init", default="identity", type=_init_arg, help="identity | q | positive scale factor")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("certify", parents=[common], help="uniqueness, contraction and Schur certificates")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("steady", parents=[common], help="steady-state error covariance")
    s.add_argument("--dump-pcal", action="store_true", help="also write the stacked covariance (small problems)")
    s.set_defaults(func=cmd_steady)

    s = sub.add_parser("sweep", parents=[common], help="fusion-depth asymptotics")
    s.add_argument("--depths", default="1,2,5,10,20,30,50")
    s.add_argument("--metropolis", action="store_true", help="doubly stochastic CIDF weights")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo MSE against theory")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--horizon", type=int, default=100)
    s.add_argument("--noise-scale", type=float, default=1.0)
    s.add_argument("--network-seed", type=int)
    s.add_argument("--simulation", choices=["auto", "state", "error"], default="auto",
                   help="state or error coordinates; auto uses error coordinates for fast-growing plants")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("demo-bound", parents=[common], help="classical bound vs exact value")
    s.set_defaults(func=cmd_demo_bound)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
