"""Experiment presets, Monte Carlo evaluation and result files."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import filtersim, hcre, linalg, steady
from .errors import ConvergenceError, PreconditionError
from .model import (
    FusionWeights,
    SystemModel,
    Topology,
    random_geometric_topology,
    system_model,
    validate,
    variant_weights,
)

log = logging.getLogger(__name__)

PRESETS = ("SCALAR_EXAMPLE", "RANDOM6D", "TARGET_TRACKING", "CUSTOM")
SIMULATION_MODES = ("auto", "state", "error")
# auto mode switches to error coordinates once the plant can grow by this factor
GROWTH_LIMIT = 1e6

DEFAULT_NETWORK_SEED = 2024
NETWORK = {"N": 50, "width": 500.0, "radius": 110.0}
# node kinds in index order: 3 of the first observation row, 3 of the second, the rest silent
KIND_COUNTS = (3, 3, 44)

RANDOM6D_A = np.array([
    [0.3836, 0.2558, 0.2525, 0.1766, 0.4524, 0.3534],
    [0.1978, 0.2351, 0.4546, 0.5642, 0.1793, 0.4899],
    [0.3322, 0.4508, 0.4779, 0.4064, 0.5716, 0.4073],
    [0.5927, 0.4560, 0.5109, 0.6161, 0.2135, 0.1504],
    [0.6139, 0.4898, 0.3574, 0.3858, 0.6741, 0.6985],
    [0.5016, 0.0795, 0.0191, 0.5526, 0.0543, 0.4081],
])
RANDOM6D_C1 = [0.3711, 0.4438, 0.2733, 0.3920, 0.3768, 0.1424]
RANDOM6D_C2 = [0.7154, 0.3439, 0.4017, 0.9339, 0.1471, 0.2543]
RANDOM6D_Q = np.array([
    [1.79, -0.69, 0.48, -0.39, -0.26, -0.25],
    [-0.69, 1.45, -0.07, 0.01, 0.56, 0.05],
    [0.48, -0.07, 2.12, -0.11, -0.61, -0.61],
    [-0.39, 0.01, -0.11, 1.88, 0.49, 0.46],
    [-0.26, 0.56, -0.61, 0.49, 2.37, 0.20],
    [-0.25, 0.05, -0.61, 0.46, 0.20, 1.24],
])
RANDOM6D_R = 0.3818


@dataclass(frozen=True)
class TopologyRecipe:
    N: int = 50
    width: float = 500.0
    radius: float = 110.0
    seed: int = DEFAULT_NETWORK_SEED

    def build(self) -> Topology:
        return random_geometric_topology(self.N, self.width, self.radius, self.seed)


def _kind_sensors(rows, R, counts=KIND_COUNTS) -> list:
    sensors = []
    for row, count in zip(rows, counts):
        sensors += [(row, R)] * count
    return sensors


def preset_scalar_example() -> tuple[SystemModel, FusionWeights]:
    """``A = Q = R = 1`` on three nodes; only node 1 measures; path-graph degree weights."""
    return hcre.scalar_example()


def preset_random6d(seed: int = DEFAULT_NETWORK_SEED) -> tuple[SystemModel, TopologyRecipe]:
    n = 6
    model = system_model(
        RANDOM6D_A, RANDOM6D_Q,
        _kind_sensors([RANDOM6D_C1, RANDOM6D_C2, np.zeros(n)], [[RANDOM6D_R]]),
    )
    return model, TopologyRecipe(seed=seed)


def target_tracking_matrices(T: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([[1.0, T], [0.0, 1.0]])
    A = np.kron(np.eye(2), a)
    G = np.array([[T ** 3 / 3, T ** 2 / 2], [T ** 2 / 2, T]])
    Q = np.block([[G, 0.5 * G], [0.5 * G, G]])
    return A, Q


def preset_target_tracking(seed: int = DEFAULT_NETWORK_SEED) -> tuple[SystemModel, TopologyRecipe]:
    """Two decoupled constant-velocity axes with correlated process noise."""
    A, Q = target_tracking_matrices(1.0)
    rows = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], np.zeros(4)]
    model = system_model(A, Q, _kind_sensors(rows, [[1.0]]))
    return model, TopologyRecipe(seed=seed)


@dataclass
class ExperimentConfig:
    preset: str = "TARGET_TRACKING"
    trials: int = 1000
    horizon: int = 100
    seed: int = 0
    network_seed: int = DEFAULT_NETWORK_SEED
    variant: str = "CIDF"
    depth: Optional[int] = None  # variant default when None
    epsilon: Optional[float] = None
    omega: Optional[list] = None
    noise_scale: float = 1.0
    x0: Optional[list] = None
    init_estimate: Optional[list] = None
    init_cov_scale: float = 1.0
    chunk: int = 250
    simulation: str = "auto"
    out: Optional[str] = None
    model: Optional[SystemModel] = field(default=None, repr=False)
    weights: Optional[FusionWeights] = field(default=None, repr=False)

    def __post_init__(self):
        self.preset = self.preset.upper()
        if self.preset not in PRESETS:
            raise PreconditionError(f"unknown preset {self.preset!r}")
        if self.trials < 1 or self.horizon < 1:
            raise PreconditionError("trials and horizon must be at least 1")
        self.simulation = self.simulation.lower()
        if self.simulation not in SIMULATION_MODES:
            raise PreconditionError(f"simulation must be one of {SIMULATION_MODES}")


def build_problem(cfg: ExperimentConfig) -> tuple[SystemModel, FusionWeights]:
    if cfg.preset == "CUSTOM":
        if cfg.model is None or cfg.weights is None:
            raise PreconditionError("CUSTOM preset needs model and weights")
        return cfg.model, cfg.weights
    if cfg.preset == "SCALAR_EXAMPLE":
        model, weights = preset_scalar_example()
        if cfg.variant.upper() != "CIDF" or cfg.depth not in (None, 1):
            from .model import path_topology

            weights = variant_weights(path_topology(3), cfg.variant, cfg.depth, cfg.epsilon, cfg.omega)
        return model, weights
    builder = preset_random6d if cfg.preset == "RANDOM6D" else preset_target_tracking
    model, recipe = builder(cfg.network_seed)
    topo = recipe.build()
    return model, variant_weights(topo, cfg.variant, cfg.depth, cfg.epsilon, cfg.omega)


@dataclass
class McReport:
    mse_ik: np.ndarray  # (horizon, N)
    mse_k: np.ndarray  # (horizon,)
    theory_mse: float
    relative_gap_tail: float
    theory_per_node: np.ndarray
    config: dict
    solver: dict
    certificates: dict

    def summary(self) -> dict:
        return {
            "preset": self.config["preset"],
            "variant": self.config["variant"],
            "depth": self.config["depth"],
            "trials": self.config["trials"],
            "horizon": self.config["horizon"],
            "seed": self.config["seed"],
            "network_seed": self.config["network_seed"],
            "simulation": self.config.get("simulation", "state"),
            "trial_seeds": [self.config["seed"], self.config["seed"] + self.config["trials"] - 1],
            "theory_mse": self.theory_mse,
            "tail_mse": float(tail_mean(self.mse_k)),
            "relative_gap_tail": self.relative_gap_tail,
            "solver": self.solver,
            "certificates": self.certificates,
        }


def tail_mean(series: np.ndarray, fraction: float = 0.25) -> float:
    H = len(series)
    start = H - max(1, int(round(fraction * H)))
    return float(np.mean(series[start:]))


def simulation_mode(model: SystemModel, cfg: ExperimentConfig) -> str:
    """Resolve ``auto``: error coordinates when ``rho(A)**horizon`` exceeds ``GROWTH_LIMIT``."""
    if cfg.simulation != "auto":
        return cfg.simulation
    rho = linalg.spectral_radius(model.A)
    return "error" if rho > 1 and cfg.horizon * np.log(rho) > np.log(GROWTH_LIMIT) else "state"


def monte_carlo(cfg: ExperimentConfig) -> McReport:
    """Average squared a-priori errors over independent runs and compare with theory.

    Trial ``l`` uses seed ``cfg.seed + l``; runs are processed in index order in
    chunks, so the result does not depend on chunking. Both simulation modes
    consume the same noise draws and differ only by rounding.
    """
    model, weights = build_problem(cfg)
    rep = validate(model, weights)
    if not rep.ok:
        raise PreconditionError("invalid problem: " + "; ".join(rep.failures()))

    P, solve_rep = hcre.solve_fixed_point(model, weights, "identity", tol=1e-12, max_iter=100_000)
    if not solve_rep.converged:
        raise ConvergenceError(f"fixed point did not converge (residual {solve_rep.residual!r})")
    ops = steady.build_error_operators(P, model, weights)
    cert = steady.schur_certificate(ops, P, weights)
    theory = steady.steady_covariance(ops)

    n, H = model.n, cfg.horizon
    x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    bank0 = filtersim.initial_bank(model, cfg.init_estimate, cfg.init_cov_scale * np.eye(n))
    mode = simulation_mode(model, cfg)
    total = np.zeros((H, model.N))
    for start in range(0, cfg.trials, cfg.chunk):
        stop = min(cfg.trials, start + cfg.chunk)
        trajs = [
            filtersim.simulate_plant(model, H, x0, cfg.seed + l, cfg.noise_scale)
            for l in range(start, stop)
        ]
        if mode == "error":
            e0 = np.repeat((x0 - bank0.x[0])[None], len(trajs), axis=0)
            se = filtersim.batch_squared_errors_error_form(
                model, weights, e0,
                np.stack([t.process_noise for t in trajs]),
                np.stack([t.measurement_noise for t in trajs]),
                bank0,
            )
        else:
            states = np.stack([t.states for t in trajs])
            meas = np.stack([t.measurements for t in trajs])
            se = filtersim.batch_squared_errors(model, weights, states, meas, bank0)
        for row in se:  # fixed accumulation order
            total += row
        log.debug("trials %d-%d done", start, stop - 1)
    mse_ik = total / cfg.trials
    mse_k = mse_ik.mean(axis=1)
    tmse = theory.network_mse
    gap = abs(tail_mean(mse_k) - tmse) / tmse if tmse > 0 else float("nan")

    config = {k: v for k, v in asdict(cfg).items() if k not in ("model", "weights")}
    config["variant"] = weights.variant
    config["depth"] = weights.fusion_depth
    config["epsilon"] = weights.epsilon
    config["simulation"] = mode
    return McReport(
        mse_ik, mse_k, tmse, gap, theory.per_node_trace, config,
        solve_rep.summary(),
        {"rho_Acal": cert.rho, "beta": cert.beta, "lyapunov_ok": cert.lyapunov_ok},
    )


def emit_report(report: McReport, prefix) -> list[Path]:
    """Write ``<prefix>mse_curves.csv``, ``<prefix>per_node.csv`` and ``<prefix>summary.json``.

    ``prefix`` is a directory (trailing separator or existing dir) or a file-name stem.
    """
    prefix = str(prefix)
    if prefix.endswith(("/", "\\")) or Path(prefix).is_dir():
        base = Path(prefix)
        stem = ""
    else:
        base = Path(prefix).parent
        stem = Path(prefix).name + "_"
    paths = [base / f"{stem}mse_curves.csv", base / f"{stem}per_node.csv", base / f"{stem}summary.json"]
    try:
        base.mkdir(parents=True, exist_ok=True)
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "mse_k", "theory_mse"])
            for k, v in enumerate(report.mse_k):
                w.writerow([k, repr(float(v)), repr(report.theory_mse)])
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "node", "mse_ik"])
            for k, row in enumerate(report.mse_ik):
                for i, v in enumerate(row):
                    w.writerow([k, i + 1, repr(float(v))])
        with open(paths[2], "w") as fh:
            json.dump(report.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report under {base}: {exc}") from exc
    return paths
