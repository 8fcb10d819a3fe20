"""Large fusion-depth limits and the centralized benchmark."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import linalg
from .errors import ConvergenceError, PreconditionError
from .hcre import solve_fixed_point
from .model import FusionWeights, SystemModel, Topology, variant_weights


@dataclass(frozen=True)
class LimitWeights:
    mu2: np.ndarray
    mu4: np.ndarray


def limit_weights(weights: FusionWeights) -> LimitWeights:
    """Limit rows of ``L^k`` and ``nu^k``: the left Perron vectors of each.

    Raises:
        PreconditionError: if ``nu`` is not row stochastic (e.g. ICF's ``N W^L``).
    """
    if not linalg.is_row_stochastic(weights.nu_mat, tol=1e-10):
        raise PreconditionError(
            "nu is not row stochastic; its powers have no stochastic limit "
            "(use centralized_riccati for the ICF limit)"
        )
    return LimitWeights(linalg.perron_left_vector(weights.L_mat), linalg.perron_left_vector(weights.nu_mat))


def riccati_fixed_point(A, Q, info, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Fixed point of ``P' = A (P^{-1} + info)^{-1} A^T + Q`` by plain iteration from ``Q``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = linalg.symmetrize(np.atleast_2d(Q))
    info = linalg.symmetrize(np.atleast_2d(info))
    P = Q.copy()
    for _ in range(max_iter):
        new = linalg.symmetrize(A @ linalg.spd_inv(linalg.spd_inv(P) + info) @ A.T + Q)
        if np.linalg.norm(new - P, 2) <= tol * np.linalg.norm(P, 2):
            return new
        P = new
    raise ConvergenceError("single-node Riccati iteration did not converge")


def _information_factor(info: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(linalg.symmetrize(info))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)).T


def asymptotic_fixed_point(model: SystemModel, mu4, tol: float = 1e-12) -> np.ndarray:
    """Riccati fixed point with total information ``sum_j mu4_j C_j^T R_j^{-1} C_j``.

    Raises:
        PreconditionError: if ``A`` is not detectable through that information.
    """
    mu4 = np.asarray(mu4, dtype=float).reshape(-1)
    if mu4.shape != (model.N,):
        raise PreconditionError("mu4 must have one entry per node")
    info = np.einsum("j,jab->ab", mu4, model.obs_info())
    if not linalg.is_detectable(model.A, _information_factor(info)):
        raise PreconditionError("A is not detectable through the weighted information sum")
    return riccati_fixed_point(model.A, model.Q, info, tol)


def centralized_riccati(model: SystemModel, tol: float = 1e-12) -> np.ndarray:
    """Prediction covariance of the centralized Kalman filter using every sensor."""
    if not linalg.is_collectively_observable(model.A, [s.C for s in model.sensors]):
        raise PreconditionError("system is not collectively observable")
    return riccati_fixed_point(model.A, model.Q, model.obs_info().sum(axis=0), tol)


def asymptotic_reference(model: SystemModel, weights: FusionWeights, tol: float = 1e-12) -> np.ndarray:
    """Limit of the per-node fixed points as the fusion depth grows.

    CIDF uses the Perron vector of ``nu``; CMCI weights it by ``omega``;
    ICF tends to the centralized filter.
    """
    v = weights.variant
    if v == "ICF":
        return centralized_riccati(model, tol)
    base = weights.base if weights.base is not None else weights.L_mat
    if v == "CMCI":
        mu2 = linalg.perron_left_vector(base)
        return asymptotic_fixed_point(model, mu2 * weights.omega, tol)
    if weights.base is not None:
        lw = limit_weights(FusionWeights(base, base))
    else:
        lw = limit_weights(weights)
    return asymptotic_fixed_point(model, lw.mu4, tol)


@dataclass
class SweepResult:
    depths: list[int]
    traces: np.ndarray  # (len(depths), N)
    centralized_trace: float
    asymptotic_trace: float
    variant: str
    label: str = ""
    converged: list[bool] = field(default_factory=list)

    def spread(self) -> np.ndarray:
        return self.traces.max(axis=1) - self.traces.min(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        N = self.traces.shape[1]
        w.writerow(["L"] + [f"trace_node_{i + 1}" for i in range(N)] + ["centralized_trace", "asymptotic_trace"])
        for L, row in zip(self.depths, self.traces):
            w.writerow([L] + [repr(float(x)) for x in row] + [repr(self.centralized_trace), repr(self.asymptotic_trace)])
        return buf.getvalue()


def fusion_depth_sweep(
    model: SystemModel,
    topo: Topology,
    variant: str,
    depths: Sequence[int],
    tol: float = 1e-12,
    epsilon: Optional[float] = None,
    omega=None,
    metropolis: bool = False,
    max_iter: int = 100_000,
) -> SweepResult:
    """Solve the coupled equations for each fusion depth and attach the limits.

    ``metropolis=True`` swaps the CIDF degree weights for doubly stochastic
    Metropolis weights; the result's ``label`` records which weights were used.
    """
    rows = []
    flags = []
    weights = None
    for L in depths:
        weights = variant_weights(topo, variant, L, epsilon=epsilon, omega=omega, metropolis=metropolis)
        P, rep = solve_fixed_point(model, weights, "identity", tol, max_iter)
        if not rep.converged:
            raise ConvergenceError(f"depth {L}: solve did not converge (residual {rep.residual!r})")
        rows.append(np.trace(P, axis1=1, axis2=2))
        flags.append(rep.converged)
    assert weights is not None
    central = float(np.trace(centralized_riccati(model)))
    asym = float(np.trace(asymptotic_reference(model, weights)))
    return SweepResult(list(depths), np.array(rows), central, asym, weights.variant, weights.label, flags)
