"""Harmonic-coupled Riccati iteration, fixed-point solvers and certificates.

A *family* is an ``(N, n, n)`` array holding one SPD matrix per node. One
step of the unified recursion maps it to::

    P_i' = A (sum_j l_ij P_j^{-1} + nu_ij C_j^T R_j^{-1} C_j)^{-1} A^T + Q
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import linalg
from .errors import ConvergenceError, MonotonicityError, PreconditionError
from .model import FusionWeights, SystemModel, degree_normalized_weights, path_topology, system_model

Init = Union[str, float, np.ndarray]


@dataclass
class SolveReport:
    iterations: int
    residual: float
    trace_history: np.ndarray
    converged: bool
    tolerance: float
    epsilon: float | None = None
    residual_history: list[float] = field(default_factory=list)

    def contraction_ratio(self, tail: int = 20) -> float:
        """Geometric mean of successive residual ratios over the last ``tail`` steps."""
        r = np.asarray(self.residual_history[-(tail + 1):])
        r = r[r > 0]
        if len(r) < 2:
            return float("nan")
        return float(np.exp(np.mean(np.diff(np.log(r)))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        N = self.trace_history.shape[1]
        w.writerow(["k"] + [f"trace_P{i + 1}" for i in range(N)])
        for k, row in enumerate(self.trace_history):
            w.writerow([k] + [repr(float(x)) for x in row])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "tolerance": self.tolerance,
            "epsilon": self.epsilon,
            "final_traces": [float(x) for x in self.trace_history[-1]],
        }


def information_sums(family: np.ndarray, model: SystemModel, weights: FusionWeights) -> np.ndarray:
    """``sum_j l_ij P_j^{-1} + nu_ij C_j^T R_j^{-1} C_j`` for every node ``i``."""
    Pinv = linalg.spd_inv(family)
    return linalg.symmetrize(
        np.einsum("ij,jab->iab", weights.L_mat, Pinv)
        + np.einsum("ij,jab->iab", weights.nu_mat, model.obs_info())
    )


def hcre_step(family: np.ndarray, model: SystemModel, weights: FusionWeights) -> np.ndarray:
    family = _check_family(family, model)
    fused = linalg.spd_inv(information_sums(family, model, weights))
    A = model.A
    return linalg.symmetrize(A @ fused @ A.T + model.Q)


def _check_family(family, model: SystemModel) -> np.ndarray:
    P = np.asarray(family, dtype=float)
    if P.ndim == 2 and model.N == 1:
        P = P[None]
    if P.shape != (model.N, model.n, model.n):
        raise PreconditionError(
            f"family has shape {P.shape}, expected {(model.N, model.n, model.n)}"
        )
    return P


def initial_family(model: SystemModel, init: Init = "identity") -> np.ndarray:
    """Build a starting family.

    ``init`` may be ``"identity"``, ``"q"`` (every node starts at ``Q``), a
    positive float ``c`` (``c * I``), or an explicit ``(N, n, n)`` array.
    """
    N, n = model.N, model.n
    if isinstance(init, str):
        key = init.lower()
        if key == "identity":
            base = np.eye(n)
        elif key in ("q", "q_init"):
            base = model.Q
        else:
            raise PreconditionError(f"unknown init preset {init!r}")
        return np.repeat(base[None], N, axis=0).copy()
    if np.isscalar(init):
        if init <= 0:
            raise PreconditionError("scaled init needs a positive factor")
        return np.repeat((float(init) * np.eye(n))[None], N, axis=0)
    P = _check_family(init, model)
    for i in range(N):
        linalg.as_spd(P[i], f"P_{i + 1}")
    return linalg.symmetrize(P)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    num = np.linalg.norm(new - old, ord=2, axis=(1, 2))
    den = np.linalg.norm(old, ord=2, axis=(1, 2))
    return float(np.max(num / den))


def _traces(P: np.ndarray) -> np.ndarray:
    return np.trace(P, axis1=1, axis2=2)


def solve_fixed_point(
    model: SystemModel,
    weights: FusionWeights,
    init: Init = "identity",
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, SolveReport]:
    """Iterate :func:`hcre_step` until the relative per-node change is below ``tol``.

    Non-convergence is reported through ``report.converged`` rather than raised.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    P = initial_family(model, init)
    traces = [_traces(P)]
    residuals: list[float] = []
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = hcre_step(P, model, weights)
        residual = _relative_change(new, P)
        residuals.append(residual)
        P = new
        traces.append(_traces(P))
        if residual <= tol:
            converged = True
            break
    report = SolveReport(it, residual, np.array(traces), converged, tol, residual_history=residuals)
    return P, report


def monotone_solve(
    model: SystemModel,
    weights: FusionWeights,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    slack: float = 1e-10,
) -> tuple[np.ndarray, SolveReport, float]:
    """Solve from a small initial value ``eps * I`` along a nondecreasing path.

    ``eps`` starts at ``lambda_min(Q) / 2`` and is halved until one step
    satisfies ``P_1 >= P_0``. Every later step is checked for
    ``P_{k+1} >= P_k - slack * I``.

    Raises:
        MonotonicityError: if a step decreases beyond ``slack``.
    """
    eps = float(np.linalg.eigvalsh(model.Q)[0]) / 2.0
    for _ in range(200):
        P0 = initial_family(model, eps)
        if linalg.loewner_leq(P0, hcre_step(P0, model, weights), slack):
            break
        eps /= 2.0
    else:
        raise MonotonicityError("could not find eps with P_1 >= P_0")

    P = P0
    traces = [_traces(P)]
    residuals: list[float] = []
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = hcre_step(P, model, weights)
        if not linalg.loewner_leq(P, new, slack):
            worst = float(np.min(np.linalg.eigvalsh(linalg.symmetrize(new - P))))
            raise MonotonicityError(
                f"iterate decreased at step {it}: min eigenvalue of P_(k+1) - P_k is {worst!r}"
            )
        residual = _relative_change(new, P)
        residuals.append(residual)
        P = new
        traces.append(_traces(P))
        if residual <= tol:
            converged = True
            break
    report = SolveReport(it, residual, np.array(traces), converged, tol, eps, residuals)
    return P, report, eps


def verify_uniqueness(
    model: SystemModel,
    weights: FusionWeights,
    inits: Sequence[Init] = (0.01, "identity", 100.0),
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> float:
    """Largest spectral-norm gap between fixed points reached from different inits.

    Raises:
        ConvergenceError: if any solve fails to converge.
    """
    sols = []
    for init in inits:
        P, rep = solve_fixed_point(model, weights, init, tol, max_iter)
        if not rep.converged:
            raise ConvergenceError(f"solve from init {init!r} did not converge (residual {rep.residual!r})")
        sols.append(P)
    gap = 0.0
    for a, b in itertools.combinations(sols, 2):
        gap = max(gap, float(np.max(np.linalg.norm(a - b, ord=2, axis=(1, 2)))))
    return gap


def uniqueness_threshold(family: np.ndarray, tol: float) -> float:
    """Gap below which solutions from different inits count as one: ``10 tol max ||P_i||``."""
    return 10.0 * tol * float(np.max(np.linalg.norm(family, ord=2, axis=(1, 2))))


def fixed_point_residual(family: np.ndarray, model: SystemModel, weights: FusionWeights) -> float:
    return _relative_change(hcre_step(family, model, weights), family)


@dataclass
class ContractionCertificate:
    rho: float
    certified: bool
    linear_rho: float
    matrix: np.ndarray


def contraction_matrix(family: np.ndarray, model: SystemModel, weights: FusionWeights) -> np.ndarray:
    """Stacked ``nN x nN`` matrix with blocks ``sqrt(l_ij) Pt_i P_j^{-1} A Pb_j Pt_j^{-1}``.

    ``Pt_i = (sum_j l_ij P_j^{-1})^{-1}`` is the fused prior and ``Pb_j`` the
    fused posterior; ``A Pb_j Pt_j^{-1}`` is the closed-loop matrix
    ``A - K_j C~_j`` written in information form.
    """
    P = _check_family(family, model)
    N, n = model.N, model.n
    Pinv = linalg.spd_inv(P)
    L = weights.L_mat
    Pt_inv = linalg.symmetrize(np.einsum("ij,jab->iab", L, Pinv))
    Pt = linalg.spd_inv(Pt_inv)
    Pb = linalg.spd_inv(information_sums(P, model, weights))
    closed = model.A @ Pb @ Pt_inv
    M = np.zeros((N * n, N * n))
    for i in range(N):
        for j in range(N):
            if L[i, j] > 0:
                M[i * n:(i + 1) * n, j * n:(j + 1) * n] = np.sqrt(L[i, j]) * Pt[i] @ Pinv[j] @ closed[j]
    return M


def contraction_certificate(
    family: np.ndarray,
    model: SystemModel,
    weights: FusionWeights,
    fixed_point_tol: float = 1e-8,
) -> ContractionCertificate:
    """Certificate that the path-sum operators vanish at the fixed point.

    With ``M`` from :func:`contraction_matrix`, the fused priors satisfy
    ``Pt_i = sum_j M_ij Pt_j M_ij^T + (noise terms)``. Repeating the
    substitution ``m`` times sums ``B X B^T`` over all length-``m`` block
    paths ``B``, so the series decays iff the congruence map
    ``(X_i) -> (sum_j M_ij X_j M_ij^T)`` has spectral radius below one.
    That radius is ``rho``; ``certified = rho < 1``.

    ``linear_rho`` is the spectral radius of ``M`` acting on stacked
    vectors. It is reported for reference only: the square-root weights
    make it exceed one on many well-posed networks.

    Raises:
        PreconditionError: if ``family`` is not a fixed point to ``fixed_point_tol``.
    """
    res = fixed_point_residual(family, model, weights)
    if res > fixed_point_tol:
        raise PreconditionError(f"input is not a fixed point (residual {res!r})")
    M = contraction_matrix(family, model, weights)
    rho = congruence_spectral_radius(M, model.N, model.n)
    return ContractionCertificate(rho, bool(rho < 1), linalg.spectral_radius(M), M)


def congruence_spectral_radius(M: np.ndarray, N: int, n: int) -> float:
    """Spectral radius of ``(X_i) -> (sum_j M_ij X_j M_ij^T)`` for block matrix ``M``."""
    K = np.zeros((N * n * n, N * n * n))
    for i in range(N):
        for j in range(N):
            B = M[i * n:(i + 1) * n, j * n:(j + 1) * n]
            if np.any(B):
                K[i * n * n:(i + 1) * n * n, j * n * n:(j + 1) * n * n] = np.kron(B, B)
    return linalg.spectral_radius(K)


def scalar_example() -> tuple[SystemModel, FusionWeights]:
    """The three-node scalar system observed only at node 1, on a path graph."""
    model = system_model(1.0, 1.0, [(1.0, 1.0), (None, None), (None, None)])
    return model, degree_normalized_weights(path_topology(3))


def classical_bound_demo() -> tuple[float, float]:
    """Compare the classical CI bound for node 3 with its exact steady value.

    Propagating observation information two hops to node 3 with weight
    ``0.5 * 1/3`` and letting the contraction factor tend to one gives
    ``P_3 >= (0.5 * (1/3) * C^T R^{-1} C)^{-1} + Q = 7``, whereas the fixed point is
    about 3.99.

    Returns:
        ``(bound, exact)``.
    """
    model, weights = scalar_example()
    A, Q = model.A, model.Q
    C, R = model.sensors[0].C, model.sensors[0].R
    L = weights.L_mat
    Ainv = np.linalg.inv(A)
    # node 3 hears node 2 with weight 1/2; node 2 hears node 1's measurement with weight 1/3
    info = L[2, 1] * Ainv.T @ (L[1, 0] * C.T @ np.linalg.solve(R, C)) @ Ainv
    bound = A @ np.linalg.inv(info) @ A.T + Q
    sol, _ = solve_fixed_point(model, weights, "identity", tol=1e-12)
    return float(bound[0, 0]), float(sol[2, 0, 0])
