"""Steady-state error dynamics of the fused filter and their Lyapunov solution.

At the Riccati fixed point the stacked a-priori errors obey::

    e_{k+1} = Acal e_k + Gamma v_k + 1_N (x) w_k

so the limiting error covariance solves
``Pcal = Acal Pcal Acal^T + Gamma R Gamma^T + 1 1^T (x) Q``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .errors import PreconditionError
from .hcre import information_sums
from .model import FusionWeights, SystemModel


@dataclass(frozen=True)
class SteadyOperators:
    Acal: np.ndarray
    Gamma: np.ndarray
    R_blk: np.ndarray
    Q_inject: np.ndarray
    N: int
    n: int

    def noise_covariance(self) -> np.ndarray:
        """``Gamma R Gamma^T + 1 1^T (x) Q``."""
        W = self.Q_inject.copy()
        if self.Gamma.shape[1]:
            W += self.Gamma @ self.R_blk @ self.Gamma.T
        return linalg.symmetrize(W)


@dataclass(frozen=True)
class SteadyCovariance:
    Pcal: np.ndarray
    per_node_trace: np.ndarray
    network_mse: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        N = len(self.per_node_trace)
        w.writerow([f"trace_node_{i + 1}" for i in range(N)] + ["network_mse"])
        w.writerow([repr(float(x)) for x in self.per_node_trace] + [repr(self.network_mse)])
        return buf.getvalue()

    def pcal_text(self, max_dim: int = 64) -> str:
        """Row-major text dump of ``Pcal``; refused above ``max_dim`` rows."""
        if self.Pcal.shape[0] > max_dim:
            raise PreconditionError(
                f"Pcal is {self.Pcal.shape[0]}x{self.Pcal.shape[0]}; raise max_dim to dump it"
            )
        return "\n".join(" ".join(repr(float(x)) for x in row) for row in self.Pcal) + "\n"


def fused_posterior(
    family: np.ndarray, model: SystemModel, weights: FusionWeights, rtol: float = 1e-8
) -> np.ndarray:
    """Fused posterior covariances ``Pb_i`` at the fixed point.

    Raises:
        PreconditionError: if ``A Pb_i A^T`` differs from ``P_i - Q`` beyond ``rtol``,
            which means ``family`` is not a fixed point.
    """
    Pb = linalg.spd_inv(information_sums(family, model, weights))
    lhs = model.A @ Pb @ model.A.T
    rhs = family - model.Q
    err = np.linalg.norm(lhs - rhs, axis=(1, 2)) / np.linalg.norm(family, axis=(1, 2))
    if np.max(err) > rtol:
        raise PreconditionError(f"not a fixed point: A Pb A^T != P - Q (relative error {np.max(err)!r})")
    return Pb


def build_error_operators(family: np.ndarray, model: SystemModel, weights: FusionWeights) -> SteadyOperators:
    """Stacked closed-loop matrix ``Acal`` and noise-injection matrix ``Gamma``.

    Block ``(i, j)`` of ``Acal`` is ``l_ij A Pb_i P_j^{-1}``; block ``(i, j)`` of
    ``Gamma`` is ``nu_ij A Pb_i C_j^T R_j^{-1}`` and has ``m_j`` columns, so
    silent sensors contribute no columns.
    """
    N, n = model.N, model.n
    Pb = fused_posterior(family, model, weights)
    Pinv = linalg.spd_inv(family)
    L, nu = weights.L_mat, weights.nu_mat
    APb = model.A @ Pb
    Acal = np.zeros((N * n, N * n))
    for i in range(N):
        for j in range(N):
            if L[i, j]:
                Acal[i * n:(i + 1) * n, j * n:(j + 1) * n] = L[i, j] * APb[i] @ Pinv[j]
    gain = model.obs_gain()  # (N, n, m_total), block j in sensor j's columns
    mixed = np.einsum("ij,jam->iam", nu, gain)
    Gamma = np.einsum("iab,ibm->iam", APb, mixed).reshape(N * n, model.m_total)
    R_blk = (
        scipy.linalg.block_diag(*[s.R for s in model.sensors if s.m])
        if model.m_total else np.zeros((0, 0))
    )
    Q_inject = np.kron(np.ones((N, N)), model.Q)
    return SteadyOperators(Acal, Gamma, R_blk, Q_inject, N, n)


@dataclass(frozen=True)
class SchurCertificate:
    rho: float
    lyapunov_ok: bool
    beta: float
    q: np.ndarray


def schur_certificate(ops: SteadyOperators, family: np.ndarray, weights: FusionWeights) -> SchurCertificate:
    """Spectral radius of ``Acal`` plus a Perron-weighted Lyapunov certificate.

    With ``q`` the left Perron vector of ``L`` and
    ``Qcal = diag(q_i P_i^{-1})``, ``beta`` is the smallest number with
    ``Acal^T Qcal Acal <= beta Qcal``, i.e. the top generalized eigenvalue of
    that pencil. ``beta < 1`` proves Schur stability and implies ``rho**2 <= beta``.
    """
    rho = linalg.spectral_radius(ops.Acal)
    q = linalg.perron_left_vector(weights.L_mat)
    Pinv = linalg.spd_inv(family)
    Qcal = scipy.linalg.block_diag(*[q[i] * Pinv[i] for i in range(ops.N)])
    lhs = linalg.symmetrize(ops.Acal.T @ Qcal @ ops.Acal)
    beta = float(scipy.linalg.eigh(lhs, linalg.symmetrize(Qcal), eigvals_only=True)[-1])
    return SchurCertificate(rho, bool(beta < 1.0), beta, q)


def steady_covariance(ops: SteadyOperators, tol: float = 1e-10) -> SteadyCovariance:
    """Solve the stacked Lyapunov equation and summarize per-node error traces."""
    Pcal = linalg.solve_dle(ops.Acal, ops.noise_covariance(), tol=tol)
    n = ops.n
    per_node = np.array([np.trace(Pcal[i * n:(i + 1) * n, i * n:(i + 1) * n]) for i in range(ops.N)])
    return SteadyCovariance(Pcal, per_node, float(per_node.mean()))


def theory(family: np.ndarray, model: SystemModel, weights: FusionWeights) -> SteadyCovariance:
    """Shortcut: operators at ``family`` followed by :func:`steady_covariance`."""
    return steady_covariance(build_error_operators(family, model, weights))
