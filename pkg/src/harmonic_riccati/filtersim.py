"""Simulation of the plant and of the distributed information-fusion filter.

Noise is drawn from a Philox counter-based generator seeded with a 64-bit
integer. For each time step ``k`` one block of ``n + m_total`` standard
normals is consumed: the first ``n`` drive the process noise, the rest the
sensors in index order. Samples are coloured by the lower Cholesky factors
of ``Q`` and ``R_i`` and multiplied by ``noise_scale``.

The filter bank stores a-priori pairs ``(x_{i,k|k-1}, P_{i,k|k-1})``. One
step forms each node's information pair, fuses the pairs over the network
and predicts through ``A`` and ``Q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import linalg
from .errors import PreconditionError
from .model import FusionWeights, SystemModel


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (horizon, n)
    measurements: np.ndarray  # (horizon, m_total), sensors concatenated in index order
    seed: int
    noise_scale: float
    sizes: tuple[int, ...]
    process_noise: Optional[np.ndarray] = None  # (horizon, n): w_k
    measurement_noise: Optional[np.ndarray] = None  # (horizon, m_total): v_k

    def node_measurements(self, i: int) -> np.ndarray:
        start = sum(self.sizes[:i])
        return self.measurements[:, start:start + self.sizes[i]]


def _noise_factors(model: SystemModel) -> tuple[np.ndarray, np.ndarray]:
    LQ = np.linalg.cholesky(model.Q)
    blocks = [np.linalg.cholesky(s.R) for s in model.sensors if s.m]
    LR = scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))
    return LQ, LR


def simulate_plant(
    model: SystemModel, horizon: int, x0=None, seed: int = 0, noise_scale: float = 1.0
) -> Trajectory:
    """States ``x_0 .. x_{horizon-1}`` and the matching measurements."""
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    n, m = model.n, model.m_total
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    LQ, LR = _noise_factors(model)
    C = model.stacked_C()
    z = make_rng(seed).standard_normal((horizon, n + m)) * noise_scale
    w = z[:, :n] @ LQ.T
    v = z[:, n:] @ LR.T
    states = np.empty((horizon, n))
    for k in range(horizon):
        states[k] = x
        x = model.A @ x + w[k]
    meas = states @ C.T + v
    return Trajectory(states, meas, int(seed), float(noise_scale), tuple(s.m for s in model.sensors), w, v)


@dataclass(frozen=True)
class FilterBank:
    x: np.ndarray  # (N, n) a-priori estimates
    P: np.ndarray  # (N, n, n) a-priori covariances
    k: int = 0


def initial_bank(model: SystemModel, x0=None, P0=None) -> FilterBank:
    """Every node starts at ``x0`` (default zero) with covariance ``P0`` (default identity)."""
    N, n = model.N, model.n
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    P = np.eye(n) if P0 is None else linalg.as_spd(P0, "P0")
    return FilterBank(np.repeat(x[None], N, axis=0), np.repeat(P[None], N, axis=0))


class _Fuser:
    """Precomputed pieces of one filter step, shared across Monte Carlo trials."""

    def __init__(self, model: SystemModel, weights: FusionWeights, sweeps: Optional[bool] = None):
        self.model = model
        self.weights = weights
        self.info = model.obs_info()
        self.gain = model.obs_gain()
        if sweeps is None:
            sweeps = weights.base is not None
        if sweeps and weights.base is None:
            raise PreconditionError("sweep fusion needs weights with a one-hop base matrix")
        self.sweeps = sweeps

    def step(self, P: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One predict-correct-fuse cycle.

        Args:
            P: ``(N, n, n)`` a-priori covariances.
            x: ``(T, N, n)`` a-priori estimates for ``T`` independent runs.
            y: ``(T, m_total)`` stacked measurements.

        Returns:
            Next a-priori covariances ``(N, n, n)`` and estimates ``(T, N, n)``.
        """
        w = self.weights
        Pinv = linalg.spd_inv(P)
        prior_vec = np.einsum("iab,tib->tia", Pinv, x)
        meas_vec = np.einsum("iam,tm->tia", self.gain, y)
        if self.sweeps:
            s = w.obs_scale
            mat = Pinv + s[:, None, None] * self.info
            vec = prior_vec + s[None, :, None] * meas_vec
            for _ in range(w.fusion_depth):
                mat = np.einsum("ij,jab->iab", w.base, mat)
                vec = np.einsum("ij,tja->tia", w.base, vec)
        else:
            mat = np.einsum("ij,jab->iab", w.L_mat, Pinv) + np.einsum("ij,jab->iab", w.nu_mat, self.info)
            vec = np.einsum("ij,tja->tia", w.L_mat, prior_vec) + np.einsum("ij,tja->tia", w.nu_mat, meas_vec)
        post = linalg.spd_inv(mat)
        A = self.model.A
        x_next = np.einsum("ab,ibc,tic->tia", A, post, vec)
        P_next = linalg.symmetrize(A @ post @ A.T + self.model.Q)
        return P_next, x_next


def cidf_step(
    bank: FilterBank,
    measurements: Sequence,
    model: SystemModel,
    weights: FusionWeights,
    sweeps: Optional[bool] = None,
) -> FilterBank:
    """Advance the bank by one sample.

    ``measurements`` is either the stacked ``m_total`` vector or a list of
    per-node vectors (empty for silent nodes). ``sweeps`` selects depth-``L``
    repeated one-hop fusion (default when the weights carry a base matrix)
    over a single pass with ``(L_mat, nu_mat)``.
    """
    y = _stack_measurements(measurements, model)
    fuser = _Fuser(model, weights, sweeps)
    P, x = fuser.step(bank.P, bank.x[None], y[None])
    return FilterBank(x[0], P, bank.k + 1)


def _stack_measurements(measurements, model: SystemModel) -> np.ndarray:
    if isinstance(measurements, np.ndarray) and measurements.ndim == 1:
        y = measurements.astype(float)
    else:
        parts = [np.asarray(m, dtype=float).reshape(-1) for m in measurements]
        if len(parts) != model.N:
            raise PreconditionError("need one measurement vector per node")
        y = np.concatenate(parts) if parts else np.zeros(0)
    if y.shape != (model.m_total,):
        raise PreconditionError(f"measurement vector has size {y.size}, expected {model.m_total}")
    return y


@dataclass
class FilterRun:
    errors: np.ndarray  # (horizon, N, n): x_k - x_{i,k|k-1}
    estimates: np.ndarray  # (horizon, N, n)
    covariances: np.ndarray  # (horizon, N, n, n)
    final: FilterBank

    def squared_errors(self) -> np.ndarray:
        return (self.errors ** 2).sum(axis=-1)

    def to_csv(self) -> str:
        lines = ["k,node,squared_error"]
        se = self.squared_errors()
        for k in range(se.shape[0]):
            for i in range(se.shape[1]):
                lines.append(f"{k},{i + 1},{float(se[k, i])!r}")
        return "\n".join(lines) + "\n"


def run_filter(
    model: SystemModel,
    weights: FusionWeights,
    trajectory: Trajectory,
    bank0: Optional[FilterBank] = None,
    horizon: Optional[int] = None,
    sweeps: Optional[bool] = None,
) -> FilterRun:
    """Filter a trajectory, recording the a-priori error of every node at every step."""
    H = trajectory.states.shape[0] if horizon is None else horizon
    if H > trajectory.states.shape[0]:
        raise PreconditionError("horizon exceeds trajectory length")
    bank = initial_bank(model) if bank0 is None else bank0
    if bank.x.shape != (model.N, model.n):
        raise PreconditionError("bank shape does not match the model")
    fuser = _Fuser(model, weights, sweeps)
    P, x = bank.P, bank.x[None]
    errors = np.empty((H, model.N, model.n))
    estimates = np.empty_like(errors)
    covs = np.empty((H, model.N, model.n, model.n))
    for k in range(H):
        estimates[k] = x[0]
        covs[k] = P
        errors[k] = trajectory.states[k][None] - x[0]
        P, x = fuser.step(P, x, trajectory.measurements[k][None])
    return FilterRun(errors, estimates, covs, FilterBank(x[0], P, bank.k + H))


def batch_squared_errors(
    model: SystemModel,
    weights: FusionWeights,
    states: np.ndarray,
    measurements: np.ndarray,
    bank0: Optional[FilterBank] = None,
) -> np.ndarray:
    """Squared a-priori errors for a batch of trajectories, shape ``(T, horizon, N)``.

    Covariances do not depend on data, so each gain is computed once per step
    and applied to all ``T`` runs.
    """
    T, H, n = states.shape
    bank = initial_bank(model) if bank0 is None else bank0
    fuser = _Fuser(model, weights)
    P = bank.P
    x = np.repeat(bank.x[None], T, axis=0)
    out = np.empty((T, H, model.N))
    for k in range(H):
        e = states[:, k, None, :] - x
        out[:, k] = (e ** 2).sum(axis=-1)
        P, x = fuser.step(P, x, measurements[:, k])
    return out


def batch_squared_errors_error_form(
    model: SystemModel,
    weights: FusionWeights,
    initial_error: np.ndarray,
    process_noise: np.ndarray,
    measurement_noise: np.ndarray,
    bank0: Optional[FilterBank] = None,
) -> np.ndarray:
    """Same quantity as :func:`batch_squared_errors`, propagated in error coordinates.

    The filter is affine in ``(x_hat, y)``, so feeding it the deviations
    ``x_hat - x`` and ``y - C x = v`` returns ``x_hat' - A x``; then
    ``e' = w - (x_hat' - A x)``. The true state never appears, which keeps
    the result accurate when an unstable plant grows beyond double precision.

    Args:
        initial_error: ``(T, n)`` values of ``x_0 - x_hat_0`` (same for all nodes).
        process_noise: ``(T, horizon, n)``.
        measurement_noise: ``(T, horizon, m_total)``.
    """
    T, H, n = process_noise.shape
    bank = initial_bank(model) if bank0 is None else bank0
    fuser = _Fuser(model, weights)
    P = bank.P
    e = np.repeat(np.asarray(initial_error, dtype=float)[:, None, :], model.N, axis=1)
    out = np.empty((T, H, model.N))
    for k in range(H):
        out[:, k] = (e ** 2).sum(axis=-1)
        P, dev = fuser.step(P, -e, measurement_noise[:, k])
        e = process_noise[:, k, None, :] - dev
    return out
