"""Dense symmetric-matrix primitives.

Everything here works on plain ``numpy`` arrays. Covariances are kept
symmetric by averaging with their transpose on construction, and positive
definiteness is established by a Cholesky factorization succeeding.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, PreconditionError, UnstableError

STOCHASTIC_TOL = 1e-12


def symmetrize(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def as_spd(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a symmetrized float array, verified positive definite.

    Raises:
        PreconditionError: if ``M`` is not square or its Cholesky factorization fails.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise PreconditionError(f"{name} must be square, got shape {M.shape}")
    S = symmetrize(M)
    if S.shape[0] and not is_positive_definite(S):
        raise PreconditionError(f"{name} is not positive definite")
    return S


def is_positive_definite(M: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def spd_inv(M: np.ndarray) -> np.ndarray:
    """Invert one SPD matrix, or a stack of them along the leading axes.

    The inverse goes through the Cholesky factor, so a non-PD input raises
    ``PreconditionError`` instead of returning garbage.
    """
    M = symmetrize(M)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("information matrix is not positive definite") from exc
    Linv = np.linalg.inv(L)
    return np.swapaxes(Linv, -1, -2) @ Linv


def loewner_leq(X: np.ndarray, Y: np.ndarray, slack: float = 1e-10) -> bool:
    """True when ``X <= Y`` in the Loewner order, up to ``slack`` on eigenvalues.

    Works on single matrices or stacks (all members must satisfy the order).
    """
    D = symmetrize(np.asarray(Y, dtype=float) - np.asarray(X, dtype=float))
    return bool(np.all(np.linalg.eigvalsh(D) >= -slack))


def harmonic_mean(weights: Sequence[float], mats: Sequence[Optional[np.ndarray]]) -> np.ndarray:
    """Weighted matrix harmonic mean ``(sum_j w_j P_j^{-1})^{-1}``.

    Entries with zero weight are skipped, so their matrix may be ``None``.

    Args:
        weights: Nonnegative weights summing to one.
        mats: One SPD matrix per weight, all of the same size.

    Returns:
        The harmonic mean, an SPD matrix.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) != len(mats):
        raise PreconditionError("weights and matrices must have the same length")
    if np.any(w < 0):
        raise PreconditionError("weights must be nonnegative")
    if not np.any(w > 0):
        raise PreconditionError("at least one weight must be positive")
    if abs(w.sum() - 1.0) > 1e-10:
        raise PreconditionError(f"weights must sum to 1, got {w.sum()!r}")
    info = None
    dim = None
    for wj, Pj in zip(w, mats):
        if wj == 0:
            continue
        Pj = as_spd(Pj)
        if dim is None:
            dim = Pj.shape[0]
            info = np.zeros((dim, dim))
        elif Pj.shape[0] != dim:
            raise PreconditionError("matrices have mismatched dimensions")
        info += wj * spd_inv(Pj)
    return spd_inv(info)


def _square(M, name: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise PreconditionError(f"{name} must be square, got shape {M.shape}")
    return M


def is_row_stochastic(M, tol: float = STOCHASTIC_TOL) -> bool:
    M = _square(M)
    return bool(np.all(M >= 0) and np.all(np.abs(M.sum(axis=1) - 1.0) <= tol))


def primitivity_exponent(M) -> Optional[int]:
    """Smallest ``k`` with ``M^k`` entrywise positive, or ``None``.

    Only the zero pattern matters, so powers are taken on boolean patterns
    up to Wielandt's bound ``(N-1)^2 + 1``.
    """
    M = _square(M)
    if np.any(M < 0):
        raise PreconditionError("matrix has negative entries")
    pattern = M > 0
    n = pattern.shape[0]
    bound = (n - 1) ** 2 + 1
    step = pattern.astype(np.int64)
    power = pattern.copy()
    for k in range(1, bound + 1):
        if power.all():
            return k
        power = (power.astype(np.int64) @ step) > 0
    return None


def is_primitive(M) -> bool:
    return primitivity_exponent(M) is not None


def is_irreducible(M) -> bool:
    """Strong connectivity of the directed graph of ``M``'s nonzero pattern."""
    M = _square(M)
    ncomp, _ = connected_components(M != 0, directed=True, connection="strong")
    return ncomp == 1


def perron_left_vector(M, tol: float = 1e-13, max_iter: int = 1_000_000) -> np.ndarray:
    """Left Perron vector ``q`` of a primitive row-stochastic matrix.

    Computed by left power iteration ``q <- q M`` from the uniform vector,
    stopping when successive iterates differ by less than ``tol`` in max norm.
    The result is normalized to sum to one.
    """
    M = _square(M)
    if not is_row_stochastic(M, tol=1e-10):
        raise PreconditionError("matrix is not row stochastic")
    if not is_primitive(M):
        raise PreconditionError("matrix is not primitive; power iteration need not converge")
    n = M.shape[0]
    q = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        q_next = q @ M
        q_next /= q_next.sum()
        if np.max(np.abs(q_next - q)) < tol:
            return q_next
        q = q_next
    raise ConvergenceError("Perron power iteration did not converge")


def is_collectively_observable(A, C_blocks: Sequence[np.ndarray]) -> bool:
    """Observability of ``(A, [C_1; ...; C_N])`` by the rank of its observability matrix."""
    A = _square(A, "A")
    n = A.shape[0]
    rows = [np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, n) for C in C_blocks]
    C = np.vstack(rows) if rows else np.zeros((0, n))
    if C.shape[0] == 0:
        return False
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    O = np.vstack(blocks)
    s = np.linalg.svd(O, compute_uv=False)
    if s[0] == 0:
        return False
    return int(np.sum(s > n * s[0] * 1e-10)) == n


def is_detectable(A, H) -> bool:
    """PBH detectability test of ``(A, H)``: every mode with ``|lambda| >= 1`` is seen by ``H``."""
    A = _square(A, "A")
    n = A.shape[0]
    H = np.atleast_2d(np.asarray(H, dtype=float)).reshape(-1, n)
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0:
            continue
        pencil = np.vstack([A - lam * np.eye(n), H])
        s = np.linalg.svd(pencil, compute_uv=False)
        if np.sum(s > n * max(s[0], 1.0) * 1e-10) < n:
            return False
    return True


def spectral_radius(M, cutoff: int = 2000, tol: float = 1e-10) -> float:
    """Largest eigenvalue modulus.

    Dense eigenvalues up to ``cutoff`` rows; beyond that an implicitly
    restarted Arnoldi iteration (a Krylov-accelerated power iteration) for the
    single largest-magnitude eigenvalue.
    """
    M = _square(M)
    if M.shape[0] == 0:
        return 0.0
    if M.shape[0] <= cutoff:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    from scipy.sparse.linalg import eigs

    v0 = np.ones(M.shape[0])
    vals = eigs(M, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False)
    return float(np.abs(vals[0]))


def solve_dle(F, W, tol: float = 1e-10, max_iter: int = 64) -> np.ndarray:
    """Solve ``X = F X F^T + W`` by squaring/doubling.

    With ``X_0 = W`` and ``F_0 = F``, the recursion ``X_{k+1} = X_k + F_k X_k F_k^T``,
    ``F_{k+1} = F_k^2`` sums ``2^k`` terms of the series per step.

    Raises:
        UnstableError: if ``spectral_radius(F) >= 1``.
        ConvergenceError: if the relative residual stays above ``tol``.
    """
    F = _square(F, "F")
    W = symmetrize(_square(W, "W"))
    if F.shape != W.shape:
        raise PreconditionError("F and W must have the same shape")
    if spectral_radius(F) >= 1.0:
        raise UnstableError("unstable: spectral radius of F is >= 1")
    scale = np.linalg.norm(W)
    if scale == 0.0:
        return W.copy()
    X = W.copy()
    Fk = F.copy()
    for _ in range(max_iter):
        X = symmetrize(X + Fk @ X @ Fk.T)
        Fk = Fk @ Fk
        residual = np.linalg.norm(X - F @ X @ F.T - W) / scale
        if residual <= tol:
            return X
        if not np.all(np.isfinite(X)):
            break
    raise ConvergenceError("doubling iteration for the Lyapunov equation did not converge")
