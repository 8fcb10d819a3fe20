"""Plant, sensor network and fusion-weight construction.

A :class:`SystemModel` is the LTI plant ``x_{k+1} = A x_k + w_k`` observed by
``N`` sensors ``y_{i,k} = C_i x_k + v_{i,k}``. A sensor without measurements
has an empty ``C_i`` (shape ``(0, n)``), which contributes zero information.

A :class:`FusionWeights` pair ``(L_mat, nu_mat)`` parameterizes the unified
information-fusion recursion: ``L_mat`` mixes neighbours' prior information
and ``nu_mat`` mixes their measurement information.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path

from . import linalg
from .errors import PreconditionError

VARIANTS = ("CIDF", "ICF", "CMCI", "CUSTOM")


@dataclass(frozen=True)
class Sensor:
    C: np.ndarray
    R: np.ndarray

    @property
    def m(self) -> int:
        return self.C.shape[0]


def make_sensor(C, R, n: int) -> Sensor:
    """Build a sensor; ``C=None`` or an empty array means no measurements."""
    if C is None or np.size(C) == 0 or not np.any(np.asarray(C, dtype=float)):
        return Sensor(np.zeros((0, n)), np.zeros((0, 0)))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != n:
        raise PreconditionError(f"C has {C.shape[1]} columns, expected {n}")
    R = linalg.as_spd(np.atleast_2d(np.asarray(R, dtype=float)), "R")
    if R.shape[0] != C.shape[0]:
        raise PreconditionError("R size does not match the rows of C")
    return Sensor(C, R)


@dataclass(frozen=True)
class SystemModel:
    A: np.ndarray
    Q: np.ndarray
    sensors: tuple[Sensor, ...]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return len(self.sensors)

    @property
    def m_total(self) -> int:
        return sum(s.m for s in self.sensors)

    def obs_info(self) -> np.ndarray:
        """Stack of ``C_i^T R_i^{-1} C_i``, shape ``(N, n, n)``; zero for silent sensors."""
        out = np.zeros((self.N, self.n, self.n))
        for i, s in enumerate(self.sensors):
            if s.m:
                out[i] = linalg.symmetrize(s.C.T @ np.linalg.solve(s.R, s.C))
        return out

    def obs_gain(self) -> np.ndarray:
        """Block map from the stacked measurement vector to ``C_i^T R_i^{-1} y_i``.

        Shape ``(N, n, m_total)``; block ``i`` is nonzero only in sensor ``i``'s columns.
        """
        out = np.zeros((self.N, self.n, self.m_total))
        col = 0
        for i, s in enumerate(self.sensors):
            if s.m:
                out[i, :, col:col + s.m] = s.C.T @ np.linalg.inv(s.R)
            col += s.m
        return out

    def stacked_C(self) -> np.ndarray:
        return np.vstack([s.C for s in self.sensors]) if self.N else np.zeros((0, self.n))


def system_model(A, Q, sensors: Sequence) -> SystemModel:
    """Create a :class:`SystemModel` from matrices.

    ``sensors`` holds either :class:`Sensor` objects or ``(C, R)`` pairs.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PreconditionError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    Q = linalg.as_spd(Q, "Q")
    if Q.shape != (n, n):
        raise PreconditionError("Q must match the size of A")
    built = []
    for s in sensors:
        if isinstance(s, Sensor):
            built.append(s if s.m == 0 else make_sensor(s.C, s.R, n))
        else:
            C, R = s
            built.append(make_sensor(C, R, n))
    if not built:
        raise PreconditionError("at least one sensor is required")
    return SystemModel(A, Q, tuple(built))


@dataclass(frozen=True)
class Topology:
    adjacency: np.ndarray
    positions: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        """Neighbour counts, self-loop excluded."""
        return self.adjacency.sum(axis=1) - 1

    @property
    def diameter(self) -> int:
        d = shortest_path(self.adjacency.astype(float), unweighted=True, directed=True)
        return int(np.max(d))

    def is_strongly_connected(self) -> bool:
        ncomp, _ = connected_components(self.adjacency, directed=True, connection="strong")
        return ncomp == 1


def topology_from_adjacency(adj) -> Topology:
    a = np.asarray(adj) != 0
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError("adjacency must be square")
    a = a.copy()
    np.fill_diagonal(a, True)
    return Topology(a)


def path_topology(N: int) -> Topology:
    a = np.eye(N, dtype=bool)
    idx = np.arange(N - 1)
    a[idx, idx + 1] = a[idx + 1, idx] = True
    return Topology(a)


def complete_topology(N: int) -> Topology:
    return Topology(np.ones((N, N), dtype=bool))


def random_geometric_topology(
    N: int, width: float, radius: float, seed: int, max_attempts: int = 1000
) -> Topology:
    """Uniform random node placement with disc-radius links.

    Nodes are placed i.i.d. uniform on ``[0, width]^2`` and linked when their
    distance is at most ``radius``. If the graph is disconnected the draw is
    repeated with ``seed + 1``, ``seed + 2``, ...; the seed that succeeded is
    stored on the result.

    Raises:
        PreconditionError: when no connected layout is found in ``max_attempts``.
    """
    if N < 1:
        raise PreconditionError("N must be at least 1")
    if radius <= 0:
        raise PreconditionError("radius must be positive")
    for attempt in range(max_attempts):
        s = seed + attempt
        rng = np.random.Generator(np.random.Philox(s))
        pos = rng.uniform(0.0, width, size=(N, 2))
        diff = pos[:, None, :] - pos[None, :, :]
        adj = np.sqrt((diff ** 2).sum(axis=-1)) <= radius
        np.fill_diagonal(adj, True)
        topo = Topology(adj, pos, s)
        if topo.is_strongly_connected():
            return topo
    raise PreconditionError(
        f"radius too small for connectivity: no connected layout in {max_attempts} attempts"
    )


@dataclass(frozen=True)
class FusionWeights:
    """Fusion weight pair for the unified recursion.

    ``base`` is the one-hop consensus matrix and ``obs_scale`` the per-node
    measurement multiplier (1 for CIDF, ``N`` for ICF, ``omega`` for CMCI);
    for those variants ``L_mat = base ** fusion_depth`` and
    ``nu_mat = L_mat * obs_scale``. Custom pairs leave ``base`` unset.
    """

    L_mat: np.ndarray
    nu_mat: np.ndarray
    variant: str = "CUSTOM"
    fusion_depth: int = 1
    omega: Optional[np.ndarray] = None
    epsilon: Optional[float] = None
    base: Optional[np.ndarray] = None
    obs_scale: Optional[np.ndarray] = None
    label: str = ""

    @property
    def N(self) -> int:
        return self.L_mat.shape[0]


def _powered(base: np.ndarray, depth: int, scale: np.ndarray, variant: str, **kw) -> FusionWeights:
    if depth < 1:
        raise PreconditionError("fusion depth must be a positive integer")
    L = np.linalg.matrix_power(base, depth)
    return FusionWeights(
        L_mat=L,
        nu_mat=L * scale[None, :],
        variant=variant,
        fusion_depth=depth,
        base=base,
        obs_scale=scale,
        **kw,
    )


def degree_matrix(topo: Topology) -> np.ndarray:
    """Row-normalized adjacency ``l_ij = a_ij / d_ii`` (self-loop counted)."""
    a = topo.adjacency.astype(float)
    return a / a.sum(axis=1, keepdims=True)


def degree_normalized_weights(topo: Topology, depth: int = 1) -> FusionWeights:
    """CIDF weights with ``nu = L`` built from the row-normalized adjacency."""
    return _powered(degree_matrix(topo), depth, np.ones(topo.N), "CIDF", label="degree")


def metropolis_matrix(topo: Topology) -> np.ndarray:
    """Metropolis-Hastings weights; symmetric, hence doubly stochastic."""
    a = topo.adjacency.copy()
    np.fill_diagonal(a, False)
    d = a.sum(axis=1)
    W = np.where(a, 1.0 / (1.0 + np.maximum(d[:, None], d[None, :])), 0.0)
    W[np.diag_indices_from(W)] = 1.0 - W.sum(axis=1)
    return W


def metropolis_weights(topo: Topology, depth: int = 1) -> FusionWeights:
    """CIDF weights with ``nu = L`` built from Metropolis-Hastings weights."""
    return _powered(metropolis_matrix(topo), depth, np.ones(topo.N), "CIDF", label="metropolis")


def laplacian_consensus_matrix(topo: Topology, epsilon: float) -> np.ndarray:
    """``I - epsilon * Laplacian`` of the graph without self-loops."""
    a = topo.adjacency.astype(float)
    np.fill_diagonal(a, 0.0)
    lap = np.diag(a.sum(axis=1)) - a
    return np.eye(topo.N) - epsilon * lap


def default_icf_epsilon(topo: Topology) -> float:
    return 0.65 / max(int(topo.degrees.max()), 1)


def icf_weights(topo: Topology, epsilon: Optional[float] = None, depth: int = 1) -> FusionWeights:
    """Information-weighted consensus weights: ``L = W^depth``, ``nu = N W^depth``.

    ``W = I - epsilon * Laplacian``; ``epsilon`` must satisfy
    ``0 < epsilon < 1 / max_degree`` so that ``W`` is stochastic with a positive diagonal.
    """
    if epsilon is None:
        epsilon = default_icf_epsilon(topo)
    dmax = int(topo.degrees.max())
    if not epsilon > 0 or (dmax > 0 and not epsilon < 1.0 / dmax):
        raise PreconditionError(
            f"epsilon={epsilon!r} outside (0, 1/max_degree); consensus matrix is not stochastic"
        )
    W = laplacian_consensus_matrix(topo, epsilon)
    N = topo.N
    return _powered(W, depth, np.full(N, float(N)), "ICF", epsilon=float(epsilon), label="laplacian")


def cmci_weights(topo: Topology, omega, depth: int = 1) -> FusionWeights:
    """Hybrid consensus weights: ``L = Ldeg^depth`` and ``nu_ij = l_ij^(depth) * omega_j``."""
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.shape != (topo.N,):
        raise PreconditionError("omega must have one entry per node")
    if np.any(omega <= 0):
        raise PreconditionError("omega entries must be positive")
    return _powered(degree_matrix(topo), depth, omega, "CMCI", omega=omega, label="degree")


def custom_weights(L_mat, nu_mat) -> FusionWeights:
    L = np.atleast_2d(np.asarray(L_mat, dtype=float))
    nu = np.atleast_2d(np.asarray(nu_mat, dtype=float))
    if L.shape != nu.shape or L.shape[0] != L.shape[1]:
        raise PreconditionError("L and nu must be square with the same shape")
    return FusionWeights(L, nu, "CUSTOM", 1)


DEFAULT_DEPTH = {"CIDF": 1, "ICF": 3, "CMCI": 1}


def variant_weights(
    topo: Topology,
    variant: str,
    depth: Optional[int] = None,
    epsilon: Optional[float] = None,
    omega=None,
    metropolis: bool = False,
) -> FusionWeights:
    """Dispatch to the weight builder for ``variant`` (case-insensitive).

    ``depth=None`` picks the variant default from ``DEFAULT_DEPTH``.
    """
    v = variant.upper()
    if depth is None:
        depth = DEFAULT_DEPTH.get(v, 1)
    if v == "CIDF":
        return metropolis_weights(topo, depth) if metropolis else degree_normalized_weights(topo, depth)
    if v == "ICF":
        return icf_weights(topo, epsilon, depth)
    if v == "CMCI":
        if omega is None:
            omega = np.ones(topo.N)
        return cmci_weights(topo, omega, depth)
    raise PreconditionError(f"unknown variant {variant!r}")


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [f"{c.name}: {c.detail}" for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "value": c.value, "detail": c.detail} for c in self.checks}


def validate(model: SystemModel, weights: FusionWeights) -> ValidationReport:
    """Check the standing assumptions and report measured quantities.

    Never raises for a failed check; inspect ``report.ok`` / ``report.failures()``.
    """
    rep = ValidationReport()
    s = np.linalg.svd(model.A, compute_uv=False)
    smin = float(s[-1])
    rep.checks.append(Check(
        "A_invertible", bool(s[0] > 0 and smin > 1e-12 * s[0]), smin, "smallest singular value of A"))
    rep.checks.append(Check(
        "Q_positive_definite", linalg.is_positive_definite(model.Q),
        float(np.linalg.eigvalsh(model.Q)[0]), "smallest eigenvalue of Q"))
    r_ok = all(linalg.is_positive_definite(x.R) for x in model.sensors if x.m)
    rep.checks.append(Check("R_positive_definite", r_ok, None, "every nonempty R_i"))
    rep.checks.append(Check(
        "collectively_observable",
        linalg.is_collectively_observable(model.A, [x.C for x in model.sensors]),
        None, "rank of stacked observability matrix equals n"))

    L, nu = weights.L_mat, weights.nu_mat
    shapes_ok = L.shape == (model.N, model.N) and nu.shape == L.shape
    rep.checks.append(Check("shapes", shapes_ok, list(L.shape), f"weights must be {model.N}x{model.N}"))
    if not shapes_ok:
        return rep
    dev = float(np.max(np.abs(L.sum(axis=1) - 1.0)))
    rep.checks.append(Check(
        "L_row_stochastic", bool(np.all(L >= 0) and dev <= 1e-10), dev, "max row-sum deviation of L"))
    exponent = linalg.primitivity_exponent(np.clip(L, 0, None))
    rep.checks.append(Check("L_primitive", exponent is not None, exponent, "primitivity exponent of L"))
    rep.checks.append(Check(
        "nu_irreducible", bool(np.all(nu >= 0) and linalg.is_irreducible(nu)), None,
        "nu nonnegative with strongly connected pattern"))
    return rep
