import numpy as np
import pytest
import scipy.linalg

from harmonic_riccati import asymptotic
from harmonic_riccati.errors import PreconditionError
from harmonic_riccati.model import (
    degree_normalized_weights,
    icf_weights,
    metropolis_weights,
    path_topology,
    system_model,
)

from _factories import random_spd

GOLDEN = (1 + np.sqrt(5)) / 2
ROOT13 = (1 + np.sqrt(13)) / 2


def test_riccati_fixed_point_scalar():
    assert asymptotic.riccati_fixed_point(1.0, 1.0, 1.0)[0, 0] == pytest.approx(GOLDEN, abs=1e-10)
    assert asymptotic.riccati_fixed_point(1.0, 1.0, 1 / 3)[0, 0] == pytest.approx(ROOT13, abs=1e-10)


@pytest.mark.parametrize("seed", range(6))
def test_riccati_fixed_point_against_dare(seed):
    rng = np.random.default_rng(seed)
    n, m = 3, 2
    A = rng.standard_normal((n, n))
    C = rng.standard_normal((m, n))
    Q = random_spd(rng, n)
    R = random_spd(rng, m)
    info = C.T @ np.linalg.solve(R, C)
    P = asymptotic.riccati_fixed_point(A, Q, info, tol=1e-13)
    ref = scipy.linalg.solve_discrete_are(A.T, C.T, Q, R)
    np.testing.assert_allclose(P, ref, rtol=1e-8, atol=1e-10)


def test_limit_weights(scalar):
    _, w = scalar
    lw = asymptotic.limit_weights(w)
    np.testing.assert_allclose(lw.mu2, [2 / 7, 3 / 7, 2 / 7], atol=1e-12)
    np.testing.assert_allclose(lw.mu4, lw.mu2)


def test_limit_weights_reject_icf():
    with pytest.raises(PreconditionError, match="not row stochastic"):
        asymptotic.limit_weights(icf_weights(path_topology(3), 0.3))


def test_asymptotic_rejects_undetectable():
    model = system_model(np.diag([2.0, 0.5]), np.eye(2), [([[1.0, 0.0]], [[1.0]]), (None, None)])
    with pytest.raises(PreconditionError, match="detectable"):
        asymptotic.asymptotic_fixed_point(model, [0.0, 1.0])


def test_centralized_scalar(scalar):
    model, _ = scalar
    assert asymptotic.centralized_riccati(model)[0, 0] == pytest.approx(GOLDEN, abs=1e-10)


def test_reference_by_variant(scalar):
    model, _ = scalar
    topo = path_topology(3)
    cidf = asymptotic.asymptotic_reference(model, degree_normalized_weights(topo, 5))
    # degree weights: Perron mass 2/7 on the only sensor
    p = asymptotic.riccati_fixed_point(1.0, 1.0, 2 / 7)
    assert cidf[0, 0] == pytest.approx(p[0, 0])
    assert asymptotic.asymptotic_reference(model, metropolis_weights(topo, 5))[0, 0] == pytest.approx(ROOT13)
    assert asymptotic.asymptotic_reference(model, icf_weights(topo, 0.3, 5))[0, 0] == pytest.approx(GOLDEN)


def test_icf_sweep_tends_to_centralized(scalar):
    model, _ = scalar
    res = asymptotic.fusion_depth_sweep(model, path_topology(3), "icf", [1, 5, 30], epsilon=0.3)
    assert res.centralized_trace == pytest.approx(GOLDEN)
    assert np.all(np.abs(res.traces[-1] - GOLDEN) < 1e-2)
    assert res.spread()[-1] < 1e-2


def test_cidf_metropolis_sweep(scalar):
    model, _ = scalar
    res = asymptotic.fusion_depth_sweep(model, path_topology(3), "cidf", [1, 10, 50], metropolis=True)
    assert res.asymptotic_trace == pytest.approx(ROOT13)
    np.testing.assert_allclose(res.traces[-1], ROOT13, atol=1e-6)
    assert res.spread()[-1] < 1e-6
    assert res.centralized_trace < res.asymptotic_trace
    assert "etropolis" in res.label


def test_sweep_csv(scalar):
    model, _ = scalar
    res = asymptotic.fusion_depth_sweep(model, path_topology(3), "cidf", [1, 2])
    lines = res.to_csv().strip().splitlines()
    assert lines[0] == "L,trace_node_1,trace_node_2,trace_node_3,centralized_trace,asymptotic_trace"
    assert [l.split(",")[0] for l in lines[1:]] == ["1", "2"]
