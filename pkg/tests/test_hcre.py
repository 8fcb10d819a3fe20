import numpy as np
import pytest

from harmonic_riccati import hcre, linalg
from harmonic_riccati.model import (
    cmci_weights,
    complete_topology,
    custom_weights,
    degree_normalized_weights,
    icf_weights,
    path_topology,
    system_model,
)

from _factories import random_problem, random_spd

SCALAR_SOLUTION = [2.0492, 2.3909, 3.9901]
GOLDEN = (1 + np.sqrt(5)) / 2


def single_node(a=1.0, c=1.0, q=1.0, r=1.0):
    model = system_model(a, q, [(c, r)])
    return model, degree_normalized_weights(complete_topology(1))


def bisect_scalar_riccati(a, c, q, r, tol=1e-12):
    """Root of p = a^2 / (1/p + c^2/r) + q by bisection on [q, hi]."""
    f = lambda p: a * a / (1 / p + c * c / r) + q - p
    lo, hi = q, q + 1.0
    while f(hi) > 0:
        hi *= 2
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    return 0.5 * (lo + hi)


class TestStep:
    def test_single_node(self):
        model, w = single_node()
        assert hcre.hcre_step(np.ones((1, 1, 1)), model, w)[0, 0, 0] == pytest.approx(1.5)

    def test_pure_prediction(self, rng):
        A = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        Q = random_spd(rng, 2)
        model = system_model(A, Q, [(None, None), (np.eye(2), np.eye(2))])
        L = np.array([[1.0, 0.0], [0.5, 0.5]])
        P = np.stack([random_spd(rng, 2), random_spd(rng, 2)])
        out = hcre.hcre_step(P, model, custom_weights(L, L))
        np.testing.assert_allclose(out[0], A @ P[0] @ A.T + Q, rtol=1e-12)

    def test_scalar_example_first_step(self, scalar):
        model, w = scalar
        out = hcre.hcre_step(np.ones((3, 1, 1)), model, w)
        assert out[0, 0, 0] == pytest.approx(5 / 3, abs=1e-14)
        # nodes 2 and 3: (1/3 * 3 + 1/3)^-1 + 1 and (1/2 + 1/2)^-1 + 1
        assert out[1, 0, 0] == pytest.approx(1 / (1 + 1 / 3) + 1, abs=1e-14)
        assert out[2, 0, 0] == pytest.approx(2.0, abs=1e-14)

    def test_dominates_q(self):
        for seed in range(20):
            model, w, _ = random_problem(seed)
            rng = np.random.default_rng(seed)
            P = np.stack([random_spd(rng, model.n, 0.01) for _ in range(model.N)])
            out = hcre.hcre_step(P, model, w)
            assert linalg.loewner_leq(np.broadcast_to(model.Q, out.shape), out)

    def test_loewner_monotone(self):
        for seed in range(30):
            model, w, _ = random_problem(seed)
            rng = np.random.default_rng(seed + 1000)
            P = np.stack([random_spd(rng, model.n, 0.01) for _ in range(model.N)])
            bigger = P + np.stack([random_spd(rng, model.n, 0.0) for _ in range(model.N)])
            assert linalg.loewner_leq(hcre.hcre_step(P, model, w), hcre.hcre_step(bigger, model, w))


def _one_step_reference(P, A, Q, Cs, Rs, L_pow, scale):
    """Independent per-node loop: P_i' = A (sum_j l_ij P_j^-1 + l_ij s_j C_j^T R_j^-1 C_j)^-1 A^T + Q."""
    out = []
    for i in range(len(P)):
        S = np.zeros_like(A)
        for j in range(len(P)):
            S = S + L_pow[i, j] * np.linalg.inv(P[j])
            if Cs[j] is not None:
                S = S + L_pow[i, j] * scale[j] * Cs[j].T @ np.linalg.inv(Rs[j]) @ Cs[j]
        out.append(A @ np.linalg.inv(S) @ A.T + Q)
    return np.array(out)


class TestVariantsOneStep:
    def setup_method(self):
        rng = np.random.default_rng(7)
        self.A = rng.standard_normal((2, 2))
        self.Q = random_spd(rng, 2)
        self.Cs = [rng.standard_normal((1, 2)), None, rng.standard_normal((2, 2))]
        self.Rs = [random_spd(rng, 1), None, random_spd(rng, 2)]
        self.model = system_model(self.A, self.Q, list(zip(self.Cs, self.Rs)))
        self.P = np.stack([random_spd(rng, 2) for _ in range(3)])
        self.topo = path_topology(3)

    def test_cidf(self):
        w = degree_normalized_weights(self.topo)
        ref = _one_step_reference(self.P, self.A, self.Q, self.Cs, self.Rs, w.L_mat, np.ones(3))
        np.testing.assert_allclose(hcre.hcre_step(self.P, self.model, w), ref, rtol=1e-12)

    def test_icf(self):
        eps, L = 0.3, 4
        w = icf_weights(self.topo, eps, L)
        lap = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
        Wl = np.linalg.matrix_power(np.eye(3) - eps * lap, L)
        ref = _one_step_reference(self.P, self.A, self.Q, self.Cs, self.Rs, Wl, np.full(3, 3.0))
        np.testing.assert_allclose(hcre.hcre_step(self.P, self.model, w), ref, rtol=1e-12)

    def test_cmci(self):
        omega = np.array([0.5, 2.0, 1.5])
        w = cmci_weights(self.topo, omega, 2)
        Ll = np.linalg.matrix_power(degree_normalized_weights(self.topo).L_mat, 2)
        ref = _one_step_reference(self.P, self.A, self.Q, self.Cs, self.Rs, Ll, omega)
        np.testing.assert_allclose(hcre.hcre_step(self.P, self.model, w), ref, rtol=1e-12)


class TestSolve:
    def test_scalar_example(self, scalar):
        P, rep = hcre.solve_fixed_point(*scalar, init="identity")
        assert rep.converged
        np.testing.assert_allclose(P.ravel(), SCALAR_SOLUTION, atol=1e-4)

    def test_single_node_golden_ratio(self):
        P, rep = hcre.solve_fixed_point(*single_node())
        assert P[0, 0, 0] == pytest.approx(GOLDEN, abs=1e-9)

    def test_init_independence(self, scalar):
        a, _ = hcre.solve_fixed_point(*scalar, init=100.0)
        b, _ = hcre.solve_fixed_point(*scalar, init=0.01)
        np.testing.assert_allclose(a, b, atol=1e-8)

    @pytest.mark.parametrize("a, c, q, r", [(1, 1, 1, 1), (0.5, 2, 0.3, 1.7), (1.8, 0.4, 2.0, 0.5), (-1.3, 1, 0.1, 3)])
    def test_bisection_oracle(self, a, c, q, r):
        P, rep = hcre.solve_fixed_point(*single_node(a, c, q, r), tol=1e-14, max_iter=100_000)
        assert P[0, 0, 0] == pytest.approx(bisect_scalar_riccati(a, c, q, r), abs=1e-10)

    def test_residual_within_tolerance(self):
        for seed in range(10):
            model, w, _ = random_problem(seed)
            P, rep = hcre.solve_fixed_point(model, w, tol=1e-10)
            assert rep.converged and rep.residual <= 1e-10
            assert len(rep.trace_history) == rep.iterations + 1

    def test_nonconvergence_is_reported(self, scalar):
        _, rep = hcre.solve_fixed_point(*scalar, max_iter=3)
        assert not rep.converged and rep.iterations == 3

    def test_boundedness_after_burn_in(self):
        for seed in range(10):
            model, w, _ = random_problem(seed)
            for init in (0.01, 100.0):
                _, rep = hcre.solve_fixed_point(model, w, init=init)
                tail = rep.trace_history[20:]
                if len(tail):
                    assert tail.max() <= 10 * rep.trace_history[-1].max()

    def test_report_csv(self, scalar):
        _, rep = hcre.solve_fixed_point(*scalar)
        lines = rep.to_csv().strip().splitlines()
        assert lines[0] == "k,trace_P1,trace_P2,trace_P3"
        assert len(lines) == rep.iterations + 2
        assert float(lines[-1].split(",")[3]) == rep.trace_history[-1, 2]


class TestMonotone:
    def test_scalar_example(self, scalar):
        P, rep, eps = hcre.monotone_solve(*scalar)
        assert eps == 0.5
        assert np.all(np.diff(rep.trace_history, axis=0) >= -1e-10)
        np.testing.assert_allclose(P.ravel(), SCALAR_SOLUTION, atol=1e-4)

    def test_random_instances_nondecreasing(self):
        for seed in range(15):
            model, w, _ = random_problem(seed)
            P, rep, eps = hcre.monotone_solve(model, w)
            assert rep.converged
            assert np.all(np.diff(rep.trace_history, axis=0) >= -1e-10)
            ref, _ = hcre.solve_fixed_point(model, w)
            np.testing.assert_allclose(P, ref, atol=1e-7 * np.abs(ref).max())


class TestUniqueness:
    def test_scalar_example(self, scalar):
        assert hcre.verify_uniqueness(*scalar, inits=(0.01, "identity", 100.0)) < 1e-8

    def test_random_three_node(self):
        model, w, _ = random_problem(42, n=2, N=3)
        assert hcre.verify_uniqueness(model, w, inits=(0.01, "identity", 100.0)) < 1e-8

    def test_single_init(self, scalar):
        assert hcre.verify_uniqueness(*scalar, inits=("identity",)) == 0.0


def gain_form_closed_loop(P, model, L, j):
    """A - K C~ with C~ = [sign(l_jk) C_k] and R~ = diag(R_k / l_jk): the textbook gain form."""
    Pt = np.linalg.inv(sum(L[j, k] * np.linalg.inv(P[k]) for k in range(model.N)))
    rows, blocks = [], []
    for k, s in enumerate(model.sensors):
        if L[j, k] > 0 and s.m:
            rows.append(s.C)
            blocks.append(s.R / L[j, k])
    if not rows:
        return model.A.copy(), Pt
    Ct = np.vstack(rows)
    from scipy.linalg import block_diag

    Rt = block_diag(*blocks)
    K = model.A @ Pt @ Ct.T @ np.linalg.inv(Ct @ Pt @ Ct.T + Rt)
    return model.A - K @ Ct, Pt


class TestContraction:
    def test_scalar_example(self, scalar):
        P, _ = hcre.solve_fixed_point(*scalar, tol=1e-12)
        cert = hcre.contraction_certificate(P, *scalar)
        assert cert.certified and cert.rho < 1

    def test_matrix_matches_gain_form(self):
        model, w, _ = random_problem(3, n=2, N=4)
        P, _ = hcre.solve_fixed_point(model, w, tol=1e-13)
        M = hcre.contraction_matrix(P, model, w)
        n, L = model.n, w.L_mat
        for i in range(model.N):
            _, Pt_i = gain_form_closed_loop(P, model, L, i)
            for j in range(model.N):
                Acl, _ = gain_form_closed_loop(P, model, L, j)
                ref = np.sqrt(L[i, j]) * Pt_i @ np.linalg.inv(P[j]) @ Acl
                np.testing.assert_allclose(M[i * n:(i + 1) * n, j * n:(j + 1) * n], ref, atol=1e-10)

    def test_single_node_is_kalman_loop(self):
        model, w = single_node(1.2, 1.0, 0.5, 2.0)
        P, _ = hcre.solve_fixed_point(model, w, tol=1e-13)
        cert = hcre.contraction_certificate(P, model, w)
        p = P[0, 0, 0]
        k = 1.2 * p / (p + 2.0)
        assert cert.matrix[0, 0] == pytest.approx(1.2 - k, rel=1e-10)
        assert cert.rho == pytest.approx((1.2 - k) ** 2, rel=1e-10)
        assert cert.linear_rho < 1

    def test_congruence_radius_tracks_solver_rate(self):
        model, w, _ = random_problem(5)
        P, rep = hcre.solve_fixed_point(model, w, init=100.0, tol=1e-13, max_iter=100_000)
        cert = hcre.contraction_certificate(P, model, w)
        assert rep.contraction_ratio(10) == pytest.approx(cert.rho, rel=0.05)

    def test_certified_on_random_instances(self):
        for seed in range(40):
            model, w, _ = random_problem(seed)
            P, _ = hcre.solve_fixed_point(model, w, tol=1e-12, max_iter=100_000)
            assert hcre.contraction_certificate(P, model, w).certified

    def test_rejects_non_fixed_point(self, scalar):
        from harmonic_riccati.errors import PreconditionError

        with pytest.raises(PreconditionError):
            hcre.contraction_certificate(np.ones((3, 1, 1)), *scalar)


def test_classical_bound_demo():
    bound, exact = hcre.classical_bound_demo()
    assert bound == pytest.approx(7.0, abs=1e-12)
    assert exact == pytest.approx(3.9901, abs=1e-3)
    assert bound > exact
