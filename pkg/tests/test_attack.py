import json

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from topswitch.attack import (NoStealthyStartError, ZdaPlan, attack_signal, certify_plan,
                              default_eta_grid, observability_kernel, observability_matrix,
                              plan_attack_start, rosenbrock_matrix, select_attack_start,
                              stealth_subspace, synthesize_zda, zda_kernel)
from topswitch.dynamics import output_matrix, system_matrix
from topswitch.graph import WeightedGraph, detectability_check, laplacian
from topswitch.switching import build_schedule

from _fixtures import C, ETA, G1, G2, H, TAU, X_STAR, systems, xstar_plan_point

P2 = WeightedGraph.from_edges(2, [(0, 1, 1.0)])
K4 = WeightedGraph.from_edges(4, [(i, j, 1.0) for i in range(4) for j in range(i + 1, 4)])


def test_rosenbrock_scalar_example():
    R = rosenbrock_matrix(np.array([[0, 1.0], [0, 0]]), np.array([[1.0, 0]]), 0.0)
    np.testing.assert_array_equal(R, [[0, -1, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0]])


class TestObservability:
    def test_p2_observable_rank_oracle(self):
        A = system_matrix(laplacian(P2))
        Cp = output_matrix(2, [0])
        As, Cs = sympy.Matrix(A.astype(int)), sympy.Matrix(Cp.astype(int))
        O = sympy.Matrix.vstack(*[Cs * As**j for j in range(4)])
        assert O.rank() == 4
        assert observability_kernel(A, Cp).shape[1] == 0

    def test_zero_output(self):
        A = system_matrix(laplacian(G1))
        assert observability_kernel(A, np.zeros((1, 8))).shape[1] == 8

    @pytest.mark.parametrize("g", [G1, G2, H])
    def test_kernel_dimension_matches_exact_rank(self, g):
        A = system_matrix(laplacian(g))
        O = sympy.Matrix.vstack(*[sympy.Matrix(C.astype(int)) * sympy.Matrix(A.astype(int))**j
                                  for j in range(8)])
        assert observability_kernel(A, C).shape[1] == 8 - O.rank()

    def test_balanced_rows_span_same_space(self):
        A = system_matrix(laplacian(G2))
        a = np.linalg.matrix_rank(observability_matrix(A, C, balanced=True))
        b = np.linalg.matrix_rank(observability_matrix(A, C, balanced=False))
        assert a == b


class TestStealthSubspace:
    def test_base_case(self):
        sched = build_schedule([TAU, TAU])
        N1 = stealth_subspace(systems(G1, G2), C, sched, 1)
        K = observability_kernel(systems(G1)[0], C)
        assert N1.shape[1] == K.shape[1]
        # same subspace: projections agree
        np.testing.assert_allclose(N1 @ N1.T, K @ K.T, atol=1e-9)

    def test_rejects_k0(self):
        with pytest.raises(ValueError):
            stealth_subspace(systems(G1), C, build_schedule([TAU]), 0)

    def test_nonincreasing(self):
        sched = build_schedule([TAU, TAU, TAU])
        dims = [stealth_subspace(systems(G1, G2, H), C, sched, k).shape[1] for k in range(1, 8)]
        assert all(a >= b for a, b in zip(dims, dims[1:]))
        # detectable set: the invisible subspace collapses
        assert dims[-1] == 0
        assert dims == [4, 4, 0, 0, 0, 0, 0]

    def test_undetectable_pair_keeps_common_mode(self):
        sched = build_schedule([TAU, TAU])
        N = stealth_subspace(systems(G1, G2), C, sched, 6)
        assert N.shape[1] > 0
        v = np.concatenate([X_STAR, np.zeros(4)]) / np.linalg.norm(X_STAR)
        np.testing.assert_allclose(N @ (N.T @ v), v, atol=1e-9)


class TestSynthesis:
    def test_single_edge_two_weights_none(self):
        # the difference graph is the edge itself, which holds the monitored agent
        P2b = WeightedGraph.from_edges(2, [(0, 1, 2.0)])
        assert detectability_check([P2, P2b], [0]).detectable
        assert synthesize_zda(systems(P2, P2b), output_matrix(2, [0])) is None

    def test_single_edge_fixed_topology_is_attackable(self):
        # one topology: agent 2 forms its own uncovered component
        assert not detectability_check([P2, P2], [0]).detectable
        plan = synthesize_zda(systems(P2), output_matrix(2, [0]))
        assert plan is not None
        # with the monitored agent kept honest the attack disappears
        assert synthesize_zda(systems(P2), output_matrix(2, [0]), misbehaving=[1]) is None

    def test_detectable_triple_none(self):
        assert synthesize_zda(systems(G1, G2, H), C) is None

    def test_identical_pair_matches_single(self):
        a = synthesize_zda(systems(G1, G1), C, [ETA], include_default_grid=False)
        b = synthesize_zda(systems(G1), C, [ETA], include_default_grid=False)
        assert a is not None and b is not None

    def test_pair_plan_identities(self):
        plan = synthesize_zda(systems(G1, G2), C, [ETA])
        assert plan is not None and plan.eta == ETA
        n = 4
        x, v = plan.z_breve0[:n], plan.z_breve0[n:]
        np.testing.assert_allclose(ETA * x, v, atol=1e-8 * np.abs(x).max())
        assert abs(x[0]) < 1e-8 * np.abs(x).max()
        assert np.max(np.abs(plan.g)) == pytest.approx(1e-3)
        assert max(certify_plan(plan, systems(G1, G2), C).residuals) < 1e-8

    def test_restricted_misbehaving_set(self):
        plan = synthesize_zda(systems(G1, G2), C, [ETA], misbehaving=[1, 2, 3])
        assert plan.misbehaving == (1, 2, 3)
        assert plan.g[0] == 0.0
        np.testing.assert_allclose(plan.g / plan.g[1], X_STAR / 2, atol=1e-9)

    def test_no_state_no_attack(self):
        # pinning the initial perturbation to zero leaves only g = 0
        for eta in (0.0, ETA, -0.5, 2.0):
            assert zda_kernel(systems(G1, G2), C, eta, fix_state_zero=True).shape[1] == 0
            assert zda_kernel(systems(G1), C, eta, fix_state_zero=True).shape[1] == 0

    def test_default_grid_order(self):
        grid = default_eta_grid()
        assert grid.size == 81
        assert grid[0] == pytest.approx(1e-3) and grid[39] == pytest.approx(10.0)
        assert grid[40] == pytest.approx(-1e-3) and grid[-1] == 0.0

    def test_common_eigenvector_counterexample(self):
        # connected union difference graph, yet every graph shares an
        # eigenvector that vanishes at the monitored agent: a stealthy
        # attack along it exists although the set counts as detectable
        gs = [G1, G2, K4]
        assert detectability_check(gs, [0]).detectable
        for g in gs:
            np.testing.assert_allclose(laplacian(g) @ X_STAR, 4 * X_STAR, atol=1e-12)
        plan = synthesize_zda(systems(*gs), C, [ETA])
        assert plan is not None
        assert max(certify_plan(plan, systems(*gs), C).residuals) < 1e-8


class TestPlan:
    def test_json_roundtrip(self):
        z, g = xstar_plan_point()
        plan = ZdaPlan(ETA, 3.5, g, z)
        d = json.loads(plan.to_json())
        assert d["misbehaving"] == [2, 3, 4]
        assert set(d) == {"eta", "rho", "g", "z_breve0", "misbehaving"}
        back = ZdaPlan.from_json(plan.to_json())
        np.testing.assert_array_equal(back.g, plan.g)
        np.testing.assert_array_equal(back.z_breve0, plan.z_breve0)
        assert back.misbehaving == plan.misbehaving and back.rho == 3.5

    @pytest.mark.parametrize("bad", [
        dict(g=np.zeros(4)), dict(z=np.zeros(8)), dict(rho=-1.0), dict(z=np.ones(6))])
    def test_invalid(self, bad):
        z, g = xstar_plan_point()
        with pytest.raises(ValueError):
            ZdaPlan(ETA, bad.get("rho", 0.0), bad.get("g", g), bad.get("z", z))

    def test_attack_signal(self):
        z, g = xstar_plan_point()
        plan = ZdaPlan(ETA, 10.0, g, z)
        np.testing.assert_array_equal(attack_signal(plan, 9.99), np.zeros(4))
        np.testing.assert_array_equal(attack_signal(plan, 10.0), g)
        np.testing.assert_allclose(attack_signal(plan, 110.0), g * np.exp(1.61), rtol=1e-14)
        assert attack_signal(plan, np.array([0.0, 10.0, 20.0])).shape == (3, 4)


class TestAttackStart:
    sched = build_schedule([TAU, TAU])
    A = systems(G1, G2)

    def _z0_reaching_kernel_at(self, t_star):
        z, g = xstar_plan_point()
        # x* is a common eigenvector, so the unforced flow is the same for both graphs
        return expm(-self.A[0] * t_star) @ z, g

    def test_branch_ii_exact_time(self):
        t_star = self.sched.switch_time(2) + 0.5
        z0, g = self._z0_reaching_kernel_at(t_star)
        st_ = select_attack_start(z0, g, ETA, self.A, C, self.sched, 2)
        assert st_.branch == "ii"
        assert st_.rho == pytest.approx(t_star, abs=1e-9)

    def test_branch_ii_latest(self):
        t_star = self.sched.switch_time(2) + 0.5
        z0, g = self._z0_reaching_kernel_at(t_star)
        st_ = select_attack_start(z0, g, ETA, self.A, C, self.sched, 2, choose="latest")
        assert st_.branch == "ii" and st_.rho >= t_star - 1e-9

    def test_branch_iii_at_interval_end(self):
        t_star = self.sched.switch_time(3)
        z0, g = self._z0_reaching_kernel_at(t_star)
        st_ = select_attack_start(z0, g, ETA, self.A, C, self.sched, 2)
        assert st_.branch == "iii" and st_.rho == self.sched.switch_time(3)
        now = select_attack_start(z0, g, ETA, self.A, C, self.sched, 2, defer=False)
        assert now.rho == self.sched.switch_time(2)

    def test_branch_iii_constant_membership(self):
        # no edges: the unmonitored position never moves and is never seen
        A = [system_matrix(np.zeros((2, 2)))]
        sched = build_schedule([1.0])
        st_ = select_attack_start(np.array([0, 1.0, 0, 0]), np.zeros(2), 0.0, A,
                                  output_matrix(2, [0]), sched, 3)
        assert st_.branch == "iii" and st_.rho == sched.switch_time(4)

    def test_branch_i(self):
        plan = synthesize_zda(self.A, C, [ETA])
        st_ = select_attack_start(plan.z_breve0, plan.g, ETA, self.A, C, self.sched, 0)
        assert st_.branch == "i" and st_.rho == 0.0

    def test_empty_window(self):
        # a perturbation inside the invisible subspace whose orbit never meets the kernel
        z, g = xstar_plan_point()
        z0 = np.concatenate([X_STAR, -X_STAR]) * 1e-4
        with pytest.raises(NoStealthyStartError):
            select_attack_start(z0, g, ETA, self.A, C, self.sched, 1)

    def test_plan_start_finds_earliest_and_stays_stealthy(self):
        z, g = xstar_plan_point()
        z0 = expm(-self.A[0] * 1097.4) @ z
        plan, st_ = plan_attack_start(ZdaPlan(ETA, 0.0, g, z0), self.A, C, self.sched)
        assert st_.branch == "ii" and st_.k == 0
        assert 0 <= plan.rho < TAU
        assert max(certify_plan(plan, self.A, C, self.sched).residuals) < 1e-8

    def test_forward_matches_backward_subspace(self):
        # the start rule sees the same subspace whichever recursion builds it
        z, g = xstar_plan_point()
        t_star = self.sched.switch_time(4) + 0.3
        z0 = expm(-self.A[0] * t_star) @ z
        plan, st_ = plan_attack_start(ZdaPlan(ETA, 0.0, g, z0), self.A, C, self.sched)
        direct = select_attack_start(z0, g, ETA, self.A, C, self.sched, st_.k)
        assert direct.branch == st_.branch
        assert direct.rho == pytest.approx(st_.rho, abs=1e-12)
