import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import sqrtm

from topswitch.graph import WeightedGraph, laplacian
from topswitch.observer import ObserverConfig, observer_matrix
from topswitch.switching import (DwellTimeParams, IncommensurableSpectrumError,
                                 InfeasibleDwellTimeError, SwitchSchedule, build_schedule,
                                 certified_dwell_multipliers, dwell_time, dwell_times,
                                 lyapunov_weight, matrix_measure, matrix_measure_certificate,
                                 period, spectral_bound, suggest_dwell_params)

from _fixtures import G1, G2, H, TAU


def star(n, w=1.0):
    return WeightedGraph.from_edges(n, [(0, j, w) for j in range(1, n)])


class TestPeriod:
    def test_p2(self):
        assert period(WeightedGraph.from_edges(2, [(0, 1, 1.0)])) == pytest.approx(math.pi * math.sqrt(2))

    def test_star(self):
        assert period(star(4)) == pytest.approx(2 * math.pi)

    def test_fixtures(self):
        for g in (G1, G2, H):
            assert period(g) == pytest.approx(math.pi)

    def test_irrational(self):
        with pytest.raises(IncommensurableSpectrumError):
            period(WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]))

    def test_no_edges(self):
        with pytest.raises(IncommensurableSpectrumError):
            period(WeightedGraph(np.zeros((3, 3))))

    def test_every_mode_returns(self):
        # each modal period divides T
        for g in (G1, G2, H, star(4, 2.0)):
            T = period(g)
            lam = np.linalg.eigvalsh(laplacian(g))[1:]
            cycles = T * np.sqrt(lam) / (2 * math.pi)
            np.testing.assert_allclose(cycles, np.round(cycles), atol=1e-9)


class TestDwellTime:
    def test_example_value(self):
        params = suggest_dwell_params([G1, G2], tau_hat=0.2, m=1)
        certs = dwell_times([G1, G2], params)
        for c in certs:
            assert c.tau == pytest.approx(math.pi / 2 + 0.2, abs=1e-12)
            assert c.passed
        assert TAU == pytest.approx(1.7708, abs=1e-4)

    def test_dwell_exceeds_half_period(self):
        params = suggest_dwell_params([G1], tau_hat=0.05, m=1)
        assert dwell_time(G1, params).tau > period(G1) / 2

    def test_infeasible_reports_xi(self):
        p = DwellTimeParams(beta=0.5, alpha=2.0, kappa=1, m=1, tau_hat=0.1)
        with pytest.raises(InfeasibleDwellTimeError) as exc:
            dwell_time(G1, p)
        assert exc.value.xi == pytest.approx(15.0)
        assert "xi < alpha" in exc.value.failed

    def test_min_m_is_reported(self):
        xi = spectral_bound([G1])
        p = DwellTimeParams(beta=1e-6, alpha=xi + 1.0, kappa=1, m=1, tau_hat=0.5 * math.log(1e6) / (xi + 1))
        with pytest.raises(InfeasibleDwellTimeError) as exc:
            dwell_time(G1, p)
        assert exc.value.min_m is not None
        assert dwell_time(G1, p, m=exc.value.min_m).passed

    def test_m_zero_rejected(self):
        p = suggest_dwell_params([G1])
        with pytest.raises(InfeasibleDwellTimeError):
            dwell_time(G1, p, m=0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 1.0), st.integers(1, 6), st.floats(1.01, 4.0))
    def test_suggested_params_always_pass(self, tau_hat, m, margin):
        p = suggest_dwell_params([G1, G2, H], tau_hat=tau_hat, m=m, margin=margin)
        assert all(c.passed for c in dwell_times([G1, G2, H], p))


class TestSchedule:
    def test_two(self):
        s = build_schedule([1.0, 2.0])
        assert [s.topology(k) for k in range(5)] == [0, 1, 0, 1, 0]
        np.testing.assert_allclose(s.switch_times(7.0), [0, 1, 3, 4, 6, 7])

    def test_three(self):
        s = build_schedule([TAU] * 3)
        assert [s.topology(k) for k in range(7)] == [0, 1, 2, 0, 1, 2, 0]

    def test_single(self):
        s = build_schedule([2.0])
        assert s.topology_indices(np.linspace(0, 50, 11)).tolist() == [0] * 11

    def test_interval_index_at_edges(self):
        s = build_schedule([TAU, TAU])
        for k in range(1, 200):
            t = s.switch_time(k)
            assert s.interval_index(t) == k
            assert s.interval_index(np.nextafter(t, 0)) == k - 1

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=4), st.integers(0, 500))
    def test_periodic(self, dwell, k):
        s = build_schedule(dwell)
        p = len(dwell)
        assert s.topology(k + p) == s.topology(k)
        assert s.switch_time(k + p) - s.switch_time(k) == pytest.approx(s.cycle)
        assert s.interval_index(0.5 * (s.switch_time(k) + s.switch_time(k + 1))) == k

    def test_json(self):
        s = build_schedule([1.5, 2.5, 0.5])
        d = s.to_dict(horizon=5.0)
        assert d["order"] == [1, 2, 3]
        assert d["dwell"] == {"1": 1.5, "2": 2.5, "3": 0.5}
        assert d["switch_times"] == [0.0, 1.5, 4.0, 4.5]
        assert SwitchSchedule.from_dict(json.loads(json.dumps(d))) == s

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            build_schedule([1.0, 0.0])


class TestMatrixMeasure:
    def test_zero(self):
        cert = matrix_measure_certificate([np.zeros((2, 2))], [1.0], np.eye(2))
        assert cert.value == 0.0 and not cert.passed

    def test_minus_identity(self):
        assert matrix_measure(-np.eye(3), np.eye(3)) == pytest.approx(-1.0)

    def test_lyapunov_weight_negative(self):
        cfg = ObserverConfig.uniform([0], 1.0)
        A = observer_matrix(H, cfg)
        P = lyapunov_weight(A)
        X = P @ P
        assert matrix_measure(A, P) < 0
        assert matrix_measure(A, P) == pytest.approx(-1 / (2 * np.linalg.eigvalsh(X)[-1]), rel=1e-8)

    def test_equals_direct_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A = rng.normal(size=(5, 5))
            B = rng.normal(size=(5, 5))
            P = np.real(sqrtm(B @ B.T + np.eye(5)))
            M = P @ A @ np.linalg.inv(P)
            direct = np.linalg.eigvalsh(0.5 * (M + M.T))[-1]
            assert matrix_measure(A, P) == pytest.approx(direct, rel=1e-9, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_bounds_spectral_abscissa(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4))
        B = rng.normal(size=(4, 4))
        P = B @ B.T + 0.5 * np.eye(4)
        assert matrix_measure(A, P) >= np.max(np.linalg.eigvals(A).real) - 1e-9

    def test_certificate_weights(self):
        cert = matrix_measure_certificate([-np.eye(2), np.eye(2)], [3.0, 1.0], np.eye(2))
        assert cert.fractions == (0.75, 0.25)
        assert cert.value == pytest.approx(-0.5)
        assert cert.cycle_exponent(4.0) == pytest.approx(-2.0)


class TestCertifiedMultipliers:
    @pytest.mark.parametrize("gain", [1e-6, 1.0, 1e3])
    def test_reaches_target(self, gain):
        cfg = ObserverConfig.uniform([0], gain)
        mats = [observer_matrix(g, cfg) for g in (G1, G2, H)]
        P = lyapunov_weight(mats[2])
        periods = [math.pi] * 3
        ms = certified_dwell_multipliers(mats, periods, 0.2, 2, P, target=-1.0)
        assert ms[:2] == (1, 1)
        taus = [0.2 + m * math.pi / 2 for m in ms]
        cert = matrix_measure_certificate(mats, taus, P)
        assert cert.passed
        assert cert.cycle_exponent(sum(taus)) <= -1.0 + 1e-9

    def test_equal_dwell_fails(self):
        cfg = ObserverConfig.uniform([0], 1.0)
        mats = [observer_matrix(g, cfg) for g in (G1, G2, H)]
        P = lyapunov_weight(mats[2])
        assert not matrix_measure_certificate(mats, [TAU] * 3, P).passed

    def test_designated_must_contract(self):
        with pytest.raises(ValueError):
            certified_dwell_multipliers([np.eye(2)], [1.0], 0.1, 0, np.eye(2))
