from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pblsgmm.errors import EmptyMomentsError, InvalidInputError
from pblsgmm.spline import (
    ClassParameters,
    Schedule,
    factor_loadings,
    implied_moments,
    inverse_transform_mean,
    reparameterize,
    spline_curve,
    transform_covariance,
)
from pblsgmm.simulation.design import build_condition

from oracles import piecewise_loading, random_class

finite = st.floats(-1e6, 1e6, allow_nan=False)
knots = st.floats(-20, 20, allow_nan=False)


class TestLoadings:
    @pytest.mark.parametrize("t, row", [(4.0, (1, 0, 0)), (1.0, (1, -3, 3)), (5.0, (1, 1, 1))])
    def test_rows(self, t, row):
        np.testing.assert_array_equal(factor_loadings([t], 4.0)[0], row)

    def test_non_finite_knot(self):
        with pytest.raises(InvalidInputError):
            factor_loadings([0.0, 1.0], np.nan)
        with pytest.raises(InvalidInputError):
            factor_loadings([0.0, np.inf], 1.0)

    @given(arrays(float, st.integers(1, 12), elements=st.floats(-50, 50)), knots)
    def test_abs_column(self, t, g):
        L = factor_loadings(t, g)
        np.testing.assert_array_equal(np.abs(L[:, 1]), L[:, 2])
        assert np.all(L[:, 2] >= 0)


class TestReparameterize:
    def test_scenario_means(self):
        np.testing.assert_allclose(reparameterize([98, 5, 2.6], 4.0), [118, 3.8, -1.2], atol=1e-12)
        np.testing.assert_allclose(reparameterize([98, 5, 2.6], 0.0), [98, 3.8, -1.2], atol=1e-12)

    def test_inverse_example(self):
        np.testing.assert_allclose(inverse_transform_mean([118, 3.8, -1.2], 4.0), [98, 5, 2.6], atol=1e-12)

    @given(finite, finite, knots)
    def test_equal_slopes(self, a, s, g):
        assert reparameterize([a, s, s], g)[2] == 0.0

    @given(finite, knots)
    def test_flat_fixed_point(self, c, g):
        np.testing.assert_array_equal(inverse_transform_mean([c, 0, 0], g), [c, 0, 0])

    @settings(max_examples=300)
    @given(finite, finite, finite, knots)
    def test_roundtrip(self, a, b, c, g):
        back = inverse_transform_mean(reparameterize([a, b, c], g), g)
        scale = max(1.0, abs(a), abs(b), abs(c), abs(g * b))
        np.testing.assert_allclose(back, [a, b, c], rtol=0, atol=1e-12 * scale)


class TestTransformCovariance:
    def test_identity_at_zero_knot(self):
        out = transform_covariance(np.eye(6), [0.0, 0.0], "to_reparam")
        T = np.array([[1, 0, 0], [0, 0.5, 0.5], [0, -0.5, 0.5]])
        blk = T @ T.T
        np.testing.assert_allclose(out[:3, :3], blk, atol=1e-15)
        np.testing.assert_allclose(out[3:, 3:], blk, atol=1e-15)
        np.testing.assert_allclose(out[:3, 3:], 0.0, atol=1e-15)
        # the known half pattern: slope block is diag(1/2, 1/2)
        np.testing.assert_allclose(blk[1:, 1:], 0.5 * np.eye(2), atol=1e-15)

    def test_intercept_variance_at_knot(self):
        cov = np.kron(np.eye(2), np.diag([25.0, 1.0, 1.0]))
        out = transform_covariance(cov, [4.0, 4.0], "to_reparam")
        assert out[0, 0] == pytest.approx(41.0, abs=1e-12)
        assert out[3, 3] == pytest.approx(41.0, abs=1e-12)

    def test_rejects_asymmetric(self):
        cov = np.eye(6)
        cov[0, 1] = 0.3
        with pytest.raises(InvalidInputError):
            transform_covariance(cov, [1.0, 2.0])

    def test_bad_direction(self):
        with pytest.raises(InvalidInputError):
            transform_covariance(np.eye(3), [1.0], "sideways")

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1))
    def test_roundtrip_and_pd(self, seed):
        rng = np.random.default_rng(seed)
        c = random_class(rng, 2, (-10, 10))
        kn = c.knots
        fwd = transform_covariance(c.cov, kn, "to_reparam")
        back = transform_covariance(fwd, kn, "to_original")
        np.testing.assert_allclose(back, c.cov, atol=1e-10 * max(1, np.abs(c.cov).max()))
        assert np.linalg.eigvalsh(fwd).min() > 0
        np.testing.assert_array_equal(fwd, fwd.T)


class TestImpliedMoments:
    def test_single_point_at_knot(self):
        c = ClassParameters([[5.0, 1.0, 0.5]], [2.0], np.diag([3.0, 1.0, 1.0]), [[0.7]])
        mom = implied_moments(c, Schedule([2.0], [[True]]))
        assert mom.mean[0] == 5.0
        assert mom.cov[0, 0] == pytest.approx(3.7)

    def test_mean_curve(self):
        c = ClassParameters([[118, 3.8, -1.2]], [4.0], np.eye(3), [[1.0]])
        mom = implied_moments(c, Schedule([0.0, 4.0, 9.0], np.ones((3, 1), bool)))
        np.testing.assert_allclose(mom.mean, [98, 118, 131], atol=1e-12)

    def test_empty(self):
        c = ClassParameters([[1.0, 0, 0]], [1.0], np.eye(3), [[1.0]])
        sched = SimpleNamespace(times=np.array([0.0, 1.0]), mask=np.zeros((2, 1), bool), n_occasions=2)
        with pytest.raises(EmptyMomentsError):
            implied_moments(c, sched)

    def test_schedule_validation(self):
        with pytest.raises(InvalidInputError):
            Schedule([0.0, 0.0], np.ones((2, 1), bool))
        with pytest.raises(InvalidInputError):
            Schedule([0.0, 1.0], np.zeros((2, 2), bool))

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_mean_matches_piecewise(self, seed):
        rng = np.random.default_rng(seed)
        c = random_class(rng, 2, (0, 9))
        t = np.sort(rng.uniform(0, 9, 100))
        mom = implied_moments(c, Schedule(t, np.ones((100, 2), bool)))
        orig = c.original_mean()
        for u in range(2):
            direct = spline_curve(t, *orig[u], c.knots[u])
            err = np.abs(mom.mean[100 * u:100 * (u + 1)] - direct)
            assert np.all(err <= 1e-10 * (1 + np.abs(direct)))

    def test_covariance_matches_original_scale(self, rng):
        c = random_class(rng, 2, (0, 4))
        t = np.array([0.0, 1.5, 3.0, 4.5])
        mom = implied_moments(c, Schedule(t, np.ones((4, 2), bool)))
        Lam = np.zeros((8, 6))
        for u in range(2):
            for j, tt in enumerate(t):
                Lam[4 * u + j, 3 * u:3 * u + 3] = piecewise_loading(tt, c.knots[u])
        ref = Lam @ c.original_cov() @ Lam.T + np.kron(c.resid, np.eye(4))
        np.testing.assert_allclose(mom.cov, ref, atol=1e-10)

    @given(st.integers(0, 2**32 - 1))
    def test_masking_commutes(self, seed):
        rng = np.random.default_rng(seed)
        c = random_class(rng, 2)
        J = 4
        t = np.sort(rng.uniform(0, 3, J)) + np.arange(J)
        mask = rng.random((J, 2)) < 0.6
        mask[0, 0] = True
        full = implied_moments(c, Schedule(t, np.ones((J, 2), bool)))
        part = implied_moments(c, Schedule(t, mask))
        keep = mask.T.reshape(-1)
        np.testing.assert_allclose(part.mean, full.mean[keep], atol=1e-12)
        np.testing.assert_allclose(part.cov, full.cov[np.ix_(keep, keep)], atol=1e-12)

    @pytest.mark.parametrize("scenario", [1, 2, 3])
    @pytest.mark.parametrize("rho", [-0.3, 0.0, 0.3])
    @pytest.mark.parametrize("resid_var", [1.0, 2.0])
    def test_design_values_pd(self, scenario, rho, resid_var):
        cond = build_condition(scenario, 0.5, 0.0, resid_var, rho)
        t = cond.waves().astype(float)
        for c in cond.true_model().classes:
            mom = implied_moments(c, Schedule(t, np.ones((t.size, 2), bool)))
            np.testing.assert_allclose(mom.cov, mom.cov.T, atol=0)
            assert np.linalg.eigvalsh(mom.cov).min() > 0
