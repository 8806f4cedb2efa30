import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from schrobridge.errors import InputDomainError, NumericalDomainError
from schrobridge.gaussian_oracle import (PairCovariance, barycentric_slope, gaussian_fisher,
                                         interpolation_variance, ou_pair_covariance, ou_transition_logpdf,
                                         sb_pair_covariance, symmetrized_kl_gaussian)
from schrobridge.measures import GaussianSpec

from conftest import gaussian_plan

STD = GaussianSpec(0.0, 1.0)

# regression baselines
SYM_KL_EPS04 = 1.78027107508e-05
SYM_KL_RATIO_EPS01 = 0.949894


def _generic_sym_kl(a, b):
    """Oracle through generic linear algebra."""
    A, B = np.array(a.matrix()), np.array(b.matrix())
    return 0.5 * np.trace(np.linalg.solve(A, B)) + 0.5 * np.trace(np.linalg.solve(B, A)) - 2.0


class TestPairCovariances:
    def test_ou_unit(self):
        assert ou_pair_covariance(STD, 0.5).cross == pytest.approx(math.exp(-0.25), rel=1e-15)

    def test_ou_variance_two(self):
        assert ou_pair_covariance(GaussianSpec(0, 2), 0.5).cross == pytest.approx(1.7650, abs=1e-4)

    def test_sb_unit(self):
        assert sb_pair_covariance(STD, 0.1).cross == pytest.approx(0.951249, abs=1e-6)

    def test_sb_variance_two_against_sinkhorn(self):
        plan = gaussian_plan(0.3, 2.0)
        x = plan.points
        cross = float(x @ plan.plan @ x)
        oracle = sb_pair_covariance(GaussianSpec(0, 2), 0.3).cross
        assert oracle == pytest.approx((math.sqrt(16.09) - 0.3) / 2, rel=1e-14)
        assert oracle == pytest.approx(1.855617, abs=1e-6)
        assert abs(cross - oracle) < 1e-3

    @pytest.mark.parametrize("fn", [ou_pair_covariance, sb_pair_covariance])
    def test_zero_temperature_limit(self, fn):
        assert fn(STD, 1e-9).cross == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_bad_epsilon(self, bad):
        with pytest.raises(InputDomainError):
            sb_pair_covariance(STD, bad)
        with pytest.raises(InputDomainError):
            ou_pair_covariance(STD, bad)

    def test_gap_is_cancellation_free(self):
        for fn in (ou_pair_covariance, sb_pair_covariance):
            c = fn(STD, 1e-6)
            assert c.gap == pytest.approx(0.5e-6, rel=1e-5)

    def test_sb_cross_monotone(self):
        eps = np.geomspace(1e-3, 10, 40)
        vs = np.geomspace(0.1, 10, 20)
        cross = np.array([[sb_pair_covariance(GaussianSpec(0, v), e).cross for e in eps] for v in vs])
        assert np.all(np.diff(cross, axis=1) < 0)
        assert np.all(np.diff(cross, axis=0) > 0)

    def test_ou_and_sb_agree_to_second_order(self):
        from schrobridge.analysis import rate_fit

        eps = np.geomspace(0.01, 0.4, 8)
        gaps = [abs(ou_pair_covariance(STD, e).cross - sb_pair_covariance(STD, e).cross) for e in eps]
        assert rate_fit(eps, gaps).slope >= 1.9

    def test_invalid_pair(self):
        with pytest.raises(InputDomainError):
            PairCovariance(1.0, 1.5)
        with pytest.raises(InputDomainError):
            PairCovariance(0.0, 0.0)


class TestBarycentricSlope:
    def test_values(self):
        assert barycentric_slope(STD, 0.1) == pytest.approx(0.951249, abs=1e-6)
        assert barycentric_slope(STD, 0.1) == pytest.approx(1 - 0.05 + 0.01 / 8, abs=1e-5)
        assert barycentric_slope(STD, 0.5) == pytest.approx(0.780776, abs=1e-6)
        assert barycentric_slope(STD, 1e-10) == pytest.approx(1.0)

    def test_scaling(self):
        # x -> x / sqrt(v) maps temperature eps to eps / v
        assert barycentric_slope(GaussianSpec(3.0, 4.0), 0.8) == pytest.approx(barycentric_slope(STD, 0.2), rel=1e-14)


class TestSymmetrizedKL:
    def test_identical(self):
        c = sb_pair_covariance(STD, 0.3)
        assert symmetrized_kl_gaussian(c, c) == 0.0

    def test_ratio_at_eps01(self):
        e = 0.1
        kl = symmetrized_kl_gaussian(ou_pair_covariance(STD, e), sb_pair_covariance(STD, e))
        assert kl / (e**4 / 1152) == pytest.approx(SYM_KL_RATIO_EPS01, abs=1e-6)

    def test_eps04_baseline(self):
        a, b = ou_pair_covariance(STD, 0.4), sb_pair_covariance(STD, 0.4)
        kl = symmetrized_kl_gaussian(a, b)
        assert kl == pytest.approx(_generic_sym_kl(a, b), rel=1e-9)
        assert kl == pytest.approx(SYM_KL_EPS04, rel=1e-10)

    def test_unequal_variances_match_generic(self):
        a, b = PairCovariance(1.0, 0.3), PairCovariance(2.0, -0.5)
        assert symmetrized_kl_gaussian(a, b) == pytest.approx(_generic_sym_kl(a, b), rel=1e-12)

    def test_singular(self):
        with pytest.raises(NumericalDomainError):
            symmetrized_kl_gaussian(PairCovariance(1.0, 1.0), PairCovariance(1.0, 0.5))

    @given(v1=st.floats(0.1, 10), r1=st.floats(-0.95, 0.95), v2=st.floats(0.1, 10), r2=st.floats(-0.95, 0.95))
    def test_non_negative(self, v1, r1, v2, r2):
        a, b = PairCovariance(v1, r1 * v1), PairCovariance(v2, r2 * v2)
        kl = symmetrized_kl_gaussian(a, b)
        assert kl >= 0
        assert kl == pytest.approx(_generic_sym_kl(a, b), rel=1e-6, abs=1e-9)

    @given(v=st.floats(0.1, 10), r=st.floats(-0.95, 0.95))
    def test_zero_iff_equal(self, v, r):
        a = PairCovariance(v, r * v)
        assert symmetrized_kl_gaussian(a, PairCovariance(v, r * v)) == 0
        assert symmetrized_kl_gaussian(a, PairCovariance(v, (r + 0.01) * v)) > 0


class TestFisherAndInterpolation:
    @pytest.mark.parametrize("v,expected", [(1.0, 1.0), (4.0, 0.25)])
    def test_fisher(self, v, expected):
        assert gaussian_fisher(GaussianSpec(0, v)) == expected

    def test_fisher_flat_limit(self):
        assert gaussian_fisher(GaussianSpec(0, 1e12)) < 1e-11

    def test_endpoints(self):
        for t in (0.0, 1.0):
            assert interpolation_variance(GaussianSpec(0, 2.5), 0.3, t) == pytest.approx(2.5)

    def test_midpoint(self):
        c = sb_pair_covariance(STD, 0.2).cross
        v = interpolation_variance(STD, 0.2, 0.5)
        assert v == pytest.approx(0.5 * (1 + c) + 0.05, rel=1e-15)
        assert v == pytest.approx(1.0025, abs=1e-5)

    def test_zero_temperature(self):
        assert interpolation_variance(STD, 1e-10, 0.3) == pytest.approx(1.0)

    @given(t=st.floats(0, 1), eps=st.floats(0.01, 5), v=st.floats(0.1, 10))
    def test_time_symmetry(self, t, eps, v):
        spec = GaussianSpec(0, v)
        assert interpolation_variance(spec, eps, t) == pytest.approx(interpolation_variance(spec, eps, 1 - t), rel=1e-12)

    def test_bad_t(self):
        with pytest.raises(InputDomainError):
            interpolation_variance(STD, 0.1, 1.5)


def test_ou_transition_logpdf_matches_scipy():
    spec = GaussianSpec(1.0, 2.0)
    eps = 0.3
    loc = 1.0 + (0.5 - 1.0) * math.exp(-eps / 4)
    sd = math.sqrt(2.0 * (1 - math.exp(-eps / 2)))
    assert ou_transition_logpdf(spec, 0.5, -0.2, eps) == pytest.approx(stats.norm(loc, sd).logpdf(-0.2), rel=1e-13)
