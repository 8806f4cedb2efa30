import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from schrobridge.analysis import (DEFAULT_EPSILONS, constant_observable, fisher_limit_check, gaussian_observable,
                                  generator_apply, generator_residual, identity_observable, rate_fit,
                                  score_estimate, score_residual, square_observable)
from schrobridge.errors import RateFitError
from schrobridge.gaussian_oracle import barycentric_slope, ou_pair_covariance, sb_pair_covariance, symmetrized_kl_gaussian
from schrobridge.measures import GaussianSpec, GridSpec, PotentialModel, discretize, gaussian_model
from schrobridge.sinkhorn import solve_symmetric

from conftest import gaussian_plan

STD = GaussianSpec(0.0, 1.0)
SWEEP4 = (0.4, 0.2, 0.1, 0.05)


def _linear_residual(v, eps):
    c = barycentric_slope(GaussianSpec(0.0, v), eps)
    return abs((c - 1) / eps + 1 / (2 * v)) * math.sqrt(v)


def test_default_sweep():
    np.testing.assert_allclose(DEFAULT_EPSILONS, [0.4, 0.283, 0.2, 0.141, 0.1, 0.0707, 0.05], rtol=5e-3)
    assert all(a > b for a, b in zip(DEFAULT_EPSILONS, DEFAULT_EPSILONS[1:]))


class TestScoreEstimate:
    def test_value_at_one(self):
        plan = gaussian_plan(0.1)
        i = int(np.argmin(np.abs(plan.points - 1.0)))
        c = barycentric_slope(STD, 0.1)
        assert score_estimate(plan)[i] == pytest.approx(2 * (c - 1) / 0.1, rel=1e-8)
        assert score_estimate(plan)[i] == pytest.approx(-0.975, abs=1e-3)

    def test_symmetric_density(self):
        plan = gaussian_plan(0.1)
        i = int(np.argmin(np.abs(plan.points)))
        assert score_estimate(plan)[i] == pytest.approx(0.0, abs=1e-12)

    def test_flat_interior(self):
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        with pytest.warns(UserWarning):
            rho = discretize(PotentialModel(zero, zero, zero, zero), GridSpec(-5, 5, 201))
        plan = solve_symmetric(rho, 0.05)
        inner = np.abs(plan.points) <= 2
        np.testing.assert_allclose(score_estimate(plan)[inner], 0.0, atol=1e-8)

    def test_affine_on_interior(self):
        plan = gaussian_plan(0.2)
        x = plan.points
        inner = np.abs(x) <= 6
        s = score_estimate(plan)[inner]
        coef = np.polyfit(x[inner], s, 1)
        assert np.max(np.abs(np.polyval(coef, x[inner]) - s)) < 1e-6


class TestGenerator:
    def test_apply(self):
        m = gaussian_model()
        assert generator_apply(m, constant_observable(3.0), 0.7) == 0
        assert generator_apply(m, identity_observable(), 2.0) == pytest.approx(-1.0)
        assert generator_apply(m, square_observable(), 0.0) == pytest.approx(1.0)
        x = np.linspace(-2, 2, 5)
        np.testing.assert_allclose(generator_apply(m, square_observable(), x), 1 - x**2)

    def test_observable_derivatives(self):
        xi = gaussian_observable()
        x = np.linspace(-2, 2, 41)
        h = 1e-5
        np.testing.assert_allclose(xi.grad(x), (xi.value(x + h) - xi.value(x - h)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(xi.lap(x), (xi.grad(x + h) - xi.grad(x - h)) / (2 * h), atol=1e-8)

    def test_constant_residual_vanishes(self):
        assert generator_residual(gaussian_plan(0.1), gaussian_model(), constant_observable()) == pytest.approx(0, abs=1e-13)

    def test_bump_sweep(self):
        vals = [generator_residual(gaussian_plan(e), gaussian_model(), gaussian_observable()) for e in SWEEP4]
        assert np.all(np.diff(vals) < 0)
        assert rate_fit(SWEEP4, vals).slope > 0

    def test_identity_closed_form(self):
        r = generator_residual(gaussian_plan(0.1), gaussian_model(), identity_observable())
        assert r == pytest.approx(_linear_residual(1.0, 0.1), rel=1e-8)
        assert r == pytest.approx(0.0125, abs=1e-4)

    @pytest.mark.parametrize("eps", [0.4, 0.1, 0.05])
    def test_identity_equals_score_residual(self, eps):
        plan, m = gaussian_plan(eps), gaussian_model()
        assert generator_residual(plan, m, identity_observable()) == pytest.approx(score_residual(plan, m), abs=1e-12)


class TestScoreResidual:
    def test_unit(self):
        assert score_residual(gaussian_plan(0.1), gaussian_model()) == pytest.approx(0.0125, abs=1e-4)

    @pytest.mark.parametrize("v", [0.5, 4.0])
    def test_linear_field(self, v):
        r = score_residual(gaussian_plan(0.1, v), gaussian_model(0.0, v))
        assert r == pytest.approx(_linear_residual(v, 0.1), rel=1e-7)

    def test_vanishes(self):
        vals = [score_residual(gaussian_plan(e), gaussian_model()) for e in SWEEP4]
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < 0.01


class TestFisherLimit:
    def test_unit(self):
        assert fisher_limit_check(gaussian_plan(0.05), gaussian_model()) == pytest.approx(0.25, rel=0.05)

    def test_variance_four(self):
        assert fisher_limit_check(gaussian_plan(0.05, 4.0), gaussian_model(0, 4)) == pytest.approx(0.0625, rel=0.05)

    def test_hot_limit(self):
        vals = [fisher_limit_check(gaussian_plan(e)) for e in (1.0, 10.0, 100.0)]
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < 1e-3


class TestRateFit:
    def test_linear(self):
        eps = np.array(DEFAULT_EPSILONS)
        rep = rate_fit(eps, eps)
        assert rep.slope == pytest.approx(1.0)
        assert rep.r_squared == pytest.approx(1.0)
        assert rep.intercept == pytest.approx(0.0, abs=1e-12)

    def test_quartic(self):
        eps = np.array(DEFAULT_EPSILONS)
        rep = rate_fit(eps, eps**4 / 1152)
        assert rep.slope == pytest.approx(4.0)
        assert rep.predict(0.1) == pytest.approx(0.1**4 / 1152)

    def test_gaussian_kl_sweep(self):
        errs = [symmetrized_kl_gaussian(ou_pair_covariance(STD, e), sb_pair_covariance(STD, e)) for e in DEFAULT_EPSILONS]
        assert abs(rate_fit(DEFAULT_EPSILONS, errs).slope - 4.0) <= 0.2

    def test_sorts_descending(self):
        rep = rate_fit([0.1, 0.4, 0.2], [0.1, 0.4, 0.2])
        np.testing.assert_array_equal(rep.epsilons, [0.4, 0.2, 0.1])
        np.testing.assert_array_equal(rep.errors, [0.4, 0.2, 0.1])

    def test_drops_non_positive(self):
        with pytest.warns(RuntimeWarning):
            rep = rate_fit([0.4, 0.2, 0.1, 0.05], [0.4, 0.0, 0.1, 0.05])
        assert rep.epsilons.size == 3
        assert rep.slope == pytest.approx(1.0)

    def test_too_few(self):
        with pytest.raises(RateFitError), pytest.warns(RuntimeWarning):
            rate_fit([0.4, 0.2, 0.1], [1.0, -1.0, 1.0])
        with pytest.raises(RateFitError):
            rate_fit([0.4, 0.2], [1.0, 1.0])
        with pytest.raises(RateFitError):
            rate_fit([0.4, 0.2, 0.1], [1.0, 1.0])

    @given(st.floats(1e-6, 1e6), st.floats(0.5, 5), st.integers(0, 2**31 - 1))
    def test_scale_invariance(self, scale, power, seed):
        eps = np.array(DEFAULT_EPSILONS)
        noise = np.exp(np.random.default_rng(seed).normal(scale=0.1, size=eps.size))
        errs = eps**power * noise
        a, b = rate_fit(eps, errs), rate_fit(eps, scale * errs)
        assert b.slope == pytest.approx(a.slope, abs=1e-9)
        assert b.intercept - a.intercept == pytest.approx(math.log(scale), abs=1e-9)
        assert b.r_squared == pytest.approx(a.r_squared, abs=1e-9)
