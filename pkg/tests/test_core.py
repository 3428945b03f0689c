import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igflow import (
    CoordVector,
    DomainError,
    NonFinite,
    SingularMetric,
    check_metric,
    coord_map,
    fd_gradient_check,
    legendre_residual,
    metric_at,
    metric_duality_residual,
)
from igflow.core import dual_chart


def test_coord_vector_validation():
    x = CoordVector.eta(0.0, 1.0)
    assert x.chart == "eta" and x.dim == 2
    with pytest.raises(ValueError):
        x.values[0] = 3.0  # read-only
    with pytest.raises(NonFinite):
        CoordVector("theta", [1.0, float("nan")])
    with pytest.raises(ValueError):
        CoordVector("phi", [1.0])
    assert dual_chart("eta") == "theta"


def test_coord_map_examples(gaussian, gamma):
    # theta^1 = mu / sigma2, theta^2 = -1 / (2 sigma2) at mu = 0, sigma2 = 1
    out = coord_map(gaussian, CoordVector.eta(0.0, 1.0))
    assert out.chart == "theta"
    np.testing.assert_allclose(out.values, [0.0, -0.5], atol=1e-15)
    back = coord_map(gaussian, CoordVector.theta(0.0, -0.5))
    np.testing.assert_allclose(back.values, [0.0, 1.0], atol=1e-15)
    # gamma (beta, nu) = (1, 1): eta = (1, digamma(1)) -> theta = (-beta, nu - 1)
    euler = 0.5772156649015329
    out = coord_map(gamma, CoordVector.eta(1.0, -euler))
    np.testing.assert_allclose(out.values, [-1.0, 0.0], atol=1e-12)


def test_coord_map_domain_and_dimension(gaussian):
    with pytest.raises(DomainError, match="eta2 - eta1"):
        coord_map(gaussian, CoordVector.eta(1.0, 0.5))
    with pytest.raises(DomainError, match="expected 2"):
        coord_map(gaussian, CoordVector.eta(1.0, 2.0, 3.0))


def test_metric_examples(gaussian, gamma):
    # 2 sigma2 [[1/2, mu], [mu, 2 mu^2 + sigma2]] times sigma2 at mu = 0, sigma2 = 1
    np.testing.assert_allclose(metric_at(gaussian, CoordVector.eta(0.0, 1.0)), [[1, 0], [0, 2]], atol=1e-15)
    # gamma lower metric at beta = nu = 1 is [[nu/beta^2, 1/beta], [1/beta, trigamma(nu)]]
    g = metric_at(gamma, CoordVector.eta(1.0, -0.5772156649015329))
    np.testing.assert_allclose(g, [[1, 1], [1, math.pi ** 2 / 6]], atol=1e-12)
    # theta chart of the gaussian at mu = 0, sigma2 = 1
    np.testing.assert_allclose(metric_at(gaussian, CoordVector.theta(0.0, -0.5)), [[1, 0], [0, 0.5]], atol=1e-15)


def test_check_metric_rejections():
    with pytest.raises(SingularMetric):
        check_metric([[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(SingularMetric):
        check_metric([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(SingularMetric):
        check_metric([[1.0, 0.0, 0.0]])


def test_legendre_examples(gaussian, gamma, rng):
    for _ in range(20):
        th, _ = gaussian.dual_pair(gaussian.sample(rng))
        assert legendre_residual(gaussian, CoordVector("theta", th)) < 1e-10
    x = gamma.from_params({"beta": 2.0, "nu": 3.0})
    assert legendre_residual(gamma, x) < 1e-10
    shifted = replace(gaussian, psi=lambda th: gaussian.psi(th) + 1.0)
    assert abs(legendre_residual(shifted, CoordVector.theta(0.3, -0.7)) - 1.0) < 1e-12


def test_legendre_needs_theta(gaussian):
    with pytest.raises(ValueError):
        legendre_residual(gaussian, CoordVector.eta(0.0, 1.0))


def test_metric_duality_examples(gaussian, gamma):
    assert metric_duality_residual(gaussian, gaussian.from_params({"mu": 1.0, "sigma2": 2.0})) < 1e-10
    assert metric_duality_residual(gamma, gamma.from_params({"beta": 0.5, "nu": 4.0})) < 1e-10


def test_fd_gradient_examples(gaussian, gamma):
    assert fd_gradient_check(gaussian, gaussian.from_params({"mu": 0.0, "sigma2": 1.0}), 1e-5) < 1e-7
    x = gamma.from_params({"beta": 1.0, "nu": 2.0})
    assert fd_gradient_check(gamma, x, 1e-5) < 1e-7
    _, eta = gamma.dual_pair(x)
    assert fd_gradient_check(gamma, CoordVector("eta", eta), 1e-5) < 1e-7


def test_fd_gradient_second_order(gaussian):
    x = gaussian.from_params({"mu": 0.7, "sigma2": 1.3})
    coarse = fd_gradient_check(gaussian, x, 1e-2)
    fine = fd_gradient_check(gaussian, x, 1e-4)
    assert 0.5e4 < coarse / fine < 2e4


def test_fd_gradient_rejects_bad_step(gaussian):
    with pytest.raises(ValueError):
        fd_gradient_check(gaussian, CoordVector.eta(0.0, 1.0), 0.0)
    with pytest.raises(DomainError):
        fd_gradient_check(gaussian, CoordVector.eta(0.0, 1e-6), 1e-5)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_gaussian_roundtrip_property(mu, s2):
    from igflow import gaussian_model

    model = gaussian_model()
    x = model.from_params({"mu": mu, "sigma2": s2})
    th, et = model.dual_pair(x)
    back = model.theta_of_eta(model.eta_of_theta(th))
    assert np.max(np.abs(back - th)) < 1e-10 * max(1.0, np.max(np.abs(th)))
    assert metric_duality_residual(model, x) < 1e-9
