"""Dually flat structure: dual charts, potentials, metrics and their residual checks.

A model is described by plain callables on numpy vectors.  ``theta`` is the
natural (exponential) chart, ``eta`` the expectation chart, and the two are
tied together by the Legendre pair of potentials ``psi(theta)`` and
``psi_star(eta)``::

    eta = grad psi(theta),   theta = grad psi_star(eta)
    psi(theta) + psi_star(eta) = theta . eta

``metric_lower_eta(eta)`` is g_ij = d eta_i / d theta^j and
``metric_upper_theta(theta)`` is g^ij = d theta^i / d eta_j; they are
matrix inverses of each other at dual points.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, NonFinite, SingularMetric

__all__ = [
    "CHARTS",
    "CoordVector",
    "ModelDescriptor",
    "check_metric",
    "coord_map",
    "metric_at",
    "legendre_residual",
    "metric_duality_residual",
    "fd_gradient_check",
    "dual_chart",
]

CHARTS = ("theta", "eta")


def dual_chart(chart):
    if chart == "theta":
        return "eta"
    if chart == "eta":
        return "theta"
    raise ValueError(f"unknown chart {chart!r}")


@dataclass(frozen=True)
class CoordVector:
    """An m-vector tagged with the chart it lives in."""

    chart: str
    values: np.ndarray

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ValueError(f"chart must be one of {CHARTS}, got {self.chart!r}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise NonFinite(f"non-finite {self.chart} coordinates: {values}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def theta(cls, *values):
        return cls("theta", np.ravel(values))

    @classmethod
    def eta(cls, *values):
        return cls("eta", np.ravel(values))

    @property
    def dim(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class ModelDescriptor:
    """A dually flat statistical manifold given by closed-form callables.

    The required callables act on 1-D float arrays.  ``in_domain`` takes a
    :class:`CoordVector` so that a single predicate serves both charts.

    Optional extras:

    ``metric_lower_eta_grad(eta)``
        array ``D[i, j, k] = d g_jk / d eta_i``.
    ``metric_upper_theta_grad(theta)``
        array ``D[i, j, k] = d g^jk / d theta^i``.
    ``index_closed_form(x)``
        a hand-derived refractive index, used as an independent cross-check.
    ``to_params`` / ``from_params``
        conversion to the model's conventional parameters (``mu``, ``sigma2``...).
    ``sample(rng)``
        a random interior point (``CoordVector``) for property checks.
    """

    name: str
    dim: int
    psi: Callable
    psi_star: Callable
    eta_of_theta: Callable
    theta_of_eta: Callable
    metric_lower_eta: Callable
    metric_upper_theta: Callable
    in_domain: Callable
    domain_predicate: dict = field(default_factory=dict)
    metric_lower_eta_grad: Optional[Callable] = None
    metric_upper_theta_grad: Optional[Callable] = None
    index_closed_form: Optional[Callable] = None
    param_names: tuple = ()
    to_params: Optional[Callable] = None
    from_params: Optional[Callable] = None
    sample: Optional[Callable] = None

    def require(self, x):
        """Raise :class:`DomainError` unless ``x`` is a valid domain point."""
        if not isinstance(x, CoordVector):
            raise TypeError(f"expected CoordVector, got {type(x).__name__}")
        if x.dim != self.dim:
            raise DomainError(f"{self.name}: expected {self.dim} coordinates, got {x.dim}")
        if not self.in_domain(x):
            pred = self.domain_predicate.get(x.chart, "domain predicate")
            raise DomainError(f"{self.name}: {x.chart}={x.values.tolist()} violates {pred}")
        return x

    def dual_pair(self, x):
        """Return ``(theta, eta)`` arrays for a domain point given in either chart."""
        self.require(x)
        if x.chart == "theta":
            return np.array(x.values), _finite(self.eta_of_theta(x.values), "eta_of_theta")
        return _finite(self.theta_of_eta(x.values), "theta_of_eta"), np.array(x.values)


def _finite(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"{what} produced non-finite values {values}")
    return values


def check_metric(matrix, tol=1e-12):
    """Validate symmetry and positive-definiteness; return the matrix as an array."""
    g = np.array(matrix, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise SingularMetric(f"metric must be square, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise SingularMetric("metric has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(g))))
    if np.max(np.abs(g - g.T)) > tol * scale:
        raise SingularMetric("metric is not symmetric")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise SingularMetric("metric is not positive definite") from None
    return g


def coord_map(model, x):
    """Map a point to the dual chart, flipping the chart tag."""
    model.require(x)
    if x.chart == "eta":
        out = _finite(model.theta_of_eta(x.values), "theta_of_eta")
        return CoordVector("theta", out)
    out = _finite(model.eta_of_theta(x.values), "eta_of_theta")
    return CoordVector("eta", out)


def metric_at(model, x):
    """g_ij(eta) for an eta point, g^ij(theta) for a theta point."""
    model.require(x)
    if x.chart == "eta":
        return check_metric(model.metric_lower_eta(x.values))
    return check_metric(model.metric_upper_theta(x.values))


def legendre_residual(model, theta):
    """|psi(theta) + psi_star(eta(theta)) - theta . eta(theta)|."""
    if theta.chart != "theta":
        raise ValueError("legendre_residual takes a theta-chart point")
    th, et = model.dual_pair(theta)
    return abs(model.psi(th) + model.psi_star(et) - float(th @ et))


def metric_duality_residual(model, x):
    """max |g^ij(theta) g_jk(eta) - delta^i_k| at the dual pair through ``x``."""
    th, et = model.dual_pair(x)
    upper = check_metric(model.metric_upper_theta(th))
    lower = check_metric(model.metric_lower_eta(et))
    return float(np.max(np.abs(upper @ lower - np.eye(model.dim))))


def fd_gradient_check(model, x, h=1e-5):
    """Compare central differences of the chart potential against the dual map.

    For an eta point this checks d psi_star / d eta_i = theta^i, for a theta
    point d psi / d theta^i = eta_i.  Each component error is measured as
    ``|fd - exact| / max(1, |exact|)`` so large coordinates near the domain
    edge do not dominate; the max over components is returned.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    model.require(x)
    if x.chart == "eta":
        potential, analytic = model.psi_star, model.theta_of_eta(x.values)
    else:
        potential, analytic = model.psi, model.eta_of_theta(x.values)
    errors = []
    for i in range(model.dim):
        step = np.zeros(model.dim)
        step[i] = h
        plus = CoordVector(x.chart, x.values + step)
        minus = CoordVector(x.chart, x.values - step)
        if not (model.in_domain(plus) and model.in_domain(minus)):
            raise DomainError(f"{model.name}: x +/- h leaves the domain along axis {i}")
        fd = (potential(plus.values) - potential(minus.values)) / (2.0 * h)
        errors.append(abs(fd - analytic[i]) / max(1.0, abs(analytic[i])))
    return float(max(errors))
