"""Replicator dynamics on a finite alphabet and its link to the decay theta' = -theta.

For an exponential family ``p(x) = exp(theta . F(x) - psi(theta))`` the
replicator equation

    dp(x)/dt = -p(x) (ln p(x) - E_p[ln p])

is the image of ``d theta / dt = -theta`` under ``theta -> p_theta``.
:func:`simulate_replicator` follows both routes side by side.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .dynamics import Trajectory
from .errors import StepLimit
from .integrate import IntegratorConfig, integrate
from .models import FiniteExpFamily

__all__ = [
    "ProbabilityVector",
    "replicator_rhs",
    "replicator_rhs_p",
    "chain_rule_rate",
    "equivalence_residual",
    "ReplicatorRun",
    "simulate_replicator",
]


@dataclass(frozen=True)
class ProbabilityVector:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


def _family(family):
    return family if isinstance(family, FiniteExpFamily) else FiniteExpFamily(family)


def replicator_rhs_p(p):
    """Right-hand side -p (ln p - E_p[ln p]) written in terms of p alone."""
    p = np.asarray(p, dtype=float)
    logp = np.log(np.maximum(p, np.finfo(float).tiny))
    return -p * (logp - p @ logp)


def replicator_rhs(family, theta):
    """Replicator right-hand side at p_theta, using exact log-probabilities."""
    fam = _family(family)
    logp = fam.log_probs(theta)
    p = np.exp(logp)
    return -p * (logp - p @ logp)


def chain_rule_rate(family, theta, theta_dot):
    """dp(x)/dt = p(x) (F(x) - eta) . theta_dot."""
    fam = _family(family)
    p = fam.probs(theta)
    centred = fam.stats - p @ fam.stats
    return p * (centred @ np.asarray(theta_dot, dtype=float))


def equivalence_residual(family, theta, rate=1.0):
    """max_x |chain-rule dp/dt with theta_dot = -rate theta  -  replicator rhs|.

    Zero (to rounding) for ``rate = 1``; any other rate leaves a residual
    proportional to ``|rate - 1|``.
    """
    theta = np.asarray(theta, dtype=float)
    a = chain_rule_rate(family, theta, -rate * theta)
    b = replicator_rhs(family, theta)
    return float(np.max(np.abs(a - b)))


@dataclass
class ReplicatorRun:
    """Both routes on a shared time grid.

    ``p_closed`` is ``p_theta`` at ``theta0 e^-t``; ``p_direct`` comes from
    integrating the replicator equation on the simplex.  ``renorm[i]`` is
    ``|sum(p) - 1|`` removed by the renormalization after step ``i``.
    """

    t: np.ndarray
    theta: np.ndarray
    p_closed: np.ndarray
    p_direct: np.ndarray
    renorm: np.ndarray
    family: FiniteExpFamily = field(repr=False, default=None)

    def max_gap(self):
        return float(np.max(np.abs(self.p_direct - self.p_closed)))

    def trajectory(self):
        """Trajectory with p_direct as extra columns and s, tau by quadrature."""
        fam = self.family
        eta = np.array([fam.eta(th) for th in self.theta])
        n2 = np.array([float(th @ fam.covariance(th) @ th) for th in self.theta])
        s = cumulative_trapezoid(np.sqrt(n2), self.t, initial=0.0) if len(self.t) > 1 else np.zeros(1)
        tau = cumulative_trapezoid(n2, self.t, initial=0.0) if len(self.t) > 1 else np.zeros(1)
        return Trajectory(
            t=self.t, s=s, tau=tau, theta=self.theta, eta=eta,
            driver="replicator", chart="eta", columns={"p": self.p_direct},
        )


def _rk4_simplex(p0, t0, t1, cfg):
    length = t1 - t0
    n = max(1, math.ceil(abs(length) / cfg.step - 1e-9)) if length != 0.0 else 0
    if n > cfg.max_steps:
        raise StepLimit(f"{n} steps needed, max_steps={cfg.max_steps}")
    h = length / n if n else 0.0
    ts = [t0]
    ps = [p0.copy()]
    renorm = [0.0]
    p = p0.copy()
    f = replicator_rhs_p
    for i in range(1, n + 1):
        k1 = f(p)
        k2 = f(p + 0.5 * h * k1)
        k3 = f(p + 0.5 * h * k2)
        k4 = f(p + h * k3)
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        total = p.sum()
        renorm.append(abs(total - 1.0))
        p = p / total
        ts.append(t1 if i == n else t0 + i * h)
        ps.append(p.copy())
    return np.array(ts), np.array(ps), np.array(renorm)


def simulate_replicator(family, theta0, t_span, cfg=None):
    """Run the closed-form theta decay and the direct replicator integration.

    With the default fixed-step RK4 the direct route renormalizes onto the
    simplex after each step; with ``rkf45_adaptive`` the generic adaptive
    integrator is used and samples are renormalized afterwards.
    """
    fam = _family(family)
    cfg = cfg or IntegratorConfig()
    theta0 = np.asarray(theta0, dtype=float)
    if not np.all(np.isfinite(theta0)):
        raise ValueError("theta0 must be finite")
    t0, t1 = float(t_span[0]), float(t_span[1])
    p0 = fam.probs(theta0)
    if cfg.method == "rk4_fixed":
        ts, ps, renorm = _rk4_simplex(p0, t0, t1, cfg)
    else:
        ts, ps, _ = integrate(lambda _, p: replicator_rhs_p(p), p0, (t0, t1), cfg)
        sums = ps.sum(axis=1)
        renorm = np.abs(sums - 1.0)
        ps = ps / sums[:, None]
    theta = theta0[None, :] * np.exp(-(ts - t0))[:, None]
    p_closed = np.array([fam.probs(th) for th in theta])
    return ReplicatorRun(t=ts, theta=theta, p_closed=p_closed, p_direct=ps, renorm=renorm, family=fam)
