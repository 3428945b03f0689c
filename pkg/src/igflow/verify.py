"""Invariant suite: every structural and dynamical identity as a pass/fail report.

:func:`run_suite` evaluates the checks against one model at seeded random
domain points and returns :class:`CheckReport` objects sorted by id.  The
optics and replicator checks do not depend on the model and run with every
suite (``include_global=True``).
"""

from dataclasses import dataclass, replace
import json
import math

import numpy as np

from .core import (
    CoordVector,
    check_metric,
    fd_gradient_check,
    legendre_residual,
    metric_duality_residual,
)
from .dynamics import (
    consistency_residual,
    geodesic_flow,
    gradient_flow,
    ig_geodesic_spec,
    ig_natural_spec,
    integrability_products,
    linear_flow,
    natural_flow_t,
    reparametrize,
)
from .errors import ModelMismatch, SingularMetric, TimeMapUndefined, TooFewSamples
from .integrate import IntegratorConfig
from .models import (
    FiniteExpFamily,
    gamma_model,
    gamma_params_of_eta,
    get_model,
    refractive_index,
)
from .special import digamma, trigamma

__all__ = [
    "CheckReport",
    "run_suite",
    "time_map_check",
    "second_set_gaussian_check",
    "inject_fault",
    "FAULTS",
    "reports_to_jsonl",
    "linear_flow_starts",
    "theta_flow_starts",
]


@dataclass(frozen=True)
class CheckReport:
    check_id: str
    model: str
    residual: float
    tolerance: float
    details: str = ""

    @property
    def passed(self):
        # NaN residuals fail
        return bool(self.residual <= self.tolerance)

    def to_dict(self):
        return {
            "check_id": self.check_id,
            "model": self.model,
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "pass": self.passed,
            "details": self.details,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def reports_to_jsonl(reports):
    return "".join(r.to_json() + "\n" for r in reports)


# --------------------------------------------------------------------------
# time maps


def _gauss_mu_s2(theta=None, eta=None):
    if eta is not None:
        return eta[0], eta[1] - eta[0] ** 2
    s2 = -0.5 / theta[1]
    return theta[0] * s2, s2


def time_map_check(model_id, traj, tol=1e-7):
    """Compare t against the model's closed-form time map along a gradient flow.

    gaussian, eta chart: t - ln sigma^2 constant;
    gamma, eta chart: t + ln beta constant;
    gaussian, theta chart: t - ln |mu| constant (mu = 0 is degenerate).
    """
    name = getattr(model_id, "name", model_id)
    chart = traj.chart
    if not traj.driver.startswith("gradient"):
        raise ModelMismatch(f"time maps hold along gradient flows, got driver {traj.driver!r}")
    if name == "gaussian" and chart == "eta":
        clock = np.array([math.log(_gauss_mu_s2(eta=e)[1]) for e in traj.eta])
        sign, label = -1.0, "t - ln sigma2"
    elif name == "gamma" and chart == "eta":
        clock = np.array([math.log(gamma_params_of_eta(e)[0]) for e in traj.eta])
        sign, label = 1.0, "t + ln beta"
    elif name == "gaussian" and chart == "theta":
        mus = np.array([_gauss_mu_s2(theta=th)[0] for th in traj.theta])
        if np.any(mus == 0.0):
            raise TimeMapUndefined("mu = 0: the time map dt = d ln mu is undefined")
        clock = np.log(np.abs(mus))
        sign, label = -1.0, "t - ln mu"
    else:
        raise ModelMismatch(f"no closed-form time map for model {name!r} in the {chart} chart")
    invariant = traj.t + sign * clock
    residual = float(np.max(np.abs(invariant - invariant[0])))
    return CheckReport(f"time_map.{chart}", name, residual, tol, f"{label} constant over {len(traj)} samples")


def _deriv5(y, t):
    """Fourth-order central differences on a uniform grid (interior points)."""
    h = t[1] - t[0]
    return (y[:-4] - 8.0 * y[1:-3] + 8.0 * y[3:-1] - y[4:]) / (12.0 * h)


def second_set_gaussian_check(traj, tol=1e-6):
    """Gaussian theta-chart flow: d sigma/sigma = 1/2 (1 - mu^2/sigma^2) d mu/mu and eta = eta0 e^t."""
    if traj.chart != "theta" or not traj.driver.startswith("gradient"):
        raise ModelMismatch("second_set_gaussian_check needs a theta-chart gradient flow")
    if len(traj) < 5:
        raise TooFewSamples("need at least 5 samples")
    mus, s2 = np.array([_gauss_mu_s2(theta=th) for th in traj.theta]).T
    if np.any(mus == 0.0):
        raise TimeMapUndefined("mu = 0: d mu / mu is undefined")
    t = traj.t
    if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=1e-12):
        raise ValueError("second_set_gaussian_check needs a uniform t grid")
    dln_sigma = _deriv5(0.5 * np.log(s2), t)
    dln_mu = _deriv5(np.log(np.abs(mus)), t)
    ratio = (mus ** 2 / s2)[2:-2]
    relation = float(np.max(np.abs(dln_sigma - 0.5 * (1.0 - ratio) * dln_mu)))
    growth = traj.eta[0][None, :] * np.exp(t - t[0])[:, None]
    scale = np.maximum(1.0, np.abs(growth))
    grow_res = float(np.max(np.abs(traj.eta - growth) / scale))
    return CheckReport(
        "second_set.gaussian",
        "gaussian",
        max(relation, grow_res),
        tol,
        f"sigma/mu relation {relation:.3g}, eta growth {grow_res:.3g}",
    )


# --------------------------------------------------------------------------
# fault injection


def _scaled(fn, factor):
    return lambda x: factor * np.asarray(fn(x))


def inject_fault(model, kind):
    """Return a copy of ``model`` with one closed-form ingredient perturbed."""
    if kind == "gaussian_metric_half":
        return replace(model, metric_lower_eta=_scaled(model.metric_lower_eta, 0.5))
    if kind == "gamma_trigamma":
        bad = gamma_model(trigamma_fn=lambda x: trigamma(x) * (1.0 + 1e-3))
        return replace(model, metric_lower_eta=bad.metric_lower_eta)
    if kind == "gamma_digamma":
        bad = gamma_model(digamma_fn=lambda x: digamma(x) * (1.0 + 1e-3))
        return replace(model, eta_of_theta=bad.eta_of_theta)
    if kind == "psi_offset":
        return replace(model, psi=lambda th: model.psi(th) + 1.0)
    if kind == "upper_metric_scale":
        return replace(model, metric_upper_theta=_scaled(model.metric_upper_theta, 1.0 + 1e-3))
    raise ValueError(f"unknown fault {kind!r}; expected one of {FAULTS}")


FAULTS = ("gaussian_metric_half", "gamma_trigamma", "gamma_digamma", "psi_offset", "upper_metric_scale")


# --------------------------------------------------------------------------
# start points


def _points(model, rng, count):
    return [model.sample(rng) for _ in range(count)]


def linear_flow_starts(model, rng, count):
    """eta-chart starts; the eta-chart flows stay in the domain for all t >= 0."""
    out = []
    for x in _points(model, rng, count):
        _, eta = model.dual_pair(x)
        out.append(CoordVector("eta", eta))
    return out


def theta_flow_starts(model, rng, count, horizon=2.5, max_tries=500):
    """theta-chart starts whose growing eta0 e^t stays in the domain up to ``horizon``.

    Returns fewer than ``count`` starts (possibly none) when the sampler rarely
    produces such points, as for finite families whose expectation polytope
    does not reach far along rays from the origin.
    """
    grid = np.linspace(0.0, horizon, 51)
    out = []
    for _ in range(max_tries):
        if len(out) == count:
            break
        theta, eta = model.dual_pair(model.sample(rng))
        if all(model.in_domain(CoordVector("eta", eta * math.exp(t))) for t in grid):
            out.append(CoordVector("theta", theta))
    return out


# --------------------------------------------------------------------------
# checks


def _max(values):
    values = list(values)
    return float(max(values)) if values else 0.0


def _structural(model, pts, add):
    pairs = [model.dual_pair(x) for x in pts]
    thetas = [CoordVector("theta", th) for th, _ in pairs]
    etas = [CoordVector("eta", et) for _, et in pairs]

    add("core.legendre", _max(legendre_residual(model, th) for th in thetas), 1e-9)
    add("core.metric_duality", _max(metric_duality_residual(model, x) for x in thetas), 1e-9)

    def roundtrip(th, et):
        back = model.theta_of_eta(model.eta_of_theta(th))
        return np.max(np.abs(back - th)) / max(1.0, np.max(np.abs(th)))

    add("core.roundtrip", _max(roundtrip(th, et) for th, et in pairs), 1e-10)

    fd = []
    for x in thetas + etas:
        try:
            fd.append(fd_gradient_check(model, x, 1e-5))
        except ValueError:
            pass  # x +/- h leaves the domain
    add("core.fd_gradient", _max(fd), 1e-7, f"{len(fd)} points, h=1e-5")

    failures = 0
    for th, et in pairs:
        try:
            check_metric(model.metric_lower_eta(et))
            check_metric(model.metric_upper_theta(th))
        except SingularMetric:
            failures += 1
    add("core.metric_spd", float(failures), 0.0, "count of non-SPD metric evaluations")

    # g_ij(eta) is the Jacobian d eta / d theta
    def jacobian_gap(th, et):
        jac = np.empty((model.dim, model.dim))
        for j in range(model.dim):
            h = 1e-6 * max(1.0, abs(th[j]))
            e = np.zeros(model.dim)
            e[j] = h
            jac[:, j] = (model.eta_of_theta(th + e) - model.eta_of_theta(th - e)) / (2.0 * h)
        g = model.metric_lower_eta(et)
        return np.max(np.abs(jac - g)) / max(1.0, np.max(np.abs(g)))

    add("core.metric_jacobian", _max(jacobian_gap(th, et) for th, et in pairs), 1e-6)

    # second-order convergence of the gradient check at one interior point
    x0 = etas[0]
    try:
        e1 = fd_gradient_check(model, x0, 1e-2)
        e2 = fd_gradient_check(model, x0, 1e-3)
        order = math.log10(e1 / e2) if e1 > 0 and e2 > 0 else float("nan")
        add("core.fd_order", abs(order - 2.0), 0.3, f"observed order {order:.3f}")
    except ValueError:
        pass

    # refractive index
    if model.index_closed_form is not None:
        gaps = []
        for x in etas + thetas:
            closed = model.index_closed_form(x)
            if closed is not None:
                gaps.append(abs(refractive_index(model, x) - closed))
        add("models.index_closed_form", _max(gaps), 1e-10)

    def flow_identity(th, et):
        # n^2 = g^ij (d eta/dt)_i (d eta/dt)_j with d eta/dt = -g theta
        n2 = refractive_index(model, CoordVector("eta", et)) ** 2
        rate = -model.metric_lower_eta(et) @ th
        return abs(float(rate @ model.metric_upper_theta(th) @ rate) - n2) / max(1.0, n2)

    add("models.index_flow_identity", _max(flow_identity(th, et) for th, et in pairs), 1e-9)

    if model.name == "gaussian":
        add("models.gaussian_index_constant",
            _max(abs(refractive_index(model, x) - 1.0 / math.sqrt(2.0)) for x in etas), 1e-12)
    if model.name == "gamma":
        gaps = []
        for th, _ in pairs[:20]:
            values = [refractive_index(model, CoordVector("eta", model.eta_of_theta(np.array([-b, th[1]]))))
                      for b in (0.3, 1.0, 4.0)]
            gaps.append(max(values) - min(values))
        add("models.gamma_index_beta_free", _max(gaps), 1e-12)

    family = getattr(model, "family", None)
    if isinstance(family, FiniteExpFamily):
        def brute(th):
            p = np.exp(family.stats @ th)
            p /= p.sum()
            mean = p @ family.stats
            cov = sum(pk * np.outer(f - mean, f - mean) for pk, f in zip(p, family.stats))
            return np.max(np.abs(np.linalg.inv(model.metric_upper_theta(th)) - cov))
        add("models.finite_covariance", _max(brute(th) for th, _ in pairs), 1e-12)


def _dynamics(model, rng, cfg, add, flows):
    eta_starts = linear_flow_starts(model, rng, flows)
    theta_starts = theta_flow_starts(model, rng, flows)

    lin, rate, consist, tmaps = [], [], [], []
    eta_runs = []
    for x in eta_starts:
        traj = gradient_flow(model, x, (0.0, 2.0), cfg)
        eta_runs.append(traj)
        th0 = traj.theta[0]
        lin.append(np.max(np.abs(traj.theta - th0[None, :] * np.exp(-traj.t)[:, None])))
        psi_star = np.array([model.psi_star(e) for e in traj.eta])
        n2 = np.array([refractive_index(model, CoordVector("eta", e)) ** 2 for e in traj.eta])
        rate.append(np.max(np.abs(_deriv5(psi_star, traj.t) + n2[2:-2])))
        consist.append(consistency_residual(traj, model))
        if model.name in ("gaussian", "gamma"):
            tmaps.append(time_map_check(model, traj).residual)
    add("dynamics.linearization_eta", _max(lin), 1e-6, "||theta(t) - theta0 e^-t||, t in [0, 2]")
    add("dynamics.rate_law", _max(rate), 1e-6, "|d psi_star/dt + n^2|")
    if tmaps:
        add("dynamics.time_map_eta", _max(tmaps), 1e-7)

    lin_t, tmaps_t, second = [], [], []
    for x in theta_starts:
        traj = gradient_flow(model, x, (0.0, 2.0), cfg)
        et0 = traj.eta[0]
        lin_t.append(np.max(np.abs(traj.eta - et0[None, :] * np.exp(traj.t)[:, None])))
        consist.append(consistency_residual(traj, model))
        if model.name == "gaussian":
            tmaps_t.append(time_map_check(model, traj).residual)
            second.append(second_set_gaussian_check(traj).residual)
    if theta_starts:
        add("dynamics.linearization_theta", _max(lin_t), 1e-6, "||eta(t) - eta0 e^t||, t in [0, 2]")
    if tmaps_t:
        add("dynamics.time_map_theta", _max(tmaps_t), 1e-7, "t - ln mu constant")
    if second:
        add("dynamics.second_set", _max(second), 1e-6, "sigma/mu relation and eta growth")

    geo_spec = ig_geodesic_spec(model)
    nat_spec = ig_natural_spec(model)
    drift, path, eq_geo = [], [], []
    for x, ref in zip(eta_starts, eta_runs):
        # tau is bounded along a flow whose index vanishes at its limit point
        # (finite families reach n = 0 at theta = 0); stay inside the tau
        # covered by the t in [0, 2] gradient run
        tau_end = min(1.0, float(ref.tau[-1]))
        # dt = dtau / n^2: keep the step in t no coarser than the configured one
        n2_min = float(np.min(np.diff(ref.tau) / np.diff(ref.t)))
        geo_cfg = replace(cfg, step=cfg.step * min(1.0, n2_min))
        geo = geodesic_flow(geo_spec, x, (0.0, tau_end), geo_cfg)
        h = np.array([math.sqrt(float(p @ geo_spec.cometric(q) @ p)) for q, p in zip(geo.eta, -geo.theta)])
        drift.append(np.max(np.abs(h - 1.0)))
        consist.append(consistency_residual(geo, model))
        nat = natural_flow_t(nat_spec, x, (0.0, float(geo.t[-1])), cfg)
        consist.append(consistency_residual(nat, model))
        # the natural flow resampled on the tau grid of the geodesic run
        grid = np.clip(geo.tau, nat.tau[0], nat.tau[-1])
        again = reparametrize(nat, "t", "tau", grid=grid)
        path.append(np.max(np.abs(again.eta - geo.eta)))
        eq_geo.append(np.max(np.abs(again.t - geo.t)))
    add("dynamics.geodesic_conservation", _max(drift), 1e-8, "|H~ - 1| over tau in [0, min(1, tau(t=2))]")
    add("dynamics.path_equivalence", _max(path), 1e-6, "geodesic (tau) vs natural (t) states")
    add("dynamics.time_parameters", _max(eq_geo), 1e-6, "t recovered along the geodesic run")
    add("dynamics.consistency", _max(consist), 1e-8, "||eta_of_theta(theta) - eta|| along flows")

    prods = []
    for x in eta_starts:
        th, et = model.dual_pair(x)
        a = linear_flow(CoordVector("theta", th), (0.0, 5.0), cfg)
        b = linear_flow(CoordVector("eta", et), (0.0, 5.0), cfg)
        c = integrability_products(a, b)
        prods.append(np.max(np.abs(c - c[0])))
    add("dynamics.integrability", _max(prods), 1e-9, "theta^i eta_i constant on t in [0, 5]")


def _optics(cfg, add):
    from .optics import (
        anisotropic_field,
        eikonal_residual,
        homogeneous_field,
        huygens_residual,
        jm_hamiltonian_values,
        linear_field,
        normalize_momentum,
        ray_conservation_check,
        ray_trace,
    )

    hom = homogeneous_field(2.0)
    st = normalize_momentum(hom, [0.5, -1.0], [1.0, 2.0])
    ray = ray_trace(hom, st, "s", (0.0, 2.0), cfg)
    q = ray.columns["q"]
    d = np.array([1.0, 2.0]) / math.sqrt(5.0)
    add("optics.straight_ray", float(np.max(np.abs(q - q[0] - np.outer(ray.s - ray.s[0], d)))), 1e-10)

    lin = linear_field(1.0, (0.1, 0.0))
    st = normalize_momentum(lin, [0.0, 0.0], [0.3, 1.0])
    ray = ray_trace(lin, st, "s", (0.0, 1.0), cfg)
    add("optics.eikonal", eikonal_residual(ray, lin), 1e-4)
    add("optics.energy", max(ray_conservation_check(ray, lin)), 1e-8)
    add("optics.jm_hamiltonian", float(np.max(np.abs(jm_hamiltonian_values(ray, lin) - 1.0))), 1e-8)
    gaps = []
    for param, end in (("tau", ray.tau[-1]), ("t", ray.t[-1])):
        other = ray_trace(lin, st, param, (0.0, float(end)), cfg)
        again = reparametrize(other, param, "s", lin, grid=np.clip(ray.s, 0.0, None))
        gaps.append(np.max(np.abs(again.columns["q"] - ray.columns["q"])))
    add("optics.parametrizations", _max(gaps), 1e-6, "s, tau and t rays after reparametrization")

    aniso = anisotropic_field([[2.0, 0.3], [0.3, 1.0]], 1.0, (0.1, 0.05))
    st = normalize_momentum(aniso, [0.0, 0.0], [1.0, 0.2])
    ray = ray_trace(aniso, st, "t", (0.0, 1.0), cfg)
    add("optics.huygens_anisotropic", huygens_residual(ray, aniso), 1e-4)


def _replicator(rng, cfg, add):
    from .replicator import equivalence_residual, simulate_replicator

    families = {
        2: FiniteExpFamily([[0.0], [1.0]]),
        3: FiniteExpFamily([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        5: FiniteExpFamily([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]]),
    }
    eq = []
    for fam in families.values():
        for _ in range(100):
            eq.append(equivalence_residual(fam, rng.uniform(-2.0, 2.0, fam.dim)))
    add("replicator.equivalence", _max(eq), 1e-12, "K in {2, 3, 5}, 100 draws each")

    gap, simplex = [], []
    for k in (2, 3):
        fam = families[k]
        run = simulate_replicator(fam, rng.uniform(-2.0, 2.0, fam.dim), (0.0, 5.0), cfg)
        gap.append(run.max_gap())
        simplex.append(max(float(np.max(run.renorm)), float(-np.min(run.p_direct))))
    add("replicator.two_route", _max(gap), 1e-7, "t in [0, 5]")
    add("replicator.simplex", _max(simplex), 1e-9, "per-step renormalization and negativity")


def run_suite(model_id, seed=1, cfg=None, model=None, points=100, flows=2, include_global=True):
    """Run every check for ``model_id``; ``model`` overrides the registry (fault injection)."""
    cfg = cfg or IntegratorConfig()
    if model is None:
        model = get_model(model_id)
    label = model_id if isinstance(model_id, str) else model.name
    rng = np.random.default_rng(seed)
    reports = []

    def add(check_id, residual, tol, details=""):
        reports.append(CheckReport(check_id, label, float(residual), float(tol), details))

    def guarded(name, fn, *args):
        try:
            fn(*args)
        except Exception as exc:  # a faulty model may break a check outright
            add(name, float("inf"), 0.0, f"{type(exc).__name__}: {exc}")

    pts = _points(model, rng, points)
    guarded("core.exception", _structural, model, pts, add)
    guarded("dynamics.exception", _dynamics, model, np.random.default_rng([seed, 1]), cfg, add, flows)
    if include_global:
        guarded("optics.exception", _optics, cfg, add)
        guarded("replicator.exception", _replicator, np.random.default_rng([seed, 2]), cfg, add)
    return sorted(reports, key=lambda r: r.check_id)
