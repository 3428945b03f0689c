"""Concrete dually flat models: Gaussian, Gamma and finite exponential families."""

import json
import math

import numpy as np

from .core import CoordVector, ModelDescriptor, check_metric
from .errors import DomainError, IdentifiabilityError, UnknownModel
from .special import digamma, tetragamma, trigamma

__all__ = [
    "gaussian_model",
    "gamma_model",
    "gamma_params_of_eta",
    "FiniteExpFamily",
    "finite_exp_family",
    "load_finite_family",
    "refractive_index",
    "get_model",
    "BUILTIN_MODELS",
]

_LOG_2PI_E = math.log(2.0 * math.pi * math.e)


# --------------------------------------------------------------------------
# Gaussian N(mu, sigma^2)


def _gauss_mu_s2_from_eta(eta):
    return eta[0], eta[1] - eta[0] ** 2


def _gauss_mu_s2_from_theta(theta):
    s2 = -0.5 / theta[1]
    return theta[0] * s2, s2


def gaussian_model():
    """Univariate normal model with theta = (mu/s2, -1/(2 s2)), eta = (mu, mu^2 + s2)."""

    def eta_of_theta(theta):
        mu, s2 = _gauss_mu_s2_from_theta(theta)
        return np.array([mu, mu * mu + s2])

    def theta_of_eta(eta):
        mu, s2 = _gauss_mu_s2_from_eta(eta)
        return np.array([mu / s2, -0.5 / s2])

    def psi_star(eta):
        _, s2 = _gauss_mu_s2_from_eta(eta)
        return -0.5 * _LOG_2PI_E - 0.5 * math.log(s2)

    def psi(theta):
        # Legendre dual of psi_star
        eta = eta_of_theta(theta)
        return float(np.dot(theta, eta)) - psi_star(eta)

    def metric_lower_eta(eta):
        mu, s2 = _gauss_mu_s2_from_eta(eta)
        return 2.0 * s2 * np.array([[0.5, mu], [mu, 2.0 * mu * mu + s2]])

    def metric_upper_theta(theta):
        t1, t2 = theta
        return 2.0 * np.array([[t1 * t1 - t2, t1 * t2], [t1 * t2, t2 * t2]])

    def metric_lower_eta_grad(eta):
        mu, s2 = _gauss_mu_s2_from_eta(eta)
        d1 = np.array([[-2.0 * mu, 2.0 * s2 - 4.0 * mu * mu],
                       [2.0 * s2 - 4.0 * mu * mu, -8.0 * mu ** 3]])
        d2 = np.array([[1.0, 2.0 * mu], [2.0 * mu, 4.0 * mu * mu + 4.0 * s2]])
        return np.stack([d1, d2])

    def metric_upper_theta_grad(theta):
        t1, t2 = theta
        d1 = 2.0 * np.array([[2.0 * t1, t2], [t2, 0.0]])
        d2 = 2.0 * np.array([[-1.0, t1], [t1, 2.0 * t2]])
        return np.stack([d1, d2])

    def in_domain(x):
        v = x.values
        if x.chart == "eta":
            return bool(v[1] - v[0] ** 2 > 0.0)
        return bool(v[1] < 0.0)

    def index_closed_form(x):
        if x.chart == "eta":
            return 1.0 / math.sqrt(2.0)
        mu, s2 = _gauss_mu_s2_from_theta(x.values)
        return math.sqrt(0.5 * (1.0 + mu ** 4 / s2 ** 2))

    def to_params(x):
        mu, s2 = (_gauss_mu_s2_from_eta if x.chart == "eta" else _gauss_mu_s2_from_theta)(x.values)
        return {"mu": float(mu), "sigma2": float(s2)}

    def from_params(params):
        mu, s2 = float(params["mu"]), float(params["sigma2"])
        if not s2 > 0.0:
            raise DomainError(f"gaussian: sigma2={s2!r} violates sigma2 > 0")
        return CoordVector("eta", [mu, mu * mu + s2])

    def sample(rng):
        mu = rng.uniform(-3.0, 3.0)
        s2 = rng.uniform(0.1, 10.0)
        return CoordVector("eta", [mu, mu * mu + s2])

    return ModelDescriptor(
        name="gaussian",
        dim=2,
        psi=psi,
        psi_star=psi_star,
        eta_of_theta=eta_of_theta,
        theta_of_eta=theta_of_eta,
        metric_lower_eta=metric_lower_eta,
        metric_upper_theta=metric_upper_theta,
        in_domain=in_domain,
        domain_predicate={"eta": "eta2 - eta1^2 > 0 (sigma2 > 0)", "theta": "theta2 < 0 (sigma2 > 0)"},
        metric_lower_eta_grad=metric_lower_eta_grad,
        metric_upper_theta_grad=metric_upper_theta_grad,
        index_closed_form=index_closed_form,
        param_names=("mu", "sigma2"),
        to_params=to_params,
        from_params=from_params,
        sample=sample,
    )


# --------------------------------------------------------------------------
# Gamma(beta, nu): density x^(nu-1) beta^nu exp(-beta x) / Gamma(nu)


def gamma_params_of_eta(eta, tol=1e-12, max_iter=200, digamma_fn=digamma):
    """Invert eta = (nu/beta, digamma(nu) - ln beta) for (beta, nu).

    Eliminating beta leaves digamma(nu) - ln(nu) = eta2 - ln(eta1), whose left
    side increases monotonically from -inf to 0.  Newton runs in u = ln(nu)
    inside a bisection bracket.
    """
    e1, e2 = float(eta[0]), float(eta[1])
    if not e1 > 0.0:
        raise DomainError(f"gamma: eta1={e1!r} violates eta1 > 0")
    c = e2 - math.log(e1)
    if not c < 0.0:
        raise DomainError(f"gamma: eta2 - ln(eta1) = {c!r} violates < 0")

    def f(u):
        nu = math.exp(u)
        return digamma_fn(nu) - u - c

    # closed-form starting guess (accurate to a few percent over the whole range)
    sc = -c
    u = math.log((3.0 - sc + math.sqrt((sc - 3.0) ** 2 + 24.0 * sc)) / (12.0 * sc))
    lo, hi = -math.inf, math.inf
    for _ in range(max_iter):
        nu = math.exp(u)
        fu = f(u)
        if fu == 0.0:
            break
        if fu > 0.0:
            hi = min(hi, u)
        else:
            lo = max(lo, u)
        slope = nu * trigamma(nu) - 1.0
        new = u - fu / slope if slope > 0.0 else math.nan
        if not (lo < new < hi):
            if math.isinf(lo) or math.isinf(hi):
                new = u + (1.0 if fu < 0.0 else -1.0)
            else:
                new = 0.5 * (lo + hi)
        done = abs(new - u) <= tol * 1e-2 * max(1.0, abs(u))
        u = new
        if done or hi - lo < 1e-15 * max(1.0, abs(u)):
            break
    else:
        raise DomainError(f"gamma: eta inversion did not converge for eta={eta}")
    nu = math.exp(u)
    return nu / e1, nu


def gamma_model(digamma_fn=digamma, trigamma_fn=trigamma):
    """Gamma model with theta = (-beta, nu - 1) and eta = (nu/beta, digamma(nu) - ln beta).

    The special functions are injectable so tests can plant a faulty trigamma.
    """

    def params_of_theta(theta):
        return -theta[0], theta[1] + 1.0

    last = [None]

    def params_of_eta(eta):
        # flows evaluate the metric, its gradient and theta at the same eta
        key = (float(eta[0]), float(eta[1]))
        hit = last[0]
        if hit is not None and hit[0] == key:
            return hit[1]
        value = gamma_params_of_eta(key, digamma_fn=digamma_fn)
        last[0] = (key, value)
        return value

    def eta_of_theta(theta):
        beta, nu = params_of_theta(theta)
        return np.array([nu / beta, digamma_fn(nu) - math.log(beta)])

    def theta_of_eta(eta):
        beta, nu = params_of_eta(eta)
        return np.array([-beta, nu - 1.0])

    def psi(theta):
        beta, nu = params_of_theta(theta)
        return math.lgamma(nu) - nu * math.log(beta)

    def psi_star(eta):
        beta, nu = params_of_eta(eta)
        return (nu - 1.0) * digamma_fn(nu) - nu + math.log(beta) - math.lgamma(nu)

    def lower(beta, nu):
        return np.array([[nu / beta ** 2, 1.0 / beta], [1.0 / beta, trigamma_fn(nu)]])

    def upper(beta, nu):
        tg = trigamma_fn(nu)
        return np.array([[beta * beta * tg, -beta], [-beta, nu]]) / (nu * tg - 1.0)

    def metric_lower_eta(eta):
        return lower(*params_of_eta(eta))

    def metric_upper_theta(theta):
        return upper(*params_of_theta(theta))

    def metric_lower_eta_grad(eta):
        beta, nu = params_of_eta(eta)
        tg = trigamma_fn(nu)
        # rows: eta_a, columns: (beta, nu)
        jac = np.array([[-nu / beta ** 2, 1.0 / beta], [-1.0 / beta, tg]])
        dx_deta = np.linalg.inv(jac)  # dx_b / d eta_a = dx_deta[b, a]
        d_beta = np.array([[-2.0 * nu / beta ** 3, -1.0 / beta ** 2], [-1.0 / beta ** 2, 0.0]])
        d_nu = np.array([[1.0 / beta ** 2, 0.0], [0.0, tetragamma(nu)]])
        return np.stack([d_beta * dx_deta[0, a] + d_nu * dx_deta[1, a] for a in range(2)])

    def metric_upper_theta_grad(theta):
        beta, nu = params_of_theta(theta)
        tg, tg2 = trigamma_fn(nu), tetragamma(nu)
        det = nu * tg - 1.0
        m = upper(beta, nu)
        d_beta = np.array([[2.0 * beta * tg, -1.0], [-1.0, 0.0]]) / det
        d_nu = np.array([[beta * beta * tg2, 0.0], [0.0, 1.0]]) / det - m * (tg + nu * tg2) / det
        # theta1 = -beta, theta2 = nu - 1
        return np.stack([-d_beta, d_nu])

    def in_domain(x):
        v = x.values
        if x.chart == "theta":
            return bool(v[0] < 0.0 and v[1] > -1.0)
        return bool(v[0] > 0.0 and v[1] < math.log(v[0]))

    def index_closed_form(x):
        if x.chart != "eta":
            return None
        _, nu = params_of_eta(x.values)
        return math.sqrt(2.0 - nu + trigamma_fn(nu) * (nu - 1.0) ** 2)

    def to_params(x):
        beta, nu = (params_of_theta if x.chart == "theta" else params_of_eta)(x.values)
        return {"beta": float(beta), "nu": float(nu)}

    def from_params(params):
        beta, nu = float(params["beta"]), float(params["nu"])
        if not beta > 0.0:
            raise DomainError(f"gamma: beta={beta!r} violates beta > 0")
        if not nu > 0.0:
            raise DomainError(f"gamma: nu={nu!r} violates nu > 0")
        return CoordVector("theta", [-beta, nu - 1.0])

    def sample(rng):
        beta = rng.uniform(0.2, 5.0)
        nu = rng.uniform(0.5, 8.0)
        return CoordVector("theta", [-beta, nu - 1.0])

    return ModelDescriptor(
        name="gamma",
        dim=2,
        psi=psi,
        psi_star=psi_star,
        eta_of_theta=eta_of_theta,
        theta_of_eta=theta_of_eta,
        metric_lower_eta=metric_lower_eta,
        metric_upper_theta=metric_upper_theta,
        in_domain=in_domain,
        domain_predicate={
            "theta": "theta1 < 0, theta2 > -1 (beta > 0, nu > 0)",
            "eta": "eta1 > 0, eta2 < ln(eta1) (beta > 0, nu > 0)",
        },
        metric_lower_eta_grad=metric_lower_eta_grad,
        metric_upper_theta_grad=metric_upper_theta_grad,
        index_closed_form=index_closed_form,
        param_names=("beta", "nu"),
        to_params=to_params,
        from_params=from_params,
        sample=sample,
    )


# --------------------------------------------------------------------------
# Finite exponential families p(x) = exp(theta . F(x) - psi(theta)), x = 1..K


class FiniteExpFamily:
    """Exponential family on a finite alphabet with sufficient statistics ``stats[K, m]``.

    All expectations are exact finite sums.
    """

    def __init__(self, stats):
        stats = np.array(stats, dtype=float)
        if stats.ndim == 1:
            stats = stats[:, None]
        if stats.ndim != 2:
            raise IdentifiabilityError("stats must be a K x m array")
        k, m = stats.shape
        if k < 2 or m < 1:
            raise IdentifiabilityError(f"need K >= 2 outcomes and m >= 1 statistics, got {stats.shape}")
        if not np.all(np.isfinite(stats)):
            raise IdentifiabilityError("stats must be finite")
        if len(np.unique(stats, axis=0)) < k:
            raise IdentifiabilityError("duplicate outcomes: two rows of stats are identical")
        design = np.hstack([np.ones((k, 1)), stats])
        if np.linalg.matrix_rank(design) < m + 1:
            raise IdentifiabilityError("stats columns and the constant are linearly dependent")
        stats.setflags(write=False)
        self.stats = stats

    @property
    def alphabet_size(self):
        return self.stats.shape[0]

    @property
    def dim(self):
        return self.stats.shape[1]

    def log_probs(self, theta):
        z = self.stats @ np.asarray(theta, dtype=float)
        top = z.max()
        return z - (top + math.log(np.exp(z - top).sum()))

    def probs(self, theta):
        return np.exp(self.log_probs(theta))

    def psi(self, theta):
        z = self.stats @ np.asarray(theta, dtype=float)
        top = z.max()
        return float(top + math.log(np.exp(z - top).sum()))

    def eta(self, theta):
        return self.probs(theta) @ self.stats

    def _cov(self, p):
        centred = self.stats - p @ self.stats
        return centred.T @ (p[:, None] * centred)

    def covariance(self, theta):
        return self._cov(self.probs(theta))

    def third_cumulant(self, theta):
        p = self.probs(theta)
        c = self.stats - p @ self.stats
        return np.einsum("x,xi,xj,xk->ijk", p, c, c, c)

    def theta_of_eta(self, eta, tol=1e-13, max_iter=200, start=None):
        """Maximise theta . eta - psi(theta) by damped Newton from ``start`` (default 0)."""
        eta = np.asarray(eta, dtype=float)
        theta = np.zeros(self.dim) if start is None else np.array(start, dtype=float)
        scale = 1.0 + float(np.max(np.abs(self.stats)))
        best = math.inf

        def objective(th):
            return float(th @ eta) - self.psi(th)

        for _ in range(max_iter):
            p = self.probs(theta)
            resid = eta - p @ self.stats
            size = float(np.max(np.abs(resid)))
            if size <= tol * scale:
                return theta
            if size >= best and size <= 1e-10 * scale:
                return theta  # rounding floor reached
            best = min(best, size)
            try:
                step = np.linalg.solve(self._cov(p), resid)
            except np.linalg.LinAlgError:
                break
            trial = theta + step
            if size > 1e-3:
                base = objective(theta)
                lam = 1.0
                while lam > 1e-12 and objective(theta + lam * step) < base - 1e-15 * (1.0 + abs(base)):
                    lam *= 0.5
                trial = theta + lam * step
            theta = trial
            if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > 700.0:
                break
        raise DomainError(f"finite family: eta={[float(v) for v in eta]} is not interior to the convex hull of stats")

    def descriptor(self, name="finite"):
        family = self
        last = [None]

        def theta_of_eta(eta):
            # exact repeat or warm start from the previous solve (flows move slowly)
            key = np.asarray(eta, dtype=float).tobytes()
            hit = last[0]
            if hit is not None and hit[0] == key:
                return hit[1].copy()
            try:
                theta = family.theta_of_eta(eta, start=None if hit is None else hit[1])
            except DomainError:
                if hit is None:
                    raise
                theta = family.theta_of_eta(eta)
            last[0] = (key, theta)
            return theta.copy()

        def psi_star(eta):
            theta = theta_of_eta(eta)
            return float(theta @ eta) - family.psi(theta)

        def metric_lower_eta(eta):
            return family.covariance(theta_of_eta(eta))

        def metric_upper_theta(theta):
            return np.linalg.inv(family.covariance(theta))

        def metric_lower_eta_grad(eta):
            theta = theta_of_eta(eta)
            ginv = np.linalg.inv(family.covariance(theta))
            return np.einsum("jkl,li->ijk", family.third_cumulant(theta), ginv)

        def metric_upper_theta_grad(theta):
            ginv = np.linalg.inv(family.covariance(theta))
            t3 = family.third_cumulant(theta)
            return -np.einsum("ja,abi,bk->ijk", ginv, t3, ginv)

        def in_domain(x):
            if x.chart == "theta":
                return bool(np.all(np.isfinite(x.values)))
            try:
                theta_of_eta(x.values)
            except DomainError:
                return False
            return True

        def sample(rng):
            return CoordVector("theta", rng.uniform(-2.0, 2.0, size=family.dim))

        desc = ModelDescriptor(
            name=name,
            dim=self.dim,
            psi=self.psi,
            psi_star=psi_star,
            eta_of_theta=self.eta,
            theta_of_eta=theta_of_eta,
            metric_lower_eta=metric_lower_eta,
            metric_upper_theta=metric_upper_theta,
            in_domain=in_domain,
            domain_predicate={"eta": "eta interior to conv(stats)", "theta": "theta finite"},
            metric_lower_eta_grad=metric_lower_eta_grad,
            metric_upper_theta_grad=metric_upper_theta_grad,
            sample=sample,
        )
        object.__setattr__(desc, "family", self)  # not a dataclass field
        return desc


def finite_exp_family(stats):
    """ModelDescriptor for the finite exponential family with the given statistics.

    The descriptor carries the family object as a plain ``family`` attribute.
    """
    return FiniteExpFamily(stats).descriptor()


def load_finite_family(path):
    """Read ``{"stats": [[...], ...]}`` from a JSON file."""
    with open(path) as fh:
        data = json.load(fh)
    if "stats" not in data:
        raise IdentifiabilityError(f"{path}: missing 'stats' key")
    return FiniteExpFamily(data["stats"])


# --------------------------------------------------------------------------


def refractive_index(model, x):
    """n(eta) = sqrt(g_ij theta^i theta^j) or n*(theta) = sqrt(g^ij eta_i eta_j)."""
    theta, eta = model.dual_pair(x)
    if x.chart == "eta":
        g = check_metric(model.metric_lower_eta(eta))
        return math.sqrt(float(theta @ g @ theta))
    g = check_metric(model.metric_upper_theta(theta))
    return math.sqrt(float(eta @ g @ eta))


BUILTIN_MODELS = {
    "gaussian": gaussian_model,
    "gamma": gamma_model,
}


def get_model(model_id):
    """Resolve ``"gaussian"``, ``"gamma"`` or ``"finite:<path>"`` to a descriptor."""
    if model_id in BUILTIN_MODELS:
        return BUILTIN_MODELS[model_id]()
    if isinstance(model_id, str) and model_id.startswith("finite:"):
        path = model_id[len("finite:"):]
        return load_finite_family(path).descriptor(name=model_id)
    raise UnknownModel(model_id)
