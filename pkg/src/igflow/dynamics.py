"""Gradient flows, geodesic and natural Hamiltonian flows, and their time parameters.

Three parameters describe the same path:

* ``t``   -- the gradient-flow time,
* ``s``   -- arc length of the Fisher metric, ``ds = n dt``,
* ``tau`` -- arc length of the Jacobi-Maupertuis metric, ``dtau = n ds = n^2 dt``,

where ``n`` is the refractive index of the model (``n(eta)`` for the eta-chart
flow, ``n*(theta)`` for the theta-chart flow).  Every integrator below carries
the two parameters it is not stepping in as extra ODE components, so all three
columns of a :class:`Trajectory` are integrated to the same accuracy.

In the Hamiltonian picture positions are eta and momenta are -theta (the
theta-chart flows swap the roles: positions theta, momenta eta).
"""

import csv
from dataclasses import dataclass, field
import io
import json
import math
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline, PchipInterpolator

from .core import CoordVector, ModelDescriptor, dual_chart
from .errors import GridMismatch, ModelMismatch, NonMonotone, TurningPointError
from .integrate import IntegratorConfig, integrate
from .models import refractive_index

__all__ = [
    "FlowSample",
    "Trajectory",
    "HamiltonianSpec",
    "read_csv",
    "ig_geodesic_spec",
    "ig_natural_spec",
    "hamiltonian_value",
    "gradient_flow",
    "linear_flow",
    "linear_flow_closed_form",
    "geodesic_flow",
    "natural_flow_t",
    "hamiltonian_flow",
    "jm_transform",
    "reparametrize",
    "integrability_products",
    "consistency_residual",
]

PARAMS = ("t", "s", "tau")
# dt : ds : dtau = 1 : n : n^2
_INDEX_POWER = {"t": 0, "s": 1, "tau": 2}


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class FlowSample:
    t: float
    s: float
    tau: float
    theta: np.ndarray
    eta: np.ndarray


@dataclass
class Trajectory:
    """Flow samples stored column-wise.

    ``theta`` and ``eta`` have shape ``(N, m)``.  ``columns`` holds extra
    per-sample arrays (ray ``q``/``p``, replicator probabilities ``p``) which
    are appended to CSV output as ``name_1 .. name_k``.
    """

    t: np.ndarray
    s: np.ndarray
    tau: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    driver: str = ""
    chart: str = "eta"
    config: Optional[IntegratorConfig] = None
    columns: dict = field(default_factory=dict)
    exited: bool = False

    def __post_init__(self):
        for name in PARAMS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        n = self.t.size
        self.theta = np.asarray(self.theta, dtype=float).reshape(n, -1)
        self.eta = np.asarray(self.eta, dtype=float).reshape(n, -1)
        self.columns = {k: np.asarray(v, dtype=float).reshape(n, -1) for k, v in self.columns.items()}

    def __len__(self):
        return self.t.size

    @property
    def dim(self):
        return self.theta.shape[1]

    def param(self, name):
        if name not in PARAMS:
            raise ValueError(f"parameter must be one of {PARAMS}, got {name!r}")
        return getattr(self, name)

    @property
    def samples(self):
        return [
            FlowSample(float(self.t[i]), float(self.s[i]), float(self.tau[i]), self.theta[i], self.eta[i])
            for i in range(len(self))
        ]

    def position(self):
        """Coordinates of the chart the flow moves in."""
        return self.theta if self.chart == "theta" else self.eta

    def header(self):
        m = self.dim
        names = ["t", "s", "tau"]
        names += [f"theta_{i + 1}" for i in range(m)]
        names += [f"eta_{i + 1}" for i in range(m)]
        for key, arr in self.columns.items():
            names += [f"{key}_{i + 1}" for i in range(arr.shape[1])]
        return names

    def rows(self):
        blocks = [self.t[:, None], self.s[:, None], self.tau[:, None], self.theta, self.eta]
        blocks += list(self.columns.values())
        return np.hstack(blocks)

    def to_csv(self, target=None):
        """Write CSV (shortest round-trip float repr); returns the text if ``target`` is None."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for row in self.rows():
            writer.writerow([repr(float(v)) for v in row])
        return _emit(buf.getvalue(), target)

    def to_json(self, target=None):
        samples = []
        for i in range(len(self)):
            item = {
                "t": float(self.t[i]),
                "s": float(self.s[i]),
                "tau": float(self.tau[i]),
                "theta": [float(v) for v in self.theta[i]],
                "eta": [float(v) for v in self.eta[i]],
            }
            for key, arr in self.columns.items():
                item[key] = [float(v) for v in arr[i]]
            samples.append(item)
        doc = {"driver": self.driver, "chart": self.chart, "exited": self.exited, "samples": samples}
        return _emit(json.dumps(doc) + "\n", target)


def _emit(text, target):
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)
    return text


def read_csv(source, driver="", chart="eta"):
    """Parse a trajectory CSV written by :meth:`Trajectory.to_csv`."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    data = data.reshape(-1, len(header))
    groups = {}
    for j, name in enumerate(header):
        base = name.rsplit("_", 1)[0] if name not in PARAMS else name
        groups.setdefault(base, []).append(j)
    extras = {k: data[:, idx] for k, idx in groups.items() if k not in ("t", "s", "tau", "theta", "eta")}
    return Trajectory(
        t=data[:, groups["t"][0]],
        s=data[:, groups["s"][0]],
        tau=data[:, groups["tau"][0]],
        theta=data[:, groups["theta"]],
        eta=data[:, groups["eta"]],
        driver=driver,
        chart=chart,
        columns=extras,
    )


# --------------------------------------------------------------------------
# Hamiltonians


@dataclass(frozen=True)
class HamiltonianSpec:
    """Which Hamiltonian drives a flow.

    ``cometric(q)`` is the matrix contracted with the momenta and
    ``cometric_grad(q)[i, j, k]`` its derivative along ``q_i``.  ``form`` is
    ``"geodesic"`` (flows use ``1/2 p.G.p``, whose paths coincide with those
    of ``sqrt(p.G.p)``), ``"quadratic"`` for ``1/2 p.G.p + U`` or
    ``"relativistic"`` for ``sqrt(p.G.p) + U``.  ``index(q)`` is the
    refractive index used for the time-parameter bookkeeping and ``chart``
    names the position coordinates (``"eta"``, ``"theta"`` or ``"q"`` for
    optics).
    """

    kind: str
    dim: int
    cometric: Callable
    cometric_grad: Callable
    index: Callable
    chart: str = "eta"
    form: str = ""
    potential: Optional[Callable] = None
    potential_grad: Optional[Callable] = None
    energy: float = 0.0
    inside: Optional[Callable] = None
    model: Optional[ModelDescriptor] = None
    field: object = None

    KINDS = ("geodesic_eta", "geodesic_theta", "natural_ig", "natural_optics")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}, got {self.kind!r}")
        if not self.form:
            form = {"natural_ig": "quadratic", "natural_optics": "relativistic"}.get(self.kind, "geodesic")
            object.__setattr__(self, "form", form)
        if self.form == "geodesic" and self.potential is not None:
            raise ValueError("geodesic Hamiltonians carry no potential")
        if self.form != "geodesic" and self.potential is None:
            raise ValueError("natural Hamiltonians need a potential")


def _memo_last(fn):
    """Cache the most recent call; RK stages re-evaluate the same point several times."""
    cache = {}

    def wrapper(q):
        key = np.asarray(q, dtype=float).tobytes()
        if cache.get("key") != key:
            cache["key"] = key
            cache["value"] = fn(np.asarray(q, dtype=float))
        return cache["value"]

    return wrapper


def _fd_tensor(fn, q, rel=1e-6):
    q = np.asarray(q, dtype=float)
    out = []
    for i in range(q.size):
        h = rel * max(1.0, abs(q[i]))
        e = np.zeros_like(q)
        e[i] = h
        out.append((np.asarray(fn(q + e)) - np.asarray(fn(q - e))) / (2.0 * h))
    return np.stack(out)


def _ig_local(model, chart):
    """Return q -> (g, dg, n2, dn2) for the metric acting on the flow's momenta.

    eta chart: g = g_jk(eta), n2 = g(theta(eta), theta(eta)) and
    d n2 / d eta_i = dg_i(theta, theta) + 2 theta^i (uses d theta / d eta = g^-1).
    theta chart mirrors this with g^jk(theta) and eta(theta).
    """
    if chart == "eta":
        metric, grad, dual = model.metric_lower_eta, model.metric_lower_eta_grad, model.theta_of_eta
    elif chart == "theta":
        metric, grad, dual = model.metric_upper_theta, model.metric_upper_theta_grad, model.eta_of_theta
    else:
        raise ValueError(f"chart must be 'eta' or 'theta', got {chart!r}")
    if grad is None:
        def grad(q):
            return _fd_tensor(metric, q)

    @_memo_last
    def local(q):
        v = np.asarray(dual(q), dtype=float)
        g = np.asarray(metric(q), dtype=float)
        dg = np.asarray(grad(q), dtype=float)
        n2 = float(v @ g @ v)
        dn2 = np.einsum("ijk,j,k->i", dg, v, v) + 2.0 * v
        return g, dg, n2, dn2

    return local


def _ig_inside(model, chart):
    def inside(q):
        return model.in_domain(CoordVector(chart, q))
    return inside


def ig_geodesic_spec(model, chart="eta"):
    """Geodesic Hamiltonian sqrt(g~(momenta, momenta)) with g~ = g / n^2."""
    local = _ig_local(model, chart)

    def cometric(q):
        g, _, n2, _ = local(q)
        return g / n2

    def cometric_grad(q):
        g, dg, n2, dn2 = local(q)
        return dg / n2 - g[None, :, :] * dn2[:, None, None] / n2 ** 2

    return HamiltonianSpec(
        kind="geodesic_" + chart,
        dim=model.dim,
        cometric=cometric,
        cometric_grad=cometric_grad,
        index=lambda q: math.sqrt(local(q)[2]),
        chart=chart,
        inside=_ig_inside(model, chart),
        model=model,
    )


def ig_natural_spec(model, chart="eta"):
    """Natural Hamiltonian 1/2 g(momenta, momenta) - 1/2 n^2 with zero energy."""
    local = _ig_local(model, chart)
    return HamiltonianSpec(
        kind="natural_ig",
        dim=model.dim,
        cometric=lambda q: local(q)[0],
        cometric_grad=lambda q: local(q)[1],
        index=lambda q: math.sqrt(local(q)[2]),
        chart=chart,
        potential=lambda q: -0.5 * local(q)[2],
        potential_grad=lambda q: -0.5 * local(q)[3],
        energy=0.0,
        inside=_ig_inside(model, chart),
        model=model,
    )


def hamiltonian_value(spec, q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    kin = float(p @ spec.cometric(q) @ p)
    if spec.form == "geodesic":
        return math.sqrt(kin)
    if spec.form == "quadratic":
        return 0.5 * kin + spec.potential(q)
    return math.sqrt(kin) + spec.potential(q)


def jm_transform(natural, energy=None):
    """Jacobi-Maupertuis transform of a natural Hamiltonian at fixed energy.

    Returns ``(geodesic_spec, time_map)`` where ``time_map(q)`` is the rate
    ``dtau / d(param)`` of the original flow parameter.

    * quadratic ``1/2 p.G.p + U``: ``G~ = G / (2(E - U))``, ``dtau = 2(E - U) dt``;
    * relativistic ``sqrt(p.G.p) + U``: ``G~ = G / (E - U)^2``, ``dtau = (E - U) ds``.

    :class:`TurningPointError` is raised wherever ``E - U <= 0`` is evaluated.
    """
    if natural.form == "geodesic":
        raise ValueError("jm_transform needs a natural Hamiltonian")
    e = natural.energy if energy is None else float(energy)
    quadratic = natural.form == "quadratic"

    def gap(q):
        value = e - natural.potential(q)
        if not value > 0.0:
            raise TurningPointError(f"E - U = {value!r} <= 0 at q={np.ravel(q).tolist()}")
        return value

    def rate(q):
        return 2.0 * gap(q) if quadratic else gap(q)

    def cometric(q):
        f = gap(q)
        return natural.cometric(q) / (2.0 * f if quadratic else f * f)

    def cometric_grad(q):
        f = gap(q)
        g = natural.cometric(q)
        dg = natural.cometric_grad(q)
        du = np.asarray(natural.potential_grad(q), dtype=float)
        if quadratic:
            # d(G / 2f) with df = -dU
            return dg / (2.0 * f) + g[None] * du[:, None, None] / (2.0 * f * f)
        return dg / f ** 2 + 2.0 * g[None] * du[:, None, None] / f ** 3

    kind = "geodesic_theta" if natural.chart == "theta" else "geodesic_eta"
    spec = HamiltonianSpec(
        kind=kind,
        dim=natural.dim,
        cometric=cometric,
        cometric_grad=cometric_grad,
        index=natural.index,
        chart=natural.chart,
        inside=natural.inside,
        model=natural.model,
        field=natural.field,
    )
    return spec, rate


# --------------------------------------------------------------------------
# integration drivers


def _resolve_cfg(cfg):
    return cfg if cfg is not None else IntegratorConfig()


def _wrap_inside(inside, m):
    if inside is None:
        return None
    return lambda y: inside(y[:m])


def _trajectory_from_qp(spec, ts, ys, param, exited, cfg, driver):
    m = spec.dim
    q, p = ys[:, :m], ys[:, m:2 * m]
    others = [name for name in PARAMS if name != param]
    cols = {param: ts, others[0]: ys[:, 2 * m], others[1]: ys[:, 2 * m + 1]}
    if spec.chart == "theta":
        theta, eta = q, p
    else:
        eta, theta = q, -p
    extra = {"q": q, "p": p} if spec.chart == "q" else {}
    return Trajectory(
        t=cols["t"], s=cols["s"], tau=cols["tau"], theta=theta, eta=eta,
        driver=driver or spec.kind, chart=spec.chart, config=cfg, columns=extra, exited=exited,
    )


def _initial_qp(spec, state0):
    if isinstance(state0, CoordVector):
        if spec.model is None:
            raise TypeError("a CoordVector start needs a model-backed HamiltonianSpec")
        theta, eta = spec.model.dual_pair(state0)
    elif hasattr(state0, "q") and hasattr(state0, "p"):
        return np.array(state0.q, dtype=float), np.array(state0.p, dtype=float)
    else:
        eta, theta = (np.array(v, dtype=float) for v in state0)
    if spec.chart == "theta":
        return theta, eta
    return eta, -theta


def _rhs_for(spec, param):
    m = spec.dim
    form = spec.form

    def rhs(_, y):
        q, p = y[:m], y[m:2 * m]
        g = spec.cometric(q)
        dg = spec.cometric_grad(q)
        gp = g @ p
        quad = np.einsum("ijk,j,k->i", dg, p, p)
        n = spec.index(q)
        if form == "geodesic":
            dq, dp = gp, -0.5 * quad
            rates = (1.0 / (n * n), 1.0 / n) if param == "tau" else None  # (dt, ds)/dtau
        elif form == "quadratic":
            dq, dp = gp, -0.5 * quad - spec.potential_grad(q)
            rates = (n, n * n)  # (ds, dtau)/dt
        else:
            norm = math.sqrt(float(p @ gp))
            dq, dp = gp / norm, -0.5 * quad / norm - spec.potential_grad(q)
            rates = (1.0 / n, n)  # (dt, dtau)/ds
        return np.concatenate([dq, dp, rates])

    return rhs


_NATIVE_PARAM = {"geodesic": "tau", "quadratic": "t", "relativistic": "s"}


def hamiltonian_flow(spec, state0, span, cfg=None, driver=""):
    """Integrate Hamilton's equations of ``spec`` in its native parameter.

    Geodesic specs step in ``tau``, quadratic natural specs in ``t`` and
    relativistic ones in ``s``.  ``state0`` is a :class:`CoordVector`
    (consistent start), an ``(eta, theta)`` pair, or an object with ``q``
    and ``p`` attributes.
    """
    cfg = _resolve_cfg(cfg)
    param = _NATIVE_PARAM[spec.form]
    q0, p0 = _initial_qp(spec, state0)
    y0 = np.concatenate([q0, p0, [0.0, 0.0]])
    ts, ys, exited = integrate(_rhs_for(spec, param), y0, span, cfg, _wrap_inside(spec.inside, spec.dim))
    return _trajectory_from_qp(spec, ts, ys, param, exited, cfg, driver)


def geodesic_flow(spec, state0, tau_span, cfg=None):
    """Flow of a geodesic Hamiltonian in its arc-length parameter tau."""
    if spec.form != "geodesic":
        raise ModelMismatch(f"geodesic_flow needs a geodesic spec, got {spec.kind}")
    return hamiltonian_flow(spec, state0, tau_span, cfg)


def natural_flow_t(spec, state0, t_span, cfg=None):
    """Flow of the quadratic natural Hamiltonian in the gradient-flow time t."""
    if spec.form != "quadratic":
        raise ModelMismatch(f"natural_flow_t needs a quadratic natural spec, got {spec.kind}")
    return hamiltonian_flow(spec, state0, t_span, cfg)


def gradient_flow(model, x0, t_span, cfg=None):
    """Integrate one of the two gradient-flow systems.

    An eta-chart start integrates ``d eta/dt = -g(eta) grad psi_star``; a
    theta-chart start integrates ``d theta/dt = g^-1(theta) grad psi``.  The
    arc lengths ``s`` and ``tau`` are carried along via ``ds = n dt`` and
    ``dtau = n^2 dt``.
    """
    cfg = _resolve_cfg(cfg)
    model.require(x0)
    chart = x0.chart
    m = model.dim

    if chart == "eta":
        def rhs(_, y):
            eta = y[:m]
            theta = model.theta_of_eta(eta)
            v = model.metric_lower_eta(eta) @ theta
            n2 = float(theta @ v)
            return np.concatenate([-v, [math.sqrt(n2), n2]])
    else:
        def rhs(_, y):
            theta = y[:m]
            eta = model.eta_of_theta(theta)
            w = model.metric_upper_theta(theta) @ eta
            n2 = float(eta @ w)
            return np.concatenate([w, [math.sqrt(n2), n2]])

    y0 = np.concatenate([x0.values, [0.0, 0.0]])
    ts, ys, exited = integrate(rhs, y0, t_span, cfg, _wrap_inside(_ig_inside(model, chart), m))
    pos = ys[:, :m]
    other = model.theta_of_eta if chart == "eta" else model.eta_of_theta
    dual = np.array([other(row) for row in pos])
    theta, eta = (dual, pos) if chart == "eta" else (pos, dual)
    return Trajectory(
        t=ts, s=ys[:, m], tau=ys[:, m + 1], theta=theta, eta=eta,
        driver=f"gradient_{chart}", chart=chart, config=cfg, exited=exited,
    )


def linear_flow_closed_form(x0, t):
    """theta(t) = theta0 e^-t, eta(t) = eta0 e^t."""
    factor = math.exp(-t) if x0.chart == "theta" else math.exp(t)
    return CoordVector(x0.chart, x0.values * factor)


def linear_flow(x0, t_span, cfg=None):
    """Numerically integrate the linear system for one chart (no model needed).

    The other chart and the arc-length columns are NaN.
    """
    cfg = _resolve_cfg(cfg)
    sign = -1.0 if x0.chart == "theta" else 1.0
    ts, ys, _ = integrate(lambda _, y: sign * y, x0.values, t_span, cfg)
    nan = np.full_like(ys, np.nan)
    theta, eta = (ys, nan) if x0.chart == "theta" else (nan, ys)
    blank = np.full(ts.size, np.nan)
    return Trajectory(t=ts, s=blank, tau=blank, theta=theta, eta=eta,
                      driver=f"linear_{x0.chart}", chart=x0.chart, config=cfg)


def integrability_products(theta_traj, eta_traj):
    """c_i(t) = theta^i(t) eta_i(t) (no summation) on a shared t grid."""
    if len(theta_traj) != len(eta_traj) or not np.allclose(
        theta_traj.t, eta_traj.t, rtol=1e-12, atol=1e-12
    ):
        raise GridMismatch("theta and eta trajectories are on different t grids")
    return theta_traj.theta * eta_traj.eta


def consistency_residual(traj, model):
    """max ||eta_of_theta(theta) - eta||_inf / max(1, ||eta||_inf) over samples."""
    worst = 0.0
    for theta, eta in zip(traj.theta, traj.eta):
        diff = np.max(np.abs(model.eta_of_theta(theta) - eta))
        worst = max(worst, float(diff) / max(1.0, float(np.max(np.abs(eta)))))
    return worst


# --------------------------------------------------------------------------
# reparametrization


def _strictly_monotone(x):
    d = np.diff(x)
    return d.size == 0 or bool(np.all(d > 0) or np.all(d < 0))


def _index_along(traj, medium):
    if callable(medium) and not isinstance(medium, ModelDescriptor) and not hasattr(medium, "index"):
        return np.asarray(medium(traj), dtype=float)
    if isinstance(medium, ModelDescriptor):
        chart = traj.chart
        pos = traj.position()
        return np.array([refractive_index(medium, CoordVector(chart, row)) for row in pos])
    q = traj.columns.get("q", traj.eta)
    return np.array([medium.index(row) for row in q])


def reparametrize(traj, source, target, medium=None, grid=None, num=None):
    """Resample ``traj`` on a uniform grid of the ``target`` parameter.

    With a ``medium`` (model, refractive field or callable returning the index
    per sample) the target parameter is rebuilt from the source one by
    trapezoidal quadrature of ``ds = n dt`` / ``dtau = n ds``; without one the
    stored column is used.  States are interpolated with cubic splines and the
    remaining parameters with monotone (PCHIP) interpolation.
    """
    x = traj.param(source)
    if len(traj) < 2:
        raise NonMonotone("need at least two samples to reparametrize")
    if not _strictly_monotone(x):
        raise NonMonotone(f"parameter {source!r} is not strictly monotone")
    if medium is not None and source != target:
        n = _index_along(traj, medium)
        rate = n ** (_INDEX_POWER[target] - _INDEX_POWER[source])
        new = traj.param(target)[0] + cumulative_trapezoid(rate, x, initial=0.0)
    else:
        new = traj.param(target).copy()
    if not _strictly_monotone(new):
        raise NonMonotone(f"parameter {target!r} is not strictly monotone along the trajectory")
    order = np.argsort(new)
    key = new[order]
    if grid is None:
        grid = np.linspace(new[0], new[-1], num or len(traj))
    grid = np.asarray(grid, dtype=float)
    slack = 1e-9 * max(1.0, abs(key[-1] - key[0]))
    if grid.min() < key[0] - slack or grid.max() > key[-1] + slack:
        raise ValueError("requested grid extends beyond the trajectory")
    grid_c = np.clip(grid, key[0], key[-1])

    def spline(values):
        return CubicSpline(key, values[order], axis=0)(grid_c)

    params = {target: grid}
    for name in PARAMS:
        if name == target:
            continue
        column = traj.param(name)
        if name == source:
            params[name] = PchipInterpolator(key, column[order])(grid_c)
        elif np.all(np.isfinite(column)) and _strictly_monotone(column):
            params[name] = PchipInterpolator(key, column[order])(grid_c)
        else:
            params[name] = spline(column)
    return Trajectory(
        t=params["t"], s=params["s"], tau=params["tau"],
        theta=spline(traj.theta), eta=spline(traj.eta),
        driver=traj.driver, chart=traj.chart, config=traj.config,
        columns={k: spline(v) for k, v in traj.columns.items()}, exited=traj.exited,
    )
