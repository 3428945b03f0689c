"""Ray tracing in isotropic and anisotropic gradient-index media.

A medium is a refractive index ``n(q) > 0`` together with a spatial metric
``g_ij(q)`` (Euclidean unless given).  Rays are traced with one of three
equivalent Hamiltonians, chosen by the parameter they step in:

* ``s``   -- ``H = sqrt(g^ij p_i p_j) - n``          (zero energy),
* ``tau`` -- ``H~ = sqrt(g^ij p_i p_j / n^2)``        (equals 1 on rays),
* ``t``   -- ``H = 1/2 g^ij p_i p_j - 1/2 n^2``        (zero energy),

related by ``dtau = n ds = n^2 dt``.  The ray trajectories share the
:class:`~igflow.dynamics.Trajectory` layout with positions in ``eta`` and
``-p`` in ``theta`` (the Hamiltonian dictionary between optics and the
dually flat flows), plus explicit ``q`` and ``p`` columns.
"""

from dataclasses import dataclass, field
import json
import math
from typing import Callable, Optional

import numpy as np

from .dynamics import HamiltonianSpec, hamiltonian_flow, jm_transform
from .errors import DomainError, TooFewSamples
from .integrate import IntegratorConfig

__all__ = [
    "RefractiveField",
    "RayState",
    "homogeneous_field",
    "linear_field",
    "radial_field",
    "anisotropic_field",
    "field_from_dict",
    "load_field",
    "normalize_momentum",
    "ray_spec",
    "ray_trace",
    "eikonal_residual",
    "ray_conservation_check",
    "huygens_residual",
    "jm_hamiltonian_values",
]


def _fd_vector(fn, q, rel=1e-6):
    q = np.asarray(q, dtype=float)
    out = []
    for i in range(q.size):
        h = rel * max(1.0, abs(q[i]))
        e = np.zeros_like(q)
        e[i] = h
        out.append((np.asarray(fn(q + e)) - np.asarray(fn(q - e))) / (2.0 * h))
    return np.stack(out)


@dataclass(frozen=True)
class RefractiveField:
    """Refractive index and spatial metric on R^m.

    ``index_grad`` and ``metric_deriv`` (``D[i, j, k] = d g_jk / d q_i``) fall
    back to central differences with step ``1e-6 * max(1, |q_i|)`` when not
    given; ``grad_source`` records which one is in use.
    """

    dim: int
    index: Callable
    index_grad: Optional[Callable] = None
    metric: Optional[Callable] = None
    metric_deriv: Optional[Callable] = None
    domain: Optional[Callable] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    grad_source: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.grad_source:
            object.__setattr__(self, "grad_source", "analytic" if self.index_grad else "finite_difference")

    def n(self, q):
        return float(self.index(np.asarray(q, dtype=float)))

    def grad_n(self, q):
        q = np.asarray(q, dtype=float)
        if self.index_grad is not None:
            return np.asarray(self.index_grad(q), dtype=float)
        return _fd_vector(self.index, q)

    def g(self, q):
        if self.metric is None:
            return np.eye(self.dim)
        return np.asarray(self.metric(np.asarray(q, dtype=float)), dtype=float)

    def dg(self, q):
        q = np.asarray(q, dtype=float)
        if self.metric is None:
            return np.zeros((self.dim, self.dim, self.dim))
        if self.metric_deriv is not None:
            return np.asarray(self.metric_deriv(q), dtype=float)
        return _fd_vector(self.metric, q)

    def cometric(self, q):
        return np.linalg.inv(self.g(q))

    def cometric_grad(self, q):
        inv = self.cometric(q)
        # d(g^-1) = -g^-1 dg g^-1
        return -np.einsum("ja,iab,bk->ijk", inv, self.dg(q), inv)

    def in_domain(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim,) or not np.all(np.isfinite(q)):
            return False
        if self.domain is not None and not self.domain(q):
            return False
        return self.n(q) > 0.0


@dataclass(frozen=True)
class RayState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise ValueError("q and p must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("ray state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


# --------------------------------------------------------------------------
# field constructors


def homogeneous_field(n0=1.0, dim=2):
    n0 = float(n0)
    if n0 <= 0:
        raise DomainError("homogeneous index must be positive")
    return RefractiveField(
        dim=dim,
        index=lambda q: n0,
        index_grad=lambda q: np.zeros(dim),
        kind="homogeneous",
        params={"n0": n0, "dim": dim},
    )


def linear_field(n0=1.0, grad=(0.1, 0.0)):
    """n(q) = n0 + a . q; defined where that is positive."""
    a = np.array(grad, dtype=float)
    n0 = float(n0)
    return RefractiveField(
        dim=a.size,
        index=lambda q: n0 + float(a @ q),
        index_grad=lambda q: a.copy(),
        kind="linear",
        params={"n0": n0, "grad": a.tolist()},
    )


def radial_field(n0=1.5, alpha=0.2, center=(0.0, 0.0)):
    """Graded-index profile n(q) = n0 sqrt(1 - alpha^2 |q - c|^2) for alpha |q - c| < 1."""
    c = np.array(center, dtype=float)
    n0, alpha = float(n0), float(alpha)

    def index(q):
        r2 = float(np.sum((q - c) ** 2))
        return n0 * math.sqrt(1.0 - alpha * alpha * r2)

    def index_grad(q):
        return -(n0 * n0 * alpha * alpha / index(q)) * (q - c)

    return RefractiveField(
        dim=c.size,
        index=index,
        index_grad=index_grad,
        domain=lambda q: alpha * alpha * float(np.sum((q - c) ** 2)) < 1.0,
        kind="radial",
        params={"n0": n0, "alpha": alpha, "center": c.tolist()},
    )


def anisotropic_field(metric, n0=1.0, grad=None):
    """Constant SPD metric g_ij with a linear index n0 + a . q."""
    g = np.array(metric, dtype=float)
    np.linalg.cholesky(g)
    dim = g.shape[0]
    a = np.zeros(dim) if grad is None else np.array(grad, dtype=float)
    n0 = float(n0)
    return RefractiveField(
        dim=dim,
        index=lambda q: n0 + float(a @ q),
        index_grad=lambda q: a.copy(),
        metric=lambda q: g.copy(),
        metric_deriv=lambda q: np.zeros((dim, dim, dim)),
        kind="anisotropic",
        params={"metric": g.tolist(), "n0": n0, "grad": a.tolist()},
    )


def field_from_dict(doc):
    kind = doc.get("kind")
    args = {k: v for k, v in doc.items() if k != "kind"}
    builders = {
        "homogeneous": homogeneous_field,
        "linear": linear_field,
        "radial": radial_field,
        "anisotropic": anisotropic_field,
    }
    if kind not in builders:
        raise ValueError(f"unknown field kind {kind!r}; expected one of {sorted(builders)}")
    return builders[kind](**args)


def load_field(path):
    with open(path) as fh:
        return field_from_dict(json.load(fh))


# --------------------------------------------------------------------------
# tracing


def normalize_momentum(field, q, direction):
    """Momentum p_i = n g_ij v^j for the unit (in g) direction v; then |p| = n(q)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(direction, dtype=float)
    g = field.g(q)
    norm = math.sqrt(float(v @ g @ v))
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    return RayState(q, field.n(q) * (g @ v) / norm)


def ray_spec(field, param="s"):
    """HamiltonianSpec driving rays in the chosen parameter."""
    if param not in ("s", "tau", "t"):
        raise ValueError(f"param must be 's', 'tau' or 't', got {param!r}")

    def index(q):
        return field.n(q)

    common = dict(
        dim=field.dim,
        cometric=field.cometric,
        cometric_grad=field.cometric_grad,
        index=index,
        chart="q",
        inside=field.in_domain,
        field=field,
    )
    if param == "t":
        return HamiltonianSpec(
            kind="natural_optics",
            form="quadratic",
            potential=lambda q: -0.5 * field.n(q) ** 2,
            potential_grad=lambda q: -field.n(q) * field.grad_n(q),
            **common,
        )
    natural = HamiltonianSpec(
        kind="natural_optics",
        form="relativistic",
        potential=lambda q: -field.n(q),
        potential_grad=lambda q: -field.grad_n(q),
        energy=0.0,
        **common,
    )
    if param == "s":
        return natural
    return jm_transform(natural, 0.0)[0]


def ray_trace(field, state0, param="s", span=(0.0, 1.0), cfg=None):
    """Trace a ray from ``state0`` stepping in ``param``.

    The momentum is used as given; build it with :func:`normalize_momentum`
    for a ray on the zero-energy shell ``|p| = n(q0)``.
    """
    if not field.in_domain(state0.q):
        raise DomainError(f"ray start q={state0.q.tolist()} is outside the medium")
    spec = ray_spec(field, param)
    return hamiltonian_flow(spec, state0, span, cfg or IntegratorConfig(), driver=f"ray_{param}")


# --------------------------------------------------------------------------
# validators


def _q(traj):
    return traj.columns.get("q", traj.eta)


def _p(traj):
    return traj.columns["p"] if "p" in traj.columns else -traj.theta


def eikonal_residual(traj, field):
    """Max residual of d/ds(n g_ij dq^j/ds) = dn/dq_i + n/2 dg_jk/dq_i q'^j q'^k.

    In a Euclidean medium this is the eikonal equation d/ds(n dq/ds) = grad n.
    The momentum-like quantity is formed at midpoints of consecutive samples
    and differenced again, both with respect to the ``s`` column.
    """
    q, s = _q(traj), traj.s
    if len(s) < 3:
        raise TooFewSamples("eikonal_residual needs at least 3 samples")
    ds = np.diff(s)
    vel = np.diff(q, axis=0) / ds[:, None]
    mids = 0.5 * (q[1:] + q[:-1])
    flux = np.array([field.n(x) * field.g(x) @ v for x, v in zip(mids, vel)])
    worst = 0.0
    for i in range(1, len(s) - 1):
        lhs = (flux[i] - flux[i - 1]) / (0.5 * (s[i + 1] - s[i - 1]))
        v = (q[i + 1] - q[i - 1]) / (s[i + 1] - s[i - 1])
        n = field.n(q[i])
        rhs = field.grad_n(q[i]) + 0.5 * n * np.einsum("ijk,j,k->i", field.dg(q[i]), v, v)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def ray_conservation_check(traj, field):
    """(max |sqrt(g^ij p_i p_j) - n(q)|, max |H(q, p)|) with H the zero-energy s-Hamiltonian."""
    q, p = _q(traj), _p(traj)
    norm_res = 0.0
    energy_res = 0.0
    for x, mom in zip(q, p):
        norm = math.sqrt(float(mom @ field.cometric(x) @ mom))
        h = norm - field.n(x)
        norm_res = max(norm_res, abs(h))
        energy_res = max(energy_res, abs(h))
    return norm_res, energy_res


def huygens_residual(traj, field):
    """max ||p_i - n g_ij dq^j/ds|| over interior samples (central-difference velocities)."""
    q, p, s = _q(traj), _p(traj), traj.s
    if len(s) < 3:
        raise TooFewSamples("huygens_residual needs at least 3 samples")
    worst = 0.0
    for i in range(1, len(s) - 1):
        v = (q[i + 1] - q[i - 1]) / (s[i + 1] - s[i - 1])
        resid = p[i] - field.n(q[i]) * field.g(q[i]) @ v
        worst = max(worst, float(np.linalg.norm(resid)))
    return worst


def jm_hamiltonian_values(traj, field):
    """sqrt(g^ij p_i p_j) / n(q) per sample; equals 1 on the zero-energy shell."""
    q, p = _q(traj), _p(traj)
    return np.array([math.sqrt(float(mom @ field.cometric(x) @ mom)) / field.n(x) for x, mom in zip(q, p)])
