"""Fixed-step RK4 and adaptive Runge-Kutta-Fehlberg 4(5) with a domain guard."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainExit, StepLimit, TurningPointError

# Failures of the right-hand side that mean the state has left the region
# where it is defined (dual map outside its domain, log of a negative, ...).
_RHS_FAILURES = (ValueError, ArithmeticError, np.linalg.LinAlgError)

__all__ = ["IntegratorConfig", "integrate"]

METHODS = ("rk4_fixed", "rkf45_adaptive")
GUARDS = ("stop_with_error", "truncate_trajectory")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4_fixed"
    step: float = 1e-3
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_steps: int = 10_000_000
    domain_guard: str = "stop_with_error"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.domain_guard not in GUARDS:
            raise ValueError(f"domain_guard must be one of {GUARDS}, got {self.domain_guard!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


# A fixed step whose RK4 and embedded midpoint results differ by more than
# this fraction of the state no longer resolves the solution (finite-time
# blow-up at a chart boundary); it is handled like a domain exit.
UNRESOLVED = 1e-2


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    gap = np.max(np.abs(y_new - (y + h * k2)))
    if not gap <= UNRESOLVED * max(1.0, float(np.max(np.abs(y)))):
        return None
    return y_new


# Fehlberg tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)


def _rkf45_step(f, t, y, h):
    ks = []
    for c, row in zip(_C, _A):
        yi = y + h * sum((a * k for a, k in zip(row, ks)), np.zeros_like(y))
        ks.append(f(t + c * h, yi))
    y4 = y + h * sum(b * k for b, k in zip(_B4, ks))
    y5 = y + h * sum(b * k for b, k in zip(_B5, ks))
    return y4, y5 - y4


def _ok(y, inside):
    if not np.all(np.isfinite(y)):
        return False
    return inside is None or inside(y)


def integrate(f, y0, span, cfg=None, inside=None):
    """Integrate ``dy/dt = f(t, y)`` over ``span = (t0, t1)``.

    ``inside(y)`` is the domain predicate checked after every accepted step.
    A right-hand side that raises (dual map undefined), a non-finite state, an
    unresolved fixed step and step-size collapse in the adaptive method all
    count as leaving the domain.
    Returns ``(ts, ys, exited)`` with ``ys`` of shape ``(N, len(y0))``.  On a
    domain exit the guard either raises :class:`DomainExit` (with the partial
    ``(ts, ys)`` attached) or returns the truncated run with ``exited=True``.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(span[0]), float(span[1])
    y = np.array(y0, dtype=float)
    ts, ys = [t0], [y.copy()]
    length = t1 - t0
    if length == 0.0:
        return np.array(ts), np.array(ys), False
    direction = math.copysign(1.0, length)

    def exit_(t):
        msg = f"flow left the domain near t={t!r}"
        partial = (np.array(ts), np.array(ys))
        if cfg.domain_guard == "stop_with_error":
            raise DomainExit(msg, partial=partial)
        return partial[0], partial[1], True

    def guarded(step, *args):
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                return step(*args)
        except TurningPointError:
            raise
        except _RHS_FAILURES:
            return None

    if cfg.method == "rk4_fixed":
        n = max(1, math.ceil(abs(length) / cfg.step - 1e-9))
        if n > cfg.max_steps:
            raise StepLimit(f"{n} steps needed, max_steps={cfg.max_steps}")
        h = length / n
        for i in range(1, n + 1):
            t = t0 + (i - 1) * h
            y = guarded(_rk4_step, f, t, y, h)
            t_new = t1 if i == n else t0 + i * h
            if y is None or not _ok(y, inside):
                return exit_(t_new)
            ts.append(t_new)
            ys.append(y.copy())
        return np.array(ts), np.array(ys), False

    h = direction * min(cfg.step, abs(length))
    t = t0
    steps = 0
    while direction * (t1 - t) > 0.0:
        if steps >= cfg.max_steps:
            raise StepLimit(f"max_steps={cfg.max_steps} reached at t={t!r}")
        steps += 1
        if direction * (t + h - t1) > 0.0:
            h = t1 - t
        out = guarded(_rkf45_step, f, t, y, h)
        y_new, err = out if out is not None else (None, None)
        if y_new is None or not np.all(np.isfinite(y_new)):
            ratio = math.inf
        else:
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            ratio = float(np.max(np.abs(err) / scale))
        if ratio <= 1.0:
            t = t1 if abs(t1 - (t + h)) <= 1e-14 * max(1.0, abs(t1)) else t + h
            y = y_new + err  # local extrapolation: keep the fifth-order solution
            if not _ok(y, inside):
                return exit_(t)
            ts.append(t)
            ys.append(y.copy())
            factor = 5.0 if ratio == 0.0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
        else:
            factor = 0.2 if not math.isfinite(ratio) else max(0.1, 0.9 * ratio ** -0.25)
        h *= factor
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            return exit_(t)
    return np.array(ts), np.array(ys), False
