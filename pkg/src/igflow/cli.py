"""Command-line front end: ``igflow simulate | verify | convert | models``.

Every failure prints one line starting with ``error:`` to stderr.  Exit codes:
0 success, 1 failing verification, 2 configuration or domain error, 3 the
integration stopped early (domain exit, step limit, turning point).
"""

import argparse
import configparser
import json
import math
import os
import sys

import numpy as np

from .core import CoordVector
from .dynamics import (
    geodesic_flow,
    gradient_flow,
    hamiltonian_value,
    ig_geodesic_spec,
    ig_natural_spec,
    natural_flow_t,
)
from .errors import DomainExit, IGFlowError, StepLimit, TurningPointError, UnknownModel
from .integrate import IntegratorConfig
from .models import BUILTIN_MODELS, get_model, load_finite_family, refractive_index

__all__ = ["main", "build_parser"]

FLOWS = ("gradient_eta", "gradient_theta", "geodesic", "natural", "ray", "replicator")
_PARAM_KEYS = ("mu", "sigma2", "beta", "nu")


class ConfigError(Exception):
    pass


def _fmt(x):
    return repr(float(x))


def _vec(values):
    return ",".join(_fmt(v) for v in values)


def _parse_vector(text, what):
    try:
        out = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not out:
        raise ConfigError(f"{what}: empty vector")
    return np.array(out)


def _parse_span(text, what):
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"{what}: expected start:end, got {text!r}")
    try:
        a, b = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"{what}: expected start:end, got {text!r}") from None
    if not (math.isfinite(a) and math.isfinite(b)) or a == b:
        raise ConfigError(f"{what}: span must be finite and nonempty, got {text!r}")
    return a, b


def _parse_params(text):
    out = {}
    for item in str(text).split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"params: expected key=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"params: {key.strip()} is not a number") from None
    return out


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """Report usage errors as one ``error:`` line instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def _add_integrator_flags(p):
    g = p.add_argument_group("integrator")
    g.add_argument("--method", choices=("rk4_fixed", "rkf45_adaptive"))
    g.add_argument("--step", type=float)
    g.add_argument("--abs-tol", type=float, dest="abs_tol")
    g.add_argument("--rel-tol", type=float, dest="rel_tol")
    g.add_argument("--max-steps", type=int, dest="max_steps")
    g.add_argument("--guard", choices=("stop_with_error", "truncate_trajectory"), dest="domain_guard")


def build_parser():
    parser = _Parser(prog="igflow", description="Gradient, geodesic and ray flows on dually flat models.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a flow and write the trajectory")
    sim.add_argument("--config", help="INI file with [run], [initial], [integrator], [output] sections")
    sim.add_argument("--model")
    sim.add_argument("--flow", choices=FLOWS)
    sim.add_argument("--chart", choices=("eta", "theta"), help="position chart for geodesic/natural flows")
    for key in _PARAM_KEYS:
        sim.add_argument(f"--{key}", type=float)
    sim.add_argument("--eta", help="initial eta (comma-separated)")
    sim.add_argument("--theta", help="initial theta (comma-separated)")
    sim.add_argument("--q", help="ray start position")
    sim.add_argument("--p", help="ray start momentum")
    sim.add_argument("--direction", help="ray start direction; momentum normalized to |p| = n(q)")
    sim.add_argument("--field", help="field JSON file or inline JSON object")
    for name in ("t", "s", "tau"):
        sim.add_argument(f"--{name}", dest=f"span_{name}", metavar="A:B", help=f"span in {name}")
    sim.add_argument("--out", help="output path (default stdout)")
    sim.add_argument("--format", choices=("csv", "json"))
    _add_integrator_flags(sim)

    ver = sub.add_parser("verify", help="run the invariant suite (JSON lines)")
    ver.add_argument("--model", required=True)
    ver.add_argument("--seed", type=int)
    ver.add_argument("--points", type=int, default=100)
    ver.add_argument("--out")
    _add_integrator_flags(ver)

    con = sub.add_parser("convert", help="print both charts, potentials and indices at a point")
    con.add_argument("--model", required=True)
    group = con.add_mutually_exclusive_group(required=True)
    group.add_argument("--eta")
    group.add_argument("--theta")
    group.add_argument("--params", help="e.g. mu=0,sigma2=1 or beta=1,nu=1")

    sub.add_parser("models", help="list built-in models")
    return parser


# --------------------------------------------------------------------------
# configuration merge (flags win)


def _read_config(path):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path!r}")
    return cp


def _merge_simulate(args):
    run, initial, integ, output = {}, {}, {}, {}
    if args.config:
        cp = _read_config(args.config)
        known = {"run", "initial", "integrator", "output"}
        for section in cp.sections():
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
        run = dict(cp["run"]) if cp.has_section("run") else {}
        initial = dict(cp["initial"]) if cp.has_section("initial") else {}
        integ = dict(cp["integrator"]) if cp.has_section("integrator") else {}
        output = dict(cp["output"]) if cp.has_section("output") else {}

    for key in ("model", "flow", "chart", "field"):
        if getattr(args, key) is not None:
            run[key] = getattr(args, key)
    for key in _PARAM_KEYS + ("eta", "theta", "q", "p", "direction"):
        value = getattr(args, key)
        if value is not None:
            initial[key] = value
    spans = {k: getattr(args, f"span_{k}") for k in ("t", "s", "tau") if getattr(args, f"span_{k}") is not None}
    if spans:
        run = {k: v for k, v in run.items() if k not in ("t", "s", "tau")}
        run.update(spans)
    for key in ("method", "step", "abs_tol", "rel_tol", "max_steps", "domain_guard"):
        if getattr(args, key) is not None:
            integ[key] = getattr(args, key)
    if args.out is not None:
        output["path"] = args.out
    if args.format is not None:
        output["format"] = args.format
    return run, initial, integ, output


def _integrator(integ):
    kinds = {"method": str, "step": float, "abs_tol": float, "rel_tol": float,
             "max_steps": int, "domain_guard": str}
    kwargs = {}
    for key, value in integ.items():
        if key not in kinds:
            raise ConfigError(f"unknown integrator key {key!r}")
        try:
            kwargs[key] = kinds[key](value)
        except ValueError:
            raise ConfigError(f"integrator {key}: bad value {value!r}") from None
    try:
        return IntegratorConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _span(run, allowed):
    given = [k for k in ("t", "s", "tau") if k in run]
    if len(given) != 1:
        raise ConfigError(f"give exactly one span ({'/'.join('--' + a for a in allowed)})")
    param = given[0]
    if param not in allowed:
        raise ConfigError(f"this flow takes a span in {' or '.join(allowed)}, not {param}")
    return param, _parse_span(run[param], f"--{param}")


def _model_start(model, initial):
    keys = set(initial) - {"q", "p", "direction"}
    params = {k: initial[k] for k in keys if k in _PARAM_KEYS}
    if params:
        expected = set(model.param_names)
        if set(params) != expected:
            raise ConfigError(f"{model.name} initial parameters must be {sorted(expected)}, got {sorted(params)}")
        return model.from_params({k: float(v) for k, v in params.items()})
    if "eta" in initial:
        return CoordVector("eta", _parse_vector(initial["eta"], "--eta"))
    if "theta" in initial:
        return CoordVector("theta", _parse_vector(initial["theta"], "--theta"))
    raise ConfigError("no initial point: give model parameters, --eta or --theta")


def _load_field(text):
    from .optics import field_from_dict, load_field

    if text is None:
        raise ConfigError("ray flow needs --field")
    if text.lstrip().startswith("{"):
        try:
            return field_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--field: bad JSON ({exc.msg})") from None
    return load_field(text)


def _simulate(args, out, err):
    run, initial, integ, output = _merge_simulate(args)
    flow = run.get("flow")
    if flow not in FLOWS:
        raise ConfigError(f"--flow must be one of {', '.join(FLOWS)}")
    cfg = _integrator(integ)
    fmt = output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")

    if flow == "ray":
        from .optics import RayState, normalize_momentum, ray_conservation_check, ray_trace

        field = _load_field(run.get("field"))
        param, span = _span(run, ("s", "tau", "t"))
        if "q" not in initial:
            raise ConfigError("ray flow needs --q")
        q = _parse_vector(initial["q"], "--q")
        if "direction" in initial:
            state = normalize_momentum(field, q, _parse_vector(initial["direction"], "--direction"))
        elif "p" in initial:
            state = RayState(q, _parse_vector(initial["p"], "--p"))
        else:
            raise ConfigError("ray flow needs --p or --direction")

        def drift(traj):
            return "energy", ray_conservation_check(traj, field)[1]

        return _finish(lambda: ray_trace(field, state, param, span, cfg), drift, output, fmt, out, err)

    model_id = run.get("model")
    if not model_id:
        raise ConfigError("--model is required")

    if flow == "replicator":
        from .replicator import simulate_replicator

        if not model_id.startswith("finite:"):
            raise ConfigError("replicator flow needs a finite family: --model finite:<stats.json>")
        family = load_finite_family(model_id[len("finite:"):])
        param, span = _span(run, ("t",))
        if "theta" not in initial:
            raise ConfigError("replicator flow needs --theta")
        theta0 = _parse_vector(initial["theta"], "--theta")
        if theta0.size != family.dim:
            raise ConfigError(f"--theta needs {family.dim} values")
        holder = {}

        def produce():
            holder["run"] = simulate_replicator(family, theta0, span, cfg)
            return holder["run"].trajectory()

        return _finish(produce, lambda traj: ("two_route_gap", holder["run"].max_gap()), output, fmt, out, err)

    model = get_model(model_id)
    start = _model_start(model, initial)
    model.require(start)

    if flow in ("gradient_eta", "gradient_theta"):
        chart = flow.split("_")[1]
        _, span = _span(run, ("t",))
        theta, eta = model.dual_pair(start)
        x0 = CoordVector(chart, eta if chart == "eta" else theta)

        def drift(traj):
            if chart == "eta":
                ref = traj.theta[0][None, :] * np.exp(-(traj.t - traj.t[0]))[:, None]
                return "linearization", float(np.max(np.abs(traj.theta - ref)))
            ref = traj.eta[0][None, :] * np.exp(traj.t - traj.t[0])[:, None]
            return "linearization", float(np.max(np.abs(traj.eta - ref)))

        return _finish(lambda: gradient_flow(model, x0, span, cfg), drift, output, fmt, out, err)

    chart = run.get("chart", "eta")
    if chart not in ("eta", "theta"):
        raise ConfigError("--chart must be eta or theta")
    state0 = start
    if "eta" in initial and "theta" in initial:
        # explicitly decoupled momenta
        state0 = (_parse_vector(initial["eta"], "--eta"), _parse_vector(initial["theta"], "--theta"))
    if flow == "geodesic":
        spec = ig_geodesic_spec(model, chart)
        _, span = _span(run, ("tau",))
        produce = lambda: geodesic_flow(spec, state0, span, cfg)  # noqa: E731
    else:
        spec = ig_natural_spec(model, chart)
        _, span = _span(run, ("t",))
        produce = lambda: natural_flow_t(spec, state0, span, cfg)  # noqa: E731

    def drift(traj):
        q, p = (traj.theta, traj.eta) if chart == "theta" else (traj.eta, -traj.theta)
        values = [hamiltonian_value(spec, a, b) for a, b in zip(q, p)]
        return "hamiltonian", float(max(values) - min(values))

    return _finish(produce, drift, output, fmt, out, err)


def _finish(produce, drift, output, fmt, out, err):
    traj = produce()
    code = 3 if traj.exited else 0
    text = traj.to_csv() if fmt == "csv" else traj.to_json()
    path = output.get("path")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        out.write(text)
    final = traj.position()[-1]
    name, value = drift(traj)
    summary = (
        f"samples={len(traj)} final_{traj.chart}={_vec(final)} "
        f"{name}_drift={_fmt(value)}"
    )
    if code == 3:
        print(f"error: flow left the domain at t={_fmt(traj.t[-1])}; partial trajectory written", file=err)
    print(summary, file=err if not path else out)
    return code


# --------------------------------------------------------------------------


def _verify(args, out):
    from .verify import reports_to_jsonl, run_suite

    seed = args.seed
    if seed is None:
        env = os.environ.get("IGFLOW_SEED")
        try:
            seed = int(env) if env is not None else 1
        except ValueError:
            raise ConfigError(f"IGFLOW_SEED must be an integer, got {env!r}") from None
    integ = {k: getattr(args, k) for k in ("method", "step", "abs_tol", "rel_tol", "max_steps", "domain_guard")
             if getattr(args, k) is not None}
    cfg = _integrator(integ)
    model = get_model(args.model)
    reports = run_suite(args.model, seed, cfg, model=model, points=args.points)
    text = reports_to_jsonl(reports)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        out.write(text)
    return 0 if all(r.passed for r in reports) else 1


def _convert(args, out):
    model = get_model(args.model)
    if args.params is not None:
        if model.from_params is None:
            raise ConfigError(f"{model.name} has no named parameters")
        params = _parse_params(args.params)
        if set(params) != set(model.param_names):
            raise ConfigError(f"{model.name} parameters must be {sorted(model.param_names)}")
        x = model.from_params(params)
    elif args.eta is not None:
        x = CoordVector("eta", _parse_vector(args.eta, "--eta"))
    else:
        x = CoordVector("theta", _parse_vector(args.theta, "--theta"))
    theta, eta = model.dual_pair(x)
    n = refractive_index(model, CoordVector("eta", eta))
    n_star = refractive_index(model, CoordVector("theta", theta))
    lines = [
        f"theta={_vec(theta)}",
        f"eta={_vec(eta)}",
        f"psi={_fmt(model.psi(theta))}",
        f"psi_star={_fmt(model.psi_star(eta))}",
        f"n={_fmt(n)}",
        f"n_star={_fmt(n_star)}",
    ]
    if model.to_params is not None:
        params = model.to_params(CoordVector("theta", theta))
        lines.append(",".join(f"{k}={_fmt(v)}" for k, v in params.items()))
    out.write("\n".join(lines) + "\n")
    return 0


def _models(out):
    for name, factory in BUILTIN_MODELS.items():
        model = factory()
        out.write(f"{name}\tdim={model.dim}\tparams={','.join(model.param_names)}\n")
    out.write("finite:<path>\tdim=m\tparams=theta (JSON file with a K x m 'stats' array)\n")
    return 0


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        if args.command == "simulate":
            return _simulate(args, out, err)
        if args.command == "verify":
            return _verify(args, out)
        if args.command == "convert":
            return _convert(args, out)
        return _models(out)
    except (DomainExit, StepLimit, TurningPointError) as exc:
        print(f"error: {_one_line(exc)}", file=err)
        return 3
    except UnknownModel as exc:
        print(f"error: unknown model {exc.args[0]!r}; try 'igflow models'", file=err)
        return 2
    except (ConfigError, IGFlowError, ValueError, OSError, KeyError) as exc:
        print(f"error: {_one_line(exc)}", file=err)
        return 2


def _one_line(exc):
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
