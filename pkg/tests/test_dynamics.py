import io
import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from igflow import (
    CoordVector,
    DomainExit,
    FiniteExpFamily,
    GridMismatch,
    HamiltonianSpec,
    IntegratorConfig,
    ModelMismatch,
    NonMonotone,
    Trajectory,
    TurningPointError,
    consistency_residual,
    gamma_params_of_eta,
    geodesic_flow,
    gradient_flow,
    hamiltonian_value,
    ig_geodesic_spec,
    ig_natural_spec,
    integrability_products,
    jm_transform,
    linear_flow,
    linear_flow_closed_form,
    natural_flow_t,
    read_csv,
    reparametrize,
)

LN2 = math.log(2.0)


# ---------------------------------------------------------------- gradient flows


def test_gaussian_eta_flow_closed_form(gaussian):
    # mu is constant and sigma2(t) = sigma2(0) e^t
    traj = gradient_flow(gaussian, gaussian.from_params({"mu": 1.0, "sigma2": 1.0}), (0.0, LN2))
    np.testing.assert_allclose(traj.eta[-1], [1.0, 3.0], atol=1e-6)
    assert np.max(np.abs(traj.eta[:, 0] - 1.0)) < 1e-9
    s2 = traj.eta[:, 1] - traj.eta[:, 0] ** 2
    np.testing.assert_allclose(s2, np.exp(traj.t), rtol=1e-9)
    # constant index 1/sqrt(2): s = t / sqrt(2), tau = t / 2
    np.testing.assert_allclose(traj.s, traj.t / math.sqrt(2.0), atol=1e-12)
    np.testing.assert_allclose(traj.tau, traj.t / 2.0, atol=1e-12)


def test_gamma_eta_flow_closed_form(gamma):
    # beta = beta0 e^-t and nu = 1 + (nu0 - 1) e^-t
    traj = gradient_flow(gamma, CoordVector("eta", gamma.dual_pair(gamma.from_params({"beta": 2.0, "nu": 3.0}))[1]),
                         (0.0, LN2))
    params = np.array([gamma_params_of_eta(e) for e in traj.eta])
    np.testing.assert_allclose(params[-1], [1.0, 2.0], atol=1e-6)
    np.testing.assert_allclose(params[:, 0], 2.0 * np.exp(-traj.t), rtol=1e-9)
    ratio = (params[:, 1] - 1.0) / params[:, 0]
    assert np.max(np.abs(ratio - ratio[0])) < 1e-8


def test_gamma_tau_column_against_quadrature(gamma):
    x = gamma.from_params({"beta": 2.0, "nu": 3.0})
    traj = gradient_flow(gamma, CoordVector("eta", gamma.dual_pair(x)[1]), (0.0, 1.0))

    def n2(t):
        nu = 1.0 + 2.0 * math.exp(-t)
        return 2.0 - nu + float(mpmath.polygamma(1, nu)) * (nu - 1.0) ** 2

    tau, _ = quad(n2, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
    s, _ = quad(lambda t: math.sqrt(n2(t)), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
    assert abs(traj.tau[-1] - tau) < 1e-9
    assert abs(traj.s[-1] - s) < 1e-9


def test_theta_flow_linear_growth_and_exit(gaussian):
    start = gaussian.from_params({"mu": 1.0, "sigma2": 4.0})
    th, _ = gaussian.dual_pair(start)
    traj = gradient_flow(gaussian, CoordVector("theta", th), (0.0, 1.5))
    np.testing.assert_allclose(traj.eta, np.array([1.0, 5.0])[None, :] * np.exp(traj.t)[:, None], rtol=1e-9)
    with pytest.raises(DomainExit) as info:
        gradient_flow(gaussian, CoordVector("theta", th), (0.0, 2.0))
    ts, _ = info.value.partial
    assert abs(ts[-1] - math.log(5.0)) < 1e-2
    cut = gradient_flow(gaussian, CoordVector("theta", th), (0.0, 2.0),
                        IntegratorConfig(domain_guard="truncate_trajectory"))
    assert cut.exited and cut.t[-1] < math.log(5.0)


def test_theta_flow_fixed_point_where_eta_vanishes():
    fam = FiniteExpFamily([[-1.0], [1.0]])
    model = fam.descriptor()
    traj = gradient_flow(model, CoordVector.theta(0.0), (0.0, 1.0))
    assert np.max(np.abs(traj.theta)) == 0.0 and np.max(np.abs(traj.eta)) < 1e-15


def test_gradient_flow_rejects_outside_domain(gaussian):
    from igflow import DomainError

    with pytest.raises(DomainError):
        gradient_flow(gaussian, CoordVector.eta(1.0, 0.5), (0.0, 1.0))


@pytest.mark.parametrize(
    "x0,t,expected",
    [
        (CoordVector.theta(1.0, -0.5), 1.0, [math.exp(-1), -0.5 * math.exp(-1)]),
        (CoordVector.eta(2.0, 0.0), math.log(3.0), [6.0, 0.0]),
        (CoordVector.eta(0.3, -4.0), 0.0, [0.3, -4.0]),
    ],
)
def test_linear_closed_form(x0, t, expected):
    out = linear_flow_closed_form(x0, t)
    assert out.chart == x0.chart
    np.testing.assert_allclose(out.values, expected, rtol=1e-15, atol=1e-15)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_linearization_property(mu, s2):
    from igflow import gaussian_model

    model = gaussian_model()
    x = model.from_params({"mu": mu, "sigma2": s2})
    traj = gradient_flow(model, x, (0.0, 0.5))
    th0 = traj.theta[0]
    assert np.max(np.abs(traj.theta - th0 * np.exp(-traj.t)[:, None])) < 1e-6


# ---------------------------------------------------------------- Hamiltonian flows


def _h_tilde(spec, traj):
    return np.array([hamiltonian_value(spec, q, -th) for q, th in zip(traj.eta, traj.theta)])


def test_geodesic_conservation_gaussian(gaussian):
    spec = ig_geodesic_spec(gaussian)
    traj = geodesic_flow(spec, gaussian.from_params({"mu": 0.0, "sigma2": 1.0}), (0.0, 1.0))
    h = _h_tilde(spec, traj)
    assert abs(h[0] - 1.0) < 1e-14
    assert np.max(np.abs(h - h[0])) < 1e-8
    # g~ = g / n^2 = 2 g for the gaussian
    np.testing.assert_allclose(spec.cometric(traj.eta[0]), 2.0 * gaussian.metric_lower_eta(traj.eta[0]))


def test_geodesic_gamma_ratio_invariant(gamma):
    spec = ig_geodesic_spec(gamma)
    x = gamma.from_params({"beta": 2.0, "nu": 3.0})
    traj = geodesic_flow(spec, x, (0.0, 1.0))
    params = np.array([gamma_params_of_eta(e) for e in traj.eta])
    ratio = (params[:, 1] - 1.0) / params[:, 0]
    assert np.max(np.abs(ratio - ratio[0])) < 1e-8
    assert np.max(np.abs(_h_tilde(spec, traj) - 1.0)) < 1e-8
    assert consistency_residual(traj, gamma) < 1e-8


def test_geodesic_zero_span(gaussian):
    spec = ig_geodesic_spec(gaussian)
    x = gaussian.from_params({"mu": 0.5, "sigma2": 2.0})
    traj = geodesic_flow(spec, x, (0.0, 0.0))
    assert len(traj) == 1
    th, et = gaussian.dual_pair(x)
    np.testing.assert_array_equal(traj.eta[0], et)
    np.testing.assert_array_equal(traj.theta[0], th)


def test_geodesic_decoupled_momenta_records_h(gaussian):
    spec = ig_geodesic_spec(gaussian)
    eta = np.array([0.0, 1.0])
    theta = np.array([0.3, -0.9])
    traj = geodesic_flow(spec, (eta, theta), (0.0, 0.5))
    h = _h_tilde(spec, traj)
    assert abs(h[0] - 1.0) > 0.1
    assert np.max(np.abs(h - h[0])) < 1e-8


def test_geodesic_flow_needs_geodesic_spec(gaussian):
    with pytest.raises(ModelMismatch):
        geodesic_flow(ig_natural_spec(gaussian), gaussian.from_params({"mu": 0, "sigma2": 1}), (0, 1))
    with pytest.raises(ModelMismatch):
        natural_flow_t(ig_geodesic_spec(gaussian), gaussian.from_params({"mu": 0, "sigma2": 1}), (0, 1))


def test_natural_flow_theta_decay(gaussian, gamma):
    for model, x in ((gaussian, gaussian.from_params({"mu": 0.4, "sigma2": 1.5})),
                     (gamma, gamma.from_params({"beta": 2.0, "nu": 3.0}))):
        traj = natural_flow_t(ig_natural_spec(model), x, (0.0, 1.0))
        assert np.max(np.abs(traj.theta - traj.theta[0] * np.exp(-traj.t)[:, None])) < 1e-6
        assert consistency_residual(traj, model) < 1e-8


def test_gaussian_natural_force_is_pure_metric_term(gaussian):
    spec = ig_natural_spec(gaussian)
    for eta in ([0.0, 1.0], [2.0, 7.0], [-1.0, 1.5]):
        assert np.max(np.abs(spec.potential_grad(np.array(eta)))) < 1e-14


def test_natural_zero_span(gaussian):
    traj = natural_flow_t(ig_natural_spec(gaussian), gaussian.from_params({"mu": 0, "sigma2": 1}), (0.0, 0.0))
    assert len(traj) == 1


@pytest.mark.parametrize("which", ["gaussian", "gamma"])
def test_path_equivalence_geodesic_vs_natural(which, gaussian, gamma):
    model = gaussian if which == "gaussian" else gamma
    x = model.sample(np.random.default_rng(5))
    geo = geodesic_flow(ig_geodesic_spec(model), x, (0.0, 1.0))
    nat = natural_flow_t(ig_natural_spec(model), x, (0.0, float(geo.t[-1])))
    again = reparametrize(nat, "t", "tau", grid=np.clip(geo.tau, nat.tau[0], nat.tau[-1]))
    assert np.max(np.abs(again.eta - geo.eta)) < 1e-6
    assert np.max(np.abs(again.t - geo.t)) < 1e-6


# ---------------------------------------------------------------- JM transform


def _optics_like(index, grad, energy=0.0, form="relativistic"):
    return HamiltonianSpec(
        kind="natural_optics", dim=2, form=form,
        cometric=lambda q: np.eye(2), cometric_grad=lambda q: np.zeros((2, 2, 2)),
        index=index, potential=lambda q: -index(q), potential_grad=lambda q: -grad(q), energy=energy,
        chart="q",
    )


def test_jm_optics_example():
    nat = _optics_like(lambda q: 1.0 + 0.1 * q[0], lambda q: np.array([0.1, 0.0]))
    geo, rate = jm_transform(nat, 0.0)
    q = np.array([2.0, -1.0])
    np.testing.assert_allclose(geo.cometric(q), np.eye(2) / 1.2 ** 2)
    assert abs(rate(q) - 1.2) < 1e-15
    # analytic derivative of g/n^2 against finite differences
    h = 1e-6
    fd = (geo.cometric(q + [h, 0]) - geo.cometric(q - [h, 0])) / (2 * h)
    np.testing.assert_allclose(geo.cometric_grad(q)[0], fd, atol=1e-8)


def test_jm_identity_for_unit_gap():
    nat = HamiltonianSpec(
        kind="natural_optics", dim=2, form="relativistic",
        cometric=lambda q: np.diag([1.0, 3.0]), cometric_grad=lambda q: np.zeros((2, 2, 2)),
        index=lambda q: 1.0, potential=lambda q: 0.0, potential_grad=lambda q: np.zeros(2), energy=1.0,
    )
    geo, rate = jm_transform(nat)
    np.testing.assert_allclose(geo.cometric(np.zeros(2)), np.diag([1.0, 3.0]))
    assert rate(np.zeros(2)) == 1.0


def test_jm_of_ig_natural_reproduces_geodesic(gaussian, gamma):
    for model in (gaussian, gamma):
        geo_jm, rate = jm_transform(ig_natural_spec(model), 0.0)
        geo = ig_geodesic_spec(model)
        for _ in range(5):
            _, eta = model.dual_pair(model.sample(np.random.default_rng(11)))
            np.testing.assert_allclose(geo_jm.cometric(eta), geo.cometric(eta), rtol=1e-13)
            np.testing.assert_allclose(geo_jm.cometric_grad(eta), geo.cometric_grad(eta), rtol=1e-10, atol=1e-12)
    _, eta = gaussian.dual_pair(gaussian.from_params({"mu": 1.0, "sigma2": 2.0}))
    geo_jm, rate = jm_transform(ig_natural_spec(gaussian), 0.0)
    np.testing.assert_allclose(geo_jm.cometric(eta), 2.0 * gaussian.metric_lower_eta(eta))
    assert abs(rate(eta) - 0.5) < 1e-15  # dtau = n^2 dt


def test_jm_turning_point():
    nat = _optics_like(lambda q: 1.0 - q[0], lambda q: np.array([-1.0, 0.0]))
    geo, rate = jm_transform(nat, 0.0)
    with pytest.raises(TurningPointError):
        geo.cometric(np.array([1.5, 0.0]))
    with pytest.raises(TurningPointError):
        rate(np.array([1.0, 0.0]))


def test_jm_rejects_geodesic_input(gaussian):
    with pytest.raises(ValueError):
        jm_transform(ig_geodesic_spec(gaussian))


# ---------------------------------------------------------------- reparametrization


def test_reparametrize_gaussian_t_to_s(gaussian):
    traj = gradient_flow(gaussian, gaussian.from_params({"mu": 1.0, "sigma2": 1.0}), (0.0, 1.0))
    out = reparametrize(traj, "t", "s", gaussian)
    np.testing.assert_allclose(out.s, np.linspace(0.0, 1.0 / math.sqrt(2.0), len(traj)), atol=1e-12)
    np.testing.assert_allclose(out.t, out.s * math.sqrt(2.0), atol=1e-10)
    # t - ln sigma2 is constant on the resampled path as well
    s2 = out.eta[:, 1] - out.eta[:, 0] ** 2
    assert np.max(np.abs(out.t - np.log(s2))) < 1e-8


def test_reparametrize_gamma_dt_is_minus_dlnbeta(gamma):
    x = gamma.from_params({"beta": 2.0, "nu": 3.0})
    traj = gradient_flow(gamma, CoordVector("eta", gamma.dual_pair(x)[1]), (0.0, 1.0))
    out = reparametrize(traj, "t", "tau", gamma)
    betas = np.array([gamma_params_of_eta(e)[0] for e in out.eta])
    inv = out.t + np.log(betas)
    assert np.max(np.abs(inv - inv[0])) < 1e-8
    # the quadrature tau agrees with the integrated column
    np.testing.assert_allclose(reparametrize(traj, "t", "tau").tau, out.tau, atol=1e-9)


def test_reparametrize_non_monotone():
    t = np.array([0.0, 0.1, 0.1, 0.3])
    traj = Trajectory(t=t, s=t, tau=t, theta=np.zeros((4, 1)), eta=np.zeros((4, 1)))
    with pytest.raises(NonMonotone):
        reparametrize(traj, "t", "s")
    t = np.array([0.0, 0.1, 0.2, 0.3])
    traj = Trajectory(t=t, s=np.array([0, 1, 0.5, 2.0]), tau=t, theta=np.zeros((4, 1)), eta=np.zeros((4, 1)))
    with pytest.raises(NonMonotone):
        reparametrize(traj, "t", "s")


# ---------------------------------------------------------------- integrability


def _paired(theta0, eta0, span=(0.0, 5.0)):
    a = linear_flow(CoordVector("theta", theta0), span)
    b = linear_flow(CoordVector("eta", eta0), span)
    return integrability_products(a, b)


def test_integrability_examples():
    c = _paired([1.0, 1.0], [-1.0, -1.0])
    assert np.max(np.abs(c + 1.0)) < 1e-12
    c = _paired([2.0, 3.0], [1.0, 1.0])
    assert np.max(np.abs(c - [2.0, 3.0])) < 1e-12
    c = _paired([0.0, 3.0], [1.0, 1.0])
    assert np.all(c[:, 0] == 0.0)


def test_integrability_grid_mismatch():
    a = linear_flow(CoordVector.theta(1.0), (0.0, 1.0))
    b = linear_flow(CoordVector.eta(1.0), (0.0, 1.0), IntegratorConfig(step=2e-3))
    with pytest.raises(GridMismatch):
        integrability_products(a, b)


# ---------------------------------------------------------------- export


def test_csv_header_and_roundtrip(gaussian):
    traj = gradient_flow(gaussian, gaussian.from_params({"mu": 1.0, "sigma2": 1.0}), (0.0, 0.01))
    text = traj.to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,s,tau,theta_1,theta_2,eta_1,eta_2"
    assert len(lines) == len(traj) + 1
    back = read_csv(io.StringIO(text))
    for name in ("t", "s", "tau", "theta", "eta"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    assert all(len(v.lstrip("-").replace(".", "").replace("e-", "").replace("e+", "")) <= 20
               for v in lines[-1].split(","))


def test_json_export(gaussian, tmp_path):
    traj = gradient_flow(gaussian, gaussian.from_params({"mu": 1.0, "sigma2": 1.0}), (0.0, 0.005))
    path = tmp_path / "traj.json"
    traj.to_json(path)
    doc = json.loads(path.read_text())
    assert doc["driver"] == "gradient_eta"
    assert len(doc["samples"]) == len(traj)
    first = doc["samples"][0]
    assert set(first) == {"t", "s", "tau", "theta", "eta"}
    assert first["eta"] == [1.0, 2.0]
    sample = traj.samples[-1]
    assert sample.t == traj.t[-1]


def test_parameters_are_co_monotone(gamma):
    x = gamma.from_params({"beta": 1.0, "nu": 2.5})
    traj = gradient_flow(gamma, CoordVector("eta", gamma.dual_pair(x)[1]), (0.0, 1.0))
    for col in (traj.t, traj.s, traj.tau):
        assert np.all(np.diff(col) > 0)
