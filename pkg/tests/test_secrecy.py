import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simsec.em import (
    PhaseTensor,
    SystemConfig,
    build_correlation,
    build_geometry,
    build_propagation,
    sample_scenario,
)
from simsec.linalg import SeededRng
from simsec.secrecy import (
    GradientBundle,
    PowerAmplitudes,
    effective_gains,
    evaluate,
    fd_gradient,
    gain_weights,
    grad_phase,
    grad_power,
    gradient_bundle,
    secrecy_rates,
    sinr_all,
)


def make_instance(seed, k_users=2, m_layers=2, nx=3, ny=3, weights=None):
    cfg = SystemConfig(
        n_users=k_users, n_layers=m_layers, nx=nx, ny=ny,
        total_power_w=2.0, weights=weights,
    )
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    corr = build_correlation(geom)
    chs = sample_scenario(cfg, geom, corr, SeededRng(seed))
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0, 2 * np.pi, size=(m_layers, geom.n_atoms))
    a = rng.uniform(0.2, 1.0, size=k_users)
    return cfg, prop, chs, PhaseTensor(phi), PowerAmplitudes(a)


def test_sinr_hand_computed_two_users():
    # gains chosen so every sum is exact by hand
    c_full = np.array(
        [
            [2.0, 1.0j],
            [0.5, np.sqrt(2) * np.exp(0.3j)],
            [1.0, 0.5],
        ],
        dtype=complex,
    )
    p = np.array([2.0, 1.0])
    sinr_u, sinr_e, terms = sinr_all(c_full, p, np.array([0.5, 0.5]), 0.25)
    # user 0: own 4*2=8, interference 1*1 + 0.5 = 1.5
    # user 1: own 2*1=2, interference 0.25*2 + 0.5 = 1.0
    assert sinr_u == pytest.approx([8 / 1.5, 2.0])
    # eve on stream 0: 1*2 / (0.25*1 + 0.25) = 4
    # eve on stream 1: 0.25*1 / (1*2 + 0.25) = 1/9
    assert sinr_e == pytest.approx([4.0, 1 / 9])
    assert terms.total_eve == pytest.approx(2.5)
    assert terms.own_gains == pytest.approx([4.0, 2.0])

    report = secrecy_rates(sinr_u, sinr_e, terms, np.array([1.0, 0.5]))
    r0 = np.log2(1 + 8 / 1.5) - np.log2(5.0)
    r1 = np.log2(3.0) - np.log2(10 / 9)
    assert report.rates == pytest.approx([r0, r1])
    assert report.wssr == pytest.approx(r0 + 0.5 * r1)
    assert report.active.all()


def test_clamp_zeroes_rate_and_gradient():
    # stream 0 is overheard with a much larger gain than the user's own,
    # so its secrecy rate clamps to zero
    c_full = np.array(
        [
            [0.1, 0.0],
            [0.0, 1.0],
            [5.0, 0.1],
        ],
        dtype=complex,
    )
    p = np.array([1.0, 1.0])
    sinr_u, sinr_e, terms = sinr_all(c_full, p, np.array([1e-2, 1e-2]), 1e-2)
    report = secrecy_rates(sinr_u, sinr_e, terms, np.ones(2))
    assert not report.active[0] and report.active[1]
    assert report.rates[0] == 0.0
    assert report.margins[0] < 0
    assert report.wssr == pytest.approx(report.rates[1])

    # an inactive user contributes nothing: doubling its weight changes nothing
    report2 = secrecy_rates(sinr_u, sinr_e, terms, np.array([2.0, 1.0]))
    assert report2.wssr == report.wssr
    g1 = grad_power(report, PowerAmplitudes(np.sqrt(p)))
    g2 = grad_power(report2, PowerAmplitudes(np.sqrt(p)))
    assert np.array_equal(g1, g2)


def _fd_check(cfg, prop, chs, phases, amps, step=1e-6, tol=1e-5):
    """Compare analytic gradients with central differences.

    Coordinates whose clamp pattern differs between the two evaluation
    points are excluded (the objective is not differentiable there).
    """
    bundle = gradient_bundle(cfg, phases, prop, chs, amps)
    m, n = phases.phi.shape
    k = amps.a.size

    def value_and_active(phi_flat, a):
        pt = PhaseTensor(np.mod(phi_flat.reshape(m, n), 2 * np.pi))
        rep = evaluate(cfg, pt, prop, chs, PowerAmplitudes(a))
        return rep.wssr, rep.active.copy()

    x0 = np.concatenate([phases.phi.ravel(), amps.a])
    analytic = np.concatenate([bundle.d_phi.ravel(), bundle.d_amp])
    fd = np.zeros_like(x0)
    ok = np.ones(x0.size, dtype=bool)
    for i in range(x0.size):
        x = x0.copy()
        x[i] = x0[i] + step
        hi, act_hi = value_and_active(x[: m * n], x[m * n:])
        x[i] = x0[i] - step
        lo, act_lo = value_and_active(x[: m * n], x[m * n:])
        fd[i] = (hi - lo) / (2 * step)
        ok[i] = np.array_equal(act_hi, act_lo)

    assert ok.mean() > 0.8
    scale = np.maximum(np.abs(fd), 1e-9 * max(1.0, np.max(np.abs(fd))))
    rel = np.abs(analytic - fd) / scale
    assert np.max(rel[ok]) < tol
    return bundle


def test_grad_fd_two_layers():
    cfg, prop, chs, phases, amps = make_instance(101)
    _fd_check(cfg, prop, chs, phases, amps)


def test_grad_fd_single_layer():
    cfg, prop, chs, phases, amps = make_instance(202, m_layers=1)
    _fd_check(cfg, prop, chs, phases, amps)


def test_grad_fd_three_layers_three_users():
    cfg, prop, chs, phases, amps = make_instance(303, k_users=3, m_layers=3)
    _fd_check(cfg, prop, chs, phases, amps)


def test_grad_fd_nonuniform_weights():
    cfg, prop, chs, phases, amps = make_instance(404, weights=np.array([1.0, 0.25]))
    _fd_check(cfg, prop, chs, phases, amps)


def test_gradient_bundle_consistent_with_parts():
    cfg, prop, chs, phases, amps = make_instance(7)
    bundle = gradient_bundle(cfg, phases, prop, chs, amps)
    report = evaluate(cfg, phases, prop, chs, amps)
    assert isinstance(bundle, GradientBundle)
    assert bundle.wssr == report.wssr
    assert np.array_equal(bundle.d_amp, grad_power(report, amps))
    assert np.array_equal(bundle.d_phi, grad_phase(report, phases, prop, chs, amps))


def test_gain_weights_contract_to_power_gradient():
    # the dF/dE weights contracted against E recover p * dF/dp
    cfg, prop, chs, phases, amps = make_instance(11)
    report = evaluate(cfg, phases, prop, chs, amps)
    omega = gain_weights(report, amps.powers)
    c_full = effective_gains(phases, prop, chs)
    e_full = np.abs(c_full) ** 2
    contracted = (omega * e_full).sum(axis=0)
    d_p = grad_power(report, amps) / (2.0 * amps.a)
    assert contracted == pytest.approx(amps.powers * d_p, rel=1e-10)


def test_wssr_layer_global_phase_invariance():
    cfg, prop, chs, phases, amps = make_instance(13, m_layers=3)
    base = evaluate(cfg, phases, prop, chs, amps).wssr
    shifted = np.mod(phases.phi + np.array([[0.7], [1.9], [5.1]]), 2 * np.pi)
    after = evaluate(cfg, PhaseTensor(shifted), prop, chs, amps).wssr
    assert after == pytest.approx(base, rel=1e-9)


def test_wssr_power_noise_scale_invariance():
    cfg, prop, chs, phases, amps = make_instance(17)
    base = evaluate(cfg, phases, prop, chs, amps).wssr
    scale = 10.0 ** 0.7
    cfg2 = SystemConfig(
        n_users=2, n_layers=2, nx=3, ny=3, total_power_w=2.0 * scale,
        noise_user_w=cfg.noise_users * scale, noise_eve_w=cfg.noise_eve * scale,
    )
    amps2 = PowerAmplitudes(amps.a * np.sqrt(scale))
    after = evaluate(cfg2, phases, prop, chs, amps2).wssr
    assert after == pytest.approx(base, rel=1e-9)


def test_fd_gradient_on_quadratic():
    # sanity of the checker itself on f(x) = sum(c * x^2)
    c = np.array([1.0, -2.0, 0.5])
    g = fd_gradient(lambda x: float(c @ (x**2)), np.array([1.0, 2.0, -1.0]), step=1e-6)
    assert g == pytest.approx(2 * c * np.array([1.0, 2.0, -1.0]), rel=1e-8)


def test_qos_margin_reported():
    cfg, prop, chs, phases, amps = make_instance(19)
    report = evaluate(cfg, phases, prop, chs, amps)
    assert report.qos_margin is None
    cfg.qos_min_rate = np.array([0.1, 0.1])
    report2 = evaluate(cfg, phases, prop, chs, amps)
    assert report2.qos_margin == pytest.approx(report2.rate_users - 0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_wssr_nonnegative_and_bounded_by_user_rates(seed):
    cfg, prop, chs, phases, amps = make_instance(seed)
    report = evaluate(cfg, phases, prop, chs, amps)
    assert report.wssr >= 0.0
    assert np.all(report.rates >= 0.0)
    assert np.all(report.rates <= report.rate_users + 1e-12)
    assert report.wssr <= float(report.weights @ report.rate_users) + 1e-9
