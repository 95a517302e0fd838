"""Secrecy-rate objective and its analytic gradients.

The transmitter sends one stream per user through the layered surface;
receiver r (users 0..K-1, then the eavesdropper) observes stream t with
complex gain c[r, t] = h_r^H G w_feed[:, t].  Everything here is a
function of the squared magnitudes E = |c|^2 and the per-stream powers,
so gradients factor into dF/dE weights (one scalar per receiver/stream
pair) chained through the cascade.  That chain rule is what keeps the
phase gradient at O(M (2K+1) N^2), the same order as a forward pass.

Rates are in bits per channel use.  A user whose rate margin is
strictly negative is clamped to zero and contributes no gradient; at
exactly zero the unclamped derivative is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em import ChannelSet, PhaseTensor, PropagationSet

LN2 = float(np.log(2.0))


@dataclass
class PowerAmplitudes:
    """Amplitude parametrization of the per-user transmit powers, p = a^2."""

    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.ndim != 1:
            raise ValueError(f"amplitudes must be a vector, got shape {self.a.shape}")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("amplitudes contain non-finite entries")

    @property
    def powers(self) -> np.ndarray:
        return self.a**2

    @property
    def total(self) -> float:
        return float(np.sum(self.a**2))


@dataclass
class InterferenceTerms:
    """Squared link gains and the per-user interference decomposition."""

    gains_users: np.ndarray    # (K, K): E[k, t] = |h_k^H G w_feed_t|^2
    gains_eve: np.ndarray      # (K,):   |h_e^H G w_feed_t|^2
    interference_users: np.ndarray  # (K,) I_k, co-stream power + noise at user k
    interference_eve: np.ndarray    # (K,) I_e^(k), same at the eavesdropper
    total_users: np.ndarray    # (K,) I_k + p_k * own gain
    total_eve: float           # all-stream power + noise at the eavesdropper

    @property
    def own_gains(self) -> np.ndarray:
        return np.diag(self.gains_users)


@dataclass
class SecrecyReport:
    """Rates and SINRs of one (phases, powers, channels) evaluation."""

    sinr_users: np.ndarray   # (K,)
    sinr_eve: np.ndarray     # (K,) eavesdropper SINR on stream k
    rate_users: np.ndarray   # (K,) log2(1 + sinr_users)
    rate_eve: np.ndarray     # (K,)
    margins: np.ndarray      # (K,) rate_users - rate_eve, before clamping
    rates: np.ndarray        # (K,) clamped secrecy rates
    active: np.ndarray       # (K,) bool, margin >= 0
    weights: np.ndarray      # (K,)
    wssr: float
    terms: InterferenceTerms
    qos_margin: np.ndarray | None = None  # rate_users - required rate, if configured


@dataclass
class GradientBundle:
    """WSSR and its analytic gradient at one point."""

    wssr: float
    d_phi: np.ndarray   # (M, N) w.r.t. the phases
    d_amp: np.ndarray   # (K,) w.r.t. the power amplitudes
    report: SecrecyReport


def effective_gains(phases: PhaseTensor, prop: PropagationSet, chs: ChannelSet) -> np.ndarray:
    """Complex stream gains c[r, t] for users 0..K-1 and the eavesdropper."""
    fwd = _forward_fields(phases, prop)[-1] * np.exp(1j * phases.phi[-1])[:, None]
    h_all = np.vstack([chs.h_users, chs.h_eve])
    return h_all.conj() @ fwd


def sinr_all(c_full: np.ndarray, powers: np.ndarray, noise_users: np.ndarray, noise_eve: float):
    """Per-user and per-stream-at-eavesdropper SINRs.

    c_full is the (K+1, K) gain matrix from effective_gains; returns
    (sinr_users, sinr_eve, InterferenceTerms).
    """
    k_users = c_full.shape[1]
    if c_full.shape[0] != k_users + 1:
        raise ValueError(f"expected (K+1, K) gains, got {c_full.shape}")
    powers = np.asarray(powers, dtype=float)
    e_users = np.abs(c_full[:k_users]) ** 2
    e_eve = np.abs(c_full[k_users]) ** 2

    received = e_users @ powers
    own = np.diag(e_users) * powers
    i_users = received - own + noise_users
    total_eve = float(e_eve @ powers + noise_eve)
    i_eve = total_eve - e_eve * powers

    sinr_u = own / i_users
    sinr_e = (e_eve * powers) / i_eve
    terms = InterferenceTerms(
        gains_users=e_users,
        gains_eve=e_eve,
        interference_users=i_users,
        interference_eve=i_eve,
        total_users=received + noise_users,
        total_eve=total_eve,
    )
    return sinr_u, sinr_e, terms


def secrecy_rates(
    sinr_users: np.ndarray,
    sinr_eve: np.ndarray,
    terms: InterferenceTerms,
    weights: np.ndarray,
    qos_min_rate: np.ndarray | None = None,
) -> SecrecyReport:
    """Clamped per-user secrecy rates and their weighted sum."""
    rate_u = np.log1p(sinr_users) / LN2
    rate_e = np.log1p(sinr_eve) / LN2
    margins = rate_u - rate_e
    active = margins >= 0.0
    rates = np.where(active, margins, 0.0)
    weights = np.asarray(weights, dtype=float)
    qos = None if qos_min_rate is None else rate_u - np.asarray(qos_min_rate, dtype=float)
    return SecrecyReport(
        sinr_users=sinr_users,
        sinr_eve=sinr_eve,
        rate_users=rate_u,
        rate_eve=rate_e,
        margins=margins,
        rates=rates,
        active=active,
        weights=weights,
        wssr=float(weights @ rates),
        terms=terms,
        qos_margin=qos,
    )


def evaluate(cfg, phases: PhaseTensor, prop: PropagationSet, chs: ChannelSet, amps: PowerAmplitudes) -> SecrecyReport:
    """End-to-end objective evaluation for one scenario point."""
    c_full = effective_gains(phases, prop, chs)
    sinr_u, sinr_e, terms = sinr_all(c_full, amps.powers, cfg.noise_users, cfg.noise_eve)
    return secrecy_rates(sinr_u, sinr_e, terms, cfg.weight_vector, cfg.qos_min_rate)


def _rate_coefficients(report: SecrecyReport, powers: np.ndarray):
    """Inner derivative factors shared by the power and phase gradients.

    d_u[k, t] multiplies E_users[k, t] and d_e[k, t] multiplies E_eve[t]
    in dWSSR/dp_t; the same factors scaled by p_t give dWSSR/dE.
    """
    t = report.terms
    k_users = len(powers)
    w_active = report.weights * report.active
    off = ~np.eye(k_users, dtype=bool)
    d_u = 1.0 / t.total_users[:, None] - off / t.interference_users[:, None]
    d_e = 1.0 / t.total_eve - off / t.interference_eve[:, None]
    return w_active, d_u, d_e


def grad_power(report: SecrecyReport, amps: PowerAmplitudes) -> np.ndarray:
    """dWSSR/da, chained through p = a^2."""
    powers = amps.powers
    w_active, d_u, d_e = _rate_coefficients(report, powers)
    t = report.terms
    term_u = (w_active[:, None] * d_u * t.gains_users).sum(axis=0)
    term_e = t.gains_eve * (w_active @ d_e)
    d_p = (term_u - term_e) / LN2
    return 2.0 * amps.a * d_p


def gain_weights(report: SecrecyReport, powers: np.ndarray) -> np.ndarray:
    """dWSSR/dE as a (K+1, K) matrix over receivers x streams.

    Any objective expressible through the squared gains can reuse
    grad_phase_from_weights with its own weight matrix.
    """
    w_active, d_u, d_e = _rate_coefficients(report, powers)
    omega_users = (w_active[:, None] / LN2) * powers[None, :] * d_u
    omega_eve = -(powers / LN2) * (w_active @ d_e)
    return np.vstack([omega_users, omega_eve])


def _forward_fields(phases: PhaseTensor, prop: PropagationSet) -> list:
    """Stream fields arriving at each layer, before that layer's phases.

    fields[m-1] has shape (N, K): column t is the field of stream t at
    the input of layer m.
    """
    fields = [prop.w_feed]
    for m in range(2, prop.n_layers + 1):
        shifted = np.exp(1j * phases.phi[m - 2])[:, None] * fields[-1]
        fields.append(prop.w_layers[m - 2] @ shifted)
    return fields


def grad_phase_from_weights(
    phases: PhaseTensor,
    prop: PropagationSet,
    chs: ChannelSet,
    omega: np.ndarray,
) -> np.ndarray:
    """Phase gradient of any objective with dF/dE weight matrix omega.

    Factors the cascade around each layer: with c = sum_n l[r, n]
    e^{j phi} rho[n, t], the derivative in phi_m^n is
    2 Re(j e^{j phi_m^n} s_n) with s = sum_{r, t} l[r, n] T[r, t] rho[n, t]
    and T = omega * conj(c).
    """
    m_layers, n_atoms = phases.phi.shape
    fwd = _forward_fields(phases, prop)

    h_all = np.vstack([chs.h_users, chs.h_eve])
    back = h_all.conj()
    backs = [None] * m_layers
    backs[m_layers - 1] = back
    for m in range(m_layers - 1, 0, -1):
        back = (back * np.exp(1j * phases.phi[m])[None, :]) @ prop.w_layers[m - 1]
        backs[m - 1] = back

    c_full = backs[-1] @ (np.exp(1j * phases.phi[-1])[:, None] * fwd[-1])
    t_mat = omega * c_full.conj()

    grad = np.empty((m_layers, n_atoms))
    for m in range(m_layers):
        s = np.einsum("rn,rt,nt->n", backs[m], t_mat, fwd[m])
        grad[m] = 2.0 * np.real(1j * np.exp(1j * phases.phi[m]) * s)
    return grad


def grad_phase(
    report: SecrecyReport,
    phases: PhaseTensor,
    prop: PropagationSet,
    chs: ChannelSet,
    amps: PowerAmplitudes,
) -> np.ndarray:
    """dWSSR/dphi, shape (M, N)."""
    omega = gain_weights(report, amps.powers)
    return grad_phase_from_weights(phases, prop, chs, omega)


def gradient_bundle(
    cfg,
    phases: PhaseTensor,
    prop: PropagationSet,
    chs: ChannelSet,
    amps: PowerAmplitudes,
) -> GradientBundle:
    """Objective value plus both gradient blocks in one pass."""
    report = evaluate(cfg, phases, prop, chs, amps)
    return GradientBundle(
        wssr=report.wssr,
        d_phi=grad_phase(report, phases, prop, chs, amps),
        d_amp=grad_power(report, amps),
        report=report,
    )


def fd_gradient(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function, coordinate-wise."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = fn(x)
        xf[i] = orig - step
        lo = fn(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad
