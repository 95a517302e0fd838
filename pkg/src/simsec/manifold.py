"""Optimization on the product of the phase torus and the power sphere.

Decision variables are the (M, N) phase tensor, which lives on a flat
torus (angles mod 2*pi), and the per-user power amplitudes, which live
on the sphere sum(a^2) = P_A intersected with the nonnegative orthant.
Retractions, tangent projections, a Riemannian Adam step, phase
quantization, and the low-complexity single-scenario optimizer live
here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em import ChannelSet, PhaseTensor, PropagationSet, SystemConfig
from .linalg import SeededRng
from .secrecy import PowerAmplitudes, SecrecyReport, evaluate, gradient_bundle

TWO_PI = 2.0 * np.pi


@dataclass
class ProductManifoldPoint:
    """One feasible (phases, amplitudes) pair."""

    phases: PhaseTensor
    amps: PowerAmplitudes

    def copy(self) -> "ProductManifoldPoint":
        return ProductManifoldPoint(
            phases=PhaseTensor(self.phases.phi.copy()),
            amps=PowerAmplitudes(self.amps.a.copy()),
        )


def torus_retract(phi: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Move on the flat torus: wrap phi + step back into [0, 2*pi)."""
    return np.mod(phi + step, TWO_PI)


def power_project(a_tilde: np.ndarray, total_power: float) -> np.ndarray:
    """Nearest feasible amplitude vector: scale onto the sphere, then
    clip negative entries and rescale until all lie in the orthant.

    A zero vector carries no direction, so it maps to the uniform split.
    """
    if total_power <= 0:
        raise ValueError(f"total power must be positive, got {total_power}")
    a = np.asarray(a_tilde, dtype=float).copy()
    k = a.size

    def uniform():
        return np.full(k, np.sqrt(total_power / k))

    ssq = float(a @ a)
    if ssq == 0.0:
        return uniform()
    a *= np.sqrt(total_power / ssq)
    while np.any(a < 0):
        a[a < 0] = 0.0
        ssq = float(a @ a)
        if ssq == 0.0:
            return uniform()
        a *= np.sqrt(total_power / ssq)
    return a


def riemannian_grad(
    point: ProductManifoldPoint,
    d_phi: np.ndarray,
    d_amp: np.ndarray,
    total_power: float,
):
    """Project Euclidean gradients onto the tangent spaces.

    The torus is flat, so the phase block passes through; the sphere
    block removes the radial component.
    """
    a = point.amps.a
    radial = float(d_amp @ a) / total_power
    return d_phi, d_amp - radial * a


@dataclass
class RAdamState:
    """First/second moment accumulators for the Riemannian Adam step."""

    m_phi: np.ndarray
    v_phi: np.ndarray
    m_amp: np.ndarray
    v_amp: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, m_layers: int, n_atoms: int, k_users: int) -> "RAdamState":
        return cls(
            m_phi=np.zeros((m_layers, n_atoms)),
            v_phi=np.zeros((m_layers, n_atoms)),
            m_amp=np.zeros(k_users),
            v_amp=np.zeros(k_users),
        )


def radam_step(
    point: ProductManifoldPoint,
    d_phi: np.ndarray,
    d_amp: np.ndarray,
    state: RAdamState,
    lr: float,
    total_power: float,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
) -> ProductManifoldPoint:
    """One ascent step of Adam with tangent projection and retraction.

    Mutates state in place. Under a constant gradient the step length
    per coordinate approaches lr.
    """
    b1, b2 = betas
    g_phi, g_amp = riemannian_grad(point, d_phi, d_amp, total_power)
    state.t += 1
    state.m_phi = b1 * state.m_phi + (1 - b1) * g_phi
    state.v_phi = b2 * state.v_phi + (1 - b2) * g_phi**2
    state.m_amp = b1 * state.m_amp + (1 - b1) * g_amp
    state.v_amp = b2 * state.v_amp + (1 - b2) * g_amp**2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    step_phi = lr * (state.m_phi / c1) / (np.sqrt(state.v_phi / c2) + eps)
    step_amp = lr * (state.m_amp / c1) / (np.sqrt(state.v_amp / c2) + eps)
    return ProductManifoldPoint(
        phases=PhaseTensor(torus_retract(point.phases.phi, step_phi)),
        amps=PowerAmplitudes(power_project(point.amps.a + step_amp, total_power)),
    )


@dataclass(frozen=True)
class QuantizationCodebook:
    """Discrete phase codebook with 2^bits codewords.

    full-circle spaces codewords by 2*pi/2^bits over the whole circle;
    half-circle spaces them by pi/2^bits (phase shifters that cover only
    part of the circle).
    """

    bits: int
    mode: str = "full-circle"

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")
        if self.mode not in ("full-circle", "half-circle"):
            raise ValueError(f"unknown codebook mode {self.mode!r}")

    @property
    def codewords(self) -> np.ndarray:
        count = 2**self.bits
        span = TWO_PI if self.mode == "full-circle" else np.pi
        return span * np.arange(count) / count


def quantize_phases(phases: PhaseTensor, book: QuantizationCodebook) -> PhaseTensor:
    """Round every phase to the nearest codeword in circular distance.

    Ties go to the smaller codeword index; the map is idempotent.
    """
    words = book.codewords
    diff = phases.phi[..., None] - words
    circ = np.abs(np.mod(diff + np.pi, TWO_PI) - np.pi)
    idx = np.argmin(circ, axis=-1)
    return PhaseTensor(phi=words[idx], indices=idx, codebook_mode=book.mode)


@dataclass
class OptimizerTrace:
    """Per-iteration objective values recorded during a run."""

    wssr: list = field(default_factory=list)
    best: list = field(default_factory=list)
    phase_step: list = field(default_factory=list)
    amp_step: list = field(default_factory=list)

    def record(self, wssr: float, best: float, phase_step: float, amp_step: float):
        self.wssr.append(wssr)
        self.best.append(best)
        self.phase_step.append(phase_step)
        self.amp_step.append(amp_step)

    def as_arrays(self) -> dict:
        return {k: np.asarray(v) for k, v in vars(self).items()}

    def __len__(self) -> int:
        return len(self.wssr)


@dataclass
class SimhaclOptions:
    """Knobs of the single-scenario optimizer."""

    max_iters: int = 2000
    restarts: int = 8
    phase_scale: float = 0.5   # one phase moves at most half this per iteration
    power_rate: float = 0.02
    window: int = 50           # stop when the best improves by less than
    rel_tol: float = 1e-6      # rel_tol over this many iterations (0 disables)
    quant: QuantizationCodebook | None = None  # evaluation-time rounding
    init_phases: np.ndarray | None = None      # warm start for the first restart


@dataclass
class OptimizeResult:
    """Best point found, its report, and per-restart traces."""

    point: ProductManifoldPoint
    report: SecrecyReport
    trace: OptimizerTrace
    traces: list
    best_restart: int
    iterations: int


def _run_single(
    cfg: SystemConfig,
    prop: PropagationSet,
    chs: ChannelSet,
    phi0: np.ndarray,
    opts: SimhaclOptions,
):
    """Gradient ascent from one start; returns (best point, value, trace)."""
    # imported here: continual builds on this module's retractions
    from .continual import PolicyParams, inner_loop

    m_layers, n_atoms = phi0.shape
    k_users = cfg.n_users
    params = PolicyParams.identity(m_layers, n_atoms, k_users, opts.power_rate)
    point = ProductManifoldPoint(
        phases=PhaseTensor(np.mod(phi0, TWO_PI)),
        amps=PowerAmplitudes(np.full(k_users, np.sqrt(cfg.total_power_w / k_users))),
    )
    trace = OptimizerTrace()
    _, best, best_wssr, _ = inner_loop(
        cfg, prop, chs, point, params, opts.phase_scale, opts.max_iters,
        trace=trace, window=opts.window, rel_tol=opts.rel_tol,
    )
    return best, best_wssr, trace


def simhacl_optimize(
    cfg: SystemConfig,
    prop: PropagationSet,
    chs: ChannelSet,
    rng: SeededRng,
    opts: SimhaclOptions | None = None,
) -> OptimizeResult:
    """Maximize the weighted secrecy rate for one channel realization.

    Multi-start bounded gradient ascent: phases move by a squashed
    gradient step, powers by a projected gradient step, both from the
    same gradient evaluation.  With a codebook set, each restart's best
    phases are rounded before scoring, so the returned point is feasible
    for the discrete shifters.
    """
    opts = opts or SimhaclOptions()
    m_layers = cfg.n_layers
    n_atoms = cfg.n_atoms

    candidates = []
    traces = []
    for r in range(opts.restarts):
        if r == 0 and opts.init_phases is not None:
            phi0 = np.asarray(opts.init_phases, dtype=float)
        else:
            gen = rng.split("restart", r).generator
            phi0 = gen.uniform(0.0, TWO_PI, size=(m_layers, n_atoms))
        best, best_wssr, trace = _run_single(cfg, prop, chs, phi0, opts)
        if opts.quant is not None:
            q_phases = quantize_phases(best.phases, opts.quant)
            best = ProductManifoldPoint(phases=q_phases, amps=best.amps)
            best_wssr = evaluate(cfg, q_phases, prop, chs, best.amps).wssr
        candidates.append((best_wssr, best))
        traces.append(trace)

    best_idx = int(np.argmax([c[0] for c in candidates]))
    point = candidates[best_idx][1]
    report = evaluate(cfg, point.phases, prop, chs, point.amps)
    return OptimizeResult(
        point=point,
        report=report,
        trace=traces[best_idx],
        traces=traces,
        best_restart=best_idx,
        iterations=sum(len(t) for t in traces),
    )
