"""Continual learning of the optimizer itself across channel tasks.

Two small element-wise policies drive the inner optimization: a phase
policy that squashes a transformed gradient into a bounded move per
atom, and a power policy that scales the amplitude gradient.  Their
parameters are meta-learned across tasks with a simultaneous-
perturbation gradient estimate, regularized toward the parameters that
solved earlier tasks, with prioritized replay of stored scenarios.

With identity parameters (unit phase gains, zero biases, uniform power
gain) the inner update degenerates to the plain low-complexity rule in
manifold.simhacl_optimize; both entry points share the same functions,
so the two trajectories agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em import ChannelSet, PhaseTensor, PropagationSet, SystemConfig
from .linalg import SeededRng
from .manifold import (
    OptimizerTrace,
    ProductManifoldPoint,
    power_project,
    torus_retract,
)
from .secrecy import PowerAmplitudes, evaluate, gradient_bundle

TWO_PI = 2.0 * np.pi

_DCT_CACHE: dict = {}


def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis over the atom index, rows are frequencies."""
    if n not in _DCT_CACHE:
        k = np.arange(n)[:, None]
        i = np.arange(n)[None, :]
        b = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
        b[0] /= np.sqrt(2.0)
        b.setflags(write=False)
        _DCT_CACHE[n] = b
    return _DCT_CACHE[n]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class PolicyParams:
    """Learnable parameters of the phase and power update policies."""

    gain_phi: np.ndarray  # (M, N) spectral gains of the phase policy
    bias_phi: np.ndarray  # (M, N) spectral biases
    gain_amp: np.ndarray  # (K,) per-user power step sizes
    bias_amp: np.ndarray  # (K,)

    @classmethod
    def identity(cls, m_layers: int, n_atoms: int, k_users: int, power_rate: float) -> "PolicyParams":
        return cls(
            gain_phi=np.ones((m_layers, n_atoms)),
            bias_phi=np.zeros((m_layers, n_atoms)),
            gain_amp=np.full(k_users, power_rate),
            bias_amp=np.zeros(k_users),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.gain_phi.ravel(), self.bias_phi.ravel(), self.gain_amp, self.bias_amp]
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray, m_layers: int, n_atoms: int, k_users: int) -> "PolicyParams":
        mn = m_layers * n_atoms
        if vec.size != 2 * mn + 2 * k_users:
            raise ValueError(f"parameter vector has {vec.size} entries, expected {2 * mn + 2 * k_users}")
        return cls(
            gain_phi=vec[:mn].reshape(m_layers, n_atoms).copy(),
            bias_phi=vec[mn:2 * mn].reshape(m_layers, n_atoms).copy(),
            gain_amp=vec[2 * mn:2 * mn + k_users].copy(),
            bias_amp=vec[2 * mn + k_users:].copy(),
        )

    @staticmethod
    def n_phase_params(m_layers: int, n_atoms: int) -> int:
        return 2 * m_layers * n_atoms


def psn_update(
    phi: np.ndarray,
    grad_phi: np.ndarray,
    params: PolicyParams,
    scale: float,
    c_norm: np.ndarray | None = None,
) -> np.ndarray:
    """Bounded phase move from the gradient, shaped by the phase policy.

    The gradient (optionally importance-normalized by c_norm) passes
    through a per-layer spectral filter and a sigmoid; every atom moves
    by at most scale/2.  A uniform gain with zero bias commutes through
    the orthonormal basis, so that case skips the transform entirely and
    is the identity policy when the gain is one.
    """
    x = grad_phi if c_norm is None else grad_phi * c_norm
    gain = params.gain_phi
    if np.all(gain == gain.flat[0]) and not np.any(params.bias_phi):
        z = gain.flat[0] * x
    else:
        basis = _dct_matrix(phi.shape[1])
        z = np.empty_like(x)
        for m in range(phi.shape[0]):
            z[m] = basis.T @ (gain[m] * (basis @ x[m]) + params.bias_phi[m])
    step = scale * _sigmoid(z) - 0.5 * scale
    return torus_retract(phi, step)


def pan_update(
    a: np.ndarray,
    grad_amp: np.ndarray,
    params: PolicyParams,
    total_power: float,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Projected power-amplitude move shaped by the power policy."""
    x = grad_amp if mask is None else grad_amp * mask
    return power_project(a + params.gain_amp * x + params.bias_amp, total_power)


def inner_loop(
    cfg: SystemConfig,
    prop: PropagationSet,
    chs: ChannelSet,
    point: ProductManifoldPoint,
    params: PolicyParams,
    phase_scale: float,
    n_iters: int,
    mask_amp: np.ndarray | None = None,
    c_norm: np.ndarray | None = None,
    trace: OptimizerTrace | None = None,
    best_point: ProductManifoldPoint | None = None,
    best_wssr: float = -np.inf,
    window: int | None = None,
    rel_tol: float = 0.0,
    step_log: list | None = None,
):
    """Run policy-driven ascent steps; phase and power moves share one
    gradient evaluation, phases first.

    Threads best-so-far tracking through repeated calls.  With a window
    the loop stops early once the best value improves by less than
    rel_tol (relative) over that many recorded iterations.
    Returns (point, best_point, best_wssr, call_best) where call_best is
    the best value seen during this call alone.
    """
    if best_point is None:
        best_point = point.copy()
    call_best = -np.inf
    for _ in range(n_iters):
        bundle = gradient_bundle(cfg, point.phases, prop, chs, point.amps)
        call_best = max(call_best, bundle.wssr)
        if bundle.wssr > best_wssr:
            best_wssr = bundle.wssr
            best_point = point.copy()
        new_phi = psn_update(point.phases.phi, bundle.d_phi, params, phase_scale, c_norm)
        new_a = pan_update(point.amps.a, bundle.d_amp, params, cfg.total_power_w, mask_amp)
        if trace is not None or step_log is not None:
            delta = np.mod(new_phi - point.phases.phi + np.pi, TWO_PI) - np.pi
            if trace is not None:
                trace.record(
                    bundle.wssr,
                    best_wssr,
                    float(np.max(np.abs(delta))),
                    float(np.max(np.abs(new_a - point.amps.a))),
                )
            if step_log is not None:
                step_log.append(delta.mean(axis=1))
        point = ProductManifoldPoint(phases=PhaseTensor(new_phi), amps=PowerAmplitudes(new_a))
        if trace is not None and window is not None and len(trace) >= window:
            ref = trace.best[-window]
            if best_wssr - ref < rel_tol * max(abs(ref), 1e-12):
                break
    return point, best_point, best_wssr, call_best


@dataclass
class MetaConfig:
    """Schedule and step sizes of the continual meta-optimizer."""

    n_epochs: int = 40
    n_outer: int = 5          # rounds per epoch (current task + replays)
    n_inner: int = 10         # policy steps per round
    psn_period: int = 4       # phase-policy params move only every this many epochs
    lr_phase: float = 0.5     # bound scale of one phase move
    lr_power: float = 1e-2    # identity power step size
    meta_lr: float = 2e-2
    spsa_samples: int = 8     # 0 disables meta-learning entirely
    spsa_scale: float = 0.05  # relative perturbation size
    lambda_reg: float = 0.1   # pull toward parameters of earlier tasks
    beta_traj: float = 0.01   # weight of the trajectory-smoothness term
    memory_decay: float = 0.8
    buffer_capacity: int = 16
    buffer_temperature: float = 1.0


@dataclass
class BufferEntry:
    """A stored scenario with its evolving solution."""

    chs: ChannelSet
    point: ProductManifoldPoint
    wssr: float
    task_index: int


@dataclass
class ExperienceBuffer:
    """Bounded scenario store with priority-proportional sampling.

    Priority favors scenarios far from the best seen (hard cases) plus
    a recency bonus; eviction drops the lowest-priority entry.
    """

    capacity: int = 16
    temperature: float = 1.0
    entries: list = field(default_factory=list)

    def priorities(self) -> np.ndarray:
        if not self.entries:
            return np.zeros(0)
        best = max(e.wssr for e in self.entries)
        n = len(self.entries)
        pr = np.array(
            [abs(best - e.wssr) + 0.1 / (n - i) for i, e in enumerate(self.entries)]
        )
        return pr

    def add(self, entry: BufferEntry):
        self.entries.append(entry)
        if len(self.entries) > self.capacity:
            drop = int(np.argmin(self.priorities()))
            self.entries.pop(drop)

    def sample(self, rng: SeededRng, count: int) -> list:
        """Indices of sampled entries, probability ~ priority^temperature."""
        if not self.entries:
            raise ValueError("cannot sample from an empty buffer")
        pr = self.priorities()
        if self.temperature == 0.0:
            probs = np.full(len(pr), 1.0 / len(pr))
        else:
            scaled = pr**self.temperature
            total = scaled.sum()
            probs = scaled / total if total > 0 else np.full(len(pr), 1.0 / len(pr))
        gen = rng.generator
        return [int(i) for i in gen.choice(len(self.entries), size=count, p=probs)]


@dataclass
class ContinualState:
    """Everything the meta-optimizer carries from task to task."""

    layout: tuple              # (M, N, K)
    theta: np.ndarray          # current policy parameter vector
    memory: list               # parameter vectors that solved earlier tasks
    buffer: ExperienceBuffer
    mask_amp: np.ndarray       # (K,) power-gradient gate in [0, 1]
    ema_amp: np.ndarray | None = None
    ema_phi: np.ndarray | None = None
    meta_m: np.ndarray | None = None
    meta_v: np.ndarray | None = None
    meta_t: int = 0
    task_index: int = 0
    last_phases: np.ndarray | None = None

    @classmethod
    def fresh(cls, cfg: SystemConfig, meta: MetaConfig) -> "ContinualState":
        layout = (cfg.n_layers, cfg.n_atoms, cfg.n_users)
        theta = PolicyParams.identity(*layout, meta.lr_power).to_vector()
        return cls(
            layout=layout,
            theta=theta,
            memory=[],
            buffer=ExperienceBuffer(meta.buffer_capacity, meta.buffer_temperature),
            mask_amp=np.ones(cfg.n_users),
            meta_m=np.zeros_like(theta),
            meta_v=np.zeros_like(theta),
        )

    @property
    def c_norm(self) -> np.ndarray:
        """Phase-gradient importance map, normalized to unit mean."""
        m_layers, n_atoms, _ = self.layout
        if self.ema_phi is None or not np.any(self.ema_phi):
            return np.ones((m_layers, n_atoms))
        return self.ema_phi / self.ema_phi.mean()


def memory_weights(n_memories: int, decay: float) -> np.ndarray:
    """Normalized recency weights, newest memory heaviest."""
    if n_memories == 0:
        return np.zeros(0)
    w = decay ** np.arange(n_memories, 0, -1, dtype=float)
    return w / w.sum()


def trajectory_nll(steps) -> float:
    """Negative log likelihood of the per-layer mean phase moves under a
    diagonal Gaussian fitted to them; penalizes erratic trajectories."""
    steps = np.asarray(steps, dtype=float)
    if steps.ndim != 2 or steps.shape[0] < 2:
        return 0.0
    var = np.maximum(steps.var(axis=0), 1e-8)
    return 0.5 * float(np.sum(np.log(TWO_PI * var) + 1.0))


def continual_loss(
    task_score: float,
    theta: np.ndarray,
    memory: list,
    traj_steps,
    meta: MetaConfig,
) -> float:
    """Meta-objective: maximize the score, stay close to what solved
    earlier tasks, keep trajectories smooth."""
    loss = -task_score
    if memory:
        w = memory_weights(len(memory), meta.memory_decay)
        for wk, theta_k in zip(w, memory):
            diff = theta - theta_k
            loss += meta.lambda_reg * wk * float(diff @ diff)
    loss += meta.beta_traj * trajectory_nll(traj_steps)
    return loss


def meta_step(
    theta: np.ndarray,
    loss_fn,
    rng: SeededRng,
    meta: MetaConfig,
    state: ContinualState,
    phase_block_active: bool,
) -> np.ndarray:
    """Two-sided simultaneous-perturbation gradient estimate plus one
    Adam step on the parameter vector (descent on the loss).

    When the phase block is inactive those coordinates are returned
    bit-for-bit unchanged.
    """
    c = meta.spsa_scale * np.maximum(np.abs(theta), 1e-2)
    grad = np.zeros_like(theta)
    for s in range(meta.spsa_samples):
        gen = rng.split("probe", s).generator
        delta = gen.integers(0, 2, size=theta.size) * 2.0 - 1.0
        shift = c * delta
        loss_hi = loss_fn(theta + shift)
        loss_lo = loss_fn(theta - shift)
        grad += (loss_hi - loss_lo) / (2.0 * shift)
    grad /= meta.spsa_samples

    state.meta_t += 1
    b1, b2, eps = 0.9, 0.999, 1e-8
    state.meta_m = b1 * state.meta_m + (1 - b1) * grad
    state.meta_v = b2 * state.meta_v + (1 - b2) * grad**2
    m_hat = state.meta_m / (1 - b1**state.meta_t)
    v_hat = state.meta_v / (1 - b2**state.meta_t)
    new_theta = theta - meta.meta_lr * m_hat / (np.sqrt(v_hat) + eps)
    if not phase_block_active:
        n_phase = PolicyParams.n_phase_params(state.layout[0], state.layout[1])
        new_theta[:n_phase] = theta[:n_phase]
    return new_theta


@dataclass
class TaskResult:
    """Outcome of one task inside a continual run."""

    point: ProductManifoldPoint
    wssr: float
    trace: OptimizerTrace
    epoch_losses: list
    report: object = None


def _uniform_point(cfg: SystemConfig, phi0: np.ndarray) -> ProductManifoldPoint:
    return ProductManifoldPoint(
        phases=PhaseTensor(np.mod(phi0, TWO_PI)),
        amps=PowerAmplitudes(np.full(cfg.n_users, np.sqrt(cfg.total_power_w / cfg.n_users))),
    )


def mhacl_run(
    cfg: SystemConfig,
    prop: PropagationSet,
    scenarios: list,
    rng: SeededRng,
    meta: MetaConfig | None = None,
    state: ContinualState | None = None,
    init_phases: np.ndarray | None = None,
):
    """Continual optimization over a sequence of channel tasks.

    Each task alternates rounds of policy-driven inner ascent on the new
    scenario with replayed rounds on buffered ones; after every epoch the
    policy parameters take one perturbation-based meta step (the phase
    block only on its period).  Task boundaries consolidate: parameters
    are memorized, gradient statistics update the gating masks, and the
    scenario joins the replay buffer.

    Returns (list of TaskResult, final state).  Pass the returned state
    back in to continue the sequence; init_phases seeds the very first
    task only.
    """
    meta = meta or MetaConfig()
    if state is None:
        state = ContinualState.fresh(cfg, meta)
    m_layers, n_atoms, k_users = state.layout
    results = []

    for chs in scenarios:
        task_rng = rng.split("task", state.task_index)
        if state.last_phases is not None:
            phi0 = state.last_phases
        elif init_phases is not None:
            phi0 = np.asarray(init_phases, dtype=float)
        else:
            phi0 = task_rng.split("phi").generator.uniform(0.0, TWO_PI, size=(m_layers, n_atoms))
        point = _uniform_point(cfg, phi0)

        trace = OptimizerTrace()
        best_point, best_wssr = point.copy(), -np.inf
        theta = state.theta.copy()
        mask_amp = state.mask_amp
        c_norm = state.c_norm
        epoch_losses = []

        for epoch in range(meta.n_epochs):
            # freeze this epoch's schedule so perturbation probes replay it
            rounds = []
            for j in range(meta.n_outer):
                if j > 0 and state.buffer.entries:
                    idx = state.buffer.sample(task_rng.split("epoch", epoch, "replay", j), 1)[0]
                    entry = state.buffer.entries[idx]
                    rounds.append(("replay", idx, entry.point.copy()))
                else:
                    rounds.append(("current", -1, None))
            task_start = point.copy()
            start_best = (best_point.copy(), best_wssr)

            def run_epoch(theta_vec, commit_trace=None):
                params = PolicyParams.from_vector(theta_vec, m_layers, n_atoms, k_users)
                pt = task_start.copy()
                bp, bw = start_best[0].copy(), start_best[1]
                steps: list = []
                scores = []
                replay_ends = []
                for kind, idx, start in rounds:
                    if kind == "current":
                        pt, bp, bw, seen = inner_loop(
                            cfg, prop, chs, pt, params, meta.lr_phase, meta.n_inner,
                            mask_amp=mask_amp, c_norm=c_norm, trace=commit_trace,
                            best_point=bp, best_wssr=bw, step_log=steps,
                        )
                        scores.append(seen)
                    else:
                        entry = state.buffer.entries[idx]
                        end, _, rw, _ = inner_loop(
                            cfg, prop, entry.chs, start.copy(), params, meta.lr_phase,
                            meta.n_inner, mask_amp=mask_amp, c_norm=c_norm,
                            best_wssr=-np.inf, step_log=steps,
                        )
                        replay_ends.append((idx, end, rw))
                        scores.append(rw)
                score = float(np.mean(scores))
                loss = continual_loss(score, theta_vec, state.memory, steps, meta)
                return loss, pt, bp, bw, replay_ends

            loss, point, best_point, best_wssr, replay_ends = run_epoch(theta, commit_trace=trace)
            epoch_losses.append(loss)
            for idx, end, rw in replay_ends:
                entry = state.buffer.entries[idx]
                entry.point = end
                entry.wssr = max(entry.wssr, rw)

            if meta.spsa_samples > 0:
                theta = meta_step(
                    theta,
                    lambda tv: run_epoch(tv)[0],
                    task_rng.split("epoch", epoch, "spsa"),
                    meta,
                    state,
                    phase_block_active=(epoch % meta.psn_period == 0),
                )

        # consolidate at the task boundary
        state.theta = theta
        state.memory.append(theta.copy())
        last = gradient_bundle(cfg, point.phases, prop, chs, point.amps)
        g_amp, g_phi = np.abs(last.d_amp), np.abs(last.d_phi)
        state.ema_amp = g_amp if state.ema_amp is None else 0.9 * state.ema_amp + 0.1 * g_amp
        state.ema_phi = g_phi if state.ema_phi is None else 0.9 * state.ema_phi + 0.1 * g_phi
        mean_amp = state.ema_amp.mean()
        state.mask_amp = (
            np.ones(k_users) if mean_amp == 0 else np.clip(state.ema_amp / mean_amp, 0.0, 1.0)
        )
        state.buffer.add(BufferEntry(chs, best_point.copy(), best_wssr, state.task_index))
        state.last_phases = best_point.phases.phi.copy()
        state.task_index += 1

        report = evaluate(cfg, best_point.phases, prop, chs, best_point.amps)
        results.append(
            TaskResult(
                point=best_point,
                wssr=best_wssr,
                trace=trace,
                epoch_losses=epoch_losses,
                report=report,
            )
        )
    return results, state


def save_state(path, state: ContinualState):
    """Serialize a continual state (including the buffer) to an npz file."""
    data = {
        "layout": np.asarray(state.layout),
        "theta": state.theta,
        "memory": np.stack(state.memory) if state.memory else np.zeros((0, state.theta.size)),
        "mask_amp": state.mask_amp,
        "meta_t": np.asarray(state.meta_t),
        "task_index": np.asarray(state.task_index),
        "buffer_capacity": np.asarray(state.buffer.capacity),
        "buffer_temperature": np.asarray(state.buffer.temperature),
        "n_entries": np.asarray(len(state.buffer.entries)),
    }
    for name in ("ema_amp", "ema_phi", "meta_m", "meta_v", "last_phases"):
        val = getattr(state, name)
        if val is not None:
            data[name] = val
    for i, e in enumerate(state.buffer.entries):
        data[f"buf{i}_h_users"] = e.chs.h_users
        data[f"buf{i}_h_eve"] = e.chs.h_eve
        data[f"buf{i}_beta_users"] = e.chs.beta_users
        data[f"buf{i}_beta_eve"] = np.asarray(e.chs.beta_eve)
        data[f"buf{i}_user_xy"] = e.chs.user_xy
        data[f"buf{i}_eve_xy"] = e.chs.eve_xy
        data[f"buf{i}_phi"] = e.point.phases.phi
        data[f"buf{i}_a"] = e.point.amps.a
        data[f"buf{i}_wssr"] = np.asarray(e.wssr)
        data[f"buf{i}_task"] = np.asarray(e.task_index)
    np.savez(path, **data)


def load_state(path) -> ContinualState:
    """Inverse of save_state."""
    with np.load(path) as z:
        layout = tuple(int(v) for v in z["layout"])
        buffer = ExperienceBuffer(
            capacity=int(z["buffer_capacity"]),
            temperature=float(z["buffer_temperature"]),
        )
        for i in range(int(z["n_entries"])):
            chs = ChannelSet(
                h_users=z[f"buf{i}_h_users"],
                h_eve=z[f"buf{i}_h_eve"],
                beta_users=z[f"buf{i}_beta_users"],
                beta_eve=float(z[f"buf{i}_beta_eve"]),
                user_xy=z[f"buf{i}_user_xy"],
                eve_xy=z[f"buf{i}_eve_xy"],
            )
            point = ProductManifoldPoint(
                phases=PhaseTensor(z[f"buf{i}_phi"]),
                amps=PowerAmplitudes(z[f"buf{i}_a"]),
            )
            buffer.entries.append(
                BufferEntry(chs, point, float(z[f"buf{i}_wssr"]), int(z[f"buf{i}_task"]))
            )
        mem = z["memory"]
        state = ContinualState(
            layout=layout,
            theta=z["theta"],
            memory=[mem[i].copy() for i in range(mem.shape[0])],
            buffer=buffer,
            mask_amp=z["mask_amp"],
            ema_amp=z["ema_amp"] if "ema_amp" in z else None,
            ema_phi=z["ema_phi"] if "ema_phi" in z else None,
            meta_m=z["meta_m"] if "meta_m" in z else None,
            meta_v=z["meta_v"] if "meta_v" in z else None,
            meta_t=int(z["meta_t"]),
            task_index=int(z["task_index"]),
            last_phases=z["last_phases"] if "last_phases" in z else None,
        )
    return state
