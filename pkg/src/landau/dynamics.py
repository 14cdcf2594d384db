"""Pairwise velocity field, forward-Euler stepping, and the simulation loop.

The velocity kernel is the O(n^2) hot path; score values are evaluated once
per particle per step and the pairwise sum consumes only those cached
values. Phase wall times (training / score / velocity / integration /
metrics) are recorded with a monotonic clock so scaling claims can be
checked without a profiler.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import CollisionKernel, ParticleEnsemble
from .sampling import Rng

CLOSE_PAIR_DIST2 = 1e-20  # warn threshold (distance 1e-10) for singular kernels


@dataclass(frozen=True)
class VelocityField:
    """Per-particle velocities plus the smallest nonzero pair distance^2 seen."""

    values: np.ndarray
    min_pair_dist2: float

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


class EntropyLedger:
    """Cumulative estimated entropy; increments are (dt/n) sum_i s_i . v_i."""

    def __init__(self):
        self.increments: list[float] = []

    @property
    def total(self) -> float:
        return float(np.sum(self.increments)) if self.increments else 0.0

    def record(self, increment: float) -> None:
        self.increments.append(float(increment))


def compute_velocity(
    e: ParticleEnsemble, kernel: CollisionKernel, score_values: np.ndarray
) -> VelocityField:
    """v_i = -(B/n) sum_j A(X_i - X_j)[s_i - s_j] with cached score values."""
    sc = np.ascontiguousarray(score_values, dtype=np.float64)
    if sc.shape != e.positions.shape:
        raise ValueError("score values must match the ensemble shape")
    bad = ~np.isfinite(sc).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite score value at particle {int(np.argmax(bad))}")
    values, min_r2 = _backend.velocity_pairwise(
        e.positions, sc, kernel.gamma, kernel.b_const
    )
    return VelocityField(values=values, min_pair_dist2=float(min_r2))


def euler_step(e: ParticleEnsemble, v: VelocityField, dt: float) -> ParticleEnsemble:
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return ParticleEnsemble(e.positions + dt * v.values)


def entropy_rate(score_values: np.ndarray, v: VelocityField) -> float:
    """(1/n) sum_i s(X_i) . v(X_i); nonpositive up to rounding."""
    return float(np.einsum("ij,ij->", score_values, v.values)) / v.values.shape[0]


def entropy_increment(
    e: ParticleEnsemble, v: VelocityField, score_values: np.ndarray, dt: float
) -> float:
    return dt * entropy_rate(score_values, v)


class BlobSolver:
    """Kernel score with plug-in bandwidth, rebuilt from the current ensemble."""

    name = "blob"

    def __init__(self, bandwidth_mode: str = "per_step", cache_limit_bytes: float = 4e8):
        if bandwidth_mode not in ("per_step", "fixed_initial"):
            raise ValueError(f"unknown bandwidth mode: {bandwidth_mode}")
        self.bandwidth_mode = bandwidth_mode
        self.cache_limit_bytes = cache_limit_bytes
        self._eps: float | None = None

    def initialize(self, e: ParticleEnsemble, target_values, rng: Rng) -> int:
        return 0

    def train(self, e: ParticleEnsemble, rng: Rng) -> int:
        return 0

    def score_values(self, e: ParticleEnsemble):
        from .scores import BlobScore, silverman_bandwidth

        if self._eps is None or self.bandwidth_mode == "per_step":
            self._eps = silverman_bandwidth(e)
        model = BlobScore(e, self._eps, self.cache_limit_bytes)
        return model.at_particles(), model


class SbtmSolver:
    """Neural score trained by denoised score matching as particles move."""

    name = "sbtm"

    def __init__(
        self,
        hidden_sizes,
        learning_rate: float = 4e-4,
        steps_per_iteration: int = 25,
        denoise_alpha: float = 0.4,
        train_mode: str = "fixed",
        init_threshold: float = 1e-2,
        init_max_steps: int = 100_000,
        dtype=np.float64,
        adaptive_max_steps: int = 500,
    ):
        self.hidden_sizes = list(hidden_sizes)
        self.learning_rate = learning_rate
        self.steps_per_iteration = steps_per_iteration
        self.denoise_alpha = denoise_alpha
        self.train_mode = train_mode
        self.init_threshold = init_threshold
        self.init_max_steps = init_max_steps
        self.dtype = np.dtype(dtype)
        self.adaptive_max_steps = adaptive_max_steps
        self.mlp = None
        self.opt = None

    def initialize(self, e: ParticleEnsemble, target_values, rng: Rng) -> int:
        from .scores import AdamState, Mlp, initialize_score

        sizes = [e.d] + self.hidden_sizes + [e.d]
        self.mlp = Mlp(sizes, rng=rng, dtype=self.dtype)
        self.opt = AdamState(self.mlp, learning_rate=self.learning_rate)
        return initialize_score(
            self.mlp, self.opt, e, target_values,
            threshold=self.init_threshold, max_steps=self.init_max_steps,
        )

    def train(self, e: ParticleEnsemble, rng: Rng) -> int:
        from .scores import train_step

        return train_step(
            self.mlp, self.opt, e, self.denoise_alpha, rng,
            mode=self.train_mode, n_steps=self.steps_per_iteration,
            max_steps=self.adaptive_max_steps,
        )

    def score_values(self, e: ParticleEnsemble):
        from .scores import NeuralScore, mlp_eval

        return mlp_eval(self.mlp, e.positions), NeuralScore(self.mlp)


@dataclass
class SimulationResult:
    times: np.ndarray
    records: list[dict]
    ledger: EntropyLedger
    final: ParticleEnsemble
    snapshots: dict[float, ParticleEnsemble]
    phase_seconds: dict[str, float]
    train_steps: list[int]
    init_steps: int
    min_pair_dist2: float


class _Phases:
    def __init__(self):
        self.seconds = {
            "sampling": 0.0, "init": 0.0, "training": 0.0, "score": 0.0,
            "velocity": 0.0, "integration": 0.0, "metrics": 0.0,
        }

    def add(self, phase: str, t0: float) -> float:
        t1 = time.perf_counter()
        self.seconds[phase] += t1 - t0
        return t1


def run_simulation(
    e0: ParticleEnsemble,
    kernel: CollisionKernel,
    solver,
    t0: float,
    t_end: float,
    dt: float,
    rng: Rng,
    metrics_fn=None,
    snapshot_times=(),
    initial_score_values=None,
) -> SimulationResult:
    """March the particle system from t0 to t_end with forward Euler.

    Per step: (optionally) train the score on the current particles, evaluate
    it once per particle, form the pairwise velocity, record metrics, then
    move. A final diagnostic row is recorded at t_end without extra training.
    """
    n_steps = int(round((t_end - t0) / dt)) if t_end > t0 else 0
    if n_steps < 0 or (t_end > t0 and abs(t0 + n_steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end))):
        raise ValueError("(t_end - t0) must be a whole number of steps")

    phases = _Phases()
    ledger = EntropyLedger()
    records: list[dict] = []
    snapshots: dict[float, ParticleEnsemble] = {}
    train_steps: list[int] = []
    times = t0 + dt * np.arange(n_steps + 1)
    snap_wanted = sorted(set(float(s) for s in snapshot_times))
    min_r2_seen = np.inf
    warned_close = False

    mark = time.perf_counter()
    init_steps = solver.initialize(e0, initial_score_values, rng)
    mark = phases.add("init", mark)

    state = e0
    for k in range(n_steps + 1):
        t = float(times[k])
        last = k == n_steps
        if not last:
            mark = time.perf_counter()
            train_steps.append(solver.train(state, rng))
            mark = phases.add("training", mark)
        mark = time.perf_counter()
        s_vals, model = solver.score_values(state)
        mark = phases.add("score", mark)
        vel = compute_velocity(state, kernel, s_vals)
        mark = phases.add("velocity", mark)
        min_r2_seen = min(min_r2_seen, vel.min_pair_dist2)
        if kernel.gamma < 0 and vel.min_pair_dist2 < CLOSE_PAIR_DIST2 and not warned_close:
            warnings.warn(
                f"pair distance below 1e-10 at t={t:g} with singular kernel",
                RuntimeWarning,
            )
            warned_close = True
        rate = entropy_rate(s_vals, vel)
        if not last:
            ledger.record(dt * rate)
        if metrics_fn is not None:
            mark = time.perf_counter()
            records.append(metrics_fn(t, state, s_vals, model, vel, rate))
            mark = phases.add("metrics", mark)
        for ts in snap_wanted:
            if abs(ts - t) <= 0.5 * dt and ts not in snapshots:
                snapshots[ts] = state
        if not last:
            mark = time.perf_counter()
            try:
                state = euler_step(state, vel, dt)
            except ValueError as exc:
                raise RuntimeError(
                    f"non-finite particle positions after t={t:g}"
                ) from exc
            mark = phases.add("integration", mark)

    return SimulationResult(
        times=times,
        records=records,
        ledger=ledger,
        final=state,
        snapshots=snapshots,
        phase_seconds=phases.seconds,
        train_steps=train_steps,
        init_steps=init_steps,
        min_pair_dist2=float(min_r2_seen),
    )
