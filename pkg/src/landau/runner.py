"""Experiment orchestration: build components from a config, run, and write
metrics.csv / summary.json / particle snapshots deterministically.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import _backend
from .analytic import (
    BkwSolution,
    MaxwellianCoefficients,
    bkw_density,
    bkw_score,
    equilibrium_second_moment,
    gaussian_score,
    GaussianSolution,
    second_moment_evolution,
)
from .config import (
    BkwInitial,
    BlobSettings,
    ExperimentConfig,
    GaussianInitial,
    SbtmSettings,
    render_config,
    with_overrides,
)
from .core import CollisionKernel, ensemble_moments
from .diagnostics import (
    MetricRecord,
    covariance_frobenius_error,
    default_quadrature_box,
    l2_density_error,
    normalized_score_error,
    weighted_score_loss,
)
from .dynamics import BlobSolver, SbtmSolver, run_simulation
from .sampling import Rng, sample_bkw, sample_gaussian


def build_kernel(cfg: ExperimentConfig) -> CollisionKernel:
    return CollisionKernel(gamma=cfg.gamma, d=cfg.dimension, b_const=cfg.kernel_constant)


def build_solver(cfg: ExperimentConfig):
    s = cfg.solver
    if isinstance(s, BlobSettings):
        return BlobSolver(bandwidth_mode=s.bandwidth_mode)
    if isinstance(s, SbtmSettings):
        return SbtmSolver(
            hidden_sizes=s.hidden,
            learning_rate=s.learning_rate,
            steps_per_iteration=s.steps_per_iteration,
            denoise_alpha=s.denoise_alpha,
            train_mode=s.train_mode,
            init_threshold=s.init_threshold,
            dtype=np.float32 if s.precision == "float32" else np.float64,
        )
    raise TypeError(f"unknown solver settings {type(s)}")


def sample_initial(cfg: ExperimentConfig, rng: Rng):
    if isinstance(cfg.initial, BkwInitial):
        sol = BkwSolution(cfg.dimension, cfg.kernel_constant, cfg.t_start)
        return sample_bkw(rng, cfg.particles, sol)
    init = cfg.initial
    return sample_gaussian(rng, cfg.particles, np.asarray(init.mean), np.asarray(init.variances))


def initial_score_target(cfg: ExperimentConfig, positions: np.ndarray) -> np.ndarray:
    if isinstance(cfg.initial, BkwInitial):
        sol = BkwSolution(cfg.dimension, cfg.kernel_constant, cfg.t_start)
        return bkw_score(sol, positions)
    init = cfg.initial
    gsol = GaussianSolution(np.asarray(init.mean), np.asarray(init.variances))
    return gaussian_score(gsol, positions)


def reference_second_moment_fn(cfg: ExperimentConfig):
    """Analytic second moment Sigma*(t) implied by the initial condition."""
    d = cfg.dimension
    if isinstance(cfg.initial, BkwInitial):
        sigma = np.eye(d)  # trace d, isotropic, constant in time
        return lambda t: sigma
    init = cfg.initial
    V = np.asarray(init.mean, dtype=np.float64)
    sigma0 = np.diag(np.asarray(init.variances, dtype=np.float64)) + np.outer(V, V)
    two_e = float(np.trace(sigma0))
    if cfg.gamma == 0.0:
        return lambda t: second_moment_evolution(
            sigma0, V, two_e, t - cfg.t_start, b_const=cfg.kernel_constant
        )
    sigma_inf = equilibrium_second_moment(V, two_e)
    return lambda t: sigma_inf


def make_metrics_fn(cfg: ExperimentConfig, moments0):
    sigma_ref = reference_second_moment_fn(cfg)
    v0 = moments0.momentum
    e0 = moments0.two_energy
    scale = np.sqrt(e0) if e0 > 0 else 1.0
    is_bkw = isinstance(cfg.initial, BkwInitial)
    if is_bkw:
        coeffs = MaxwellianCoefficients(
            momentum=np.zeros(cfg.dimension),
            two_energy=float(cfg.dimension),
            sigma_t=np.eye(cfg.dimension),
        )

    def metrics_fn(t, ensemble, score_values, model, velocity, rate):
        m = ensemble_moments(ensemble)
        if is_bkw:
            sol = BkwSolution(cfg.dimension, cfg.kernel_constant, t)
        values = {}
        for name in cfg.metrics:
            if name == "cov11":
                values[name] = float(m.second_moment[0, 0])
            elif name == "cov_err_sq_frobenius":
                values[name] = covariance_frobenius_error(ensemble, sigma_ref(t))
            elif name == "score_err_normalized":
                truth = bkw_score(sol, ensemble.positions)
                values[name] = normalized_score_error(score_values, truth, ensemble)
            elif name == "l2_density_err":
                values[name] = l2_density_error(
                    ensemble, lambda pts: bkw_density(sol, pts), grid=cfg.l2_grid
                )
            elif name == "entropy_rate":
                values[name] = rate
            elif name == "momentum_drift":
                values[name] = float(np.linalg.norm(m.momentum - v0)) / scale
            elif name == "energy_drift":
                values[name] = abs(m.two_energy - e0) / e0
            elif name == "weighted_loss":
                truth = bkw_score(sol, ensemble.positions)
                values[name] = weighted_score_loss(score_values, truth, coeffs, ensemble)
            else:
                raise ValueError(f"unknown metric {name}")
        return MetricRecord(time=t, values=values)

    return metrics_fn


def run_experiment(cfg: ExperimentConfig):
    """Run one configured experiment; returns (result, summary dict)."""
    wall0 = time.perf_counter()
    kernel = build_kernel(cfg)
    solver = build_solver(cfg)
    master = Rng(cfg.seed)
    rng_sample = master.substream(0)
    rng_run = master.substream(1)

    t_sample0 = time.perf_counter()
    e0 = sample_initial(cfg, rng_sample)
    sampling_seconds = time.perf_counter() - t_sample0

    target = None
    if isinstance(solver, SbtmSolver):
        target = initial_score_target(cfg, e0.positions)
    moments0 = ensemble_moments(e0)
    metrics_fn = make_metrics_fn(cfg, moments0)

    result = run_simulation(
        e0, kernel, solver,
        t0=cfg.t_start, t_end=cfg.t_end, dt=cfg.dt,
        rng=rng_run, metrics_fn=metrics_fn,
        snapshot_times=cfg.snapshot_times,
        initial_score_values=target,
    )
    result.phase_seconds["sampling"] = sampling_seconds
    wall = time.perf_counter() - wall0

    moments_final = ensemble_moments(result.final)
    scale = np.sqrt(moments0.two_energy) if moments0.two_energy > 0 else 1.0
    summary = {
        "backend": _backend.BACKEND,
        "config": render_config(cfg),
        "entropy_total": result.ledger.total,
        "energy_drift_final": abs(moments_final.two_energy - moments0.two_energy)
        / moments0.two_energy,
        "init_steps": result.init_steps,
        "min_pair_distance": float(np.sqrt(result.min_pair_dist2))
        if np.isfinite(result.min_pair_dist2) else None,
        "momentum_drift_final": float(
            np.linalg.norm(moments_final.momentum - moments0.momentum)
        ) / scale,
        "moments_final": {
            "momentum": moments_final.momentum.tolist(),
            "second_moment": moments_final.second_moment.tolist(),
            "two_energy": moments_final.two_energy,
        },
        "moments_initial": {
            "momentum": moments0.momentum.tolist(),
            "second_moment": moments0.second_moment.tolist(),
            "two_energy": moments0.two_energy,
        },
        "n_steps": cfg.n_steps,
        "particles": cfg.particles,
        "phase_seconds": result.phase_seconds,
        "seed": cfg.seed,
        "solver": cfg.solver.kind,
        "train_steps_total": int(np.sum(result.train_steps)) if result.train_steps else 0,
        "wall_seconds": wall,
    }
    return result, summary


def _fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def write_metrics_csv(path: Path, cfg: ExperimentConfig, result) -> None:
    lines = ["time," + ",".join(cfg.metrics)]
    for rec in result.records:
        row = [_fmt_float(rec.time)] + [_fmt_float(rec.values[m]) for m in cfg.metrics]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_snapshots(out: Path, result) -> list[str]:
    written = []
    for t, ensemble in sorted(result.snapshots.items()):
        name = f"particles_{t:g}.csv"
        header = ",".join(f"x{k}" for k in range(ensemble.d))
        rows = [header]
        for row in ensemble.positions:
            rows.append(",".join(_fmt_float(v) for v in row))
        (out / name).write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append(name)
    return written


def run_to_files(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result, summary = run_experiment(cfg)
    summary["threads"] = int(threads)
    write_metrics_csv(out / "metrics.csv", cfg, result)
    summary["snapshots"] = write_snapshots(out, result)
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


SWEEP_COLUMNS = ("solver", "n", "seed", "status", "wall_seconds",
                 "velocity_seconds", "training_seconds", "score_seconds")


def run_sweep(cfg: ExperimentConfig, n_list, solver_kinds, n_seeds, out_dir) -> Path:
    """Cartesian (solver, n, seed) comparison; one CSV row per run.

    Failed runs are flagged in the status column and the sweep continues.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metric_cols = list(cfg.metrics)
    lines = [",".join(SWEEP_COLUMNS) + "," + ",".join(f"final_{m}" for m in metric_cols)]
    for kind in solver_kinds:
        if kind == cfg.solver.kind:
            solver_settings = cfg.solver
        elif kind == "blob":
            solver_settings = BlobSettings()
        elif kind == "sbtm":
            hidden = (100, 100) if isinstance(cfg.initial, BkwInitial) else (100,)
            solver_settings = SbtmSettings(hidden=hidden)
        else:
            raise ValueError(f"unknown solver kind {kind!r}")
        for n in n_list:
            for s in range(n_seeds):
                run_cfg = with_overrides(
                    cfg, solver=solver_settings, particles=int(n), seed=cfg.seed + s
                )
                try:
                    result, summary = run_experiment(run_cfg)
                    final = result.records[-1].values
                    row = [
                        kind, str(int(n)), str(run_cfg.seed), "ok",
                        _fmt_float(summary["wall_seconds"]),
                        _fmt_float(summary["phase_seconds"]["velocity"]),
                        _fmt_float(summary["phase_seconds"]["training"]),
                        _fmt_float(summary["phase_seconds"]["score"]),
                    ] + [_fmt_float(final[m]) for m in metric_cols]
                except Exception as exc:  # noqa: BLE001 - sweep must continue
                    row = [kind, str(int(n)), str(run_cfg.seed), f"failed:{type(exc).__name__}",
                           "nan", "nan", "nan", "nan"] + ["nan"] * len(metric_cols)
                lines.append(",".join(row))
    path = out / "sweep.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
