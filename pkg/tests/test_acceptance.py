"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s`. The full suite does many
production-size solver runs and takes roughly an hour on a laptop-class CPU.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from landau.analytic import BkwSolution, MaxwellianCoefficients, convolution_bounds, maxwellian_convolution
from landau.config import load_preset, with_overrides
from landau.core import CollisionKernel, ParticleEnsemble, ensemble_moments
from landau.diagnostics import empirical_convolution
from landau.dynamics import compute_velocity
from landau.runner import run_experiment, run_to_files
from landau.sampling import Rng, sample_bkw, sample_gaussian
from landau.scores import AdamState, Mlp, mlp_eval, mlp_gradient
from landau._backend import velocity_pairwise

from reference import finite_difference_gradient, rejection_sample_bkw, velocity_naive

PRESETS = (
    "example1_bkw_blob",
    "example1_bkw_sbtm",
    "example2_aniso3_blob",
    "example2_aniso3_sbtm",
    "example2_aniso10_blob",
    "example2_aniso10_sbtm",
    "example3_coulomb_blob",
    "example3_coulomb_sbtm",
)


def report(criterion, name, ok, detail):
    print(f"\n[ACCEPTANCE] criterion {criterion} ({name}): "
          f"{'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion} ({name}): {detail}"


@pytest.fixture(scope="module")
def preset_runs_n1000(tmp_path_factory):
    """Every preset run at n=1000 with files written (shared by 1, 2, 11)."""
    out_root = tmp_path_factory.mktemp("preset_runs")
    runs = {}
    for name in PRESETS:
        cfg = with_overrides(load_preset(name), particles=1000)
        t0 = time.perf_counter()
        out = out_root / name
        summary = run_to_files(cfg, out)
        runs[name] = {
            "cfg": cfg,
            "summary": summary,
            "wall": time.perf_counter() - t0,
            "out": out,
        }
    return runs


def test_criterion_1_conservation(preset_runs_n1000):
    worst_mom, worst_en, worst_wall = 0.0, 0.0, 0.0
    for name, run in preset_runs_n1000.items():
        s, cfg = run["summary"], run["cfg"]
        worst_mom = max(worst_mom, s["momentum_drift_final"])
        worst_en = max(worst_en, s["energy_drift_final"] / (10.0 * cfg.dt))
        worst_wall = max(worst_wall, run["wall"])
        assert s["momentum_drift_final"] < 1e-10, name
        assert s["energy_drift_final"] <= 10.0 * cfg.dt, name
        assert run["wall"] <= 120.0, f"{name} took {run['wall']:.0f}s"
    report(1, "conservation", True,
           f"momentum drift <= {worst_mom:.2e}, energy drift <= "
           f"{worst_en:.2f}x budget, slowest preset {worst_wall:.0f}s")


def test_criterion_2_entropy_monotonicity(preset_runs_n1000):
    worst = -np.inf
    count = 0
    for name in PRESETS:
        base = load_preset(name)
        for k in range(5):
            cfg = with_overrides(base, particles=256, seed=base.seed + k)
            result, _ = run_experiment(cfg)
            incs = np.asarray(result.ledger.increments)
            worst = max(worst, float(incs.max()))
            count += incs.size
            assert incs.max() <= 1e-12, f"{name} seed {cfg.seed}"
    # the n=1000 runs already checked via summary entropy_total <= 0
    for name, run in preset_runs_n1000.items():
        assert run["summary"]["entropy_total"] <= 1e-12
    report(2, "entropy decay", True,
           f"{count} increments over {len(PRESETS)}x5 runs, max = {worst:.2e}")


def test_criterion_3_bkw_isotropy():
    t0 = time.perf_counter()
    devs = {}
    for name in ("example1_bkw_blob", "example1_bkw_sbtm"):
        cfg = load_preset(name)  # n = 4000
        assert cfg.particles == 4000
        result, _ = run_experiment(cfg)
        devs[name] = max(abs(r.values["cov11"] - 1.0) for r in result.records)
        assert devs[name] < 0.07, name
    wall = time.perf_counter() - t0
    assert wall <= 600.0
    report(3, "isotropic second moment", True,
           f"max |cov11 - 1|: blob {devs['example1_bkw_blob']:.3f}, "
           f"sbtm {devs['example1_bkw_sbtm']:.3f}, wall {wall:.0f}s (<= 600)")


def test_criterion_4_anisotropic_tracking():
    t0 = time.perf_counter()
    cfg = load_preset("example2_aniso3_sbtm")
    assert cfg.particles == 12800
    result, _ = run_experiment(cfg)
    dev = max(
        abs(r.values["cov11"] - (1.0 + 0.8 * np.exp(-12.0 * r.time)))
        for r in result.records
    )
    assert dev < 0.05

    finals = {"sbtm": [], "blob": []}
    for solver in ("sbtm", "blob"):
        base = load_preset(f"example2_aniso3_{solver}")
        for k in range(5):
            small = with_overrides(base, particles=100, seed=base.seed + k)
            res, _ = run_experiment(small)
            finals[solver].append(res.records[-1].values["cov_err_sq_frobenius"])
    med_sbtm = float(np.median(finals["sbtm"]))
    med_blob = float(np.median(finals["blob"]))
    wall = time.perf_counter() - t0
    assert med_sbtm <= med_blob
    assert wall <= 1200.0
    report(4, "anisotropic covariance", True,
           f"max dev {dev:.4f} (< 0.05); n=100 median cov err: "
           f"sbtm {med_sbtm:.3f} <= blob {med_blob:.3f}; wall {wall:.0f}s (<= 1200)")


def test_criterion_5_high_dimension_sparse():
    t0 = time.perf_counter()
    finals = {"sbtm": [], "blob": []}
    for solver in ("sbtm", "blob"):
        base = load_preset(f"example2_aniso10_{solver}")
        for k in range(3):
            cfg = with_overrides(
                base, particles=6400, seed=base.seed + k, t_end=2.0
            )
            res, _ = run_experiment(cfg)
            finals[solver].append(res.records[-1].values["cov_err_sq_frobenius"])
    med_sbtm = float(np.median(finals["sbtm"]))
    med_blob = float(np.median(finals["blob"]))
    wall = time.perf_counter() - t0
    assert med_sbtm <= med_blob
    assert wall <= 1800.0
    report(5, "d=10 sparse particles", True,
           f"median final cov err: sbtm {med_sbtm:.3f} <= blob {med_blob:.3f}; "
           f"wall {wall:.0f}s (<= 1800)")


def test_criterion_6_coulomb_steady_state():
    t0 = time.perf_counter()
    errs = {}
    for name in ("example3_coulomb_blob", "example3_coulomb_sbtm"):
        cfg = load_preset(name)  # n = 1600, dt = 1, t_end = 300
        assert cfg.particles == 1600 and cfg.dt == 1.0 and cfg.t_end == 300.0
        result, _ = run_experiment(cfg)
        sigma = ensemble_moments(result.final).second_moment
        errs[name] = float(np.sum((sigma - np.eye(3)) ** 2))
        assert errs[name] < 0.15, name
        assert np.isfinite(result.final.positions).all()
    wall = time.perf_counter() - t0
    assert wall <= 900.0
    report(6, "coulomb steady state", True,
           f"squared-Frobenius error: blob {errs['example3_coulomb_blob']:.3f}, "
           f"sbtm {errs['example3_coulomb_sbtm']:.3f} (< 0.15); wall {wall:.0f}s")


def test_criterion_7a_velocity_oracle():
    rng = np.random.default_rng(100)
    worst = 0.0
    for trial in range(20):
        d = int(rng.choice([2, 3, 10]))
        gamma = float(rng.choice([0.0, -3.0] if d >= 3 else [0.0, -1.0]))
        n = int(rng.integers(10, 60))
        pos = rng.standard_normal((n, d)) * rng.uniform(0.5, 2.0)
        sc = rng.standard_normal((n, d)) * rng.uniform(0.5, 3.0)
        got, _ = velocity_pairwise(pos, sc, gamma, 1.0)
        want = velocity_naive(pos, sc, gamma, 1.0)
        worst = max(worst, float(np.abs(got - want).max()))
    report("7a", "velocity vs naive loop", worst <= 1e-12,
           f"max component deviation {worst:.2e} over 20 instances")


def test_criterion_7b_backprop_oracle():
    worst = 0.0
    for seed in range(10):
        sizes = [2, 5, 2] if seed % 2 == 0 else [3, 4, 4, 3]
        m = Mlp(sizes, rng=Rng(1000 + seed))
        x = np.random.default_rng(seed).standard_normal((6, sizes[0]))

        def loss():
            y = mlp_eval(m, x)
            return float(np.mean(np.sum(y * y, axis=1)))

        y = mlp_eval(m, x)
        dW, db = mlp_gradient(m, x, 2.0 * y / x.shape[0])
        fd = finite_difference_gradient(loss, m.weights + m.biases)
        for ana, num in zip(dW + db, fd):
            rel = np.max(np.abs(ana - num) / (np.abs(num) + 1e-8))
            worst = max(worst, float(rel))
    report("7b", "backprop vs finite differences", worst < 1e-5,
           f"max relative error {worst:.2e} over 10 nets")


def test_criterion_7c_divergence_estimator():
    rng = np.random.default_rng(200)
    alpha, draws = 1e-3, 100_000
    worst_sigmas = 0.0
    for _ in range(5):
        d = int(rng.integers(2, 5))
        M = rng.standard_normal((d, d))
        x = rng.standard_normal(d)
        Z = rng.standard_normal((draws, d))
        m = Mlp([d, d])
        m.weights[0][:] = M
        s_plus = mlp_eval(m, x[None, :] + alpha * Z)
        s_minus = mlp_eval(m, x[None, :] - alpha * Z)
        vals = np.einsum("ij,ij->i", s_plus - s_minus, Z) / (2.0 * alpha)
        se = vals.std() / np.sqrt(draws)
        sigmas = abs(vals.mean() - np.trace(M)) / se
        worst_sigmas = max(worst_sigmas, float(sigmas))
    report("7c", "divergence estimator", worst_sigmas <= 3.0,
           f"max deviation {worst_sigmas:.2f} standard errors (<= 3)")


def test_criterion_7d_sampler_oracle():
    n = 100_000
    sol = BkwSolution(3, 1.0 / 24.0, 5.5)
    mix = ensemble_moments(sample_bkw(Rng(300), n, sol)).second_moment
    rej = rejection_sample_bkw(sol, n, seed=301)
    diff = float(np.abs(mix - rej.T @ rej / n).max())
    report("7d", "mixture vs rejection sampler", diff < 5.0 / np.sqrt(n),
           f"second moment deviation {diff:.4f} (< {5.0 / np.sqrt(n):.4f})")


def test_criterion_8_null_velocity():
    rng = np.random.default_rng(400)
    worst = 0.0
    for gamma in (0.0, -3.0):
        kernel = CollisionKernel(gamma=gamma, d=3)
        for _ in range(10):
            pos = rng.standard_normal((80, 3)) * rng.uniform(0.5, 2.0)
            a, c = rng.uniform(-3, 3), rng.standard_normal(3)
            v = compute_velocity(ParticleEnsemble(pos), kernel, a * pos + c)
            worst = max(worst, float(np.abs(v.values).max()))
    report(8, "affine-score null velocity", worst <= 1e-12,
           f"max |v| = {worst:.2e} over both kernels")


def test_criterion_9_lemma3_sandwich():
    rng = np.random.default_rng(500)
    failures = 0
    total = 0
    for _ in range(10):
        d = 3
        A = rng.standard_normal((d, d))
        cov = A @ A.T + rng.uniform(0.05, 0.5) * np.eye(d)
        V = rng.standard_normal(d) * 0.5
        sigma = cov + np.outer(V, V)
        c = MaxwellianCoefficients(V, float(np.trace(sigma)), sigma)
        e = sample_gaussian(Rng(int(rng.integers(1e6))), 2000, V, np.ones(d))
        emp_c = MaxwellianCoefficients.from_moments(ensemble_moments(e))
        for _ in range(100):
            x = rng.standard_normal(d) * 2.0
            lo, hi = convolution_bounds(c, x)
            norm = np.linalg.norm(maxwellian_convolution(c, x), 2)
            slack = 1e-9 * max(1.0, hi)
            if not (lo - slack <= norm <= hi + slack):
                failures += 1
            lo_e, hi_e = convolution_bounds(emp_c, x)
            norm_e = np.linalg.norm(empirical_convolution(e, x), 2)
            slack_e = 1e-9 * max(1.0, hi_e)
            if not (lo_e - slack_e <= norm_e <= hi_e + slack_e):
                failures += 1
            total += 2
    report(9, "convolution sandwich bounds", failures == 0,
           f"{failures} failures out of {total} checks")


def test_criterion_10_runtime_scaling():
    base_blob = load_preset("example2_aniso3_blob")
    base_sbtm = load_preset("example2_aniso3_sbtm")
    sbtm_solver = replace(
        base_sbtm.solver, train_mode="fixed", steps_per_iteration=25,
        init_threshold=2.0,
    )
    # warm-up
    run_experiment(with_overrides(base_blob, particles=400, t_end=0.02))

    vel, train = {}, {}
    for n in (3200, 6400, 12800):
        cfg = with_overrides(base_blob, particles=n, t_end=0.1)
        _, summary = run_experiment(cfg)
        vel[n] = summary["phase_seconds"]["velocity"]
        cfg = with_overrides(
            base_sbtm, particles=n, t_end=0.1, solver=sbtm_solver
        )
        _, summary = run_experiment(cfg)
        train[n] = summary["phase_seconds"]["training"]

    vel_ratios = [vel[6400] / vel[3200], vel[12800] / vel[6400]]
    train_ratios = [train[6400] / train[3200], train[12800] / train[6400]]
    ok_vel = all(3.0 <= r <= 5.3 for r in vel_ratios)
    ok_train = all(1.5 <= r <= 2.6 for r in train_ratios)
    report(10, "runtime scaling", ok_vel and ok_train,
           f"velocity x2 ratios {[f'{r:.2f}' for r in vel_ratios]} in [3.0, 5.3]; "
           f"training x2 ratios {[f'{r:.2f}' for r in train_ratios]} in [1.5, 2.6]")


def test_criterion_11_determinism(preset_runs_n1000, tmp_path):
    identical = True
    for name in ("example2_aniso3_blob", "example3_coulomb_sbtm"):
        cfg = preset_runs_n1000[name]["cfg"]
        rerun_dir = tmp_path / name
        run_to_files(cfg, rerun_dir)
        first = (preset_runs_n1000[name]["out"] / "metrics.csv").read_bytes()
        second = (rerun_dir / "metrics.csv").read_bytes()
        identical = identical and first == second
    report(11, "byte-identical reruns", identical,
           "metrics.csv identical across reruns for blob and sbtm presets")
