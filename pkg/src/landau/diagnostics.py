"""Quantitative run metrics: moment errors, score error, density
reconstruction, entropy rate, and the convolution bound checks.

All metrics are pure functions of their inputs. CSV column names used by the
runner: cov11, cov_err_sq_frobenius, score_err_normalized, l2_density_err,
entropy_rate, momentum_drift, energy_drift, weighted_loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .analytic import MaxwellianCoefficients, convolution_bounds, maxwellian_convolution
from .core import MomentState, ParticleEnsemble, covariance, ensemble_moments
from .dynamics import VelocityField, entropy_rate

__all__ = [
    "MetricRecord",
    "covariance_frobenius_error",
    "normalized_score_error",
    "kde_bandwidth_matrix",
    "kde_density",
    "l2_density_error",
    "entropy_rate",
    "weighted_score_loss",
    "empirical_convolution",
    "lemma3_bound_check",
    "Lemma3Report",
]

METRIC_NAMES = (
    "cov11",
    "cov_err_sq_frobenius",
    "score_err_normalized",
    "l2_density_err",
    "entropy_rate",
    "momentum_drift",
    "energy_drift",
    "weighted_loss",
)


@dataclass(frozen=True)
class MetricRecord:
    time: float
    values: dict

    def __post_init__(self):
        for name, val in self.values.items():
            if not np.isfinite(val):
                raise ValueError(f"metric {name} is not finite at t={self.time}")


def covariance_frobenius_error(e: ParticleEnsemble, sigma_ref: np.ndarray) -> float:
    """Sum of squared entrywise differences between the ensemble second
    moment and the reference (the squared Frobenius norm, as reported)."""
    sigma = ensemble_moments(e).second_moment
    diff = sigma - np.asarray(sigma_ref, dtype=np.float64)
    return float(np.sum(diff * diff))


def normalized_score_error(score, truth, e: ParticleEnsemble) -> float:
    """sum_i |truth(X_i) - s(X_i)|^2 / sum_i |truth(X_i)|^2."""
    s = score(e.positions) if callable(score) else np.asarray(score)
    t = truth(e.positions) if callable(truth) else np.asarray(truth)
    denom = float(np.einsum("ij,ij->", t, t))
    if denom == 0.0:
        raise ValueError("true score vanishes on the ensemble; error undefined")
    diff = t - s
    return float(np.einsum("ij,ij->", diff, diff)) / denom


def kde_bandwidth_matrix(e: ParticleEnsemble) -> np.ndarray:
    """Matrix plug-in bandwidth H = n^{-1/(d+4)} * sample covariance."""
    cov = covariance(ensemble_moments(e))
    return e.n ** (-1.0 / (e.d + 4)) * cov


def kde_density(e: ParticleEnsemble, x) -> np.ndarray:
    """Gaussian-kernel density estimate with matrix bandwidth at query x."""
    H = kde_bandwidth_matrix(e)
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sample covariance is singular; KDE undefined") from exc
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    pts = np.atleast_2d(x_arr)
    d = e.d
    Linv_t = np.linalg.inv(L).T
    wq = np.ascontiguousarray(pts @ Linv_t)
    wx = np.ascontiguousarray(e.positions @ Linv_t)
    norm = (2.0 * np.pi) ** (-d / 2.0) / np.prod(np.diag(L)) / e.n
    out = norm * _backend.kde_sum(wq, wx)
    return float(out[0]) if single else out


def default_quadrature_box(e: ParticleEnsemble, n_sigma: float = 5.0):
    """Axis-aligned box [V - k sigma_max, V + k sigma_max] per axis."""
    m = ensemble_moments(e)
    sig_max = float(np.sqrt(np.max(np.linalg.eigvalsh(covariance(m)))))
    lo = m.momentum - n_sigma * sig_max
    hi = m.momentum + n_sigma * sig_max
    return lo, hi


def l2_density_error(
    e: ParticleEnsemble, truth, box=None, grid: int = 64
) -> float:
    """Midpoint-rule L2 distance between the KDE reconstruction and truth.

    Supported for d <= 3 only (grid quadrature).
    """
    if e.d > 3:
        raise ValueError("L2 density error uses a grid; only d <= 3 supported")
    if box is None:
        lo, hi = default_quadrature_box(e)
    else:
        lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    axes = [
        lo[k] + (hi[k] - lo[k]) * (np.arange(grid) + 0.5) / grid
        for k in range(e.d)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    cell = float(np.prod((hi - lo) / grid))
    diff = truth(pts) - kde_density(e, pts)
    return float(np.sqrt(np.sum(diff * diff) * cell))


def weighted_score_loss(
    score, truth, c: MaxwellianCoefficients, e: ParticleEnsemble
) -> float:
    """(1/n) sum_i (truth - s)(X_i)^T (A*u)(X_i) (truth - s)(X_i).

    Monte Carlo estimate of the convolution-weighted score matching loss;
    uses the unit-constant Maxwellian kernel.
    """
    s = score(e.positions) if callable(score) else np.asarray(score)
    t = truth(e.positions) if callable(truth) else np.asarray(truth)
    q = t - s
    x = e.positions
    V = c.momentum
    # (A*u) q = (|x|^2 + 2E - 2 V.x) q + V (x.q) + x (V.q) - x (x.q) - Sigma q
    xq = np.einsum("ij,ij->i", x, q)
    vq = q @ V
    scal = np.einsum("ij,ij->i", x, x) + c.two_energy - 2.0 * (x @ V)
    out = scal[:, None] * q
    out += xq[:, None] * V[None, :]
    out += vq[:, None] * x
    out -= xq[:, None] * x
    out -= q @ c.sigma_t
    return float(np.einsum("ij,ij->", q, out)) / e.n


def empirical_convolution(e: ParticleEnsemble, x: np.ndarray) -> np.ndarray:
    """(1/n) sum_j A(x - X_j) for the unit-constant Maxwellian kernel."""
    x = np.asarray(x, dtype=np.float64)
    z = x[None, :] - e.positions
    r2 = np.einsum("ij,ij->i", z, z)
    return float(np.mean(r2)) * np.eye(e.d) - z.T @ z / e.n


@dataclass(frozen=True)
class ProbeCheck:
    probe: np.ndarray
    lower: float
    upper: float
    analytic_norm: float
    empirical_norm: float
    analytic_ok: bool
    empirical_ok: bool

    @property
    def passed(self) -> bool:
        return self.analytic_ok and self.empirical_ok


@dataclass(frozen=True)
class Lemma3Report:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def lemma3_bound_check(
    e: ParticleEnsemble,
    c: MaxwellianCoefficients,
    probes,
    rtol: float = 1e-9,
) -> Lemma3Report:
    """Verify tr(cov) - ||cov|| <= ||A*u(x)|| <= 2E + |x - V|^2 at each probe.

    The analytic convolution is checked against the bounds of the given
    moment state; the empirical pairwise average against the ensemble's own
    moments (the sandwich is exact algebra for any distribution).
    """
    emp_c = MaxwellianCoefficients.from_moments(ensemble_moments(e))
    checks = []
    for x in np.atleast_2d(np.asarray(probes, dtype=np.float64)):
        lo_a, hi_a = convolution_bounds(c, x)
        norm_a = float(np.linalg.norm(maxwellian_convolution(c, x), 2))
        slack_a = rtol * max(1.0, hi_a)
        ok_a = (norm_a >= lo_a - slack_a) and (norm_a <= hi_a + slack_a)

        lo_e, hi_e = convolution_bounds(emp_c, x)
        norm_e = float(np.linalg.norm(empirical_convolution(e, x), 2))
        slack_e = rtol * max(1.0, hi_e)
        ok_e = (norm_e >= lo_e - slack_e) and (norm_e <= hi_e + slack_e)

        checks.append(
            ProbeCheck(
                probe=x, lower=lo_a, upper=hi_a,
                analytic_norm=norm_a, empirical_norm=norm_e,
                analytic_ok=ok_a, empirical_ok=ok_e,
            )
        )
    return Lemma3Report(checks=checks)
