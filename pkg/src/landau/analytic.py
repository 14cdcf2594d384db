"""Closed-form reference solutions and Maxwellian-kernel coefficients.

Covers the isotropic Gaussian-times-quadratic exact solution (Maxwellian
molecules, kernel constant B), Gaussian initial data, the closed-form second
moment relaxation, and the analytic convolution A*u and drift used by
diagnostics. Time conventions: the second-moment decay exponent is -4*d*B*t,
i.e. proportional to the kernel constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import MomentState


class PreSingularTimeError(ValueError):
    """Evaluation time is at or below the singular time of the solution."""


def _as_points(x: np.ndarray, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"expected a {d}-vector")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}")
    return x, False


@dataclass(frozen=True)
class BkwSolution:
    """Exact isotropic solution u_t(x) = (2 pi K)^{-d/2} e^{-|x|^2/2K} (P + Q|x|^2).

    K = 1 - exp(-2 B (d-1) t),  P = ((d+2)K - d)/(2K),  Q = (1-K)/(2K^2).
    The density is nonnegative only for t with P >= 0; the singular time is
    t* = log(d/2 + 1) / (2 B (d-1)).
    """

    d: int
    b_const: float
    t: float

    @cached_property
    def K(self) -> float:
        return 1.0 - np.exp(-2.0 * self.b_const * (self.d - 1) * self.t)

    @cached_property
    def P(self) -> float:
        return ((self.d + 2) * self.K - self.d) / (2.0 * self.K)

    @cached_property
    def Q(self) -> float:
        return (1.0 - self.K) / (2.0 * self.K**2)

    @property
    def singular_time(self) -> float:
        return np.log(self.d / 2.0 + 1.0) / (2.0 * self.b_const * (self.d - 1))

    def at(self, t: float) -> "BkwSolution":
        return BkwSolution(self.d, self.b_const, t)

    def _check(self):
        if self.t <= 0.0 or self.P < 0.0:
            raise PreSingularTimeError(
                f"pre-singular time t={self.t} (singular at t*={self.singular_time:.6g})"
            )


def bkw_density(sol: BkwSolution, x: np.ndarray) -> np.ndarray:
    sol._check()
    pts, single = _as_points(x, sol.d)
    r2 = np.einsum("ij,ij->i", pts, pts)
    val = (2.0 * np.pi * sol.K) ** (-sol.d / 2.0) * np.exp(-r2 / (2.0 * sol.K)) * (
        sol.P + sol.Q * r2
    )
    return float(val[0]) if single else val


def bkw_score(sol: BkwSolution, x: np.ndarray) -> np.ndarray:
    """Gradient of log bkw_density: -x/K + 2 Q x / (P + Q |x|^2)."""
    sol._check()
    pts, single = _as_points(x, sol.d)
    r2 = np.einsum("ij,ij->i", pts, pts)
    denom = sol.P + sol.Q * r2
    if np.any(denom <= 0.0):
        raise ValueError("score undefined where P + Q|x|^2 <= 0")
    out = pts * (-1.0 / sol.K + 2.0 * sol.Q / denom)[:, None]
    return out[0] if single else out


def bkw_score_divergence(sol: BkwSolution, x: np.ndarray) -> np.ndarray:
    sol._check()
    pts, single = _as_points(x, sol.d)
    r2 = np.einsum("ij,ij->i", pts, pts)
    denom = sol.P + sol.Q * r2
    out = -sol.d / sol.K + 2.0 * sol.Q * sol.d / denom - 4.0 * sol.Q**2 * r2 / denom**2
    return float(out[0]) if single else out


@dataclass(frozen=True)
class GaussianSolution:
    """Normal density with mean V and diagonal covariance diag(variances)."""

    mean: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        var = np.ascontiguousarray(self.variances, dtype=np.float64)
        if mean.ndim != 1 or var.shape != mean.shape:
            raise ValueError("mean and variances must be matching vectors")
        if np.any(var <= 0.0):
            raise ValueError("variances must be strictly positive")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variances", var)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.variances)


def gaussian_score(sol: GaussianSolution, x: np.ndarray) -> np.ndarray:
    """-Sigma0^{-1} (x - V), componentwise for the diagonal covariance."""
    pts, single = _as_points(x, sol.d)
    out = -(pts - sol.mean) / sol.variances
    return out[0] if single else out


def gaussian_score_divergence(sol: GaussianSolution, x: np.ndarray) -> np.ndarray:
    pts, single = _as_points(x, sol.d)
    val = -np.sum(1.0 / sol.variances)
    out = np.full(pts.shape[0], val)
    return float(out[0]) if single else out


def equilibrium_second_moment(V: np.ndarray, two_e: float) -> np.ndarray:
    """Sigma(inf)_{ij} = (1/d)(delta_{ij} (2E - |V|^2) + d V_i V_j)."""
    V = np.asarray(V, dtype=np.float64)
    d = V.shape[0]
    return (two_e - V @ V) / d * np.eye(d) + np.outer(V, V)


def second_moment_evolution(
    sigma0: np.ndarray,
    V: np.ndarray,
    two_e: float,
    t: float,
    b_const: float = 1.0,
) -> np.ndarray:
    """Second moment at time t for Maxwellian molecules.

    Sigma(t) = Sigma(inf) - (Sigma(inf) - Sigma(0)) exp(-4 d B t).
    """
    sigma0 = np.asarray(sigma0, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    d = V.shape[0]
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    tr = float(np.trace(sigma0))
    if abs(tr - two_e) > 1e-8 * max(1.0, abs(two_e)):
        raise ValueError(
            f"trace(Sigma0)={tr} inconsistent with 2E={two_e}"
        )
    sig_inf = equilibrium_second_moment(V, two_e)
    return sig_inf - (sig_inf - sigma0) * np.exp(-4.0 * d * b_const * t)


@dataclass(frozen=True)
class MaxwellianCoefficients:
    """Moment data (V, 2E, Sigma_t) entering the Maxwellian-kernel A*u and drift.

    The convolution below uses the plain kernel A(z) = |z|^2 I - z z^T
    (unit kernel constant).
    """

    momentum: np.ndarray
    two_energy: float
    sigma_t: np.ndarray

    def __post_init__(self):
        mom = np.ascontiguousarray(self.momentum, dtype=np.float64)
        sig = np.ascontiguousarray(self.sigma_t, dtype=np.float64)
        if mom.ndim != 1 or sig.shape != (mom.shape[0], mom.shape[0]):
            raise ValueError("inconsistent moment shapes")
        tr = float(np.trace(sig))
        if abs(tr - self.two_energy) > 1e-12 * max(1.0, abs(self.two_energy)):
            raise ValueError(f"trace(Sigma)={tr} does not match 2E={self.two_energy}")
        mom.setflags(write=False)
        sig.setflags(write=False)
        object.__setattr__(self, "momentum", mom)
        object.__setattr__(self, "sigma_t", sig)

    @classmethod
    def from_moments(cls, m: MomentState) -> "MaxwellianCoefficients":
        return cls(momentum=m.momentum, two_energy=m.two_energy, sigma_t=m.second_moment)

    @property
    def d(self) -> int:
        return self.momentum.shape[0]


def maxwellian_convolution(c: MaxwellianCoefficients, x: np.ndarray) -> np.ndarray:
    """(A*u)(x), exact for any distribution with the given moments.

    (A*u)_{ij} = delta_{ij}(|x|^2 + 2E - 2 V.x) + V_i x_j + V_j x_i
                 - x_i x_j - Sigma_{ij}.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (c.d,):
        raise ValueError(f"expected a {c.d}-vector")
    V = c.momentum
    diag = float(x @ x) + c.two_energy - 2.0 * float(V @ x)
    out = diag * np.eye(c.d)
    out += np.outer(V, x) + np.outer(x, V) - np.outer(x, x) - c.sigma_t
    return out


def maxwellian_drift(c: MaxwellianCoefficients, x: np.ndarray) -> np.ndarray:
    """Drift A * grad u = -(d-1)(x - V) for the Maxwellian kernel."""
    x = np.asarray(x, dtype=np.float64)
    return -(c.d - 1) * (x - c.momentum)


def convolution_bounds(c: MaxwellianCoefficients, x: np.ndarray) -> tuple[float, float]:
    """Lower/upper bounds on ||A*u(x)||_2: tr(cov) - ||cov||_2 and 2E + |x-V|^2."""
    cov = c.sigma_t - np.outer(c.momentum, c.momentum)
    eigs = np.linalg.eigvalsh(cov)
    lower = float(np.sum(eigs) - np.max(np.abs(eigs)))
    dx = np.asarray(x, dtype=np.float64) - c.momentum
    upper = float(c.two_energy + dx @ dx)
    return lower, upper
