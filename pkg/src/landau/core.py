"""Core domain types: particle ensembles, the collision kernel family, and
moment bookkeeping.

All types are immutable value objects; arrays are marked read-only after
construction so they can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParticleEnsemble:
    """n particles in d-dimensional velocity space, each with weight 1/n."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2:
            raise ValueError("positions must be an (n, d) array")
        if pos.shape[0] < 1 or pos.shape[1] < 1:
            raise ValueError("need at least one particle and one dimension")
        if not np.isfinite(pos).all():
            raise ValueError("positions contain non-finite values")
        object.__setattr__(self, "positions", _frozen(pos))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class CollisionKernel:
    """Matrix-valued interaction kernel A(z) = B |z|^gamma (|z|^2 I - z z^T).

    gamma = 0 is the Maxwellian-molecule case, gamma = -3 (in d = 3) the
    Coulomb case. A(0) is defined as the zero matrix for every gamma, which
    removes the singular self-interaction term from pairwise sums.
    """

    gamma: float
    d: int
    b_const: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if not -self.d - 1 <= self.gamma <= 1:
            raise ValueError(
                f"gamma={self.gamma} outside admissible range [{-self.d - 1}, 1]"
            )
        if not np.isfinite(self.b_const) or self.b_const <= 0:
            raise ValueError("kernel constant must be positive and finite")


@dataclass(frozen=True)
class MomentState:
    """Mass, momentum, energy and second moment of a distribution."""

    momentum: np.ndarray          # V
    two_energy: float             # 2E = trace of the second moment
    second_moment: np.ndarray     # Sigma = E[x x^T]
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "momentum", _frozen(self.momentum))
        object.__setattr__(self, "second_moment", _frozen(self.second_moment))

    @property
    def d(self) -> int:
        return self.momentum.shape[0]


def kernel_eval(kernel: CollisionKernel, z: np.ndarray) -> np.ndarray:
    """Evaluate A(z); returns the zero matrix at z = 0 for every gamma."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (kernel.d,):
        raise ValueError(f"expected a {kernel.d}-vector")
    r2 = float(z @ z)
    if r2 == 0.0:
        return np.zeros((kernel.d, kernel.d))
    coef = kernel.b_const * r2 ** (0.5 * kernel.gamma)
    return coef * (r2 * np.eye(kernel.d) - np.outer(z, z))


def ensemble_moments(e: ParticleEnsemble) -> MomentState:
    """Empirical momentum, energy and second moment (equal weights 1/n)."""
    pos = e.positions
    momentum = pos.mean(axis=0)
    second = pos.T @ pos / e.n
    second = 0.5 * (second + second.T)
    return MomentState(
        momentum=momentum,
        two_energy=float(np.trace(second)),
        second_moment=second,
    )


def covariance(m: MomentState) -> np.ndarray:
    """Centered covariance Sigma - V V^T."""
    return m.second_moment - np.outer(m.momentum, m.momentum)
