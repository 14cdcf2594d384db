"""Seeded sampling: counter-based RNG, polar-method normals, and exact
samplers for the Gaussian and Gaussian-times-quadratic initial conditions.

Standard normals are generated by the Marsaglia polar method on top of the
raw uniform stream rather than the library's normal sampler, so the sample
stream is pinned down by the seed and the documented algorithm alone.
"""

from __future__ import annotations

import math

import numpy as np

from . import _backend
from .analytic import BkwSolution
from .core import ParticleEnsemble


class Rng:
    """Philox (counter-based) generator with derived sub-streams.

    Identical seeds give identical sample streams. Sub-streams are obtained
    by fixed jump offsets from the master seed, so they never overlap.
    """

    def __init__(self, seed: int, _bit_generator=None):
        self.seed = int(seed)
        if _bit_generator is None:
            _bit_generator = np.random.Philox(key=self.seed)
        self._gen = np.random.Generator(_bit_generator)

    def substream(self, index: int) -> "Rng":
        bg = np.random.Philox(key=self.seed).jumped(index + 1)
        return Rng(self.seed, _bit_generator=bg)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        return self._gen.random(n)

    def standard_normal(self, shape) -> np.ndarray:
        """Standard normals via the polar method, filled in a fixed order."""
        if np.isscalar(shape):
            shape = (int(shape),)
        total = int(np.prod(shape)) if shape else 1
        out = np.empty(total)
        pos = 0
        while pos < total:
            npairs = ((total - pos) * 3) // 4 + 32
            u1 = self._gen.random(npairs)
            u2 = self._gen.random(npairs)
            pos, _ = _backend.polar_fill(out, pos, u1, u2)
        return out.reshape(shape)


def sample_gaussian(rng: Rng, n: int, mean, variances) -> ParticleEnsemble:
    """n i.i.d. draws from N(mean, diag(variances))."""
    mean = np.asarray(mean, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if n < 2:
        raise ValueError("need at least two particles")
    if np.any(variances <= 0.0):
        raise ValueError("variances must be strictly positive")
    z = rng.standard_normal((n, mean.shape[0]))
    return ParticleEnsemble(mean + z * np.sqrt(variances))


def sample_bkw(rng: Rng, n: int, sol: BkwSolution) -> ParticleEnsemble:
    """n i.i.d. draws from the Gaussian-times-quadratic density at sol.t.

    Uses the exact two-component mixture: with probability P a draw from
    N(0, K I); otherwise radius r with r^2/K ~ chi-squared(d+2) times a
    uniform direction. Mixture weights are P and Q d K = 1 - P.
    """
    if n < 2:
        raise ValueError("need at least two particles")
    sol._check()
    d, K = sol.d, sol.K
    u = rng.uniform(n)
    g = rng.standard_normal((n, d))
    chi = rng.standard_normal((n, d + 2))
    gaussian_branch = u < sol.P
    norms = np.sqrt(np.einsum("ij,ij->i", g, g))
    norms[norms == 0.0] = 1.0
    radius = np.sqrt(K * np.einsum("ij,ij->i", chi, chi))
    pos = np.where(
        gaussian_branch[:, None],
        math.sqrt(K) * g,
        g / norms[:, None] * radius[:, None],
    )
    return ParticleEnsemble(pos)
