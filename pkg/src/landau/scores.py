"""Score models: analytic wrappers, the kernel (blob) score, and a small
MLP trained by score matching.

Every model maps query points (m, d) -> (m, d) approximating grad log u and
exposes an exact divergence, which the implicit score-matching loss needs.
The MLP uses softsign hidden activations, Glorot-uniform seeded init, and is
trained with Adam on the denoised divergence loss.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .core import ParticleEnsemble, covariance, ensemble_moments
from .sampling import Rng


class TrainingNotConverged(RuntimeError):
    def __init__(self, message, final_loss):
        super().__init__(message)
        self.final_loss = final_loss


class AnalyticScore:
    """Score model backed by closed-form score and divergence callables."""

    def __init__(self, score_fn, divergence_fn):
        self._score = score_fn
        self._div = divergence_fn

    def __call__(self, x):
        return self._score(x)

    def divergence(self, x):
        return self._div(x)


def silverman_bandwidth(e: ParticleEnsemble) -> float:
    """Plug-in bandwidth n^{-1/(d+6)} (sigma_1 ... sigma_d)^{1/d} where
    sigma_i are eigenvalues of the sample covariance."""
    eigs = np.linalg.eigvalsh(covariance(ensemble_moments(e)))
    if np.min(eigs) <= 1e-300:
        raise ValueError("sample covariance is singular; bandwidth undefined")
    return float(e.n ** (-1.0 / (e.d + 6)) * np.exp(np.mean(np.log(eigs))))


class BlobScore:
    """Gradient of the regularized-entropy variation for a fixed ensemble.

    With phi_eps a Gaussian of variance eps and rho = (1/n) sum_k phi(x - X_k):

        s(x) = grad rho(x) / rho(x) + (1/n) sum_k grad phi(x - X_k) / rho(X_k)

    Construction precomputes rho at the particles (the O(n^2) part).
    """

    def __init__(self, ensemble: ParticleEnsemble, eps: float,
                 cache_limit_bytes: float = 4e8):
        if eps <= 0.0:
            raise ValueError("bandwidth must be positive")
        self.ensemble = ensemble
        self.eps = float(eps)
        self._scores, self._r = _backend.blob_scores(
            ensemble.positions, self.eps, cache_limit_bytes
        )
        self._g = 1.0 / self._r

    def at_particles(self) -> np.ndarray:
        """Score at every particle of the defining ensemble."""
        return self._scores

    def rho_at_particles(self) -> np.ndarray:
        n, d = self.ensemble.n, self.ensemble.d
        return (2.0 * np.pi * self.eps) ** (-d / 2.0) * self._r / n

    def _pair_data(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        dz = pts[:, None, :] - self.ensemble.positions[None, :, :]
        e = np.exp(-np.einsum("ijk,ijk->ij", dz, dz) * (0.5 / self.eps))
        R = e.sum(axis=1)
        if np.any(R == 0.0):
            raise ValueError("query far outside support of the ensemble")
        return pts, dz, e, R

    def __call__(self, x):
        single = np.asarray(x).ndim == 1
        pts, dz, e, R = self._pair_data(x)
        w = e / R[:, None] + e * self._g[None, :]
        out = -np.einsum("ij,ijk->ik", w, dz) / self.eps
        return out[0] if single else out

    def divergence(self, x):
        single = np.asarray(x).ndim == 1
        pts, dz, e, R = self._pair_data(x)
        r2 = np.einsum("ijk,ijk->ij", dz, dz)
        d = self.ensemble.d
        lap = (r2 / self.eps**2 - d / self.eps) * e
        grad = -np.einsum("ij,ijk->ik", e, dz) / self.eps
        div1 = lap.sum(axis=1) / R - np.einsum("ik,ik->i", grad, grad) / R**2
        div2 = (lap * self._g[None, :]).sum(axis=1)
        out = div1 + div2
        return float(out[0]) if single else out


def blob_score(e: ParticleEnsemble, eps: float, x) -> np.ndarray:
    """One-shot kernel score evaluation at query x."""
    return BlobScore(e, eps)(x)


class Mlp:
    """Fully connected net with softsign hidden layers and linear output."""

    def __init__(self, layer_sizes, rng: Rng | None = None, dtype=np.float64):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("layer_sizes must list at least input and output")
        self.sizes = sizes
        self.dtype = np.dtype(dtype)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                w = (2.0 * rng.uniform(fan_in * fan_out) - 1.0) * limit
                w = w.reshape(fan_in, fan_out)
            self.weights.append(np.ascontiguousarray(w, dtype=self.dtype))
            self.biases.append(np.zeros(fan_out, dtype=self.dtype))
        self._ws: dict[int, dict] = {}

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self):
        return self.weights + self.biases

    def copy(self) -> "Mlp":
        m = Mlp(self.sizes, rng=None, dtype=self.dtype)
        m.weights = [w.copy() for w in self.weights]
        m.biases = [b.copy() for b in self.biases]
        return m

    def _workspace(self, rows: int) -> dict:
        ws = self._ws.get(rows)
        if ws is None:
            ws = {
                "Z": [np.empty((rows, s), self.dtype) for s in self.sizes[1:]],
                "A": [np.empty((rows, s), self.dtype) for s in self.sizes[1:-1]],
                "dA": [np.empty((rows, s), self.dtype) for s in self.sizes[1:-1]],
                "dW": [np.empty_like(w) for w in self.weights],
                "db": [np.empty_like(b) for b in self.biases],
            }
            self._ws[rows] = ws
        return ws

    def _forward(self, x, ws):
        a = x
        for layer in range(self.n_layers):
            z = ws["Z"][layer]
            np.dot(a, self.weights[layer], out=z)
            z += self.biases[layer]
            if layer < self.n_layers - 1:
                _backend.softsign_forward(z, ws["A"][layer])
                a = ws["A"][layer]
        return ws["Z"][-1]

    def _backward(self, x, dY, ws):
        """Reverse pass; dY is consumed as the cotangent of the output."""
        dZ = dY
        for layer in range(self.n_layers - 1, -1, -1):
            prev = x if layer == 0 else ws["A"][layer - 1]
            np.dot(prev.T, dZ, out=ws["dW"][layer])
            np.sum(dZ, axis=0, out=ws["db"][layer])
            if layer > 0:
                np.dot(dZ, self.weights[layer].T, out=ws["dA"][layer - 1])
                _backend.softsign_backward(
                    ws["A"][layer - 1], ws["dA"][layer - 1], ws["Z"][layer - 1]
                )
                dZ = ws["Z"][layer - 1]
        return ws["dW"], ws["db"]


def mlp_eval(m: Mlp, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts (d,) or (batch, d), returns float64."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = np.ascontiguousarray(np.atleast_2d(x), dtype=m.dtype)
    for layer in range(m.n_layers):
        z = a @ m.weights[layer] + m.biases[layer]
        if layer < m.n_layers - 1:
            a = np.empty_like(z)
            _backend.softsign_forward(z, a)
        else:
            a = z
    out = np.asarray(a, dtype=np.float64)
    return out[0] if single else out


def mlp_gradient(m: Mlp, x: np.ndarray, output_cotangent: np.ndarray):
    """Exact reverse-mode parameter gradient of sum(output * cotangent).

    Returns (weight_grads, bias_grads) as fresh arrays.
    """
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=m.dtype)
    dY = np.ascontiguousarray(np.atleast_2d(output_cotangent), dtype=m.dtype)
    ws = m._workspace(x.shape[0])
    m._forward(x, ws)
    dW, db = m._backward(x, dY.copy(), ws)
    return [w.copy() for w in dW], [b.copy() for b in db]


def mlp_divergence(m: Mlp, x: np.ndarray) -> np.ndarray:
    """Exact divergence via d forward-mode directional derivative passes."""
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=m.dtype)
    B, d = x.shape
    acts = []
    a = x
    for layer in range(m.n_layers):
        z = a @ m.weights[layer] + m.biases[layer]
        if layer < m.n_layers - 1:
            a = np.empty_like(z)
            _backend.softsign_forward(z, a)
            acts.append(a)
        else:
            a = z
    div = np.zeros(B, dtype=np.float64)
    for k in range(d):
        t = np.zeros((B, d), dtype=m.dtype)
        t[:, k] = 1.0
        for layer in range(m.n_layers):
            t = t @ m.weights[layer]
            if layer < m.n_layers - 1:
                A = acts[layer]
                t = t * np.square(1.0 - np.abs(A))
        div += np.asarray(t[:, k], dtype=np.float64)
    return div


class NeuralScore:
    """Score model wrapping an Mlp; evaluation is deterministic."""

    def __init__(self, mlp: Mlp):
        self.mlp = mlp

    def __call__(self, x):
        return mlp_eval(self.mlp, x)

    def divergence(self, x):
        single = np.asarray(x).ndim == 1
        out = mlp_divergence(self.mlp, x)
        return float(out[0]) if single else out


class AdamState:
    """Adam accumulators for an Mlp (beta1=0.9, beta2=0.999, damp=1e-8)."""

    def __init__(self, m: Mlp, learning_rate: float = 4e-4,
                 beta1: float = 0.9, beta2: float = 0.999, damp: float = 1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.damp = float(damp)
        self.step_count = 0
        self._m = [np.zeros_like(p) for p in m.parameters()]
        self._v = [np.zeros_like(p) for p in m.parameters()]

    def step(self, m: Mlp, weight_grads, bias_grads):
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        params = m.parameters()
        grads = list(weight_grads) + list(bias_grads)
        for p, g, ma, va in zip(params, grads, self._m, self._v):
            _backend.adam_update(
                p.ravel(), np.ascontiguousarray(g).ravel(), ma.ravel(), va.ravel(),
                self.learning_rate, self.beta1, self.beta2, self.damp, bc1, bc2,
            )


def denoising_loss_with_noise(m: Mlp, positions: np.ndarray, alpha: float,
                              Z: np.ndarray) -> float:
    """Denoised divergence loss for a fixed noise draw Z (one row per particle)."""
    value, _, _ = _denoising_pass(m, positions, alpha, Z, with_grad=False)
    return value


def denoising_loss(m: Mlp, batch: ParticleEnsemble, alpha: float, rng: Rng) -> float:
    """(1/n) sum_i [ |s(X_i)|^2 + (s(X_i + aZ_i) - s(X_i - aZ_i)) . Z_i / a ]."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    Z = rng.standard_normal(batch.positions.shape)
    return denoising_loss_with_noise(m, batch.positions, alpha, Z)


def _denoising_pass(m: Mlp, positions, alpha, Z, with_grad=True):
    B, d = positions.shape
    X = np.ascontiguousarray(positions, dtype=m.dtype)
    Zt = np.ascontiguousarray(Z, dtype=m.dtype)
    ws = m._workspace(3 * B)
    stacked = ws.get("X3")
    if stacked is None or stacked.shape != (3 * B, d):
        stacked = np.empty((3 * B, d), dtype=m.dtype)
        ws["X3"] = stacked
        ws["dY3"] = np.empty((3 * B, m.sizes[-1]), dtype=m.dtype)
    aZ = alpha * Zt
    stacked[:B] = X
    np.add(X, aZ, out=stacked[B:2 * B])
    np.subtract(X, aZ, out=stacked[2 * B:])
    Y = m._forward(stacked, ws)
    Y0, Yp, Ym = Y[:B], Y[B:2 * B], Y[2 * B:]
    value = float(np.einsum("ij,ij->", Y0, Y0)) / B
    value += float(np.einsum("ij,ij->", Yp - Ym, Zt)) / (B * alpha)
    if not with_grad:
        return value, None, None
    dY = ws["dY3"]
    np.multiply(Y0, m.dtype.type(2.0 / B), out=dY[:B])
    np.multiply(Zt, m.dtype.type(1.0 / (B * alpha)), out=dY[B:2 * B])
    np.negative(dY[B:2 * B], out=dY[2 * B:])
    dW, db = m._backward(stacked, dY, ws)
    return value, dW, db


def implicit_loss(score, batch: ParticleEnsemble) -> float:
    """(1/n) sum_i [ |s(X_i)|^2 + 2 div s(X_i) ] with exact divergence."""
    s = score(batch.positions)
    div = score.divergence(batch.positions)
    return float(np.mean(np.einsum("ij,ij->i", s, s) + 2.0 * div))


def train_step(
    m: Mlp,
    opt: AdamState,
    batch: ParticleEnsemble,
    alpha: float,
    rng: Rng,
    mode: str = "fixed",
    n_steps: int = 25,
    check_every: int = 5,
    min_improvement: float = 1e-4,
    patience: int = 3,
    max_steps: int = 500,
) -> int:
    """Advance the score model for one simulation step; returns steps taken.

    fixed: exactly n_steps Adam steps on the denoising loss, fresh noise each
    step. adaptive: keep stepping until the implicit loss has failed to
    improve by min_improvement (relative) for `patience` consecutive checks
    spaced check_every steps apart, capped at max_steps.
    """
    pos = batch.positions
    shape = pos.shape

    def one_step():
        Z = rng.standard_normal(shape)
        _, dW, db = _denoising_pass(m, pos, alpha, Z)
        opt.step(m, dW, db)

    if mode == "fixed":
        for _ in range(n_steps):
            one_step()
        return n_steps
    if mode != "adaptive":
        raise ValueError(f"unknown training mode: {mode}")
    score = NeuralScore(m)
    best = implicit_loss(score, batch)
    stale = 0
    taken = 0
    while taken < max_steps:
        for _ in range(check_every):
            one_step()
        taken += check_every
        current = implicit_loss(score, batch)
        if current < best - min_improvement * abs(best):
            best = current
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return taken


def initialize_score(
    m: Mlp,
    opt: AdamState,
    batch: ParticleEnsemble,
    target: np.ndarray,
    threshold: float,
    max_steps: int = 100_000,
) -> int:
    """Fit the net to target score values until MSE / mean|target|^2 < threshold.

    Raises TrainingNotConverged after max_steps.
    """
    X = np.ascontiguousarray(batch.positions, dtype=m.dtype)
    T = np.ascontiguousarray(target, dtype=m.dtype)
    B = X.shape[0]
    denom = float(np.einsum("ij,ij->", T, T)) / B
    ws = m._workspace(B)
    resid = np.empty_like(T)

    def relative_mse():
        Y = m._forward(X, ws)
        np.subtract(Y, T, out=resid)
        mse = float(np.einsum("ij,ij->", resid, resid)) / B
        return (mse / denom if denom > 0.0 else mse), resid

    rel, resid = relative_mse()
    steps = 0
    while rel >= threshold:
        if steps >= max_steps:
            raise TrainingNotConverged(
                f"score initialization stalled at relative MSE {rel:.3e} "
                f"after {steps} steps (threshold {threshold:.3e})",
                final_loss=rel,
            )
        resid *= m.dtype.type(2.0 / B)
        dW, db = m._backward(X, resid, ws)
        opt.step(m, dW, db)
        steps += 1
        rel, resid = relative_mse()
    return steps


def save_mlp(m: Mlp, path) -> None:
    """Write a versioned checkpoint; round-trips parameters exactly."""
    payload = {
        "format_version": np.int64(1),
        "layer_sizes": np.asarray(m.sizes, dtype=np.int64),
        "dtype": np.str_(m.dtype.name),
    }
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        payload[f"weight_{i}"] = w
        payload[f"bias_{i}"] = b
    np.savez(path, **payload)


def load_mlp(path) -> Mlp:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = data["layer_sizes"].tolist()
        m = Mlp(sizes, rng=None, dtype=np.dtype(str(data["dtype"])))
        m.weights = [
            np.ascontiguousarray(data[f"weight_{i}"]) for i in range(len(sizes) - 1)
        ]
        m.biases = [
            np.ascontiguousarray(data[f"bias_{i}"]) for i in range(len(sizes) - 1)
        ]
    return m
