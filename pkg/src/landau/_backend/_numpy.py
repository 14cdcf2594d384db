"""Pure NumPy fallback for the compiled kernels.

Same contracts as landau._backend._compiled, used when the extension is not
built (or when LANDAU_BACKEND=numpy). Pairwise sums are evaluated in row
blocks to bound temporary memory; summation order differs from the compiled
kernel only in reduction bracketing, which the equivalence tests bound at
1e-12.
"""

import numpy as np

_BLOCK_ELEMS = 4_000_000  # ~32 MB of f64 temporaries per pairwise block


def _row_block(n: int, d: int) -> int:
    return max(8, min(n, _BLOCK_ELEMS // max(n * d, 1)))


def velocity_pairwise(pos, sc, gamma, bconst):
    n, d = pos.shape
    out = np.empty_like(pos)
    min_r2 = np.inf
    block = _row_block(n, d)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        dz = pos[i0:i1, None, :] - pos[None, :, :]
        dw = sc[i0:i1, None, :] - sc[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", dz, dz)
        zw = np.einsum("ijk,ijk->ij", dz, dw)
        nz = r2 > 0.0
        if nz.any():
            min_r2 = min(min_r2, r2[nz].min())
        if gamma == 0.0:
            coef = np.where(nz, 1.0, 0.0)
        else:
            with np.errstate(divide="ignore"):
                coef = np.where(nz, r2, 1.0) ** (0.5 * gamma)
            coef[~nz] = 0.0
        term = (coef * r2)[:, :, None] * dw - (coef * zw)[:, :, None] * dz
        out[i0:i1] = term.sum(axis=1)
    out *= -bconst / n
    return out, min_r2


def blob_scores(pos, eps, cache_limit_bytes=4e8):
    if eps <= 0.0:
        raise ValueError("bandwidth must be positive")
    n, d = pos.shape
    inv2e = 0.5 / eps
    block = _row_block(n, d)
    r = np.zeros(n)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        dz = pos[i0:i1, None, :] - pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", dz, dz)
        r[i0:i1] = np.exp(-r2 * inv2e).sum(axis=1)
    g = 1.0 / r
    acc = np.empty_like(pos)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        dz = pos[i0:i1, None, :] - pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", dz, dz)
        e = np.exp(-r2 * inv2e)
        t = e * (g[i0:i1, None] + g[None, :])
        acc[i0:i1] = np.einsum("ij,ijk->ik", t, dz)
    return acc * (-1.0 / eps), r


def kde_sum(wq, wx):
    m, d = wq.shape
    out = np.empty(m)
    block = _row_block(m, d)
    for i0 in range(0, m, block):
        i1 = min(i0 + block, m)
        dz = wq[i0:i1, None, :] - wx[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", dz, dz)
        out[i0:i1] = np.exp(-0.5 * r2).sum(axis=1)
    return out


def softsign_forward(Z, A):
    np.abs(Z, out=A)
    A += 1.0
    np.divide(Z, A, out=A)


def softsign_backward(A, dA, dZ):
    np.abs(A, out=dZ)
    np.subtract(1.0, dZ, out=dZ)
    np.square(dZ, out=dZ)
    dZ *= dA


def adam_update(p, g, m, v, lr, beta1, beta2, damp, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * np.square(g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + damp)


def polar_fill(out, start, u1, u2):
    a = 2.0 * u1 - 1.0
    b = 2.0 * u2 - 1.0
    s = a * a + b * b
    ok = (s > 0.0) & (s < 1.0)
    need = out.shape[0] - start
    # pairs needed to produce `need` normals (two per accepted pair)
    n_ok = int(np.count_nonzero(ok))
    accepted = np.flatnonzero(ok)
    take = min(n_ok, (need + 1) // 2)
    if take < n_ok:
        consumed = int(accepted[take - 1]) + 1 if take > 0 else 0
        accepted = accepted[:take]
    else:
        consumed = u1.shape[0]
    a, b, s = a[accepted], b[accepted], s[accepted]
    f = np.sqrt(-2.0 * np.log(s) / s)
    pair = np.empty(2 * take)
    pair[0::2] = a * f
    pair[1::2] = b * f
    wrote = min(need, 2 * take)
    out[start:start + wrote] = pair[:wrote]
    return start + wrote, consumed
