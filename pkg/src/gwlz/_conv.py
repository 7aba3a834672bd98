"""Compiled float64 kernels for the enhancer: 3x3 same-padding convolutions
(cross-correlation) and batch-norm/ReLU.  Activations are laid out (N, H, W, C).
"""
import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _span(i, n):
    # kernel taps (0..2) whose input row i + k - 1 lies inside [0, n)
    return max(0, 1 - i), min(3, n + 1 - i)


@numba.njit(cache=True)
def conv1_fwd(x, w1, b1):
    n, h, wd = x.shape
    c = w1.shape[0]
    z = np.empty((n, h, wd, c))
    for s in range(n):
        for i in range(h):
            klo, khi = _span(i, h)
            for j in range(wd):
                llo, lhi = _span(j, wd)
                for ch in range(c):
                    z[s, i, j, ch] = b1[ch]
                for ki in range(klo, khi):
                    for kj in range(llo, lhi):
                        xv = x[s, i + ki - 1, j + kj - 1]
                        for ch in range(c):
                            z[s, i, j, ch] += xv * w1[ch, ki, kj]
    return z


@numba.njit(cache=True)
def conv1_bwd_w(x, dz):
    n, h, wd, c = dz.shape
    dw = np.zeros((3, 3, c))
    for s in range(n):
        for i in range(h):
            klo, khi = _span(i, h)
            for j in range(wd):
                llo, lhi = _span(j, wd)
                for ki in range(klo, khi):
                    for kj in range(llo, lhi):
                        xv = x[s, i + ki - 1, j + kj - 1]
                        for ch in range(c):
                            dw[ki, kj, ch] += xv * dz[s, i, j, ch]
    return dw.transpose(2, 0, 1).copy()


@numba.njit(cache=True)
def conv2_fwd(a, w2, b2):
    n, h, wd, c = a.shape
    wt = w2.transpose(1, 2, 0).copy()  # (3, 3, C)
    out = np.empty((n, h, wd))
    for s in range(n):
        for i in range(h):
            klo, khi = _span(i, h)
            for j in range(wd):
                llo, lhi = _span(j, wd)
                acc = b2
                for ki in range(klo, khi):
                    for kj in range(llo, lhi):
                        for ch in range(c):
                            acc += a[s, i + ki - 1, j + kj - 1, ch] * wt[ki, kj, ch]
                out[s, i, j] = acc
    return out


@numba.njit(cache=True)
def conv2_bwd(a, dout, w2):
    n, h, wd, c = a.shape
    wt = w2.transpose(1, 2, 0).copy()
    dw = np.zeros((3, 3, c))
    da = np.zeros((n, h, wd, c))
    for s in range(n):
        for i in range(h):
            klo, khi = _span(i, h)
            for j in range(wd):
                g = dout[s, i, j]
                if g == 0.0:
                    continue
                llo, lhi = _span(j, wd)
                for ki in range(klo, khi):
                    for kj in range(llo, lhi):
                        ii = i + ki - 1
                        jj = j + kj - 1
                        for ch in range(c):
                            dw[ki, kj, ch] += a[s, ii, jj, ch] * g
                            da[s, ii, jj, ch] += wt[ki, kj, ch] * g
    return dw.transpose(2, 0, 1).copy(), da


@numba.njit(cache=True)
def bn_relu_fwd(z, mean, inv_std, gamma, beta):
    """z: (M, C).  Returns normalised zhat, affine output y and relu(y)."""
    m, c = z.shape
    zhat = np.empty((m, c))
    y = np.empty((m, c))
    a = np.empty((m, c))
    for r in range(m):
        for ch in range(c):
            zh = (z[r, ch] - mean[ch]) * inv_std[ch]
            zhat[r, ch] = zh
            yv = gamma[ch] * zh + beta[ch]
            y[r, ch] = yv
            a[r, ch] = yv if yv > 0.0 else 0.0
    return zhat, y, a


@numba.njit(cache=True)
def batch_moments(z):
    """Per-channel mean and biased variance (two-pass)."""
    m, c = z.shape
    mean = np.zeros(c)
    for r in range(m):
        for ch in range(c):
            mean[ch] += z[r, ch]
    mean /= m
    var = np.zeros(c)
    for r in range(m):
        for ch in range(c):
            d = z[r, ch] - mean[ch]
            var[ch] += d * d
    var /= m
    return mean, var


@numba.njit(cache=True)
def bn_relu_bwd(da, y, zhat, gamma, inv_std):
    """Gradients of batch-norm + ReLU.  Returns (dz, dgamma, dbeta)."""
    m, c = da.shape
    dbeta = np.zeros(c)
    dgamma = np.zeros(c)
    for r in range(m):
        for ch in range(c):
            if y[r, ch] > 0.0:
                g = da[r, ch]
                dbeta[ch] += g
                dgamma[ch] += g * zhat[r, ch]
    dz = np.empty((m, c))
    for r in range(m):
        for ch in range(c):
            dy = da[r, ch] if y[r, ch] > 0.0 else 0.0
            dz[r, ch] = inv_std[ch] / m * (
                m * gamma[ch] * dy - gamma[ch] * dbeta[ch] - zhat[r, ch] * gamma[ch] * dgamma[ch]
            )
    return dz, dgamma, dbeta
