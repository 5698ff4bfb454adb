"""Pure-numpy versions of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``ICECONF_PURE_PYTHON`` is set.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(x):
    # SplitMix64 finalizer; uint64 array arithmetic wraps modulo 2**64.
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def counter_uniform(seed, stream, index):
    """Uniform doubles in [0, 1) keyed by ``(seed, stream, index)``.

    Counter-based SplitMix64: each output depends only on its key, so any
    subset of instances can be drawn independently and in any order.
    """
    index = np.ascontiguousarray(index, dtype=np.uint64)
    key = _mix(np.array([(seed & _MASK64)], dtype=np.uint64))
    key = _mix(key ^ np.uint64(stream & _MASK64))
    h = _mix(key + (index + np.uint64(1)) * _GOLDEN)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _softmax_rows(z):
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=1, keepdims=True)


def ice_lin_head(z, c, y):
    """Per-row loss and gradients for the linear-interpolation head.

    Returns ``(loss, dz, dc)`` with ``loss_i = -log(c_i p_iy + (1 - c_i)/K)``,
    ``p = softmax(z)``; gradients are of the unreduced per-row loss.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n, k = z.shape
    rows = np.arange(n)
    p = _softmax_rows(z)
    py = p[rows, y]
    qy = c * py + (1.0 - c) / k
    with np.errstate(divide="ignore"):
        loss = -np.log(qy)
        g = -c / qy
    dz = -(g * py)[:, None] * p
    dz[rows, y] += g * py
    dc = -(py - 1.0 / k) / qy
    return loss, dz, dc


def ice_pow_head(z, c, y):
    """Per-row loss and gradients for the power (temperature) head.

    ``q = softmax(c z)``; ``loss_i = -log q_iy`` computed as a log-sum-exp.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n, _ = z.shape
    rows = np.arange(n)
    s = c[:, None] * z
    m = s.max(axis=1, keepdims=True)
    e = np.exp(s - m)
    tot = e.sum(axis=1)
    q = e / tot[:, None]
    loss = -(s[rows, y] - m[:, 0] - np.log(tot))
    dz = c[:, None] * q
    dz[rows, y] -= c
    dc = -(z[rows, y] - (q * z).sum(axis=1))
    return loss, dz, dc
