"""Argmax-preserving confidence transforms ``q = h(p; c)`` and their derivatives.

Both transforms satisfy ``h(p; 1) = p`` and ``h(p; 0) = uniform``:

* linear: ``q = c p + (1 - c) / K``
* power: ``q ∝ p ** c``, which on softmax outputs is ``softmax(c z)``, i.e.
  temperature scaling with temperature ``1 / c``.

``c`` may be a scalar or broadcast against the batch axis of ``p``.
"""

import numpy as np

from .errors import InvalidInputError
from .simplex import _softmax, check_probvec, softmax

LINEAR = "linear"
POWER = "power"
KINDS = (LINEAR, POWER)


def _conf(c, batch_shape):
    c = np.asarray(c, dtype=np.float64)
    if np.any(c < 0) or np.any(c > 1) or not np.all(np.isfinite(c)):
        raise InvalidInputError(f"confidence must lie in [0, 1], got {c}")
    # align a per-row confidence with the leading axes of p
    return c.reshape(c.shape + (1,)) if c.ndim and c.shape == batch_shape else c


def h_linear(p, c):
    p = check_probvec(p)
    c = _conf(c, p.shape[:-1])
    return c * p + (1.0 - c) / p.shape[-1]


def h_power(p, c):
    p = check_probvec(p)
    c = _conf(c, p.shape[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = c * np.log(p)
    # 0 * log(0) is nan; any c == 0 row is all zeros and hence uniform
    q = _softmax(np.where(np.isnan(scaled), 0.0, scaled))
    return np.where(c == 1, p, q)


def h_power_logits(z, c):
    """Power transform on logits: exactly ``softmax(c * z)``."""
    z = np.asarray(z, dtype=np.float64)
    c = _conf(c, z.shape[:-1])
    return softmax(c * z)


def apply(kind, p, c):
    if kind == LINEAR:
        return h_linear(p, c)
    if kind == POWER:
        return h_power(p, c)
    raise InvalidInputError(f"unknown transform kind {kind!r}")


def grad_c_linear(p, c, i):
    """d/dc log q_i for the linear transform; ``inf`` signals a zero denominator."""
    p = check_probvec(p)
    k = p.shape[-1]
    pi = p[..., i]
    denom = c * pi + (1.0 - c) / k
    num = pi - 1.0 / k
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), -np.inf)
    return float(out) if np.ndim(out) == 0 else out


def grad_c_power(p, c, i):
    """Exact d/dc log q_i for the power transform: ``log p_i - sum_j q_j log p_j``.

    Differs from the unnormalized ``sum_j p_j**c log(p_i / p_j)`` by the positive
    factor ``sum_j p_j**c``, so the two agree in sign everywhere.
    """
    p = check_probvec(p)
    if np.any(p <= 0):
        raise InvalidInputError("power-transform gradient needs strictly positive p")
    logp = np.log(p)
    q = _softmax(_conf(c, p.shape[:-1]) * logp)
    out = logp[..., i] - (q * logp).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def power_sign_boundary(p, c):
    """The value ``exp(-H(q, p))`` at which ``grad_c_power`` changes sign."""
    p = check_probvec(p)
    logp = np.log(p)
    q = _softmax(_conf(c, p.shape[:-1]) * logp)
    return np.exp((q * logp).sum(axis=-1))


def backprop_through_h(kind, dq, pz, c):
    """Chain rule through ``h``.

    For ``linear`` ``pz`` is the probability vector ``p``; for ``power`` it is
    the logit vector ``z`` and ``q = softmax(c z)``. Returns
    ``(d/dpz, d/dc)`` given the upstream gradient ``dq`` with respect to ``q``.
    """
    dq = np.asarray(dq, dtype=np.float64)
    pz = np.asarray(pz, dtype=np.float64)
    if dq.shape != pz.shape:
        raise InvalidInputError(f"shape mismatch: {dq.shape} vs {pz.shape}")
    c = np.asarray(c, dtype=np.float64)
    cb = c[..., None] if c.ndim else c
    if kind == LINEAR:
        k = pz.shape[-1]
        return cb * dq, (dq * (pz - 1.0 / k)).sum(axis=-1)
    if kind == POWER:
        q = _softmax(cb * pz)
        inner = (q * dq).sum(axis=-1, keepdims=True)
        dz = cb * q * (dq - inner)
        zbar = (q * pz).sum(axis=-1, keepdims=True)
        dc = (dq * q * (pz - zbar)).sum(axis=-1)
        return dz, dc
    raise InvalidInputError(f"unknown transform kind {kind!r}")
