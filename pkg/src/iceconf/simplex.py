"""Probability-vector arithmetic on the simplex.

Every function accepts a single vector of shape ``(K,)`` or a batch of shape
``(..., K)``; reductions run over the last axis. Natural logarithms throughout.
"""

import numpy as np

from .errors import InvalidInputError

SIMPLEX_ATOL = 1e-9


def is_probvec(p, atol=SIMPLEX_ATOL):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 0 or p.shape[-1] < 2:
        return False
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        return False
    return bool(np.all(np.abs(p.sum(axis=-1) - 1.0) <= atol))


def check_probvec(p, name="p"):
    """Return ``p`` as a float64 array, raising if it is off the simplex."""
    arr = np.asarray(p, dtype=np.float64)
    if not is_probvec(arr):
        raise InvalidInputError(f"{name} is not a probability vector: {arr!r}")
    return arr


def uniform(k):
    if k < 2:
        raise InvalidInputError(f"need at least 2 classes, got {k}")
    return np.full(k, 1.0 / k)


def _softmax(z):
    # Unchecked: tolerates -inf entries as long as each row has a finite max.
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 2:
        raise InvalidInputError("softmax needs at least 2 logits")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("non-finite logit")
    return _softmax(z)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _xlogy_sum(a, b):
    """Return ``sum(a * log(b))`` over the last axis with ``0 log 0 = 0``.

    Yields ``-inf`` where some ``a_i > 0`` meets ``b_i = 0``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = np.broadcast_arrays(a, b)
    support = a > 0
    with np.errstate(divide="ignore"):
        terms = np.where(support, a * np.log(np.where(support, b, 1.0)), 0.0)
    return terms.sum(axis=-1)


def entropy(p):
    return -_xlogy_sum(p, p)


def cross_entropy(a, b):
    """Cross-entropy ``-sum a_i log b_i``; ``inf`` when ``b`` misses ``a``'s support."""
    a = check_probvec(a, "a")
    b = check_probvec(b, "b")
    if a.shape[-1] != b.shape[-1]:
        raise InvalidInputError("dimension mismatch")
    out = -_xlogy_sum(a, b)
    return float(out) if np.ndim(out) == 0 else out


def kl_divergence(a, b):
    """KL(a || b) in nats; ``inf`` signals ``a_i > 0`` with ``b_i = 0``."""
    a = check_probvec(a, "a")
    b = check_probvec(b, "b")
    if a.shape[-1] != b.shape[-1]:
        raise InvalidInputError("dimension mismatch")
    cross = _xlogy_sum(a, b)
    out = _xlogy_sum(a, a) - cross
    # clamp round-off; exact zero when a == b
    out = np.where(np.isfinite(out), np.maximum(out, 0.0), np.inf)
    return float(out) if np.ndim(out) == 0 else out


def argmax(p):
    # np.argmax returns the first maximal index, which is the tie-break we want.
    return np.argmax(np.asarray(p), axis=-1)
