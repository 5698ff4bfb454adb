"""Per-instance training losses for the baseline methods.

Each ``loss_*`` takes class posteriors ``p`` (``(K,)`` or ``(N, K)``) and
observed labels and returns per-instance losses in nats. The KL-style
objectives (label smoothing, bootstrapping) are evaluated in cross-entropy
form ``-sum_i t_i log p_i``, dropping the target-entropy constant, with
zero-weight targets skipped so that a one-hot target reproduces ``-log p_y``
bit for bit.

The matching ``grad_*`` functions return the gradient of the per-instance
loss with respect to the logits ``z`` that produced ``p = softmax(z)``.
"""

import numpy as np

from .errors import InvalidInputError
from .simplex import _xlogy_sum

DEFAULT_EPSILON = 0.1
DEFAULT_BETA = 0.8
DEFAULT_GCE_Q = 0.7


def _prep(p, y):
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = p.shape[-1]
    if np.any(y < 0) or np.any(y >= k):
        raise InvalidInputError(f"label out of range [0, {k})")
    return p, y, k


def _pick(p, y):
    if p.ndim == 1:
        return p[y]
    return p[np.arange(len(p)), y]


def _onehot(y, k):
    return np.eye(k)[y]


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _target_ce(t, p):
    return -_xlogy_sum(t, p)


def _neglog(x):
    with np.errstate(divide="ignore"):
        return -np.log(x)


def _check_unit(name, v):
    if not 0.0 <= v <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")


def loss_cce(p, y):
    p, y, _ = _prep(p, y)
    return _scalar(_neglog(_pick(p, y)))


def label_smoothing_target(y, k, epsilon):
    return (1.0 - epsilon) * _onehot(y, k) + epsilon / k


def loss_label_smoothing(p, y, epsilon=DEFAULT_EPSILON):
    p, y, k = _prep(p, y)
    _check_unit("epsilon", epsilon)
    return _scalar(_target_ce(label_smoothing_target(y, k, epsilon), p))


def bootstrap_hard_target(p, y, beta):
    k = p.shape[-1]
    return beta * _onehot(y, k) + (1.0 - beta) * _onehot(np.argmax(p, axis=-1), k)


def loss_bootstrap_hard(p, y, beta=DEFAULT_BETA):
    p, y, _ = _prep(p, y)
    _check_unit("beta", beta)
    return _scalar(_target_ce(bootstrap_hard_target(p, y, beta), p))


def loss_bootstrap_soft(p, y, beta=DEFAULT_BETA):
    p, y, k = _prep(p, y)
    _check_unit("beta", beta)
    return _scalar(_target_ce(beta * _onehot(y, k) + (1.0 - beta) * p, p))


def loss_gce(p, y, q_exp=DEFAULT_GCE_Q):
    p, y, _ = _prep(p, y)
    if not 0.0 < q_exp <= 1.0:
        raise InvalidInputError(f"q_exp must lie in (0, 1], got {q_exp}")
    return _scalar((1.0 - _pick(p, y) ** q_exp) / q_exp)


def loss_forward(p, y, T):
    """Forward correction: ``-log (p T)_y`` with a known transition matrix ``T``."""
    p, y, k = _prep(p, y)
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (k, k):
        raise InvalidInputError(f"transition matrix must be {k} x {k}")
    qy = (p * T[:, y].T).sum(axis=-1) if p.ndim > 1 else p @ T[:, y]
    return _scalar(_neglog(qy))


# Gradients with respect to logits, batched: p is (N, K), y is (N,).


def _softmax_chain(p, dp):
    return p * (dp - (p * dp).sum(axis=1, keepdims=True))


def grad_target_ce(p, t):
    """Gradient for a fixed target ``t``: ``p - t`` (valid whenever ``sum t = 1``)."""
    return p - t


def grad_cce(p, y):
    return grad_target_ce(p, _onehot(y, p.shape[1]))


def grad_label_smoothing(p, y, epsilon):
    return grad_target_ce(p, label_smoothing_target(y, p.shape[1], epsilon))


def grad_bootstrap_hard(p, y, beta):
    # argmax is piecewise constant, so its target contributes no gradient
    return grad_target_ce(p, bootstrap_hard_target(p, y, beta))


def grad_bootstrap_soft(p, y, beta):
    """Exact gradient of ``beta * CE(y, p) + (1 - beta) * H(p)``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    ent = -(p * logp).sum(axis=1, keepdims=True)
    return beta * (p - _onehot(y, p.shape[1])) - (1.0 - beta) * p * (logp + ent)


def grad_gce(p, y, q_exp):
    py_q = _pick(p, y) ** q_exp
    return py_q[:, None] * (p - _onehot(y, p.shape[1]))


def grad_forward(p, y, T):
    col = T[:, y].T
    qy = (p * col).sum(axis=1, keepdims=True)
    # q_y = 0 already shows up as an infinite loss; the caller aborts on it
    with np.errstate(divide="ignore", invalid="ignore"):
        return _softmax_chain(p, -col / qy)
