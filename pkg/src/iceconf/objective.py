"""Minibatch loss and analytic gradients for every training method."""

from dataclasses import dataclass

import numpy as np

from . import _backend, losses, transforms
from .errors import InvalidInputError
from .model import ConfidenceHead, ConfidenceTable
from .simplex import softmax

ICE_METHODS = {
    "ice_lin": ("table", "linear"),
    "ice_pow": ("table", "power"),
    "ice_nn_lin": ("head", "linear"),
    "ice_nn_pow": ("head", "power"),
}
BASELINE_METHODS = ("cce", "label_smoothing", "bootstrap_hard", "bootstrap_soft", "gce", "forward")
METHODS = BASELINE_METHODS + tuple(ICE_METHODS)


@dataclass
class MethodParams:
    epsilon: float = losses.DEFAULT_EPSILON
    beta: float = losses.DEFAULT_BETA
    gce_q: float = losses.DEFAULT_GCE_Q
    transition: np.ndarray | None = None


@dataclass
class BatchGrads:
    loss: float
    per_instance: np.ndarray
    model: list
    table: tuple | None = None  # (indices, d loss / d raw)
    head: list | None = None


def baseline_loss_and_dz(method, p, y, params):
    """Per-instance losses and logit gradients for a non-ICE method."""
    if method == "cce":
        return losses.loss_cce(p, y), losses.grad_cce(p, y)
    if method == "label_smoothing":
        return losses.loss_label_smoothing(p, y, params.epsilon), losses.grad_label_smoothing(p, y, params.epsilon)
    if method == "bootstrap_hard":
        return losses.loss_bootstrap_hard(p, y, params.beta), losses.grad_bootstrap_hard(p, y, params.beta)
    if method == "bootstrap_soft":
        return losses.loss_bootstrap_soft(p, y, params.beta), losses.grad_bootstrap_soft(p, y, params.beta)
    if method == "gce":
        return losses.loss_gce(p, y, params.gce_q), losses.grad_gce(p, y, params.gce_q)
    if method == "forward":
        if params.transition is None:
            raise InvalidInputError("forward correction needs a transition matrix")
        T = np.asarray(params.transition, dtype=np.float64)
        return losses.loss_forward(p, y, T), losses.grad_forward(p, y, T)
    raise InvalidInputError(f"unknown method {method!r}")


def backward(method, model, source, x, y, index, params=None):
    """Forward and backward pass of the mean minibatch loss.

    ``source`` is the :class:`ConfidenceTable` or :class:`ConfidenceHead` for
    ICE methods and ignored otherwise. Table gradients are sparse: only the
    rows named in ``index`` are returned.
    """
    params = params or MethodParams()
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    z = model.forward(x)
    if method in ICE_METHODS:
        kind_src, kind = ICE_METHODS[method]
        if kind_src == "table":
            if not isinstance(source, ConfidenceTable):
                raise InvalidInputError(f"{method} needs a confidence table")
            c = source.confidence(index)
        else:
            if not isinstance(source, ConfidenceHead):
                raise InvalidInputError(f"{method} needs a confidence head")
            c = source.confidence(x)
        head = _backend.ice_lin_head if kind == "linear" else _backend.ice_pow_head
        _, dz, dc = head(z, c, y)
        # report the loss through the same forward path as the baselines so
        # a confidence of exactly 1 reproduces their losses bit for bit
        if kind == "linear":
            q = transforms.h_linear(softmax(z), c)
        else:
            q = transforms.h_power_logits(z, c)
        per = np.asarray(losses.loss_cce(q, y))
        dz /= n
        dc = dc / n
        grads = BatchGrads(float(per.mean()), per, model.backward(dz))
        if kind_src == "table":
            grads.table = (np.asarray(index), dc * c * (1.0 - c))
        else:
            grads.head = source.backward(dc)
        return grads
    p = softmax(z)
    per, dz = baseline_loss_and_dz(method, p, y, params)
    per = np.asarray(per)
    return BatchGrads(float(per.mean()), per, model.backward(dz / n))
