"""Classifier, confidence sources and the composite noisy-label posterior.

The classifier is a rectifier MLP producing ``K`` logits. The per-instance
confidence comes either from a :class:`ConfidenceTable` (one trainable scalar
per training instance, squashed by a sigmoid) or from a
:class:`ConfidenceHead`, a second MLP with a scalar sigmoid output.
"""

import numpy as np
from scipy.special import expit, logit

from . import transforms
from .errors import InvalidInputError, TrainingFault
from .simplex import softmax

DEFAULT_HIDDEN = (256, 256)


class Mlp:
    """Fully connected network, ReLU on hidden layers, linear output."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise InvalidInputError("need one bias per weight matrix")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidInputError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise InvalidInputError(f"layer {i} input width {w.shape[0]} does not chain")
        self._inputs = None

    @classmethod
    def init(cls, sizes, rng):
        """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x):
        """Return logits for a batch ``x`` (N x D); caches activations for :meth:`backward`."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim == 1:
            h = h[None, :]
        if h.shape[1] != self.weights[0].shape[0]:
            raise InvalidInputError(f"input width {h.shape[1]} != first layer width {self.weights[0].shape[0]}")
        inputs = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            h = h @ w + b
            if not np.all(np.isfinite(h)):
                raise TrainingFault(f"non-finite activation in layer {i}")
            if i < last:
                h = np.maximum(h, 0.0)
        self._inputs = inputs
        return h

    def backward(self, dout):
        """Gradients of the cached forward pass given ``d loss / d output``.

        Returns a list aligned with :attr:`params`.
        """
        if self._inputs is None:
            raise RuntimeError("backward called before forward")
        grads = [None] * (2 * len(self.weights))
        g = np.asarray(dout, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            a = self._inputs[i]
            grads[2 * i] = a.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = (g @ self.weights[i].T) * (a > 0)
        return grads


def forward(model, x):
    """Logits and class posterior ``softmax(z)`` for a batch."""
    z = model.forward(x)
    return z, softmax(z)


class ConfidenceTable:
    """One raw embedding scalar per training instance; confidence = sigmoid(raw)."""

    def __init__(self, raw):
        self.raw = np.ascontiguousarray(raw, dtype=np.float64)
        if self.raw.ndim != 1:
            raise InvalidInputError("embedding must be a vector")

    @classmethod
    def init(cls, n, init_confidence=0.9):
        if not 0.0 < init_confidence < 1.0:
            raise InvalidInputError(f"initial confidence must lie in (0, 1), got {init_confidence}")
        return cls(np.full(n, logit(init_confidence)))

    def __len__(self):
        return len(self.raw)

    def _check(self, index):
        index = np.asarray(index)
        if index.size and (index.min() < 0 or index.max() >= len(self.raw)):
            raise InvalidInputError(f"instance index out of range for table of size {len(self.raw)}")
        return index

    def confidence(self, index):
        return expit(self.raw[self._check(index)])

    def all_confidences(self):
        return expit(self.raw)


def confidence_of(table, index):
    if not 0 <= index < len(table):
        raise InvalidInputError(f"index {index} out of range for table of size {len(table)}")
    return float(expit(table.raw[index]))


class ConfidenceHead:
    """Network approximation of the confidence: sigmoid of a scalar MLP output."""

    def __init__(self, net):
        if net.sizes[-1] != 1:
            raise InvalidInputError("confidence head must have a scalar output")
        self.net = net
        self._c = None

    @classmethod
    def init(cls, in_dim, hidden, rng, init_confidence=0.9):
        net = Mlp.init([in_dim, *hidden, 1], rng)
        net.biases[-1][:] = logit(init_confidence)
        return cls(net)

    @property
    def params(self):
        return self.net.params

    def confidence(self, x):
        self._c = expit(self.net.forward(x)[:, 0])
        return self._c

    def backward(self, dc):
        return self.net.backward((np.asarray(dc) * self._c * (1.0 - self._c))[:, None])


def _confidence_for(g_source, x, index):
    if isinstance(g_source, ConfidenceTable):
        if index is None:
            raise InvalidInputError("a confidence table needs instance indices")
        return g_source.confidence(index)
    if isinstance(g_source, ConfidenceHead):
        return g_source.confidence(x)
    # a fixed confidence, scalar or per-row
    return np.asarray(g_source, dtype=np.float64)


def ice_forward(model, g_source, x, index=None, kind=transforms.LINEAR):
    """Noisy-label posterior ``q = h(f(x), g(x or index))``."""
    z, p = forward(model, x)
    c = _confidence_for(g_source, x, index)
    if np.ndim(c) == 0:
        c = np.full(len(z), float(c))
    if kind == transforms.POWER:
        return transforms.h_power_logits(z, c)
    return transforms.h_linear(p, c)


def ice_loss(q, y):
    """Negative log-likelihood ``-log q_y`` of the observed label; ``inf`` when ``q_y = 0``."""
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= q.shape[-1]):
        raise InvalidInputError("label out of range")
    qy = np.take_along_axis(q, y[..., None], axis=-1)[..., 0] if q.ndim > 1 else q[y]
    with np.errstate(divide="ignore"):
        out = -np.log(qy)
    return float(out) if np.ndim(out) == 0 else out
