"""Synthetic label corruption and transition-matrix algebra.

Corruption draws one uniform per instance from the counter-based SplitMix64
stream keyed by ``(seed, instance index)`` and inverts the CDF of the
instance's transition row. The draw for an instance never depends on which
other instances are corrupted alongside it, so results are identical across
platforms, batch orders and backends.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import InvalidInputError
from .simplex import SIMPLEX_ATOL

CORRUPTION_STREAM = 0x1CE


def check_transition_matrix(T, k=None):
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 2:
        raise InvalidInputError(f"transition matrix must be K x K with K >= 2, got {T.shape}")
    if k is not None and T.shape[0] != k:
        raise InvalidInputError(f"transition matrix has {T.shape[0]} classes, expected {k}")
    if not np.all(np.isfinite(T)) or np.any(T < 0):
        raise InvalidInputError("transition matrix has negative or non-finite entries")
    if np.any(np.abs(T.sum(axis=1) - 1.0) > SIMPLEX_ATOL):
        raise InvalidInputError("transition matrix rows must sum to 1")
    return T


def noisy_posterior(p, T):
    """Marginalize the clean posterior through ``T``: ``q_j = sum_i p_i T_ij``."""
    p = np.asarray(p, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if p.shape[-1] != T.shape[0] or T.shape[0] != T.shape[1]:
        raise InvalidInputError(f"dimension mismatch: p has {p.shape[-1]} classes, T is {T.shape}")
    return p @ T


def uniform_flip_matrix(k, rho):
    if k < 2:
        raise InvalidInputError(f"need at least 2 classes, got {k}")
    if not 0.0 <= rho <= 1.0:
        raise InvalidInputError(f"flip rate must lie in [0, 1], got {rho}")
    T = np.full((k, k), rho / (k - 1))
    np.fill_diagonal(T, 1.0 - rho)
    return T


def _sample_rows(rows, u):
    """Inverse-CDF draw of one class per row of ``rows`` (N x K) given uniforms ``u``."""
    cdf = np.cumsum(rows, axis=1)
    draws = (cdf <= u[:, None]).sum(axis=1)
    # round-off can leave cdf[-1] < u; fall back to the last class with mass
    last = rows.shape[1] - 1 - np.argmax(rows[:, ::-1] > 0, axis=1)
    return np.minimum(draws, last)


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise InvalidInputError("labels must be a 1-d integer array")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = int(np.flatnonzero((labels < 0) | (labels >= k))[0])
        raise InvalidInputError(f"label {labels[bad]} at index {bad} outside [0, {k})")
    return labels.astype(np.int64)


def corrupt_ccn(labels, T, seed, index=None):
    """Class-conditional corruption: row ``labels[i]`` of ``T`` for every instance.

    ``index`` gives the stable instance identifiers keying the random stream
    (defaults to ``0..N-1``). Returns ``(noisy_labels, flip_mask)``.
    """
    T = check_transition_matrix(T)
    labels = _check_labels(labels, T.shape[0])
    index = np.arange(labels.size) if index is None else np.asarray(index)
    u = _backend.counter_uniform(seed, CORRUPTION_STREAM, index)
    noisy = _sample_rows(T[labels], u)
    return noisy, noisy != labels


def corrupt_idn(features, labels, matrix_fn, seed, index=None):
    """Instance-dependent corruption with ``T(x) = matrix_fn(x)`` per instance."""
    features = np.asarray(features)
    labels = np.asarray(labels)
    if len(features) != len(labels):
        raise InvalidInputError("features and labels differ in length")
    rows = []
    k = None
    for i, (x, y) in enumerate(zip(features, labels)):
        try:
            T = check_transition_matrix(matrix_fn(x), k)
        except InvalidInputError as exc:
            raise InvalidInputError(f"matrix_fn returned an invalid matrix for instance {i}: {exc}") from None
        k = T.shape[0]
        rows.append(T[int(y)] if 0 <= y < k else None)
    if k is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool)
    labels = _check_labels(labels, k)
    index = np.arange(labels.size) if index is None else np.asarray(index)
    u = _backend.counter_uniform(seed, CORRUPTION_STREAM, index)
    noisy = _sample_rows(np.stack(rows), u)
    return noisy, noisy != labels


@dataclass
class NoisyDataset:
    """Features with observed (possibly corrupted) labels.

    ``clean_labels`` and ``flip_mask`` are evaluation-only ground truth.
    """

    features: np.ndarray
    noisy_labels: np.ndarray
    num_classes: int
    clean_labels: np.ndarray | None = None
    flip_mask: np.ndarray | None = None
    transition: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        self.noisy_labels = _check_labels(self.noisy_labels, self.num_classes)
        n = len(self.noisy_labels)
        if len(self.features) != n:
            raise InvalidInputError("features and labels differ in length")
        if self.clean_labels is not None:
            self.clean_labels = _check_labels(self.clean_labels, self.num_classes)
            if len(self.clean_labels) != n:
                raise InvalidInputError("clean labels differ in length")
        if self.flip_mask is not None:
            self.flip_mask = np.asarray(self.flip_mask, dtype=bool)
            if len(self.flip_mask) != n:
                raise InvalidInputError("flip mask differs in length")
            if self.clean_labels is not None and np.any(
                self.flip_mask != (self.noisy_labels != self.clean_labels)
            ):
                raise InvalidInputError("flip mask disagrees with clean/noisy labels")
        elif self.clean_labels is not None:
            self.flip_mask = self.noisy_labels != self.clean_labels

    def __len__(self):
        return len(self.noisy_labels)

    @property
    def index(self):
        return np.arange(len(self))

    @classmethod
    def corrupted(cls, features, labels, num_classes, T, seed):
        noisy, mask = corrupt_ccn(labels, T, seed)
        return cls(features, noisy, num_classes, clean_labels=labels, flip_mask=mask, transition=np.asarray(T))

    def subset(self, idx):
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return NoisyDataset(
            self.features[idx],
            self.noisy_labels[idx],
            self.num_classes,
            clean_labels=pick(self.clean_labels),
            flip_mask=pick(self.flip_mask),
            transition=self.transition,
        )


def write_flip_mask(path, mask):
    """One-column CSV of 0/1 aligned with instance index."""
    mask = np.asarray(mask, dtype=bool)
    with open(path, "w", newline="") as fh:
        fh.write("flipped\n")
        fh.writelines(f"{int(v)}\n" for v in mask)


def read_flip_mask(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "flipped":
            raise InvalidInputError(f"{path}: expected header 'flipped', got {header!r}")
        return np.array([int(line) for line in fh if line.strip()], dtype=bool)
