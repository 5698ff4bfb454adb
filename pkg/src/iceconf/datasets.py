"""Dataset files: IDX (MNIST family), CSV with a header row, 2-d synthetic data."""

import csv
import struct

import numpy as np

from .errors import FormatError, InvalidInputError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
SYNTH_KINDS = ("two_gaussians", "two_moons")


def read_idx(path, expect=None):
    """Read an IDX file as float features in [0, 1] (images) or integer labels.

    ``expect`` optionally pins the magic to ``"images"`` or ``"labels"``.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise FormatError(f"{path}: truncated IDX header", offset=len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}", offset=0)
    kind = "images" if magic == IDX_IMAGES else "labels"
    if expect is not None and kind != expect:
        raise FormatError(f"{path}: expected an IDX {expect} file, found {kind}", offset=0)
    ndim = 3 if kind == "images" else 1
    head = 4 + 4 * ndim
    if len(data) < head:
        raise FormatError(f"{path}: truncated IDX dimension fields", offset=len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) < head + count:
        raise FormatError(f"{path}: payload holds {len(data) - head} of {count} bytes", offset=len(data))
    payload = np.frombuffer(data, dtype=np.uint8, count=count, offset=head)
    if kind == "labels":
        return payload.astype(np.int64)
    return payload.reshape(dims[0], dims[1] * dims[2]).astype(np.float64) / 255.0


def write_idx(path, array, kind):
    """Write uint8 ``array`` as IDX: ``(N, R, C)`` images or ``(N,)`` labels."""
    array = np.asarray(array)
    if kind == "images":
        if array.ndim != 3:
            raise InvalidInputError("IDX images need shape (N, rows, cols)")
        header = struct.pack(">4I", IDX_IMAGES, *array.shape)
    elif kind == "labels":
        if array.ndim != 1:
            raise InvalidInputError("IDX labels need shape (N,)")
        header = struct.pack(">2I", IDX_LABELS, array.shape[0])
    else:
        raise InvalidInputError(f"unknown IDX kind {kind!r}")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(array, dtype=np.uint8).tobytes())


def read_csv(path):
    """Read ``x0..x{D-1},label`` CSV; returns ``(features, labels)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty CSV file") from None
        if not header or header[-1] != "label":
            raise FormatError(f"{path}: last header column must be 'label'")
        rows = [r for r in reader if r]
    if not rows:
        return np.zeros((0, len(header) - 1)), np.zeros(0, dtype=np.int64)
    arr = np.array(rows, dtype=object)
    try:
        x = arr[:, :-1].astype(np.float64)
        y = arr[:, -1].astype(np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return x, y


def write_csv(path, features, labels):
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"x{j}" for j in range(features.shape[1])] + ["label"]) + "\n")
        for row, lab in zip(features, labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(lab)}\n")


def read_labels_column(path, column):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise FormatError(f"{path}: missing column {column!r}")
        return np.array([int(r[column]) for r in reader], dtype=np.int64)


def make_synth(kind, n, seed, balance=0.5, separation=2.0, noise=0.1):
    """Two-class 2-d demo data.

    ``two_gaussians``: unit-variance blobs at ``(-separation, 0)`` and
    ``(+separation, 0)``. ``two_moons``: interleaved half circles with
    Gaussian jitter ``noise``. Exactly ``round(n * balance)`` points get
    label 0.
    """
    if kind not in SYNTH_KINDS:
        raise InvalidInputError(f"unknown synthetic kind {kind!r}; choose from {', '.join(SYNTH_KINDS)}")
    if not 0.0 < balance < 1.0 or n < 2:
        raise InvalidInputError("need n >= 2 and balance in (0, 1)")
    rng = np.random.default_rng(seed)
    n0 = int(round(n * balance))
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n - n0, dtype=np.int64)])
    if kind == "two_gaussians":
        centers = np.where(labels[:, None] == 0, [-separation, 0.0], [separation, 0.0])
        x = centers + rng.standard_normal((n, 2))
    else:
        t = rng.uniform(0.0, np.pi, n)
        upper = np.stack([np.cos(t), np.sin(t)], axis=1)
        lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
        x = np.where(labels[:, None] == 0, upper, lower) + noise * rng.standard_normal((n, 2))
    perm = rng.permutation(n)
    return x[perm], labels[perm]
