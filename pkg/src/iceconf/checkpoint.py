"""Model checkpoint container.

Layout::

    b"ICECKPT" + format version byte
    uint32 little-endian header length
    header: UTF-8 JSON (sorted keys) with metadata and an array manifest
    array payloads: raw little-endian float64, in manifest order

No timestamps are written, so identical models give identical bytes, and
float64 payloads round-trip bit-exactly.
"""

import json
import struct

import numpy as np

from .errors import FormatError
from .model import ConfidenceHead, ConfidenceTable, Mlp

MAGIC = b"ICECKPT"
VERSION = 1


def _arrays(prefix, net):
    out = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out += [(f"{prefix}.{i}.weight", w), (f"{prefix}.{i}.bias", b)]
    return out


def save(path, model, source=None, seed=None, meta=None):
    arrays = _arrays("model", model)
    if isinstance(source, ConfidenceTable):
        arrays.append(("table.raw", source.raw))
    elif isinstance(source, ConfidenceHead):
        arrays += _arrays("head", source.net)
    manifest = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    header = {
        "arrays": manifest,
        "model_layers": len(model.weights),
        "head_layers": len(source.net.weights) if isinstance(source, ConfidenceHead) else 0,
        "seed": seed,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load(path):
    """Return ``(model, source, header)``; ``source`` is a table, a head or ``None``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:7] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file", offset=0)
    if len(data) < 12 or data[7] != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version", offset=7)
    (hlen,) = struct.unpack_from("<I", data, 8)
    try:
        header = json.loads(data[12 : 12 + hlen].decode())
    except ValueError:
        raise FormatError(f"{path}: corrupt header", offset=12) from None
    pos = 12 + hlen
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = pos + 8 * count
        if end > len(data):
            raise FormatError(f"{path}: truncated payload for {entry['name']}", offset=len(data))
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(entry["shape"]).astype(np.float64)
        pos = end

    def net(prefix, layers):
        return Mlp(
            [arrays[f"{prefix}.{i}.weight"] for i in range(layers)],
            [arrays[f"{prefix}.{i}.bias"] for i in range(layers)],
        )

    model = net("model", header["model_layers"])
    source = None
    if "table.raw" in arrays:
        source = ConfidenceTable(arrays["table.raw"])
    elif header["head_layers"]:
        source = ConfidenceHead(net("head", header["head_layers"]))
    return model, source, header
