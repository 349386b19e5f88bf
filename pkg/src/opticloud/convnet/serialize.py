"""Binary model container and kernel fixtures.

Container layout (little-endian):

    b"OCNN" | version u16 | header length u32 | JSON header | float64 blobs

The header lists every layer with its activation, normalization flag, pool
factor and the shapes of its weight and bias arrays; the blobs follow in
that order.
"""

import json
import os
import struct
from importlib import resources
from pathlib import Path

import numpy as np

from .._validation import OptiCloudError
from .layers import LayerSpec

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "ModelFormatError",
    "dumps_model",
    "loads_model",
    "save_model",
    "load_model",
    "fixture_root",
    "load_kernels",
]

MAGIC = b"OCNN"
FORMAT_VERSION = 1
FIXTURE_ENV = "OPTICLOUD_FIXTURES"


class ModelFormatError(OptiCloudError):
    pass


def dumps_model(layers):
    header = {"layers": []}
    blobs = []
    for layer in layers:
        header["layers"].append({
            "activation": layer.activation,
            "normalize": bool(layer.normalize),
            "pool": int(layer.pool),
            "weights_shape": list(layer.weights.shape),
            "bias_shape": list(layer.bias.shape),
        })
        blobs.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        blobs.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    encoded = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<HI", FORMAT_VERSION, len(encoded)) + encoded + b"".join(blobs)


def loads_model(raw):
    if raw[:4] != MAGIC:
        raise ModelFormatError("not a model container (bad magic)")
    version, length = struct.unpack_from("<HI", raw, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    offset = 10
    try:
        header = json.loads(raw[offset:offset + length])
    except ValueError as exc:
        raise ModelFormatError(f"corrupt header: {exc}") from None
    offset += length
    layers = []
    for entry in header["layers"]:
        arrays = []
        for key in ("weights_shape", "bias_shape"):
            shape = tuple(entry[key])
            nbytes = 8 * int(np.prod(shape, dtype=np.int64))
            if offset + nbytes > len(raw):
                raise ModelFormatError("container truncated")
            arrays.append(np.frombuffer(raw, "<f8", nbytes // 8, offset).reshape(shape))
            offset += nbytes
        layers.append(LayerSpec(arrays[0], arrays[1], entry["activation"], entry["normalize"],
                                entry["pool"]))
    if offset != len(raw):
        raise ModelFormatError(f"{len(raw) - offset} trailing bytes after the last layer")
    return layers


def save_model(path, layers):
    Path(path).write_bytes(dumps_model(layers))


def load_model(path):
    return loads_model(Path(path).read_bytes())


def fixture_root():
    """Directory holding shipped fixtures; ``$OPTICLOUD_FIXTURES`` overrides it."""
    override = os.environ.get(FIXTURE_ENV)
    if override:
        return Path(override)
    return Path(resources.files("opticloud") / "data")


def load_kernels(path=None):
    """Name -> 3x3 array mapping, in file order."""
    path = Path(path) if path is not None else fixture_root() / "kernels.json"
    with open(path) as fh:
        data = json.load(fh)
    return {name: np.asarray(k, dtype=float) for name, k in data["kernels"].items()}
