"""Reader and writer for the IDX format used by the MNIST distribution.

Layout: two zero bytes, a type code, the number of dimensions, one big-endian
uint32 per dimension, then the raw big-endian data.  Files ending in ``.gz``
(or starting with the gzip magic) are decompressed transparently.
"""

import gzip
import struct
from pathlib import Path

import numpy as np

from .._validation import OptiCloudError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_CODES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_DTYPE_TO_CODE = {dt.newbyteorder("="): code for code, dt in _CODES.items()}


class IdxFormatError(OptiCloudError):
    pass


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw):
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise IdxFormatError("not an IDX stream: first two bytes must be zero")
    code, ndim = raw[2], raw[3]
    if code not in _CODES:
        raise IdxFormatError(f"unknown IDX type code 0x{code:02x}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxFormatError("truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header_end])
    dtype = _CODES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) - header_end != expected:
        raise IdxFormatError(
            f"IDX payload has {len(raw) - header_end} bytes, dimensions {dims} need {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype, offset=header_end).reshape(dims)
    return data.astype(dtype.newbyteorder("="))


def read_idx(path, expect_magic=None):
    raw = _read_bytes(path)
    if expect_magic is not None and len(raw) >= 4:
        magic = struct.unpack(">I", raw[:4])[0]
        if magic != expect_magic:
            raise IdxFormatError(f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    return parse_idx(raw)


def encode_idx(array):
    array = np.asarray(array)
    code = _DTYPE_TO_CODE.get(array.dtype.newbyteorder("="))
    if code is None:
        raise IdxFormatError(f"dtype {array.dtype} has no IDX type code")
    header = bytes([0, 0, code, array.ndim]) + struct.pack(">" + "I" * array.ndim, *array.shape)
    return header + array.astype(_CODES[code]).tobytes()


def write_idx(path, array):
    payload = encode_idx(array)
    if str(path).endswith(".gz"):
        # mtime=0 keeps the compressed bytes reproducible
        payload = gzip.compress(payload, mtime=0)
    Path(path).write_bytes(payload)


def mnist_files(split, root=None):
    prefix = {"train": "train", "test": "t10k"}[split]
    if root is None:
        from .serialize import fixture_root

        root = Path(fixture_root()) / "mnist"
    base = Path(root)
    return (
        base / f"{prefix}-images-idx3-ubyte.gz",
        base / f"{prefix}-labels-idx1-ubyte.gz",
    )


def load_mnist(split="train", root=None, limit=None):
    """Images scaled to ``[0, 1]`` as float64 of shape (n, 28, 28), and int labels.

    Without ``root`` this reads the 5000-image subset shipped with the package
    (4000 train / 1000 test, balanced classes).
    """
    image_path, label_path = mnist_files(split, root)
    images = read_idx(image_path, IMAGES_MAGIC)
    labels = read_idx(label_path, LABELS_MAGIC)
    if len(images) != len(labels):
        raise IdxFormatError("image and label files disagree on sample count")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return images.astype(float) / 255.0, labels.astype(np.int64)
