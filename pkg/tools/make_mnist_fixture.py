"""Build the shipped MNIST subset from the 5000-sample CSV bundled in the mlxtend wheel.

    pip download --no-deps mlxtend==0.24.0 -d /tmp/wheels
    python tools/make_mnist_fixture.py /tmp/wheels/mlxtend-0.24.0-py3-none-any.whl

The CSV holds 500 images per digit (784 pixel columns plus the label).  The
first 400 of each digit go to the training split, the remaining 100 to test;
samples are then interleaved by a fixed permutation.
"""

import gzip
import sys
import zipfile
from pathlib import Path

import numpy as np

from opticloud.convnet.idx import mnist_files, write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main(wheel):
    with zipfile.ZipFile(wheel) as zf:
        text = gzip.decompress(zf.read(MEMBER)).decode()
    table = np.loadtxt(text.splitlines(), delimiter=",", dtype=np.int64)
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)

    train_idx, test_idx = [], []
    for digit in range(10):
        rows = np.flatnonzero(labels == digit)
        train_idx.extend(rows[:400])
        test_idx.extend(rows[400:])
    rng = np.random.default_rng(20240501)
    out_dir = Path(__file__).resolve().parents[1] / "src" / "opticloud" / "data" / "mnist"
    for split, idx in (("train", train_idx), ("test", test_idx)):
        idx = rng.permutation(np.asarray(idx))
        image_path, label_path = mnist_files(split, out_dir)
        write_idx(image_path, pixels[idx])
        write_idx(label_path, labels[idx])
        print(split, len(idx), image_path.name, label_path.name)


if __name__ == "__main__":
    main(sys.argv[1])
