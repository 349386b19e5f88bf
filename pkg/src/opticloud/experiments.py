"""Desk-scale experiment runners shared by the CLI and the acceptance tests.

Each runner is a pure function of its arguments and seed and returns plain
rows (lists of dicts) or arrays; writing files is left to the caller.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .convnet.conv2d import conv2d_via_opus, correlate2d_valid
from .convnet.layers import LayerSpec, layer_forward
from .convnet.model import Dataset, evaluate_classifier, train_toy_cnn
from .opu import ELEMENTARY_OPS, elementary_errors, measure_enob, peak_tops

__all__ = [
    "ordered_map",
    "op_precision",
    "precision_sweep",
    "addition_stats",
    "kernel_gallery",
    "first_layer_fidelity",
    "train_mnist_model",
    "bits_sweep",
    "throughput_table",
    "write_rows",
    "write_matrix",
    "read_vector",
]


def ordered_map(func, items, parallel=1):
    """``map`` over ``items`` with up to ``parallel`` threads; output keeps input order."""
    items = list(items)
    if parallel <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(min(parallel, len(items))) as ex:
        return list(ex.map(func, items))


def op_precision(config, op_mode, trials=4096, seed=0):
    normalized, raw, _ = elementary_errors(config, op_mode, trials=trials, seed=seed)
    return {
        "op": op_mode,
        "enob": measure_enob(normalized, 1.0),
        "rms": float(np.sqrt(np.mean(normalized**2))),
    }


def precision_sweep(config, bauds, trials=4096, seed=0, parallel=1):
    """One row per baud with the ENOB of every elementary op."""
    from dataclasses import replace

    def point(baud):
        cfg = replace(config, baud=float(baud), mode="noisy")
        row = {"baud": float(baud)}
        for op in ELEMENTARY_OPS:
            row[f"enob_{op}"] = op_precision(cfg, op, trials, seed)["enob"]
        return row

    return ordered_map(point, bauds, parallel)


def addition_stats(config, trials=4096, levels=8, seed=0):
    """Error of ``a + b`` for operands on ``levels`` steps, in units of one step."""
    from dataclasses import replace

    cfg = replace(config, mode="noisy")
    normalized, raw, _ = elementary_errors(cfg, "add", trials=trials, levels=levels, seed=seed)
    step_errors = raw * (levels - 1)
    return {
        "trials": trials,
        "error_std_levels": float(np.std(step_errors)),
        "error_mean_levels": float(np.mean(step_errors)),
        "enob": measure_enob(normalized, 1.0),
    }


def kernel_gallery(pool, image, kernels):
    """Noisy OPU feature map per kernel with its RMSE against the exact map.

    ``rmse`` is in output units; ``rmse_fs`` divides by the output full scale
    ``sum(|K|)`` so it compares directly with the noise sigma.
    """
    out = {}
    for i, (name, kernel) in enumerate(kernels.items()):
        exact = correlate2d_valid(image, kernel)
        noisy = conv2d_via_opus(pool, image, kernel, mode="noisy", job_id=i)
        rmse = float(np.sqrt(np.mean((noisy - exact) ** 2)))
        out[name] = {
            "noisy": noisy,
            "exact": exact,
            "rmse": rmse,
            "rmse_fs": rmse / float(np.abs(kernel).sum()),
        }
    return out


def first_layer_fidelity(layers, images, pool):
    """RMSE between OPU and float pre-activation outputs of the first layer.

    Each output map is divided by the peak-to-peak range of its float
    version before comparing, so the figure is a fraction of full scale.
    """
    first = layers[0]
    conv = LayerSpec(first.weights, first.bias)
    exact = layer_forward(conv, images, "float")
    optical = layer_forward(conv, images, "opu", opus=pool)
    span = np.ptp(exact, axis=(-2, -1), keepdims=True)
    span = np.where(span > 0, span, 1.0)
    return float(np.sqrt(np.mean(((optical - exact) / span) ** 2)))


def train_mnist_model(section, seed=0):
    train = Dataset.mnist("train", limit=section.train_limit)
    return train_toy_cnn(train, section.epochs, section.learning_rate, seed,
                         section.batch_size, section.lr_decay)


def bits_sweep(layers, test, bits_values, seeds, parallel=1):
    """Mean and per-seed accuracy for each injected-noise bit depth."""

    def point(bits):
        accs = [evaluate_classifier(layers, test, bits=int(bits), seed=s)[0] for s in seeds]
        row = {"bits": int(bits), "accuracy_mean": float(np.mean(accs))}
        row.update({f"accuracy_seed{s}": a for s, a in zip(seeds, accs)})
        return row

    return ordered_map(point, bits_values, parallel)


def throughput_table(points, achieved=None):
    rows = []
    for ports, k, baud in points:
        row = {"ports": int(ports), "k": int(k), "baud": float(baud),
               "peak_tops": peak_tops(int(ports), int(k), float(baud))}
        if achieved is not None:
            row["achieved_tops"] = achieved
        rows.append(row)
    return rows


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path, rows, fields=None):
    fields = fields or (list(rows[0]) if rows else [])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields])
    return Path(path)


def write_matrix(path, matrix):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(matrix):
            writer.writerow([_fmt(v) for v in row])
    return Path(path)


def read_vector(path):
    """Numbers from a CSV file, flattened in reading order (blank cells skipped)."""
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            values.extend(float(cell) for cell in row if cell.strip())
    return np.array(values)
