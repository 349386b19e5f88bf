"""Two-dimensional correlation split into one-dimensional OPU row tasks.

A K x K kernel becomes K row kernels.  Row task ``r`` correlates image row
``y + r`` with kernel row ``r``; adding the K row outputs for every ``y``
gives the 2D valid cross-correlation.  Each image row is streamed through an
OPU in chunks no longer than its driven port count, consecutive chunks
overlapping by ``K - 1`` samples so their valid outputs tile the row.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .._validation import ShapeError, check_int
from ..opu import opu_convolve

__all__ = [
    "Conv2dTask",
    "decompose_conv2d",
    "correlate2d_valid",
    "chunk_starts",
    "correlate_rows_on_opu",
    "conv2d_via_opus",
    "pool_configs",
]


@dataclass(frozen=True)
class Conv2dTask:
    row_kernel: np.ndarray
    source_row_offset: int
    channel: int = 0
    assigned_opu: int = 0


def decompose_conv2d(kernel, channel=0, opu_count=None):
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] < 1:
        raise ShapeError(f"kernel must be a square K x K matrix, got shape {kernel.shape}")
    size = kernel.shape[0]
    opu_count = opu_count or size
    return [
        Conv2dTask(kernel[r].copy(), r, channel, r % opu_count)
        for r in range(size)
    ]


def correlate2d_valid(image, kernel):
    """Valid 2D cross-correlation (no flip), vectorized over leading image axes."""
    image = np.asarray(image, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    windows = sliding_window_view(image, kernel.shape, axis=(-2, -1))
    return np.einsum("...ijkl,kl->...ij", windows, kernel)


def pool_configs(pool):
    """Accept an ``OpuPool``, a sequence of ``OpuConfig`` or a single config."""
    configs = getattr(pool, "configs", pool)
    if hasattr(configs, "awgr"):
        return [configs]
    return list(configs)


def chunk_starts(width, kernel_length, chunk_length):
    step = chunk_length - kernel_length + 1
    return list(range(0, width - kernel_length + 1, step))


def correlate_rows_on_opu(config, rows, row_kernel, mode=None, job_id=0, chunk_length=None):
    """Valid 1D correlation of every row in ``rows`` (shape (R, W)) on one OPU."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    k = len(row_kernel)
    width = rows.shape[1]
    chunk_length = chunk_length or config.n_inputs
    check_int(chunk_length, "chunk_length", minimum=k, maximum=config.n_inputs)
    if width < k:
        raise ShapeError(f"rows of width {width} are shorter than the kernel ({k})")
    cfg = config.with_inputs(chunk_length) if chunk_length != config.n_inputs else config
    starts = chunk_starts(width, k, chunk_length)
    chunks = np.zeros((rows.shape[0], len(starts), chunk_length))
    for c, s in enumerate(starts):
        piece = rows[:, s:s + chunk_length]
        chunks[:, c, : piece.shape[1]] = piece
    flat = chunks.reshape(-1, chunk_length)
    out = opu_convolve(cfg, row_kernel, flat, job_id=job_id, mode=mode)
    first = cfg.used_input_ports[0]
    out = out[:, first:first + chunk_length - k + 1].reshape(rows.shape[0], len(starts), -1)
    result = np.empty((rows.shape[0], width - k + 1))
    for c, s in enumerate(starts):
        count = min(chunk_length, width - s) - k + 1
        result[:, s:s + count] = out[:, c, :count]
    return result


def conv2d_via_opus(pool, image, kernel, mode=None, job_id=0, chunk_length=None):
    """Valid 2D cross-correlation of a single-channel image computed on OPUs.

    Row task ``r`` runs on OPU ``r mod len(pool)``.  Rows of the kernel that
    are entirely zero contribute nothing and are not dispatched.  ``image``
    may also be a stack (n, H, W); every image then shares the same tasks.
    """
    configs = pool_configs(pool)
    image = np.asarray(image, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    stacked = image.ndim == 3
    images = image if stacked else image[None]
    if images.ndim != 3:
        raise ShapeError(f"image must be (H, W) or (n, H, W), got shape {image.shape}")
    size = kernel.shape[0]
    height, width = images.shape[1:]
    if size > min(height, width):
        raise ShapeError(f"{size}x{size} kernel does not fit a {height}x{width} image")
    out_h, out_w = height - size + 1, width - size + 1
    result = np.zeros((images.shape[0], out_h, out_w))
    for task in decompose_conv2d(kernel, opu_count=len(configs)):
        if not np.any(task.row_kernel):
            continue
        config = configs[task.assigned_opu]
        r = task.source_row_offset
        rows = images[:, r:r + out_h, :].reshape(-1, width)
        seed = (*np.atleast_1d(job_id), r)
        partial = correlate_rows_on_opu(config, rows, task.row_kernel, mode, seed, chunk_length)
        result += partial.reshape(images.shape[0], out_h, out_w)
    return result if stacked else result[0]
