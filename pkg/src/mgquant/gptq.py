"""Blockwise mixed-precision quantization with output compensation.

Columns are processed left to right in blocks. Inside a block, column j is
quantized at its assigned width against its *current* (already compensated)
values; the scaled error

    e_j = (w_j - q_j) / hc[j, j]

is immediately pushed onto the later columns of the block through row j of
the upper-triangular factor ``hc`` (``w_k -= e_j * hc[j, k]``). When the
block finishes, the stacked errors update everything to the right of it:

    W[:, end:] -= E @ hc[block, end:]

With a diagonal factor all cross terms vanish and the result reduces to
independent per-column quantization. ``intra_block=False`` keeps only the
block-level update, for comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationSet
from .linalg import ShapeMismatchError
from .quant import QuantizedColumn, quantize_column

__all__ = ["QuantResult", "quantize_blockwise", "proxy_loss", "validate_widths"]


@dataclass
class QuantResult:
    """Everything produced by one blockwise quantization run.

    Attributes:
        quantized: dequantized weight matrix, same shape/dtype as the input;
            every column lies exactly on its column's grid.
        columns: per-column codes and grids.
        widths: the bit assignment actually applied (copy).
        block_errors: per block, the sum of squared compensation entries.
        proxy_loss: layer output distortion if calibration data was supplied.
        wall_time: seconds spent in the engine (excluded from determinism).
        residuals: compensated value of each column at the moment it was
            quantized (kept only when requested; the training loop feeds
            these to the error table).
    """

    quantized: np.ndarray
    columns: list[QuantizedColumn]
    widths: np.ndarray
    block_errors: np.ndarray
    proxy_loss: float | None
    wall_time: float
    residuals: np.ndarray | None = None

    @property
    def mean_bits(self) -> float:
        return float(np.mean(self.widths))

    def bit_histogram(self, t_max: int) -> list[int]:
        counts = np.bincount(self.widths, minlength=t_max + 1)[1 : t_max + 1]
        return [int(c) for c in counts]


def validate_widths(widths: np.ndarray, d_col: int, t_max: int | None = None) -> np.ndarray:
    w = np.asarray(widths)
    if w.shape != (d_col,):
        raise ShapeMismatchError(f"widths must have shape ({d_col},), got {w.shape}")
    if not np.issubdtype(w.dtype, np.integer):
        if not np.all(w == np.round(w)):
            raise ValueError("widths must be integers")
        w = w.astype(np.int64)
    else:
        w = w.astype(np.int64)
    if w.min() < 1:
        raise ValueError(f"widths must be >= 1, got min {w.min()}")
    if t_max is not None and w.max() > t_max:
        raise ValueError(f"widths must be <= {t_max}, got max {w.max()}")
    return w


def quantize_blockwise(
    w: np.ndarray,
    hc: np.ndarray,
    widths: np.ndarray,
    block_size: int = 128,
    calib: CalibrationSet | None = None,
    intra_block: bool = True,
    keep_residuals: bool = False,
) -> QuantResult:
    """Quantize ``w`` column-blockwise at per-column widths with compensation.

    Args:
        w: weight matrix (d_row x d_col), float32 or float64; work happens
            in this dtype.
        hc: upper-triangular Cholesky factor of the damped inverse Gram
            (d_col x d_col) with strictly positive diagonal.
        widths: per-column bit widths, each >= 1.
        block_size: columns per compensation block (1..d_col).
        calib: optional calibration set for the proxy loss.
        intra_block: propagate each column's error to later columns of the
            same block (the default); False applies only the block-level
            update to later blocks.
        keep_residuals: record the compensated column values seen by the
            quantizer.
    """
    w = np.asarray(w)
    if w.ndim != 2:
        raise ShapeMismatchError(f"weights must be 2-D, got shape {w.shape}")
    if w.dtype not in (np.float32, np.float64):
        w = w.astype(np.float64)
    d_row, d_col = w.shape
    hc = np.asarray(hc)
    if hc.shape != (d_col, d_col):
        raise ShapeMismatchError(
            f"hessian factor shape {hc.shape} does not match d_col {d_col}"
        )
    widths = validate_widths(widths, d_col)
    diag = np.diag(hc)
    if not (diag > 0).all():
        bad = int(np.argmin(diag))
        raise ValueError(f"hessian factor diagonal must be positive (entry {bad})")
    if not 1 <= block_size <= d_col:
        raise ValueError(f"block_size must be in [1, {d_col}], got {block_size}")

    hc = hc.astype(w.dtype, copy=False)
    start = time.perf_counter()

    work = np.array(w, copy=True)
    quantized = np.zeros_like(work)
    residuals = np.zeros_like(work) if keep_residuals else None
    columns: list[QuantizedColumn] = [None] * d_col  # type: ignore[list-item]
    block_errors: list[float] = []

    for b in range(0, d_col, block_size):
        e = min(b + block_size, d_col)
        errs = np.zeros((d_row, e - b), dtype=work.dtype)
        for j in range(b, e):
            col = work[:, j]
            if residuals is not None:
                residuals[:, j] = col
            qc = quantize_column(col, int(widths[j]))
            columns[j] = qc
            qvals = qc.dequant().astype(work.dtype)
            quantized[:, j] = qvals
            err = (col - qvals) / hc[j, j]
            errs[:, j - b] = err
            if intra_block and j + 1 < e:
                work[:, j + 1 : e] -= np.outer(err, hc[j, j + 1 : e])
        block_errors.append(float(np.sum(np.square(errs, dtype=np.float64))))
        if e < d_col:
            work[:, e:] -= errs @ hc[b:e, e:]

    wall = time.perf_counter() - start
    loss = proxy_loss(w, quantized, calib) if calib is not None else None
    return QuantResult(
        quantized=quantized,
        columns=columns,
        widths=widths.copy(),
        block_errors=np.asarray(block_errors, dtype=np.float64),
        proxy_loss=loss,
        wall_time=wall,
        residuals=residuals,
    )


def proxy_loss(w: np.ndarray, q: np.ndarray, calib: CalibrationSet) -> float:
    """Layer output distortion ``||(w - q) @ X^T||_F^2 / m`` over all calibration rows."""
    w = np.asarray(w, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if w.shape != q.shape:
        raise ShapeMismatchError(f"weight shapes differ: {w.shape} vs {q.shape}")
    if calib.d_col != w.shape[1]:
        raise ShapeMismatchError(
            f"calibration dimension {calib.d_col} does not match d_col {w.shape[1]}"
        )
    diff = w - q
    total = 0.0
    for batch in calib.batches:
        proj = diff @ np.asarray(batch, dtype=np.float64).T
        total += float(np.sum(proj * proj))
    return total / calib.total_rows
