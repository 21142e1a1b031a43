"""Reference quantizers: plain RTN, uniform-width blockwise, and the MLP
ablation allocator.

``rtn`` quantizes every column independently with the same per-column
dispatch the engine uses (binary at 1 bit, min-max RTN above), so with an
uncorrelated factor the blockwise engine reproduces it exactly.
``gptq-uniform`` is the engine with a constant assignment. ``mlp-ptq``
trains the allocator with the graph layers replaced by plain dense layers
(node features pooled from the factor rows), then quantizes with the
resulting assignment.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .allocator import allocate, hessian_node_features, mlp_forward
from .calibration import CalibrationSet
from .gptq import QuantResult, proxy_loss, quantize_blockwise
from .quant import quantize_column
from .training import TrainConfig, train

__all__ = ["BaselineSpec", "run_baseline", "quantize_rtn_matrix"]

METHODS = ("rtn", "gptq-uniform", "mlp-ptq")


@dataclass(frozen=True)
class BaselineSpec:
    """Which reference method to run and at what width/budget."""

    method: str
    bits: int = 2
    target_bits: float | None = None  # mlp-ptq only; defaults to bits

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown baseline method {self.method!r}; expected {METHODS}")
        if not 1 <= self.bits:
            raise ValueError(f"bits must be >= 1, got {self.bits}")

    @property
    def budget(self) -> float:
        return float(self.bits) if self.target_bits is None else float(self.target_bits)


def quantize_rtn_matrix(
    w: np.ndarray, bits: int, calib: CalibrationSet | None = None
) -> QuantResult:
    """Independent per-column quantization at a fixed width, no compensation."""
    w = np.asarray(w)
    if w.dtype not in (np.float32, np.float64):
        w = w.astype(np.float64)
    start = time.perf_counter()
    d_col = w.shape[1]
    quantized = np.zeros_like(w)
    columns = []
    for j in range(d_col):
        qc = quantize_column(w[:, j], bits)
        columns.append(qc)
        quantized[:, j] = qc.dequant().astype(w.dtype)
    wall = time.perf_counter() - start
    loss = proxy_loss(w, quantized, calib) if calib is not None else None
    return QuantResult(
        quantized=quantized,
        columns=columns,
        widths=np.full(d_col, bits, dtype=np.int64),
        block_errors=np.zeros(0, dtype=np.float64),
        proxy_loss=loss,
        wall_time=wall,
    )


def run_baseline(
    spec: BaselineSpec,
    w: np.ndarray,
    hc: np.ndarray,
    calib: CalibrationSet | None = None,
    cfg: TrainConfig | None = None,
) -> QuantResult:
    """Run one reference method on a single layer."""
    w = np.asarray(w)
    d_col = w.shape[1]
    if spec.method == "rtn":
        return quantize_rtn_matrix(w, spec.bits, calib=calib)

    cfg = cfg if cfg is not None else TrainConfig()
    if spec.method == "gptq-uniform":
        widths = np.full(d_col, spec.bits, dtype=np.int64)
        return quantize_blockwise(
            w, hc, widths,
            block_size=min(cfg.block_size, d_col),
            calib=calib,
            intra_block=cfg.intra_block,
        )

    # mlp-ptq: train the dense-ablation allocator on this layer, then quantize
    # with its hard assignment.
    train_cfg = dataclasses.replace(cfg, target_bits=spec.budget)
    params, _ = train([(w, hc)], train_cfg, arch="mlp")
    x0 = hessian_node_features(np.asarray(hc, dtype=np.float64), train_cfg.d_gnn)
    widths = allocate(mlp_forward(x0, params), params)
    return quantize_blockwise(
        w, hc, widths,
        block_size=min(cfg.block_size, d_col),
        calib=calib,
        intra_block=cfg.intra_block,
    )
