"""Mixed-precision post-training weight quantization.

A graph-network allocator reads each weight column as a node (adjacency:
the Cholesky factor of the damped inverse calibration Gram), assigns it a
bit-width under an average-bit budget, and a blockwise engine quantizes the
columns with output-error compensation.
"""

from .allocator import (
    AllocatorParams,
    allocate,
    gcn_forward,
    gumbel_softmax,
    hessian_node_features,
    init_allocator_params,
    mlp_forward,
    preprocess,
    sample_gumbel,
)
from .baselines import BaselineSpec, run_baseline
from .calibration import CalibrationSet, GramAccumulator, build_hessian_cholesky
from .gptq import QuantResult, proxy_loss, quantize_blockwise
from .linalg import NotPositiveDefiniteError, ShapeMismatchError, cholesky, matmul, spd_inverse
from .pipeline import AllocatorTimings, quantize_with_allocator
from .quant import (
    QuantGrid,
    QuantizedColumn,
    column_error_table,
    error_table,
    fit_grid,
    quantize_binary,
    quantize_column,
    quantize_rtn,
)
from .tensorfile import TensorFileError, read_tensor_file, write_tensor_file
from .training import (
    AdamW,
    LossBreakdown,
    TrainConfig,
    TrainingLogRecord,
    soft_losses,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AllocatorParams",
    "AllocatorTimings",
    "BaselineSpec",
    "CalibrationSet",
    "GramAccumulator",
    "LossBreakdown",
    "NotPositiveDefiniteError",
    "QuantGrid",
    "QuantResult",
    "QuantizedColumn",
    "ShapeMismatchError",
    "TensorFileError",
    "TrainConfig",
    "TrainingLogRecord",
    "allocate",
    "build_hessian_cholesky",
    "cholesky",
    "column_error_table",
    "error_table",
    "fit_grid",
    "gcn_forward",
    "gumbel_softmax",
    "hessian_node_features",
    "init_allocator_params",
    "matmul",
    "mlp_forward",
    "preprocess",
    "proxy_loss",
    "quantize_binary",
    "quantize_blockwise",
    "quantize_column",
    "quantize_rtn",
    "quantize_with_allocator",
    "read_tensor_file",
    "run_baseline",
    "sample_gumbel",
    "soft_losses",
    "spd_inverse",
    "train",
    "write_tensor_file",
]
