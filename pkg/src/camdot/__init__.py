"""camdot: CNN inference on content-addressable memories, behaviorally.

Dot products become Hamming searches: vectors are reduced to a quantized
norm plus a sign-random-projection hash (a "context"), contexts are stored
in CAM rows, and one search compares a query against every stored row at
once. The package models that pipeline end to end: the approximation itself
(:mod:`camdot.geodot`), the array (:mod:`camdot.camarray`), whole-network
execution with weight- or activation-stationary scheduling
(:mod:`camdot.netexec`), hash-length tuning (:mod:`camdot.tuner`), cost and
utilization reports with a MAC-array baseline (:mod:`camdot.costmodel`), and
bit-exact file containers (:mod:`camdot.modelio`).
"""

__version__ = "0.1.0"

from .geodot import (
    Context,
    HashBits,
    ProjectionMatrix,
    algebraic_dot,
    approx_cosine,
    approx_dot,
    approx_dot_exact_cos,
    build_context,
    estimate_angle,
    hamming_distance,
    l2_norm,
    mf8_decode,
    mf8_encode,
    sign_hash,
)
from .camarray import CamConfig, CamError, CamState
from .costmodel import (
    CostModelError,
    CostReport,
    CostTable,
    CostTrace,
    compare,
    fold_trace,
    systolic_cycles,
)
from .netexec import (
    ExecutionPlan,
    LayerDescriptor,
    NetworkError,
    NetworkModel,
    RunResult,
    im2col,
    run_network,
    schedule_trace,
    top1_accuracy,
)
from .modelio import (
    Dataset,
    FormatError,
    load_dataset,
    load_model,
    write_dataset,
    write_model,
)
from .tuner import TuneConfig, TuneResult, tune_hash_lengths

__all__ = [
    "CamConfig", "CamError", "CamState", "Context", "CostModelError",
    "CostReport", "CostTable", "CostTrace", "Dataset", "ExecutionPlan",
    "FormatError", "HashBits", "LayerDescriptor", "NetworkError",
    "NetworkModel", "ProjectionMatrix", "RunResult", "TuneConfig",
    "TuneResult", "algebraic_dot", "approx_cosine", "approx_dot",
    "approx_dot_exact_cos", "build_context", "compare", "estimate_angle",
    "fold_trace", "hamming_distance", "im2col", "l2_norm", "load_dataset",
    "load_model", "mf8_decode", "mf8_encode", "run_network",
    "schedule_trace", "sign_hash", "systolic_cycles", "top1_accuracy",
    "tune_hash_lengths", "write_dataset", "write_model",
]
