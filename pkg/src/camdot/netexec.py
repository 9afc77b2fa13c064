"""Run whole networks as sequences of CAM dot-product searches.

A model is a chain of layers. conv2d and linear layers are "dot layers":
their work is lowered to patch x kernel dot products, approximated through
contexts (quantized norm + sign hash) searched in a CAM. Everything else
(relu, pooling, batchnorm, flatten) is full-precision digital post-processing
between dot layers.

Scheduling: contexts for the stationary operand are loaded into CAM rows in
tiles; each non-stationary context issues one search per tile.

* weight_stationary: kernels live in rows, every patch searches each tile.
* activation_stationary: patches live in rows, every kernel searches each
  tile. Hamming distance is symmetric and float multiplication commutes, so
  both dataflows produce bit-identical outputs; only the event schedule and
  therefore cost differ.

The first dot layer's activation contexts are treated as precomputed in
software; every later dot layer re-contexts its inputs online, which shows
up as transform events in the trace.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import geodot
from .camarray import CamConfig, CamState, WORD_CHOICES
from .costmodel import CostTrace, systolic_cycles

__all__ = [
    "DOT_KINDS",
    "ExecutionPlan",
    "LayerDescriptor",
    "NetworkError",
    "NetworkModel",
    "RunResult",
    "avgpool2d",
    "baseline_cycles",
    "batchnorm",
    "conv2d",
    "conv_output_hw",
    "flatten",
    "im2col",
    "layer_output_shape",
    "linear",
    "maxpool",
    "maxpool2d",
    "avgpool",
    "relu",
    "run_network",
    "schedule_trace",
    "top1_accuracy",
]

DOT_KINDS = ("conv2d", "linear")
LAYER_KINDS = DOT_KINDS + ("relu", "maxpool", "avgpool", "batchnorm", "flatten")

DATAFLOWS = ("weight_stationary", "activation_stationary")


class NetworkError(ValueError):
    """Model, plan, or shape violations."""


# ---------------------------------------------------------------------------
# layer descriptors
# ---------------------------------------------------------------------------

@dataclass
class LayerDescriptor:
    """One layer of a chain model. Fields are kind-specific; unused ones
    keep their zero defaults. relu_after fuses an activation into a dot
    layer so classic stacks stay compact."""

    kind: str
    # conv2d
    in_channels: int = 0
    in_h: int = 0
    in_w: int = 0
    out_channels: int = 0
    kernel_h: int = 0
    kernel_w: int = 0
    stride: int = 1
    padding: int = 0
    # linear
    in_features: int = 0
    out_features: int = 0
    # shared dot-layer payload
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    relu_after: bool = False
    # pooling (reuses stride/padding)
    pool_h: int = 0
    pool_w: int = 0
    # batchnorm
    channels: int = 0
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    eps: float = 1e-5

    def validate(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise NetworkError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d":
            for name in ("in_channels", "in_h", "in_w", "out_channels",
                         "kernel_h", "kernel_w", "stride"):
                if getattr(self, name) < 1:
                    raise NetworkError(f"conv2d.{name} must be positive")
            if self.padding < 0:
                raise NetworkError("conv2d.padding must be non-negative")
            n = self.in_channels * self.kernel_h * self.kernel_w
            if self.weights is None or self.weights.shape != (self.out_channels, n):
                raise NetworkError(
                    f"conv2d weights must have shape ({self.out_channels}, {n})"
                )
            if self.bias is not None and self.bias.shape != (self.out_channels,):
                raise NetworkError("conv2d bias shape mismatch")
            conv_output_hw(self.in_h, self.in_w, self.kernel_h, self.kernel_w,
                           self.stride, self.padding)
        elif self.kind == "linear":
            if self.in_features < 1 or self.out_features < 1:
                raise NetworkError("linear dimensions must be positive")
            if self.weights is None or self.weights.shape != (
                    self.out_features, self.in_features):
                raise NetworkError("linear weights shape mismatch")
            if self.bias is not None and self.bias.shape != (self.out_features,):
                raise NetworkError("linear bias shape mismatch")
        elif self.kind in ("maxpool", "avgpool"):
            if self.pool_h < 1 or self.pool_w < 1 or self.stride < 1:
                raise NetworkError("pool window and stride must be positive")
            if self.padding < 0:
                raise NetworkError("pool padding must be non-negative")
        elif self.kind == "batchnorm":
            if self.channels < 1:
                raise NetworkError("batchnorm.channels must be positive")
            for name in ("gamma", "beta", "running_mean", "running_var"):
                arr = getattr(self, name)
                if arr is None or arr.shape != (self.channels,):
                    raise NetworkError(f"batchnorm.{name} shape mismatch")
            if self.eps <= 0 or np.any(self.running_var < 0):
                raise NetworkError("batchnorm variance and eps must be non-negative")
        if self.relu_after and self.kind not in DOT_KINDS:
            raise NetworkError("relu_after only applies to conv2d/linear")


def _reshape_weights(weights, rows: int, cols: int, kind: str) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float32)
    if w.size != rows * cols:
        raise NetworkError(
            f"{kind} weights have {w.size} values, expected {rows}x{cols}")
    return w.reshape(rows, cols)


def conv2d(in_channels, in_h, in_w, out_channels, kernel_h, kernel_w,
           weights, bias=None, stride=1, padding=0, relu_after=False) -> LayerDescriptor:
    w = _reshape_weights(weights, out_channels,
                         in_channels * kernel_h * kernel_w, "conv2d")
    b = None if bias is None else np.asarray(bias, dtype=np.float32)
    layer = LayerDescriptor(
        kind="conv2d", in_channels=in_channels, in_h=in_h, in_w=in_w,
        out_channels=out_channels, kernel_h=kernel_h, kernel_w=kernel_w,
        stride=stride, padding=padding, weights=w, bias=b, relu_after=relu_after)
    layer.validate()
    return layer


def linear(in_features, out_features, weights, bias=None, relu_after=False) -> LayerDescriptor:
    w = _reshape_weights(weights, out_features, in_features, "linear")
    b = None if bias is None else np.asarray(bias, dtype=np.float32)
    layer = LayerDescriptor(kind="linear", in_features=in_features,
                            out_features=out_features, weights=w, bias=b,
                            relu_after=relu_after)
    layer.validate()
    return layer


def relu() -> LayerDescriptor:
    return LayerDescriptor(kind="relu")


def maxpool(pool_h, pool_w, stride, padding=0) -> LayerDescriptor:
    layer = LayerDescriptor(kind="maxpool", pool_h=pool_h, pool_w=pool_w,
                            stride=stride, padding=padding)
    layer.validate()
    return layer


def avgpool(pool_h, pool_w, stride, padding=0) -> LayerDescriptor:
    layer = LayerDescriptor(kind="avgpool", pool_h=pool_h, pool_w=pool_w,
                            stride=stride, padding=padding)
    layer.validate()
    return layer


def batchnorm(channels, gamma, beta, running_mean, running_var, eps=1e-5) -> LayerDescriptor:
    layer = LayerDescriptor(
        kind="batchnorm", channels=channels,
        gamma=np.asarray(gamma, dtype=np.float32),
        beta=np.asarray(beta, dtype=np.float32),
        running_mean=np.asarray(running_mean, dtype=np.float32),
        running_var=np.asarray(running_var, dtype=np.float32), eps=eps)
    layer.validate()
    return layer


def flatten() -> LayerDescriptor:
    return LayerDescriptor(kind="flatten")


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

def conv_output_hw(h, w, kernel_h, kernel_w, stride, padding) -> tuple[int, int]:
    if stride < 1:
        raise NetworkError("stride must be positive")
    out_h = (h + 2 * padding - kernel_h) // stride + 1
    out_w = (w + 2 * padding - kernel_w) // stride + 1
    if out_h < 1 or out_w < 1:
        raise NetworkError(
            f"window {kernel_h}x{kernel_w} stride {stride} does not fit "
            f"{h}x{w} input with padding {padding}"
        )
    return out_h, out_w


def layer_output_shape(layer: LayerDescriptor, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if layer.kind == "conv2d":
        if in_shape != (layer.in_channels, layer.in_h, layer.in_w):
            raise NetworkError(
                f"conv2d expects {(layer.in_channels, layer.in_h, layer.in_w)}, "
                f"got {in_shape}"
            )
        oh, ow = conv_output_hw(layer.in_h, layer.in_w, layer.kernel_h,
                                layer.kernel_w, layer.stride, layer.padding)
        return (layer.out_channels, oh, ow)
    if layer.kind == "linear":
        if math.prod(in_shape) != layer.in_features:
            raise NetworkError(
                f"linear expects {layer.in_features} features, got shape {in_shape}"
            )
        return (layer.out_features,)
    if layer.kind in ("maxpool", "avgpool"):
        if len(in_shape) != 3:
            raise NetworkError(f"{layer.kind} expects a (C, H, W) input")
        c, h, w = in_shape
        oh, ow = conv_output_hw(h, w, layer.pool_h, layer.pool_w,
                                layer.stride, layer.padding)
        return (c, oh, ow)
    if layer.kind == "batchnorm":
        if len(in_shape) != 3 or in_shape[0] != layer.channels:
            raise NetworkError("batchnorm channel count mismatch")
        return in_shape
    if layer.kind == "relu":
        return in_shape
    if layer.kind == "flatten":
        return (math.prod(in_shape),)
    raise NetworkError(f"unknown layer kind {layer.kind!r}")


@dataclass
class NetworkModel:
    """An ordered chain of layers. Output of layer i feeds layer i + 1."""

    layers: list[LayerDescriptor]

    def input_shape(self) -> tuple[int, ...]:
        if not self.layers:
            raise NetworkError("model has no layers")
        first = self.layers[0]
        if first.kind == "conv2d":
            return (first.in_channels, first.in_h, first.in_w)
        if first.kind == "linear":
            return (first.in_features,)
        raise NetworkError("first layer must be conv2d or linear")

    def validate(self) -> tuple[int, ...]:
        """Check every layer and the shape chain; returns the output shape."""
        shape = self.input_shape()
        for idx, layer in enumerate(self.layers):
            layer.validate()
            try:
                shape = layer_output_shape(layer, shape)
            except NetworkError as exc:
                raise NetworkError(f"layer {idx}: {exc}") from exc
        return shape

    def dot_layer_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind in DOT_KINDS]

    def num_classes(self) -> int:
        shape = self.validate()
        if len(shape) != 1:
            raise NetworkError("model output is not a vector")
        return shape[0]


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass
class ExecutionPlan:
    """How to run a model: dataflow, CAM shape, per-layer hash lengths.

    hash_lengths maps model layer index to hash bits for every dot layer.
    exact_dot replaces the CAM approximation with float64 dot products while
    keeping the event schedule, which is the parity oracle for everything
    downstream of the dot layers.
    """

    dataflow: str
    cam: CamConfig
    hash_lengths: dict[int, int]
    seed: int = 7
    exact_dot: bool = False

    def validate(self, model: NetworkModel) -> None:
        if self.dataflow not in DATAFLOWS:
            raise NetworkError(f"dataflow must be one of {DATAFLOWS}")
        dots = model.dot_layer_indices()
        if sorted(self.hash_lengths) != dots:
            raise NetworkError(
                f"hash_lengths keys {sorted(self.hash_lengths)} must equal "
                f"dot layer indices {dots}"
            )
        for idx, bits in self.hash_lengths.items():
            if bits not in WORD_CHOICES:
                raise NetworkError(
                    f"layer {idx}: hash length {bits} not in {WORD_CHOICES}"
                )


# ---------------------------------------------------------------------------
# patch extraction and post-processing
# ---------------------------------------------------------------------------

def im2col(x: np.ndarray, kernel_h: int, kernel_w: int, stride: int,
           padding: int) -> np.ndarray:
    """Lower a (C, H, W) tensor to a (patches, C*kh*kw) matrix.

    Patch order is row-major over output positions; within a patch the
    layout is channel-major then kernel row then kernel column, matching a
    (K, C, kh, kw) kernel tensor reshaped to (K, C*kh*kw).
    """
    if x.ndim != 3:
        raise NetworkError("im2col expects a (C, H, W) tensor")
    c, h, w = x.shape
    out_h, out_w = conv_output_hw(h, w, kernel_h, kernel_w, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kernel_h, kernel_w), axis=(1, 2))
    win = win[:, ::stride, ::stride]                 # (C, out_h, out_w, kh, kw)
    patches = win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w,
                                                   c * kernel_h * kernel_w)
    return np.ascontiguousarray(patches)


def _pool_windows(x: np.ndarray, layer: LayerDescriptor, fill: float) -> np.ndarray:
    c, h, w = x.shape
    if layer.padding:
        p = layer.padding
        x = np.pad(x, ((0, 0), (p, p), (p, p)), constant_values=fill)
    win = sliding_window_view(x, (layer.pool_h, layer.pool_w), axis=(1, 2))
    return win[:, ::layer.stride, ::layer.stride]


def apply_post_layer(layer: LayerDescriptor, x: np.ndarray) -> np.ndarray:
    """Full-precision post-processing for one non-dot layer."""
    if layer.kind == "relu":
        return np.maximum(x, 0.0)
    if layer.kind == "maxpool":
        return _pool_windows(x, layer, -np.inf).max(axis=(3, 4))
    if layer.kind == "avgpool":
        # zero padding counts toward the mean (count_include_pad semantics)
        return _pool_windows(x, layer, 0.0).mean(axis=(3, 4))
    if layer.kind == "batchnorm":
        scale = layer.gamma.astype(np.float64) / np.sqrt(
            layer.running_var.astype(np.float64) + layer.eps)
        shift = layer.beta.astype(np.float64) - scale * layer.running_mean.astype(np.float64)
        return x * scale[:, None, None] + shift[:, None, None]
    if layer.kind == "flatten":
        return x.reshape(-1)
    raise NetworkError(f"{layer.kind} is not a post-processing layer")


def top1_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Percent of matching labels."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise NetworkError("predictions and labels must match and be non-empty")
    return float(np.mean(predictions == labels) * 100.0)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _iter_tiles(total: int, rows: int):
    for lo in range(0, total, rows):
        yield lo, min(lo + rows, total)


def _dot_geometry(layer: LayerDescriptor, in_shape: tuple[int, ...]) -> tuple[int, int, int]:
    """(patches, kernels, depth) for a dot layer at a given input shape."""
    if layer.kind == "conv2d":
        oh, ow = conv_output_hw(layer.in_h, layer.in_w, layer.kernel_h,
                                layer.kernel_w, layer.stride, layer.padding)
        return oh * ow, layer.out_channels, layer.in_channels * layer.kernel_h * layer.kernel_w
    return 1, layer.out_features, layer.in_features


def _emit_cam_schedule(trace: CostTrace, patches: int, kernels: int, rows: int,
                       word_bits: int, dataflow: str) -> None:
    """The event stream a dot layer produces, synthesized from geometry.

    Must mirror the CamState-driven path event for event; the dry-run cost
    command and the exact-dot oracle both rely on it.
    """
    trace.emit("reconfigure", rows=rows, word_bits=word_bits)
    stored, queries = ((kernels, patches) if dataflow == "weight_stationary"
                       else (patches, kernels))
    for lo, hi in _iter_tiles(stored, rows):
        size = hi - lo
        trace.emit("write", count=size, rows=rows, word_bits=word_bits)
        trace.emit("tile", rows=rows, valid_rows=size)
        trace.emit("search", count=queries, rows=rows, word_bits=word_bits,
                   valid_rows=size)
        trace.emit("dot", count=queries * size)


class _RunCache:
    """Per-plan immutables: projections, weight contexts, cosine tables.

    Built eagerly so threaded runs never race on construction.
    """

    def __init__(self, model: NetworkModel, plan: ExecutionPlan) -> None:
        self.projections: dict[int, geodot.ProjectionMatrix] = {}
        self.weight_norms: dict[int, np.ndarray] = {}
        self.weight_bits: dict[int, np.ndarray] = {}
        self.weight_f64: dict[int, np.ndarray] = {}
        self.bias_f64: dict[int, np.ndarray | None] = {}
        self.cos_table: dict[int, np.ndarray] = {}
        shape = model.input_shape()
        for idx, layer in enumerate(model.layers):
            if layer.kind in DOT_KINDS:
                _, _, depth = _dot_geometry(layer, shape)
                bits = plan.hash_lengths[idx]
                w64 = layer.weights.astype(np.float64)
                self.weight_f64[idx] = w64
                self.bias_f64[idx] = (None if layer.bias is None
                                      else layer.bias.astype(np.float64))
                if not plan.exact_dot:
                    proj = geodot.ProjectionMatrix.generate(
                        geodot.derive_seed(plan.seed, idx), depth, bits)
                    self.projections[idx] = proj
                    codes, hash_bits = geodot.build_context_batch(w64, proj)
                    self.weight_norms[idx] = geodot.mf8_decode_array(codes)
                    self.weight_bits[idx] = hash_bits
                    if bits not in self.cos_table:
                        angles = np.pi * np.arange(bits + 1, dtype=np.float64) / bits
                        self.cos_table[bits] = geodot.approx_cosine_array(angles)
            shape = layer_output_shape(layer, shape)


def _approx_dot_layer(cam: CamState, trace: CostTrace, plan: ExecutionPlan,
                      cache: _RunCache, idx: int, act_norms: np.ndarray,
                      act_bits: np.ndarray) -> np.ndarray:
    """(patches x kernels) approximate products via tiled CAM searches."""
    w_norms = cache.weight_norms[idx]
    w_bits = cache.weight_bits[idx]
    cos_table = cache.cos_table[plan.hash_lengths[idx]]
    patches, kernels = act_norms.size, w_norms.size
    rows = cam.config.rows
    out = np.empty((patches, kernels), dtype=np.float64)
    cam.set_word_length(plan.hash_lengths[idx])
    if plan.dataflow == "weight_stationary":
        stored_norms, stored_bits = w_norms, w_bits
        query_bits, queries = act_bits, patches
    else:
        stored_norms, stored_bits = act_norms, act_bits
        query_bits, queries = w_bits, kernels
    for lo, hi in _iter_tiles(stored_norms.size, rows):
        size = hi - lo
        cam.clear()
        cam.write_rows(stored_bits[lo:hi])
        trace.emit("tile", rows=rows, valid_rows=size)
        _, dist = cam.search_many(query_bits)        # (queries, size)
        cos = cos_table[dist]
        if plan.dataflow == "weight_stationary":
            out[:, lo:hi] = (act_norms[:, None] * w_norms[None, lo:hi]) * cos
        else:
            out[lo:hi, :] = ((act_norms[lo:hi, None] * w_norms[None, :])
                             * cos.T)
        trace.emit("dot", count=queries * size)
    return out


def _run_single(model: NetworkModel, plan: ExecutionPlan, image: np.ndarray,
                cache: _RunCache, trace: CostTrace) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.shape != model.input_shape():
        raise NetworkError(
            f"input shape {x.shape} does not match model {model.input_shape()}")
    if not np.isfinite(x).all():
        raise NetworkError("input contains non-finite values")
    cam = None if plan.exact_dot else CamState(plan.cam, trace)
    first_dot = model.dot_layer_indices()[0]
    for idx, layer in enumerate(model.layers):
        trace.set_layer(idx)
        if layer.kind in DOT_KINDS:
            if layer.kind == "conv2d":
                patch_mat = im2col(x, layer.kernel_h, layer.kernel_w,
                                   layer.stride, layer.padding)
                oh, ow = conv_output_hw(layer.in_h, layer.in_w, layer.kernel_h,
                                        layer.kernel_w, layer.stride, layer.padding)
            else:
                patch_mat = x.reshape(1, -1)
                if patch_mat.shape[1] != layer.in_features:
                    raise NetworkError(f"layer {idx}: feature count mismatch")
            bits = plan.hash_lengths[idx]
            trace.emit("layer_exec")
            if idx != first_dot:
                trace.emit("transform", count=patch_mat.shape[0], word_bits=bits)
            if plan.exact_dot:
                _emit_cam_schedule(trace, patch_mat.shape[0],
                                   cache.weight_f64[idx].shape[0],
                                   plan.cam.rows, bits, plan.dataflow)
                out = patch_mat @ cache.weight_f64[idx].T
            else:
                codes, act_bits = geodot.build_context_batch(
                    patch_mat, cache.projections[idx])
                act_norms = geodot.mf8_decode_array(codes)
                out = _approx_dot_layer(cam, trace, plan, cache, idx,
                                        act_norms, act_bits)
            if cache.bias_f64[idx] is not None:
                out = out + cache.bias_f64[idx][None, :]
            if layer.kind == "conv2d":
                x = out.T.reshape(layer.out_channels, oh, ow)
            else:
                x = out[0]
            if layer.relu_after:
                x = np.maximum(x, 0.0)
                trace.emit("post", op="relu", count=x.size)
        else:
            x = apply_post_layer(layer, x)
            if layer.kind != "flatten":              # reshapes cost nothing
                trace.emit("post", op=layer.kind, count=x.size)
    return x


@dataclass
class RunResult:
    logits: np.ndarray          # (images, classes) float64
    predictions: np.ndarray     # (images,) int64, argmax with lowest-index ties
    trace: CostTrace


def run_network(model: NetworkModel, plan: ExecutionPlan, images: np.ndarray,
                threads: int = 1) -> RunResult:
    """Run a batch of (C, H, W) images through the model.

    threads > 1 farms images out to a thread pool; per-image traces are
    merged in image order, so results and the event stream are identical for
    any thread count.
    """
    model.validate()
    plan.validate(model)
    images = np.asarray(images)
    if images.ndim == len(model.input_shape()):
        images = images[None]
    if images.shape[1:] != model.input_shape():
        raise NetworkError(
            f"batch shape {images.shape[1:]} does not match model input "
            f"{model.input_shape()}")
    if threads < 1:
        raise NetworkError("threads must be positive")
    cache = _RunCache(model, plan)

    def one(i: int) -> tuple[np.ndarray, CostTrace]:
        local = CostTrace()
        logits = _run_single(model, plan, images[i], cache, local)
        return logits, local

    count = images.shape[0]
    if threads == 1 or count <= 1:
        results = [one(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(count)))
    logits = np.stack([r[0] for r in results])
    trace = CostTrace()
    for _, local in results:
        trace.extend(local)
    # flat argmax keeps predictions well defined even for non-vector outputs
    predictions = np.argmax(logits.reshape(count, -1), axis=1).astype(np.int64)
    return RunResult(logits=logits, predictions=predictions, trace=trace)


# ---------------------------------------------------------------------------
# cost-only scheduling (no data, no weights touched)
# ---------------------------------------------------------------------------

def schedule_trace(model: NetworkModel, plan: ExecutionPlan, images: int = 1) -> CostTrace:
    """The exact event stream :func:`run_network` would emit, from geometry
    alone. One image's schedule is computed once and replicated."""
    model.validate()
    plan.validate(model)
    if images < 0:
        raise NetworkError("images must be non-negative")
    one = CostTrace()
    shape = model.input_shape()
    first_dot = model.dot_layer_indices()[0]
    for idx, layer in enumerate(model.layers):
        one.set_layer(idx)
        out_shape = layer_output_shape(layer, shape)
        if layer.kind in DOT_KINDS:
            patches, kernels, _ = _dot_geometry(layer, shape)
            bits = plan.hash_lengths[idx]
            one.emit("layer_exec")
            if idx != first_dot:
                one.emit("transform", count=patches, word_bits=bits)
            _emit_cam_schedule(one, patches, kernels, plan.cam.rows, bits,
                               plan.dataflow)
            if layer.relu_after:
                one.emit("post", op="relu", count=math.prod(out_shape))
        elif layer.kind != "flatten":
            one.emit("post", op=layer.kind, count=math.prod(out_shape))
        shape = out_shape
    return CostTrace(one.events * images)


def baseline_cycles(model: NetworkModel, array_rows: int = 14,
                    array_cols: int = 12) -> dict[int, int]:
    """MAC-array cycles per dot layer (the comparison baseline)."""
    model.validate()
    shape = model.input_shape()
    out: dict[int, int] = {}
    for idx, layer in enumerate(model.layers):
        if layer.kind in DOT_KINDS:
            patches, kernels, depth = _dot_geometry(layer, shape)
            out[idx] = systolic_cycles(patches, kernels, depth,
                                       array_rows=array_rows,
                                       array_cols=array_cols)
        shape = layer_output_shape(layer, shape)
    return out


# backwards-friendly aliases used by the demo scripts
maxpool2d = maxpool
avgpool2d = avgpool
