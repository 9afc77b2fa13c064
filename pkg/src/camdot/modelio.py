"""Binary containers for models (DCAM) and datasets (DCDS).

Both formats are little-endian with f32 tensor payloads, designed so a
trainer in any language can emit them with nothing but a byte writer.

Model file::

    'DCAM' | u16 version=1 | u16 layer_count | layer records...

    record:  u8 kind | u8 flags | payload
    kinds:   1 conv2d  2 linear  3 relu  4 maxpool  5 avgpool
             6 batchnorm  7 flatten
    flags:   bit0 has_bias, bit1 relu_after (dot layers only; others 0)

    conv2d:  u32 in_channels, in_h, in_w, out_channels, kernel_h, kernel_w,
             stride, padding | f32 weights[out_channels * in_channels*kh*kw]
             | f32 bias[out_channels] if bit0
    linear:  u32 in_features, out_features | f32 weights[out*in]
             | f32 bias[out] if bit0
    pools:   u32 pool_h, pool_w, stride, padding
    batchnorm: u32 channels | f32 gamma, beta, running_mean, running_var
             (channels each) | f32 eps
    relu, flatten: no payload

Dataset file::

    'DCDS' | u16 version=1 | u32 count | u32 channels, height, width
    | u16 num_classes | f32 data[count*C*H*W] | u16 labels[count]

Every malformed input raises a :class:`FormatError` subclass carrying the
byte offset of the problem; parsing never throws anything else and never
allocates unbounded memory (declared sizes are checked against both a cap
and the remaining bytes first). Valid files round-trip byte-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netexec import LayerDescriptor, NetworkError, NetworkModel, layer_output_shape

__all__ = [
    "BadMagicError",
    "Dataset",
    "FormatError",
    "ShapeError",
    "TruncationError",
    "VersionError",
    "load_dataset",
    "load_model",
    "parse_dataset",
    "parse_model",
    "serialize_dataset",
    "serialize_model",
    "write_dataset",
    "write_model",
]

MODEL_MAGIC = b"DCAM"
DATASET_MAGIC = b"DCDS"
FORMAT_VERSION = 1

_KIND_TO_TAG = {
    "conv2d": 1, "linear": 2, "relu": 3, "maxpool": 4, "avgpool": 5,
    "batchnorm": 6, "flatten": 7,
}
_TAG_TO_KIND = {v: k for k, v in _KIND_TO_TAG.items()}

_FLAG_BIAS = 0x01
_FLAG_RELU_AFTER = 0x02

_DIM_CAP = 1 << 16          # any single declared dimension
_MODEL_BLOB_CAP = 1 << 24   # elements per tensor blob
_DATASET_ELEM_CAP = 1 << 26  # total dataset elements


class FormatError(ValueError):
    """Base for all container violations; carries the byte offset."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncationError(FormatError):
    pass


class ShapeError(FormatError):
    pass


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if count < 0 or self.pos + count > len(self.data):
            raise TruncationError(f"file ends inside {what}", self.pos)
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        raw = self.take(2, what)
        return int.from_bytes(raw, "little")

    def u32(self, what: str) -> int:
        raw = self.take(4, what)
        return int.from_bytes(raw, "little")

    def f32s(self, count: int, what: str) -> np.ndarray:
        if count > _MODEL_BLOB_CAP:
            raise ShapeError(f"{what} declares {count} elements", self.pos)
        start = self.pos
        raw = self.take(4 * count, what)
        arr = np.frombuffer(raw, dtype="<f4", count=count).copy()
        if not np.isfinite(arr).all():
            raise ShapeError(f"{what} contains non-finite values", start)
        return arr

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{len(self.data) - self.pos} trailing bytes after payload",
                self.pos,
            )


def _check_dim(value: int, what: str, offset: int, minimum: int = 1) -> int:
    if not minimum <= value <= _DIM_CAP:
        raise ShapeError(f"{what} = {value} out of range", offset)
    return value


# ---------------------------------------------------------------------------
# model parse / serialize
# ---------------------------------------------------------------------------

def _parse_layer(r: _Reader) -> LayerDescriptor:
    record_start = r.pos
    tag = r.u8("layer kind")
    if tag not in _TAG_TO_KIND:
        raise FormatError(f"unknown layer kind tag {tag}", record_start)
    kind = _TAG_TO_KIND[tag]
    flags_off = r.pos
    flags = r.u8("layer flags")
    is_dot = kind in ("conv2d", "linear")
    allowed = (_FLAG_BIAS | _FLAG_RELU_AFTER) if is_dot else 0
    if flags & ~allowed:
        raise FormatError(f"invalid flags 0x{flags:02x} for {kind}", flags_off)
    has_bias = bool(flags & _FLAG_BIAS)
    relu_after = bool(flags & _FLAG_RELU_AFTER)

    if kind == "conv2d":
        off = r.pos
        c_in = _check_dim(r.u32("in_channels"), "in_channels", off)
        in_h = _check_dim(r.u32("in_h"), "in_h", off)
        in_w = _check_dim(r.u32("in_w"), "in_w", off)
        k_out = _check_dim(r.u32("out_channels"), "out_channels", off)
        kh = _check_dim(r.u32("kernel_h"), "kernel_h", off)
        kw = _check_dim(r.u32("kernel_w"), "kernel_w", off)
        stride = _check_dim(r.u32("stride"), "stride", off)
        padding = _check_dim(r.u32("padding"), "padding", off, minimum=0)
        depth = c_in * kh * kw
        if k_out * depth > _MODEL_BLOB_CAP:
            raise ShapeError("conv2d weight blob too large", off)
        weights = r.f32s(k_out * depth, "conv2d weights").reshape(k_out, depth)
        bias = r.f32s(k_out, "conv2d bias") if has_bias else None
        layer = LayerDescriptor(
            kind="conv2d", in_channels=c_in, in_h=in_h, in_w=in_w,
            out_channels=k_out, kernel_h=kh, kernel_w=kw, stride=stride,
            padding=padding, weights=weights, bias=bias, relu_after=relu_after)
    elif kind == "linear":
        off = r.pos
        f_in = _check_dim(r.u32("in_features"), "in_features", off)
        f_out = _check_dim(r.u32("out_features"), "out_features", off)
        if f_in * f_out > _MODEL_BLOB_CAP:
            raise ShapeError("linear weight blob too large", off)
        weights = r.f32s(f_in * f_out, "linear weights").reshape(f_out, f_in)
        bias = r.f32s(f_out, "linear bias") if has_bias else None
        layer = LayerDescriptor(kind="linear", in_features=f_in,
                                out_features=f_out, weights=weights,
                                bias=bias, relu_after=relu_after)
    elif kind in ("maxpool", "avgpool"):
        off = r.pos
        ph = _check_dim(r.u32("pool_h"), "pool_h", off)
        pw = _check_dim(r.u32("pool_w"), "pool_w", off)
        stride = _check_dim(r.u32("stride"), "stride", off)
        padding = _check_dim(r.u32("padding"), "padding", off, minimum=0)
        layer = LayerDescriptor(kind=kind, pool_h=ph, pool_w=pw,
                                stride=stride, padding=padding)
    elif kind == "batchnorm":
        off = r.pos
        channels = _check_dim(r.u32("channels"), "channels", off)
        gamma = r.f32s(channels, "batchnorm gamma")
        beta = r.f32s(channels, "batchnorm beta")
        mean = r.f32s(channels, "batchnorm running_mean")
        var_off = r.pos
        var = r.f32s(channels, "batchnorm running_var")
        if np.any(var < 0):
            raise ShapeError("negative running variance", var_off)
        eps_off = r.pos
        eps = float(r.f32s(1, "batchnorm eps")[0])
        if eps <= 0:
            raise ShapeError("eps must be positive", eps_off)
        layer = LayerDescriptor(kind="batchnorm", channels=channels,
                                gamma=gamma, beta=beta, running_mean=mean,
                                running_var=var, eps=eps)
    else:   # relu, flatten
        layer = LayerDescriptor(kind=kind)

    try:
        layer.validate()
    except NetworkError as exc:
        raise ShapeError(str(exc), record_start) from exc
    return layer


def parse_model(data: bytes) -> NetworkModel:
    r = _Reader(bytes(data))
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise BadMagicError(f"expected {MODEL_MAGIC!r}, found {magic!r}", 0)
    version_off = r.pos
    version = r.u16("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported model version {version}", version_off)
    count_off = r.pos
    count = r.u16("layer count")
    if count < 1:
        raise ShapeError("model must contain at least one layer", count_off)
    layers = []
    offsets = []
    for _ in range(count):
        offsets.append(r.pos)
        layers.append(_parse_layer(r))
    r.done()

    model = NetworkModel(layers=layers)
    # chain shape check, blamed on the record that breaks it
    try:
        shape = model.input_shape()
    except NetworkError as exc:
        raise ShapeError(str(exc), offsets[0]) from exc
    for idx, layer in enumerate(layers):
        try:
            shape = layer_output_shape(layer, shape)
        except NetworkError as exc:
            raise ShapeError(f"layer {idx}: {exc}", offsets[idx]) from exc
    return model


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def serialize_model(model: NetworkModel) -> bytes:
    model.validate()
    if not 1 <= len(model.layers) <= 0xFFFF:
        raise NetworkError("layer count does not fit the header")
    parts = [MODEL_MAGIC,
             FORMAT_VERSION.to_bytes(2, "little"),
             len(model.layers).to_bytes(2, "little")]
    for layer in model.layers:
        tag = _KIND_TO_TAG[layer.kind]
        flags = 0
        if layer.kind in ("conv2d", "linear"):
            if layer.bias is not None:
                flags |= _FLAG_BIAS
            if layer.relu_after:
                flags |= _FLAG_RELU_AFTER
        parts.append(bytes((tag, flags)))
        if layer.kind == "conv2d":
            for v in (layer.in_channels, layer.in_h, layer.in_w,
                      layer.out_channels, layer.kernel_h, layer.kernel_w,
                      layer.stride, layer.padding):
                parts.append(v.to_bytes(4, "little"))
            parts.append(_f32_bytes(layer.weights))
            if layer.bias is not None:
                parts.append(_f32_bytes(layer.bias))
        elif layer.kind == "linear":
            parts.append(layer.in_features.to_bytes(4, "little"))
            parts.append(layer.out_features.to_bytes(4, "little"))
            parts.append(_f32_bytes(layer.weights))
            if layer.bias is not None:
                parts.append(_f32_bytes(layer.bias))
        elif layer.kind in ("maxpool", "avgpool"):
            for v in (layer.pool_h, layer.pool_w, layer.stride, layer.padding):
                parts.append(v.to_bytes(4, "little"))
        elif layer.kind == "batchnorm":
            parts.append(layer.channels.to_bytes(4, "little"))
            for arr in (layer.gamma, layer.beta, layer.running_mean,
                        layer.running_var):
                parts.append(_f32_bytes(arr))
            parts.append(_f32_bytes(np.asarray([layer.eps])))
    return b"".join(parts)


def load_model(path: str) -> NetworkModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def write_model(model: NetworkModel, path: str) -> None:
    data = serialize_model(model)
    with open(path, "wb") as fh:
        fh.write(data)


# ---------------------------------------------------------------------------
# dataset parse / serialize
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Images as (count, C, H, W) float32 plus integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise NetworkError("images must be (count, C, H, W)")
        if self.labels.shape != (self.images.shape[0],):
            raise NetworkError("one label per image required")
        if self.num_classes < 1 or self.num_classes > 0xFFFF:
            raise NetworkError("num_classes must fit u16")
        if self.images.shape[0] and (
                self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise NetworkError("labels out of range for num_classes")

    def __len__(self) -> int:
        return int(self.images.shape[0])


def parse_dataset(data: bytes) -> Dataset:
    r = _Reader(bytes(data))
    magic = r.take(4, "magic")
    if magic != DATASET_MAGIC:
        raise BadMagicError(f"expected {DATASET_MAGIC!r}, found {magic!r}", 0)
    version_off = r.pos
    version = r.u16("version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported dataset version {version}", version_off)
    hdr = r.pos
    count = r.u32("sample count")
    c = _check_dim(r.u32("channels"), "channels", hdr)
    h = _check_dim(r.u32("height"), "height", hdr)
    w = _check_dim(r.u32("width"), "width", hdr)
    classes_off = r.pos
    num_classes = r.u16("num_classes")
    if num_classes < 1:
        raise ShapeError("num_classes must be positive", classes_off)
    total = count * c * h * w
    if total > _DATASET_ELEM_CAP:
        raise ShapeError(f"dataset declares {total} elements", hdr)
    data_off = r.pos
    if count:
        flat = np.frombuffer(r.take(4 * total, "image data"), dtype="<f4",
                             count=total).copy()
        if not np.isfinite(flat).all():
            raise ShapeError("image data contains non-finite values", data_off)
        images = flat.reshape(count, c, h, w)
    else:
        images = np.zeros((0, c, h, w), dtype=np.float32)
    labels_off = r.pos
    labels = np.frombuffer(r.take(2 * count, "labels"), dtype="<u2",
                           count=count).astype(np.int64)
    r.done()
    if count and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise ShapeError(
            f"label {int(labels[bad])} >= num_classes {num_classes}",
            labels_off + 2 * bad,
        )
    return Dataset(images=images, labels=labels, num_classes=num_classes)


def serialize_dataset(dataset: Dataset) -> bytes:
    count, c, h, w = dataset.images.shape
    if count * c * h * w > _DATASET_ELEM_CAP:
        raise NetworkError("dataset too large for the container")
    for dim, name in ((c, "channels"), (h, "height"), (w, "width")):
        if not 1 <= dim <= _DIM_CAP:
            raise NetworkError(f"{name} out of range")
    if not np.isfinite(dataset.images).all():
        raise NetworkError("image data contains non-finite values")
    parts = [DATASET_MAGIC,
             FORMAT_VERSION.to_bytes(2, "little"),
             count.to_bytes(4, "little"),
             c.to_bytes(4, "little"),
             h.to_bytes(4, "little"),
             w.to_bytes(4, "little"),
             dataset.num_classes.to_bytes(2, "little"),
             _f32_bytes(dataset.images),
             np.ascontiguousarray(dataset.labels, dtype="<u2").tobytes()]
    return b"".join(parts)


def load_dataset(path: str, limit: int | None = None) -> Dataset:
    """Parse and validate the whole file, then keep the first ``limit``
    samples (limit=0 gives an empty dataset)."""
    with open(path, "rb") as fh:
        ds = parse_dataset(fh.read())
    if limit is None:
        return ds
    if limit < 0:
        raise NetworkError("limit must be non-negative")
    return Dataset(images=ds.images[:limit], labels=ds.labels[:limit],
                   num_classes=ds.num_classes)


def write_dataset(dataset: Dataset, path: str) -> None:
    data = serialize_dataset(dataset)
    with open(path, "wb") as fh:
        fh.write(data)
