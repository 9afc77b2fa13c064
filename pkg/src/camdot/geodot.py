"""Geometric dot products from sign-random-projection hashes.

The decomposition implemented here writes a dot product as
``x . y = |x| * |y| * cos(theta)`` and estimates ``theta`` from the Hamming
distance between sign hashes: project both vectors through a shared Gaussian
matrix, keep only the signs, and the fraction of disagreeing bits converges
to ``theta / pi``. Norms are stored in an 8-bit minifloat so a vector's whole
identity fits in ``hash_length + 8`` bits. The cosine itself is evaluated
with a hardware-friendly piecewise-linear curve (see :func:`approx_cosine`).

Everything is deterministic: projection matrices come from a counter-based
splitmix64 stream feeding Box-Muller, so the same seed reproduces the same
matrix on every run. Within one process the streams are bit-identical;
across platforms libm's log/sqrt/cos/sin may differ in the last ulp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MF8_MAX",
    "Context",
    "HashBits",
    "ProjectionMatrix",
    "algebraic_dot",
    "approx_cosine",
    "approx_cosine_array",
    "approx_dot",
    "approx_dot_exact_cos",
    "build_context",
    "build_context_batch",
    "derive_seed",
    "estimate_angle",
    "gaussian_stream",
    "hamming_distance",
    "l2_norm",
    "mf8_decode",
    "mf8_decode_array",
    "mf8_encode",
    "mf8_encode_array",
    "sign_hash",
    "splitmix64",
]


# ---------------------------------------------------------------------------
# deterministic random stream
# ---------------------------------------------------------------------------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """Return ``count`` pseudo-random uint64 words for ``seed``.

    Counter-based form of splitmix64: word ``i`` is the finalizer applied to
    ``seed + (i + 1) * gamma``, so any prefix of the stream can be produced
    in parallel and the mapping is identical across platforms.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, stream_index: int) -> int:
    """Derive an independent child seed from ``base_seed``.

    Used for per-layer projection matrices. The multipliers differ from the
    stream gamma above so a child stream cannot alias a window of its
    parent's counter sequence. Pure-int arithmetic, wraps mod 2**64.
    """
    if stream_index < 0:
        raise ValueError("stream_index must be non-negative")
    z = ((base_seed & _MASK64) * 0x632BE59BD9B4E019) & _MASK64
    z ^= ((stream_index + 1) * 0xC2B2AE3D27D4EB4F) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    """``count`` standard normal float64 draws via Box-Muller on splitmix64."""
    if count < 0:
        raise ValueError("count must be non-negative")
    pairs = (count + 1) // 2
    words = splitmix64(seed, 2 * pairs)
    # (word >> 11) has 53 significant bits; +1 keeps u1 in (0, 1] so log(u1)
    # is finite, u2 in (0, 1] is fine for the angle.
    u1 = ((words[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = ((words[pairs:] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


# ---------------------------------------------------------------------------
# 8-bit minifloat (1 sign, 4 exponent, 3 mantissa, bias 7)
# ---------------------------------------------------------------------------

def _build_decode_table() -> np.ndarray:
    table = np.empty(256, dtype=np.float64)
    for raw in range(256):
        sign = -1.0 if raw & 0x80 else 1.0
        exp = (raw >> 3) & 0xF
        mant = raw & 0x7
        if exp == 0:
            value = sign * (mant / 8.0) * 2.0**-6      # subnormal
        else:
            value = sign * (1.0 + mant / 8.0) * 2.0 ** (exp - 7)
        table[raw] = value
    return table


_MF8_DECODE = _build_decode_table()
_MF8_DECODE.setflags(write=False)
_MF8_POS = _MF8_DECODE[:128]                           # ascending by raw code
MF8_MAX = float(_MF8_POS[-1])                          # 480.0, no inf encoding


def mf8_decode(raw: int) -> float:
    """Decode one minifloat byte to float64."""
    if not 0 <= raw <= 255:
        raise ValueError(f"minifloat code out of range: {raw}")
    return float(_MF8_DECODE[raw])


def mf8_decode_array(raw: np.ndarray) -> np.ndarray:
    return _MF8_DECODE[np.asarray(raw, dtype=np.uint8)]


def mf8_encode_array(values: np.ndarray) -> np.ndarray:
    """Encode float values to minifloat bytes, round-to-nearest-even.

    Ties between two adjacent representable values pick the one with the even
    raw code (the same convention IEEE 754 uses at mantissa granularity).
    Magnitudes above 480 saturate to 480: the format has no infinities.
    NaN is rejected.
    """
    v = np.asarray(values, dtype=np.float64)
    if np.isnan(v).any():
        raise ValueError("cannot encode NaN")
    sign = np.signbit(v)
    mag = np.minimum(np.abs(v), MF8_MAX)
    hi = np.searchsorted(_MF8_POS, mag)                # first code with value >= mag
    hi = np.clip(hi, 1, 127)
    lo = hi - 1
    d_lo = mag - _MF8_POS[lo]
    d_hi = _MF8_POS[hi] - mag
    pick_hi = (d_lo > d_hi) | ((d_lo == d_hi) & (hi % 2 == 0))
    raw = np.where(pick_hi, hi, lo).astype(np.uint8)
    raw = raw | (sign.astype(np.uint8) << 7)
    return raw


def mf8_encode(value: float) -> int:
    return int(mf8_encode_array(np.asarray([value]))[0])


# ---------------------------------------------------------------------------
# projections and hashes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionMatrix:
    """Dense Gaussian projection, shape (input_dim, hash_length).

    ``generate`` is the canonical constructor; direct construction with
    arbitrary entries is allowed for tests and benchmarks.
    """

    seed: int
    input_dim: int
    hash_length: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.hash_length < 1:
            raise ValueError("projection dimensions must be positive")
        if self.entries.shape != (self.input_dim, self.hash_length):
            raise ValueError(
                f"entries shape {self.entries.shape} does not match "
                f"({self.input_dim}, {self.hash_length})"
            )

    @classmethod
    def generate(cls, seed: int, input_dim: int, hash_length: int) -> "ProjectionMatrix":
        draws = gaussian_stream(seed, input_dim * hash_length)
        entries = draws.reshape(input_dim, hash_length)
        entries.setflags(write=False)
        return cls(seed=seed, input_dim=input_dim, hash_length=hash_length, entries=entries)


@dataclass(frozen=True, eq=False)
class HashBits:
    """A sign hash: uint8 array of 0/1 values, one per projection column."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = self.bits
        if b.ndim != 1 or b.dtype != np.uint8:
            raise ValueError("bits must be a 1-d uint8 array")
        if b.size < 1:
            raise ValueError("hash must contain at least one bit")
        if not np.isin(b, (0, 1)).all():
            raise ValueError("bits must be 0 or 1")

    @property
    def hash_length(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HashBits):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())


@dataclass(frozen=True)
class Context:
    """Stored identity of a vector: minifloat norm byte + sign hash."""

    norm_code: int
    hash: HashBits

    def __post_init__(self) -> None:
        if not 0 <= self.norm_code <= 255:
            raise ValueError("norm_code must be one byte")
        if self.norm_code & 0x80:
            raise ValueError("norms are non-negative, sign bit must be clear")

    @property
    def norm(self) -> float:
        return mf8_decode(self.norm_code)


def algebraic_dot(x: np.ndarray, y: np.ndarray) -> float:
    """Exact float64 dot product (the reference the approximation chases)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("operands must be 1-d vectors of equal length")
    return float(np.dot(x, y))


def l2_norm(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("norm expects a 1-d vector")
    return float(np.sqrt(np.dot(x, x)))


def sign_hash(x: np.ndarray, projection: ProjectionMatrix) -> HashBits:
    """Hash a vector to sign bits; a projection of exactly 0 maps to bit 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (projection.input_dim,):
        raise ValueError(
            f"vector length {x.shape} does not match projection input dim "
            f"{projection.input_dim}"
        )
    bits = (x @ projection.entries >= 0.0).astype(np.uint8)
    return HashBits(bits=bits)


def hamming_distance(a: HashBits, b: HashBits) -> int:
    if a.hash_length != b.hash_length:
        raise ValueError("hash lengths differ")
    return int(np.count_nonzero(a.bits != b.bits))


def estimate_angle(distance: int, hash_length: int) -> float:
    """Angle estimate in radians: pi * distance / hash_length."""
    if hash_length < 1:
        raise ValueError("hash_length must be positive")
    if not 0 <= distance <= hash_length:
        raise ValueError("distance must lie in [0, hash_length]")
    return math.pi * distance / hash_length


_THIRD_PI = math.pi / 3.0
_HALF_PI = math.pi / 2.0


def approx_cosine(theta: float) -> float:
    """Piecewise-linear stand-in for cos on [0, pi].

    Two segments cover [0, pi/2]; the upper half reflects through
    ``-f(pi - theta)``. The segments do not meet at pi/3 (values 0.6667 and
    0.5047) and the second segment is 0.0021 at pi/2 instead of 0: both
    quirks are part of the curve's definition and are kept exactly, so the
    reflection identity holds on [0, pi/2) but not at the midpoint itself.
    Worst-case error against the true cosine stays below 0.17.
    """
    if not 0.0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    if theta > _HALF_PI:
        return -approx_cosine(math.pi - theta)
    if theta > _THIRD_PI:
        return -0.96 * theta + 1.51
    return 1.0 - theta / math.pi


def approx_cosine_array(theta: np.ndarray) -> np.ndarray:
    """Vector form of :func:`approx_cosine`; bit-identical to the scalar."""
    t = np.asarray(theta, dtype=np.float64)
    if t.size and (t.min() < 0.0 or t.max() > math.pi):
        raise ValueError("theta must lie in [0, pi]")
    reflected = t > _HALF_PI
    tr = np.where(reflected, math.pi - t, t)
    v = np.where(tr > _THIRD_PI, -0.96 * tr + 1.51, 1.0 - tr / math.pi)
    return np.where(reflected, -v, v)


# ---------------------------------------------------------------------------
# contexts and the approximate dot product
# ---------------------------------------------------------------------------

def build_context(x: np.ndarray, projection: ProjectionMatrix) -> Context:
    """Quantized norm + sign hash for one vector."""
    norm_code = int(mf8_encode(l2_norm(np.asarray(x, dtype=np.float64))))
    return Context(norm_code=norm_code, hash=sign_hash(x, projection))


def build_context_batch(
    vectors: np.ndarray, projection: ProjectionMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Contexts for the rows of ``vectors``: (norm codes, bit matrix).

    One matmul instead of a Python loop. BLAS may sum a matrix product in a
    different order than a single vector product, so agreement with
    :func:`build_context` is up to quantization boundaries; the executor
    always uses this path, keeping runs self-consistent.
    """
    m = np.asarray(vectors, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != projection.input_dim:
        raise ValueError("vectors must be (count, input_dim)")
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    codes = mf8_encode_array(norms)
    bits = (m @ projection.entries >= 0.0).astype(np.uint8)
    return codes, bits


def _finish_dot(cx: Context, cy: Context, cosine_value: float) -> float:
    nx = cx.norm
    ny = cy.norm
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return nx * ny * cosine_value


def approx_dot(cx: Context, cy: Context) -> float:
    """Approximate dot product of the vectors behind two contexts."""
    if cx.hash.hash_length != cy.hash.hash_length:
        raise ValueError("contexts use different hash lengths")
    theta = estimate_angle(hamming_distance(cx.hash, cy.hash), cx.hash.hash_length)
    return _finish_dot(cx, cy, approx_cosine(theta))


def approx_dot_exact_cos(cx: Context, cy: Context) -> float:
    """Same pipeline but with the true cosine, isolating the hash error."""
    if cx.hash.hash_length != cy.hash.hash_length:
        raise ValueError("contexts use different hash lengths")
    theta = estimate_angle(hamming_distance(cx.hash, cy.hash), cx.hash.hash_length)
    return _finish_dot(cx, cy, math.cos(theta))
