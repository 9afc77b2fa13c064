// Sign-random-projection hashing with quantized norms, matching the numerics
// the exported files are consumed under: counter-based splitmix64 feeding
// Box-Muller for the projection entries, an 8-bit minifloat (1-4-3, bias 7)
// for vector norms, and a two-segment piecewise-linear cosine. Hash-aware
// fine-tuning trains straight through these exact values, so every constant
// here is part of the contract, not a tunable.

const MASK64 = 0xffffffffffffffffn;
const GAMMA = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

function mix64(z: bigint): bigint {
  z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
  return z ^ (z >> 31n);
}

/** Word i of the seed's stream; any prefix can be produced independently. */
export function splitmix64(seed: bigint, i: number): bigint {
  return mix64((seed + BigInt(i + 1) * GAMMA) & MASK64);
}

/** Child seed for stream `index`; multipliers differ from the stream gamma. */
export function deriveSeed(baseSeed: bigint, index: number): bigint {
  let z = ((baseSeed & MASK64) * 0x632be59bd9b4e019n) & MASK64;
  z ^= ((BigInt(index) + 1n) * 0xc2b2ae3d27d4eb4fn) & MASK64;
  return mix64(z);
}

/** `count` standard normal draws: radii from the first half of a word block,
 *  angles from the second, interleaved cos/sin. */
export function gaussianStream(seed: bigint, count: number): Float64Array {
  const pairs = (count + 1) >> 1;
  const out = new Float64Array(2 * pairs);
  for (let p = 0; p < pairs; p++) {
    // (word >> 11) keeps 53 bits; +1 keeps u1 in (0, 1] so log stays finite
    const u1 = (Number(splitmix64(seed, p) >> 11n) + 1) * 2 ** -53;
    const u2 = (Number(splitmix64(seed, pairs + p) >> 11n) + 1) * 2 ** -53;
    const radius = Math.sqrt(-2 * Math.log(u1));
    const angle = 2 * Math.PI * u2;
    out[2 * p] = radius * Math.cos(angle);
    out[2 * p + 1] = radius * Math.sin(angle);
  }
  return out.subarray(0, count) as Float64Array;
}

/** Gaussian projection entries, row-major (dim, hashLength). */
export function projectionEntries(seed: bigint, dim: number, hashLength: number): Float64Array {
  return gaussianStream(seed, dim * hashLength);
}

// --- 8-bit minifloat: 1 sign / 4 exponent / 3 mantissa, bias 7, no inf ---

export const MF8_MAX = 480;

const MF8_DECODE = new Float64Array(256);
for (let raw = 0; raw < 256; raw++) {
  const sign = raw & 0x80 ? -1 : 1;
  const exp = (raw >> 3) & 0xf;
  const mant = raw & 0x7;
  MF8_DECODE[raw] = exp === 0
    ? sign * (mant / 8) * 2 ** -6
    : sign * (1 + mant / 8) * 2 ** (exp - 7);
}

export function mf8Decode(raw: number): number {
  return MF8_DECODE[raw & 0xff];
}

/** Round-to-nearest, ties to the even raw code; magnitudes saturate at 480. */
export function mf8Encode(value: number): number {
  if (Number.isNaN(value)) throw new Error('cannot encode NaN');
  const sign = value < 0 || Object.is(value, -0) ? 0x80 : 0;
  const mag = Math.min(Math.abs(value), MF8_MAX);
  // first positive code whose value is >= mag, clamped to [1, 127]
  let lo = 0;
  let hi = 127;
  while (lo < hi) {
    const mid = (lo + hi) >> 1;
    if (MF8_DECODE[mid] >= mag) hi = mid;
    else lo = mid + 1;
  }
  let up = Math.min(Math.max(lo, 1), 127);
  const down = up - 1;
  const dLo = mag - MF8_DECODE[down];
  const dHi = MF8_DECODE[up] - mag;
  const pickHi = dLo > dHi || (dLo === dHi && up % 2 === 0);
  return (pickHi ? up : down) | sign;
}

/** The value a norm comes back as after its trip through one byte. */
export function mf8RoundTrip(value: number): number {
  return MF8_DECODE[mf8Encode(value)];
}

// --- piecewise-linear cosine on [0, pi] ---

const HALF_PI = Math.PI / 2;
const THIRD_PI = Math.PI / 3;

/** Two segments on [0, pi/2], reflected as -f(pi - theta) above. The segment
 *  junction is deliberately discontinuous; worst-case error stays below 0.17. */
export function approxCosine(theta: number): number {
  if (!(theta >= 0 && theta <= Math.PI)) {
    throw new Error('theta must lie in [0, pi]');
  }
  if (theta > HALF_PI) return -approxCosine(Math.PI - theta);
  if (theta > THIRD_PI) return -0.96 * theta + 1.51;
  return 1 - theta / Math.PI;
}

// --- sign hashes packed 32 bits per word ---

export function popcount32(x: number): number {
  x -= (x >>> 1) & 0x55555555;
  x = (x & 0x33333333) + ((x >>> 2) & 0x33333333);
  x = (x + (x >>> 4)) & 0x0f0f0f0f;
  return Math.imul(x, 0x01010101) >>> 24;
}

/** Packs sign bits of `proj` (bit j set when proj[j] >= 0) into `words`. */
export function packSignBits(proj: Float64Array, words: Uint32Array): void {
  words.fill(0);
  for (let j = 0; j < proj.length; j++) {
    if (proj[j] >= 0) words[j >> 5] |= 1 << (j & 31);
  }
}

export function hammingDistance(a: Uint32Array, b: Uint32Array): number {
  let hd = 0;
  for (let w = 0; w < a.length; w++) hd += popcount32(a[w] ^ b[w]);
  return hd;
}
