import { describe, expect, it } from 'vitest';
import {
  approxCosine, deriveSeed, gaussianStream, hammingDistance, mf8Decode,
  mf8Encode, mf8RoundTrip, MF8_MAX, packSignBits, popcount32,
  projectionEntries,
} from '../src/hashing.js';

// Pinned against the consumer's reference implementation. The integer pins
// must match exactly; the gaussian pins allow libm's last-ulp wiggle.

describe('seed derivation', () => {
  it('matches the pinned child seeds', () => {
    expect(deriveSeed(7n, 0)).toBe(2327440875496891296n);
    expect(deriveSeed(7n, 6)).toBe(7912535589198218140n);
  });

  it('children of one base differ from each other', () => {
    const seen = new Set<bigint>();
    for (let i = 0; i < 64; i++) seen.add(deriveSeed(7n, i));
    expect(seen.size).toBe(64);
  });
});

describe('gaussian stream', () => {
  it('matches pinned draws for a derived seed', () => {
    const g = gaussianStream(deriveSeed(7n, 2), 5);
    const want = [
      -1.1091153043786521, 0.1441496073882208, -0.480559628567234,
      -0.4519148132869594, 0.1953299033864848,
    ];
    for (let i = 0; i < 5; i++) expect(g[i]).toBeCloseTo(want[i], 12);
  });

  it('projection entries are the stream in row-major (dim, k) order', () => {
    const pm = projectionEntries(deriveSeed(7n, 0), 25, 64);
    expect(pm.length).toBe(25 * 64);
    expect(pm[0]).toBeCloseTo(-0.04077514109025976, 12);
    expect(pm[3 * 64 + 17]).toBeCloseTo(-1.3922653987909928, 12);
    expect(pm[24 * 64 + 63]).toBeCloseTo(-0.7862699706200843, 12);
  });

  it('is a pure function of seed and count', () => {
    // radii come from the first half of the word block and angles from the
    // second, so different counts give different streams by design; the same
    // count must reproduce exactly
    const a = gaussianStream(99n, 20);
    const b = gaussianStream(99n, 20);
    for (let i = 0; i < 20; i++) expect(a[i]).toBe(b[i]);
    expect(gaussianStream(99n, 8)[4]).not.toBe(a[4]);
  });

  it('draws look standard normal in bulk', () => {
    const g = gaussianStream(5n, 20000);
    let sum = 0;
    let sq = 0;
    for (const v of g) { sum += v; sq += v * v; }
    expect(sum / g.length).toBeCloseTo(0, 1);
    expect(sq / g.length).toBeCloseTo(1, 1);
  });
});

describe('minifloat norms', () => {
  it('matches pinned codes and round trips', () => {
    expect(mf8Encode(0.0373)).toBe(18);
    expect(mf8RoundTrip(0.0373)).toBe(0.0390625);
    expect(mf8Encode(13.37)).toBe(85);
    expect(mf8RoundTrip(13.37)).toBe(13.0);
    expect(mf8RoundTrip(1e9)).toBe(MF8_MAX);
    expect(mf8RoundTrip(0)).toBe(0);
  });

  it('decode(encode(x)) is within half a mantissa step in the normal range', () => {
    for (let i = 0; i <= 2000; i++) {
      const x = 0.02 + (i / 2000) * 400;
      const back = mf8RoundTrip(x);
      expect(Math.abs(back - x) / x).toBeLessThan(0.07);
    }
  });

  it('every code decodes and re-encodes to itself up to sign of zero', () => {
    for (let raw = 0; raw < 256; raw++) {
      const v = mf8Decode(raw);
      expect(mf8Decode(mf8Encode(v))).toBe(v);
    }
  });
});

describe('piecewise cosine', () => {
  it('matches pinned segment values', () => {
    expect(approxCosine(0.3)).toBe(0.9045070341448628);
    expect(approxCosine(1.2)).toBe(0.3580000000000001);
    expect(approxCosine(2.5)).toBe(-0.7957747154594768);
  });

  it('stays within 0.17 of the true cosine on a dense grid', () => {
    for (let i = 0; i <= 5000; i++) {
      const t = (i / 5000) * Math.PI;
      expect(Math.abs(approxCosine(t) - Math.cos(t))).toBeLessThan(0.17);
    }
  });

  it('rejects angles outside [0, pi]', () => {
    expect(() => approxCosine(-0.01)).toThrow();
    expect(() => approxCosine(Math.PI + 0.01)).toThrow();
    expect(() => approxCosine(Number.NaN)).toThrow();
  });
});

describe('packed sign hashes', () => {
  it('popcount32 counts bits', () => {
    expect(popcount32(0)).toBe(0);
    expect(popcount32(0xffffffff)).toBe(32);
    expect(popcount32(0x80000001)).toBe(2);
    let total = 0;
    for (let i = 0; i < 256; i++) total += popcount32(i);
    expect(total).toBe(1024); // 256 bytes hold 1024 set bits in aggregate
  });

  it('hamming distance between packed hashes counts sign disagreements', () => {
    const a = new Float64Array([1, -2, 0, 3, -4, 5, -6, 7]);
    const b = new Float64Array([1, 2, -1, 3, 4, -5, -6, 7]);
    const wa = new Uint32Array(1);
    const wb = new Uint32Array(1);
    packSignBits(a, wa);
    packSignBits(b, wb);
    // disagreements at indices 1, 2, 4, 5
    expect(hammingDistance(wa, wb)).toBe(4);
    expect(hammingDistance(wa, wa)).toBe(0);
  });

  it('zero projects to an all-ones hash (zero counts as non-negative)', () => {
    const words = new Uint32Array(2);
    packSignBits(new Float64Array(64), words);
    expect(words[0]).toBe(0xffffffff);
    expect(words[1]).toBe(0xffffffff);
  });
});
