// Dense f64 forward/backward primitives for a small CNN.
//
// Layout conventions shared with the consumer of the exported files:
//   activations  (C,H,W) row-major: idx = (c*H + y)*W + x
//   conv weights (K, C*kh*kw) with patch index d = c*kh*kw + ky*kw + kx
//   linear weights (outFeatures, inFeatures) row-major
//   flatten is plain C-order on (C,H,W)

export function convOut(size: number, k: number, stride: number, pad: number): number {
  return Math.floor((size + 2 * pad - k) / stride) + 1;
}

export function convForward(
  x: Float64Array, C: number, H: number, W: number,
  w: Float64Array, b: Float64Array,
  K: number, kh: number, kw: number, stride: number, pad: number,
  out: Float64Array,
): void {
  const OH = convOut(H, kh, stride, pad);
  const OW = convOut(W, kw, stride, pad);
  const patch = C * kh * kw;
  for (let k = 0; k < K; k++) {
    const wRow = k * patch;
    for (let oy = 0; oy < OH; oy++) {
      for (let ox = 0; ox < OW; ox++) {
        let acc = b[k];
        for (let c = 0; c < C; c++) {
          for (let ky = 0; ky < kh; ky++) {
            const iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            const xRow = (c * H + iy) * W;
            const wBase = wRow + c * kh * kw + ky * kw;
            for (let kx = 0; kx < kw; kx++) {
              const ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              acc += x[xRow + ix] * w[wBase + kx];
            }
          }
        }
        out[(k * OH + oy) * OW + ox] = acc;
      }
    }
  }
}

/** Accumulates into dW/dB; overwrites dX (pass null to skip input grads). */
export function convBackward(
  x: Float64Array, C: number, H: number, W: number,
  w: Float64Array,
  K: number, kh: number, kw: number, stride: number, pad: number,
  dOut: Float64Array,
  dW: Float64Array, dB: Float64Array, dX: Float64Array | null,
): void {
  const OH = convOut(H, kh, stride, pad);
  const OW = convOut(W, kw, stride, pad);
  if (dX) dX.fill(0);
  for (let k = 0; k < K; k++) {
    const wRow = k * C * kh * kw;
    for (let oy = 0; oy < OH; oy++) {
      for (let ox = 0; ox < OW; ox++) {
        const g = dOut[(k * OH + oy) * OW + ox];
        if (g === 0) continue;
        dB[k] += g;
        for (let c = 0; c < C; c++) {
          for (let ky = 0; ky < kh; ky++) {
            const iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            const xRow = (c * H + iy) * W;
            const wBase = wRow + c * kh * kw + ky * kw;
            for (let kx = 0; kx < kw; kx++) {
              const ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              dW[wBase + kx] += g * x[xRow + ix];
              if (dX) dX[xRow + ix] += g * w[wBase + kx];
            }
          }
        }
      }
    }
  }
}

export function reluForward(x: Float64Array, out: Float64Array): void {
  for (let i = 0; i < x.length; i++) out[i] = x[i] > 0 ? x[i] : 0;
}

/** dX from dOut using the post-relu activation as the mask. */
export function reluBackward(out: Float64Array, dOut: Float64Array, dX: Float64Array): void {
  for (let i = 0; i < out.length; i++) dX[i] = out[i] > 0 ? dOut[i] : 0;
}

/** 2x2 stride-2 max pool; argmax stores the winning input index per output. */
export function maxpoolForward(
  x: Float64Array, C: number, H: number, W: number,
  out: Float64Array, argmax: Int32Array,
): void {
  const OH = H >> 1;
  const OW = W >> 1;
  for (let c = 0; c < C; c++) {
    for (let oy = 0; oy < OH; oy++) {
      for (let ox = 0; ox < OW; ox++) {
        let best = -Infinity;
        let bestIdx = -1;
        for (let dy = 0; dy < 2; dy++) {
          for (let dx = 0; dx < 2; dx++) {
            const idx = (c * H + oy * 2 + dy) * W + ox * 2 + dx;
            if (x[idx] > best) {
              best = x[idx];
              bestIdx = idx;
            }
          }
        }
        const o = (c * OH + oy) * OW + ox;
        out[o] = best;
        argmax[o] = bestIdx;
      }
    }
  }
}

export function maxpoolBackward(dOut: Float64Array, argmax: Int32Array, dX: Float64Array): void {
  dX.fill(0);
  for (let o = 0; o < dOut.length; o++) dX[argmax[o]] += dOut[o];
}

export function linearForward(
  x: Float64Array, w: Float64Array, b: Float64Array,
  outF: number, inF: number, out: Float64Array,
): void {
  for (let o = 0; o < outF; o++) {
    let acc = b[o];
    const row = o * inF;
    for (let i = 0; i < inF; i++) acc += w[row + i] * x[i];
    out[o] = acc;
  }
}

/** Accumulates into dW/dB; overwrites dX (pass null to skip). */
export function linearBackward(
  x: Float64Array, w: Float64Array,
  outF: number, inF: number,
  dOut: Float64Array,
  dW: Float64Array, dB: Float64Array, dX: Float64Array | null,
): void {
  if (dX) dX.fill(0);
  for (let o = 0; o < outF; o++) {
    const g = dOut[o];
    dB[o] += g;
    const row = o * inF;
    for (let i = 0; i < inF; i++) {
      dW[row + i] += g * x[i];
      if (dX) dX[i] += g * w[row + i];
    }
  }
}

/** Cross-entropy on softmax(logits); writes dLogits, returns the loss.
 *  With smoothing the target mass is (1-s) on the label plus s/n everywhere,
 *  while the reported loss stays the plain label NLL. */
export function softmaxXent(
  logits: Float64Array, label: number, dLogits: Float64Array, smooth = 0,
): number {
  let max = -Infinity;
  for (let i = 0; i < logits.length; i++) if (logits[i] > max) max = logits[i];
  let sum = 0;
  for (let i = 0; i < logits.length; i++) sum += Math.exp(logits[i] - max);
  const logSum = Math.log(sum) + max;
  const off = smooth / logits.length;
  for (let i = 0; i < logits.length; i++) {
    dLogits[i] = Math.exp(logits[i] - logSum) - off - (i === label ? 1 - smooth : 0);
  }
  return logSum - logits[label];
}

export function argmax(v: Float64Array): number {
  let best = 0;
  for (let i = 1; i < v.length; i++) if (v[i] > v[best]) best = i;
  return best;
}
