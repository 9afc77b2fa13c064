import {
  approxCosine, deriveSeed, mf8RoundTrip, packSignBits, popcount32,
  projectionEntries,
} from './hashing.js';
import { Rng } from './rng.js';
import {
  argmax, convBackward, convForward, convOut, linearBackward, linearForward,
  maxpoolBackward, maxpoolForward, reluBackward, reluForward, softmaxXent,
} from './tensor.js';

// LeNet-5 on 28x28 inputs:
//   conv1 1->6 5x5 pad 2, relu, 2x2 maxpool   -> 6x14x14
//   conv2 6->16 5x5 pad 0, relu, 2x2 maxpool  -> 16x5x5
//   fc1 400->120 relu, fc2 120->84 relu, fc3 84->10

export interface TrainConfig {
  samples: number;
  epochs: number;
  batchSize: number;
  lr: number;
  momentum: number;
  lrDecay: number;
  seed: number;
  /** Apply lrDecay once per this many epochs (default every epoch). */
  lrStepEvery?: number;
  /** L2 pull on weight tensors, skipped for biases (default 0). */
  weightDecay?: number;
  /** Soft targets: (1-s) on the label, s/10 elsewhere (default hard). */
  labelSmooth?: number;
  /** Cap on the global L2 norm of the averaged gradient (default none). */
  clipNorm?: number;
}

interface Buffers {
  x: Float64Array;
  a1: Float64Array; r1: Float64Array; p1: Float64Array; am1: Int32Array;
  a2: Float64Array; r2: Float64Array; p2: Float64Array; am2: Int32Array;
  f1: Float64Array; rf1: Float64Array;
  f2: Float64Array; rf2: Float64Array;
  logits: Float64Array;
  dLogits: Float64Array; dRf2: Float64Array; dF2: Float64Array;
  dRf1: Float64Array; dF1: Float64Array; dP2: Float64Array;
  dR2: Float64Array; dA2: Float64Array; dP1: Float64Array;
  dR1: Float64Array; dA1: Float64Array;
}

function buffers(): Buffers {
  return {
    x: new Float64Array(784),
    a1: new Float64Array(6 * 28 * 28), r1: new Float64Array(6 * 28 * 28),
    p1: new Float64Array(6 * 14 * 14), am1: new Int32Array(6 * 14 * 14),
    a2: new Float64Array(16 * 10 * 10), r2: new Float64Array(16 * 10 * 10),
    p2: new Float64Array(400), am2: new Int32Array(400),
    f1: new Float64Array(120), rf1: new Float64Array(120),
    f2: new Float64Array(84), rf2: new Float64Array(84),
    logits: new Float64Array(10),
    dLogits: new Float64Array(10), dRf2: new Float64Array(84),
    dF2: new Float64Array(84), dRf1: new Float64Array(120),
    dF1: new Float64Array(120), dP2: new Float64Array(400),
    dR2: new Float64Array(1600), dA2: new Float64Array(1600),
    dP1: new Float64Array(6 * 14 * 14), dR1: new Float64Array(6 * 28 * 28),
    dA1: new Float64Array(6 * 28 * 28),
  };
}

export class LeNet {
  conv1w = new Float64Array(6 * 25);
  conv1b = new Float64Array(6);
  conv2w = new Float64Array(16 * 150);
  conv2b = new Float64Array(16);
  fc1w = new Float64Array(120 * 400);
  fc1b = new Float64Array(120);
  fc2w = new Float64Array(84 * 120);
  fc2b = new Float64Array(84);
  fc3w = new Float64Array(10 * 84);
  fc3b = new Float64Array(10);

  private buf = buffers();
  private grads: Map<string, Float64Array> = new Map();
  private vel: Map<string, Float64Array> = new Map();

  /** He-gaussian weights, zero biases; the rng draw order is part of the format. */
  static init(rng: Rng): LeNet {
    const net = new LeNet();
    const fill = (arr: Float64Array, fanIn: number) => {
      const std = Math.sqrt(2 / fanIn);
      for (let i = 0; i < arr.length; i++) arr[i] = rng.gaussian() * std;
    };
    fill(net.conv1w, 25);
    fill(net.conv2w, 150);
    fill(net.fc1w, 400);
    fill(net.fc2w, 120);
    fill(net.fc3w, 84);
    return net;
  }

  paramNames(): string[] {
    return ['conv1w', 'conv1b', 'conv2w', 'conv2b', 'fc1w', 'fc1b',
            'fc2w', 'fc2b', 'fc3w', 'fc3b'];
  }

  param(name: string): Float64Array {
    return (this as unknown as Record<string, Float64Array>)[name];
  }

  /** Logits for one image; intermediates stay in this.buf for backward. */
  forward(x: Float64Array): Float64Array {
    const b = this.buf;
    b.x.set(x);
    convForward(b.x, 1, 28, 28, this.conv1w, this.conv1b, 6, 5, 5, 1, 2, b.a1);
    reluForward(b.a1, b.r1);
    maxpoolForward(b.r1, 6, 28, 28, b.p1, b.am1);
    convForward(b.p1, 6, 14, 14, this.conv2w, this.conv2b, 16, 5, 5, 1, 0, b.a2);
    reluForward(b.a2, b.r2);
    maxpoolForward(b.r2, 16, 10, 10, b.p2, b.am2);
    linearForward(b.p2, this.fc1w, this.fc1b, 120, 400, b.f1);
    reluForward(b.f1, b.rf1);
    linearForward(b.rf1, this.fc2w, this.fc2b, 84, 120, b.f2);
    reluForward(b.f2, b.rf2);
    linearForward(b.rf2, this.fc3w, this.fc3b, 10, 84, b.logits);
    return b.logits;
  }

  /** Forward pass with angle noise injected into every dot product: each dot
   *  is re-expressed as |x||w|cos(theta) and theta gets a gaussian kick of
   *  pi*sqrt(p(1-p))*sigma, the estimator's spread at hash length 1/sigma^2.
   *  Cheap stand-in for forwardHashed that generalizes across hash lengths. */
  forwardNoisy(x: Float64Array, sigma: number, rng: Rng): Float64Array {
    const b = this.buf;
    b.x.set(x);
    noisyConv(b.x, 1, 28, 28, this.conv1w, this.conv1b, 6, 5, 5, 1, 2, b.a1, sigma, rng);
    reluForward(b.a1, b.r1);
    maxpoolForward(b.r1, 6, 28, 28, b.p1, b.am1);
    noisyConv(b.p1, 6, 14, 14, this.conv2w, this.conv2b, 16, 5, 5, 1, 0, b.a2, sigma, rng);
    reluForward(b.a2, b.r2);
    maxpoolForward(b.r2, 16, 10, 10, b.p2, b.am2);
    noisyLinear(b.p2, this.fc1w, this.fc1b, 120, 400, b.f1, sigma, rng);
    reluForward(b.f1, b.rf1);
    noisyLinear(b.rf1, this.fc2w, this.fc2b, 84, 120, b.f2, sigma, rng);
    reluForward(b.f2, b.rf2);
    noisyLinear(b.rf2, this.fc3w, this.fc3b, 10, 84, b.logits, sigma, rng);
    return b.logits;
  }

  /** Forward pass with every dot layer served through its hash estimate.
   *  Intermediates land in the same buffers, so backward() on top of this
   *  trains straight through the estimator. Call hashPlanWeights first. */
  forwardHashed(x: Float64Array, plan: HashedPlan): Float64Array {
    const b = this.buf;
    b.x.set(x);
    hashedConv(b.x, 1, 28, 28, plan.conv1, this.conv1b, 5, 5, 1, 2, b.a1);
    reluForward(b.a1, b.r1);
    maxpoolForward(b.r1, 6, 28, 28, b.p1, b.am1);
    hashedConv(b.p1, 6, 14, 14, plan.conv2, this.conv2b, 5, 5, 1, 0, b.a2);
    reluForward(b.a2, b.r2);
    maxpoolForward(b.r2, 16, 10, 10, b.p2, b.am2);
    hashedLinear(b.p2, plan.fc1, this.fc1b, b.f1);
    reluForward(b.f1, b.rf1);
    hashedLinear(b.rf1, plan.fc2, this.fc2b, b.f2);
    reluForward(b.f2, b.rf2);
    hashedLinear(b.rf2, plan.fc3, this.fc3b, b.logits);
    return b.logits;
  }

  private grad(name: string): Float64Array {
    let g = this.grads.get(name);
    if (!g) {
      g = new Float64Array(this.param(name).length);
      this.grads.set(name, g);
    }
    return g;
  }

  zeroGrads(): void {
    for (const g of this.grads.values()) g.fill(0);
  }

  /** Backprop one image (call right after forward on it); returns the loss. */
  backward(label: number, labelSmooth = 0): number {
    const b = this.buf;
    const loss = softmaxXent(b.logits, label, b.dLogits, labelSmooth);
    linearBackward(b.rf2, this.fc3w, 10, 84, b.dLogits,
                   this.grad('fc3w'), this.grad('fc3b'), b.dRf2);
    reluBackward(b.rf2, b.dRf2, b.dF2);
    linearBackward(b.rf1, this.fc2w, 84, 120, b.dF2,
                   this.grad('fc2w'), this.grad('fc2b'), b.dRf1);
    reluBackward(b.rf1, b.dRf1, b.dF1);
    linearBackward(b.p2, this.fc1w, 120, 400, b.dF1,
                   this.grad('fc1w'), this.grad('fc1b'), b.dP2);
    maxpoolBackward(b.dP2, b.am2, b.dR2);
    reluBackward(b.r2, b.dR2, b.dA2);
    convBackward(b.p1, 6, 14, 14, this.conv2w, 16, 5, 5, 1, 0, b.dA2,
                 this.grad('conv2w'), this.grad('conv2b'), b.dP1);
    maxpoolBackward(b.dP1, b.am1, b.dR1);
    reluBackward(b.r1, b.dR1, b.dA1);
    convBackward(b.x, 1, 28, 28, this.conv1w, 6, 5, 5, 1, 2, b.dA1,
                 this.grad('conv1w'), this.grad('conv1b'), null);
    return loss;
  }

  /** Momentum SGD using grads accumulated since zeroGrads, averaged over count. */
  step(lr: number, momentum: number, count: number,
       weightDecay = 0, clipNorm = Infinity): void {
    let scale = 1;
    if (clipNorm !== Infinity) {
      let sq = 0;
      for (const name of this.paramNames()) {
        const g = this.grad(name);
        for (let i = 0; i < g.length; i++) sq += (g[i] / count) ** 2;
      }
      scale = Math.min(1, clipNorm / (Math.sqrt(sq) + 1e-12));
    }
    for (const name of this.paramNames()) {
      const p = this.param(name);
      const g = this.grad(name);
      const wd = name.endsWith('w') ? weightDecay : 0;
      let v = this.vel.get(name);
      if (!v) {
        v = new Float64Array(p.length);
        this.vel.set(name, v);
      }
      for (let i = 0; i < p.length; i++) {
        v[i] = momentum * v[i] - lr * ((g[i] / count) * scale + wd * p[i]);
        p[i] += v[i];
      }
    }
  }
}

// --- hash-aware fine-tuning -------------------------------------------------
//
// The exported weights are served through sign-hash dot products: each dot
// layer's operands are reduced to a fixed random projection's sign pattern
// plus a minifloat norm, and the dot comes back as norm * norm * pwl-cosine
// of the estimated angle. Fine-tuning through that exact forward (gradients
// flow as if the dot were exact) lets the weights absorb the estimator's
// systematic error instead of meeting it cold at inference time.

/** One dot layer's serving state: its projection plus per-step weight hashes. */
interface HashedLayer {
  dim: number;
  k: number;
  proj: Float64Array;      // (dim, k) row-major
  outC: number;
  patch: Float64Array;     // scratch, dim
  acc: Float64Array;       // scratch, k
  xBits: Uint32Array;      // scratch, k/32
  wBits: Uint32Array;      // outC * k/32, rebuilt per optimizer step
  wNorm: Float64Array;     // outC, norms after their minifloat round trip
}

export interface HashedPlan {
  conv1: HashedLayer;
  conv2: HashedLayer;
  fc1: HashedLayer;
  fc2: HashedLayer;
  fc3: HashedLayer;
}

function hashedLayer(seed: bigint, index: number, dim: number, outC: number,
                     k: number): HashedLayer {
  return {
    dim, k, outC,
    proj: projectionEntries(deriveSeed(seed, index), dim, k),
    patch: new Float64Array(dim),
    acc: new Float64Array(k),
    xBits: new Uint32Array(k >> 5),
    wBits: new Uint32Array(outC * (k >> 5)),
    wNorm: new Float64Array(outC),
  };
}

/** Projections for every dot layer, seeded per layer position in the
 *  exported record list (conv1 0, conv2 2, fc 4/5/6). */
export function buildHashedPlan(planSeed: bigint, k: number): HashedPlan {
  if (k % 32 !== 0 || k < 32) throw new Error('hash length must be a multiple of 32');
  return {
    conv1: hashedLayer(planSeed, 0, 25, 6, k),
    conv2: hashedLayer(planSeed, 2, 150, 16, k),
    fc1: hashedLayer(planSeed, 4, 400, 120, k),
    fc2: hashedLayer(planSeed, 5, 120, 84, k),
    fc3: hashedLayer(planSeed, 6, 84, 10, k),
  };
}

/** Sign-project `vec` through the layer's matrix into layer.acc. */
function project(layer: HashedLayer, vec: Float64Array): void {
  const { acc, proj, k } = layer;
  acc.fill(0);
  for (let d = 0; d < vec.length; d++) {
    const v = vec[d];
    if (v === 0) continue;
    const base = d * k;
    for (let j = 0; j < k; j++) acc[j] += v * proj[base + j];
  }
}

/** Refresh a layer's weight-side hashes and quantized norms. */
function hashWeights(layer: HashedLayer, w: Float64Array): void {
  const words = layer.k >> 5;
  const row = new Float64Array(layer.dim);
  for (let c = 0; c < layer.outC; c++) {
    let sq = 0;
    for (let d = 0; d < layer.dim; d++) {
      const v = w[c * layer.dim + d];
      row[d] = v;
      sq += v * v;
    }
    project(layer, row);
    packSignBits(layer.acc, layer.wBits.subarray(c * words, (c + 1) * words));
    layer.wNorm[c] = mf8RoundTrip(Math.sqrt(sq));
  }
}

/** All five dot layers under the current weights. */
export function hashPlanWeights(net: LeNet, plan: HashedPlan): void {
  hashWeights(plan.conv1, net.conv1w);
  hashWeights(plan.conv2, net.conv2w);
  hashWeights(plan.fc1, net.fc1w);
  hashWeights(plan.fc2, net.fc2w);
  hashWeights(plan.fc3, net.fc3w);
}

/** Estimated dots for the patch currently in layer.patch (its squared norm
 *  passed in), one per output channel, strided into `out`. */
function hashedDots(layer: HashedLayer, normSq: number, bias: Float64Array,
                    out: Float64Array, outStride: number, outOffset: number): void {
  const words = layer.k >> 5;
  project(layer, layer.patch);
  packSignBits(layer.acc, layer.xBits);
  const xn = mf8RoundTrip(Math.sqrt(normSq));
  const { xBits, wBits, wNorm, k } = layer;
  for (let c = 0; c < layer.outC; c++) {
    let hd = 0;
    const wBase = c * words;
    for (let w = 0; w < words; w++) hd += popcount32(xBits[w] ^ wBits[wBase + w]);
    const cos = approxCosine((Math.PI * hd) / k);
    out[outOffset + c * outStride] = xn * wNorm[c] * cos + bias[c];
  }
}

/** One dot through the angle-noise channel: re-express as |x||w|cos(theta),
 *  kick theta by the estimator's spread, re-evaluate with the true cosine. */
function angleNoise(dot: number, prod: number, sigma: number, rng: Rng): number {
  if (!(prod > 0)) return dot;
  const cos = Math.min(1, Math.max(-1, dot / Math.max(prod, 1e-12)));
  const theta = Math.acos(cos);
  const p = theta / Math.PI;
  const std = Math.PI * Math.sqrt(p * (1 - p)) * sigma;
  return prod * Math.cos(theta + std * rng.gaussian());
}

/** convForward with angle noise on each bias-free dot; bias added after. */
function noisyConv(
  x: Float64Array, C: number, H: number, W: number,
  w: Float64Array, bias: Float64Array,
  K: number, kh: number, kw: number, stride: number, pad: number,
  out: Float64Array, sigma: number, rng: Rng,
): void {
  const OH = convOut(H, kh, stride, pad);
  const OW = convOut(W, kw, stride, pad);
  const patchLen = C * kh * kw;
  const patch = new Float64Array(patchLen);
  const wNorm = new Float64Array(K);
  for (let k = 0; k < K; k++) {
    let sq = 0;
    for (let d = 0; d < patchLen; d++) sq += w[k * patchLen + d] ** 2;
    wNorm[k] = Math.sqrt(sq);
  }
  for (let oy = 0; oy < OH; oy++) {
    for (let ox = 0; ox < OW; ox++) {
      patch.fill(0);
      let sq = 0;
      for (let c = 0; c < C; c++) {
        for (let ky = 0; ky < kh; ky++) {
          const iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const xRow = (c * H + iy) * W;
          const pBase = c * kh * kw + ky * kw;
          for (let kx = 0; kx < kw; kx++) {
            const ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            const v = x[xRow + ix];
            patch[pBase + kx] = v;
            sq += v * v;
          }
        }
      }
      const xn = Math.sqrt(sq);
      for (let k = 0; k < K; k++) {
        let dot = 0;
        const row = k * patchLen;
        for (let d = 0; d < patchLen; d++) dot += patch[d] * w[row + d];
        out[(k * OH + oy) * OW + ox] =
          angleNoise(dot, xn * wNorm[k], sigma, rng) + bias[k];
      }
    }
  }
}

function noisyLinear(
  x: Float64Array, w: Float64Array, bias: Float64Array,
  outF: number, inF: number, out: Float64Array,
  sigma: number, rng: Rng,
): void {
  let xsq = 0;
  for (let i = 0; i < inF; i++) xsq += x[i] * x[i];
  const xn = Math.sqrt(xsq);
  for (let o = 0; o < outF; o++) {
    const row = o * inF;
    let dot = 0;
    let wsq = 0;
    for (let i = 0; i < inF; i++) {
      dot += w[row + i] * x[i];
      wsq += w[row + i] * w[row + i];
    }
    out[o] = angleNoise(dot, xn * Math.sqrt(wsq), sigma, rng) + bias[o];
  }
}

/** convForward's geometry with every dot replaced by its hash estimate. */
function hashedConv(
  x: Float64Array, C: number, H: number, W: number,
  layer: HashedLayer, bias: Float64Array,
  kh: number, kw: number, stride: number, pad: number,
  out: Float64Array,
): void {
  const OH = convOut(H, kh, stride, pad);
  const OW = convOut(W, kw, stride, pad);
  const patch = layer.patch;
  for (let oy = 0; oy < OH; oy++) {
    for (let ox = 0; ox < OW; ox++) {
      patch.fill(0);
      let sq = 0;
      for (let c = 0; c < C; c++) {
        for (let ky = 0; ky < kh; ky++) {
          const iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const xRow = (c * H + iy) * W;
          const pBase = c * kh * kw + ky * kw;
          for (let kx = 0; kx < kw; kx++) {
            const ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            const v = x[xRow + ix];
            patch[pBase + kx] = v;
            sq += v * v;
          }
        }
      }
      hashedDots(layer, sq, bias, out, OH * OW, oy * OW + ox);
    }
  }
}

function hashedLinear(x: Float64Array, layer: HashedLayer, bias: Float64Array,
                      out: Float64Array): void {
  let sq = 0;
  for (let i = 0; i < x.length; i++) {
    layer.patch[i] = x[i];
    sq += x[i] * x[i];
  }
  hashedDots(layer, sq, bias, out, 1, 0);
}

/** Image bytes -> f64 in [0,1]. Training path; evaluation re-reads the f32 file. */
export function pixelsToF64(pixels: Uint8Array, offset: number, out: Float64Array): void {
  for (let i = 0; i < 784; i++) out[i] = pixels[offset + i] / 255;
}

export interface EpochStats {
  epoch: number;
  meanLoss: number;
}

function runEpochs(
  net: LeNet,
  pixels: Uint8Array, labels: Uint8Array,
  cfg: TrainConfig,
  log: (msg: string) => void,
  forward: (x: Float64Array, rng: Rng) => void,
  afterStep?: () => void,
  draws = 1,
): EpochStats[] {
  const rng = new Rng(cfg.seed ^ 0x5eed);
  const order = new Int32Array(cfg.samples);
  const x = new Float64Array(784);
  const stats: EpochStats[] = [];
  const smooth = cfg.labelSmooth ?? 0;
  const decayEvery = cfg.lrStepEvery ?? 1;
  for (let i = 0; i < order.length; i++) order[i] = i;
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const lr = cfg.lr * Math.pow(cfg.lrDecay, Math.floor(epoch / decayEvery));
    rng.shuffle(order);
    let lossSum = 0;
    let seen = 0;
    for (let start = 0; start < cfg.samples; start += cfg.batchSize) {
      const count = Math.min(cfg.batchSize, cfg.samples - start);
      net.zeroGrads();
      for (let j = 0; j < count; j++) {
        const idx = order[start + j];
        pixelsToF64(pixels, idx * 784, x);
        for (let d = 0; d < draws; d++) {
          forward(x, rng);
          lossSum += net.backward(labels[idx], smooth);
        }
      }
      net.step(lr, cfg.momentum, count * draws,
               cfg.weightDecay ?? 0, cfg.clipNorm ?? Infinity);
      afterStep?.();
      seen += count * draws;
    }
    stats.push({ epoch, meanLoss: lossSum / seen });
    log(`epoch ${epoch}: lr ${lr.toFixed(4)} mean loss ${(lossSum / seen).toFixed(4)}`);
  }
  return stats;
}

export function train(
  net: LeNet,
  pixels: Uint8Array, labels: Uint8Array,
  cfg: TrainConfig,
  log: (msg: string) => void = () => {},
): EpochStats[] {
  return runEpochs(net, pixels, labels, cfg, log, (x) => net.forward(x));
}

/** Fine-tune under angle noise at the estimator's spread for hash length
 *  1/sigma^2. `draws` independent noise draws per image cut gradient
 *  variance; the shuffle rng doubles as the noise source. */
export function trainNoisy(
  net: LeNet,
  pixels: Uint8Array, labels: Uint8Array,
  cfg: TrainConfig,
  sigma: number,
  draws = 1,
  log: (msg: string) => void = () => {},
): EpochStats[] {
  return runEpochs(net, pixels, labels, cfg, log,
                   (x, rng) => net.forwardNoisy(x, sigma, rng),
                   undefined, draws);
}

/** Fine-tune with every dot layer forwarded through its hash estimate (the
 *  gradients treat the estimate as if it were the exact dot). Several plans
 *  cycle batch by batch so the net stays accurate across the hash-length
 *  ladder, not just at the longest setting; weights are rehashed after each
 *  step, but only for the plan the next batch will use. */
export function trainHashed(
  net: LeNet,
  pixels: Uint8Array, labels: Uint8Array,
  cfg: TrainConfig,
  plans: HashedPlan[],
  log: (msg: string) => void = () => {},
): EpochStats[] {
  if (plans.length === 0) throw new Error("need at least one hashed plan");
  let cur = 0;
  hashPlanWeights(net, plans[0]);
  return runEpochs(net, pixels, labels, cfg, log,
                   (x) => net.forwardHashed(x, plans[cur]),
                   () => {
                     cur = (cur + 1) % plans.length;
                     hashPlanWeights(net, plans[cur]);
                   });
}

/** Top-1 accuracy (percent) of the live-parameter net on raw image bytes. */
export function evaluate(
  net: LeNet, pixels: Uint8Array, labels: Uint8Array, count: number,
): number {
  const x = new Float64Array(784);
  let hits = 0;
  for (let i = 0; i < count; i++) {
    pixelsToF64(pixels, i * 784, x);
    if (argmax(net.forward(x)) === labels[i]) hits++;
  }
  return (100 * hits) / count;
}
