import { describe, expect, it } from 'vitest';
import { buildDataset, buildRecords } from '../src/export.js';
import { serializeDataset, serializeModel } from '../src/formats.js';
import { evaluateRecords } from '../src/infer.js';
import { LeNet, train, TrainConfig } from '../src/lenet.js';
import { loadMnist } from '../src/mnist.js';
import { Rng } from '../src/rng.js';

const TINY: TrainConfig = {
  samples: 96,
  epochs: 3,
  batchSize: 16,
  lr: 0.05,
  momentum: 0.9,
  lrDecay: 0.7,
  seed: 9,
};

describe('mnist reader', () => {
  it('exposes both splits with matching counts', () => {
    const { train: tr, test } = loadMnist();
    expect(tr.count).toBe(60000);
    expect(test.count).toBe(10000);
    expect(tr.rows).toBe(28);
    expect(tr.cols).toBe(28);
    expect(tr.pixels.length).toBe(60000 * 784);
    expect(test.labels.length).toBe(10000);
    for (const l of test.labels.subarray(0, 100)) expect(l).toBeLessThan(10);
  });
});

describe('training', () => {
  it('reduces the loss and fits a small sample', () => {
    const { train: tr } = loadMnist();
    const net = LeNet.init(new Rng(TINY.seed));
    const stats = train(net, tr.pixels, tr.labels, TINY);
    expect(stats).toHaveLength(3);
    expect(stats[2].meanLoss).toBeLessThan(stats[0].meanLoss);
    expect(stats[2].meanLoss).toBeLessThan(1.8); // 18 steps only gets so far
  });

  it('is bit-deterministic: same seed, same exported bytes', () => {
    const { train: tr, test } = loadMnist();
    const runs: Uint8Array[] = [];
    for (let r = 0; r < 2; r++) {
      const net = LeNet.init(new Rng(TINY.seed));
      train(net, tr.pixels, tr.labels, TINY);
      runs.push(serializeModel(buildRecords(net)));
    }
    expect(runs[0]).toEqual(runs[1]);
    const dsA = serializeDataset(buildDataset(test, 50));
    const dsB = serializeDataset(buildDataset(test, 50));
    expect(dsA).toEqual(dsB);
  });

  it('different seeds give different weights', () => {
    const { train: tr } = loadMnist();
    const a = LeNet.init(new Rng(1));
    const b = LeNet.init(new Rng(2));
    train(a, tr.pixels, tr.labels, { ...TINY, samples: 32, epochs: 1, seed: 1 });
    train(b, tr.pixels, tr.labels, { ...TINY, samples: 32, epochs: 1, seed: 2 });
    expect(serializeModel(buildRecords(a))).not.toEqual(serializeModel(buildRecords(b)));
  });
});

describe('exported records', () => {
  it('f32 records agree with the live net on its training sample', () => {
    const { train: tr } = loadMnist();
    const net = LeNet.init(new Rng(TINY.seed));
    train(net, tr.pixels, tr.labels, TINY);

    // score the f32 records on the images the net was trained on
    const count = TINY.samples;
    const data = new Float32Array(count * 784);
    for (let i = 0; i < count * 784; i++) data[i] = Math.fround(tr.pixels[i] / 255);
    const { top1 } = evaluateRecords(
      buildRecords(net), data, tr.labels, count, 1, 28, 28);
    expect(top1).toBeGreaterThan(60); // three epochs over 96 images fits most of them
  });
});
