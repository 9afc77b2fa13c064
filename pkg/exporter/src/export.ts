// Trains LeNet-5 on MNIST and exports three files:
//   lenet5.dcam     the trained model, f32 tensors
//   mnist1k.dcds    first 1000 test images, pixels scaled to [0,1]
//   lenet5.ref.json reference Top-1 and per-image predictions, computed by
//                   parsing the two binaries back and running them in f64
//
// Everything is seeded; rerunning produces byte-identical files.

import { mkdirSync, writeFileSync } from 'node:fs';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';

import { DatasetFile, LayerRecord, parseDataset, parseModel, serializeDataset, serializeModel } from './formats.js';
import { evaluateRecords } from './infer.js';
import {
  buildHashedPlan, evaluate, LeNet, train, TrainConfig, trainHashed,
} from './lenet.js';
import { loadMnist, MnistSplit } from './mnist.js';
import { Rng } from './rng.js';

// Two-stage recipe. A conventionally trained LeNet loses several accuracy
// points when its dots are served as hash estimates; the second stage trains
// straight through the exact estimator a default run serves it with (plan
// seed 7, 1024 bits: sign hashes, popcount angles, piecewise cosine,
// minifloat norms), which brings the served accuracy to within about a
// point of the exact forward. It costs a little exact-forward accuracy;
// that trade is what the fixture is for.

export const CLEAN_CONFIG: TrainConfig = {
  samples: 60000, epochs: 8, batchSize: 128,
  lr: 0.1, momentum: 0.9, lrDecay: 0.5, lrStepEvery: 2,
  weightDecay: 5e-4, clipNorm: 5.0, seed: 1,
};

export const HASHED_CONFIG: TrainConfig = {
  samples: 30000, epochs: 3, batchSize: 128,
  lr: 2e-3, momentum: 0.9, lrDecay: 0.5,
  labelSmooth: 0.1, clipNorm: 2.0, seed: 11,
};
export const HASH_PLAN_SEED = 7n;
// adapt to the longest candidate only: each hash length draws its own
// independent projections, so training against several at once dilutes
// the fit to every one of them
export const HASH_LADDER = [1024];

export const EXPORT_IMAGES = 1000;

function f32(arr: Float64Array): Float32Array {
  return Float32Array.from(arr);
}

/** The trained net as layer records, every tensor rounded to f32. */
export function buildRecords(net: LeNet): LayerRecord[] {
  return [
    {
      kind: 'conv2d', inC: 1, inH: 28, inW: 28, outC: 6, kh: 5, kw: 5,
      stride: 1, pad: 2, weights: f32(net.conv1w), bias: f32(net.conv1b),
      reluAfter: true,
    },
    { kind: 'maxpool', ph: 2, pw: 2, stride: 2, pad: 0 },
    {
      kind: 'conv2d', inC: 6, inH: 14, inW: 14, outC: 16, kh: 5, kw: 5,
      stride: 1, pad: 0, weights: f32(net.conv2w), bias: f32(net.conv2b),
      reluAfter: true,
    },
    { kind: 'maxpool', ph: 2, pw: 2, stride: 2, pad: 0 },
    { kind: 'linear', inF: 400, outF: 120, weights: f32(net.fc1w), bias: f32(net.fc1b), reluAfter: true },
    { kind: 'linear', inF: 120, outF: 84, weights: f32(net.fc2w), bias: f32(net.fc2b), reluAfter: true },
    { kind: 'linear', inF: 84, outF: 10, weights: f32(net.fc3w), bias: f32(net.fc3b), reluAfter: false },
  ];
}

/** First `count` test images as an f32 dataset, pixels divided by 255. */
export function buildDataset(test: MnistSplit, count: number): DatasetFile {
  const data = new Float32Array(count * 784);
  for (let i = 0; i < count * 784; i++) data[i] = Math.fround(test.pixels[i] / 255);
  const labels = new Uint16Array(count);
  for (let i = 0; i < count; i++) labels[i] = test.labels[i];
  return { count, c: 1, h: 28, w: 28, numClasses: 10, data, labels };
}

export function main(outDir: string): void {
  const { train: trainSplit, test } = loadMnist();
  console.log(`mnist: ${trainSplit.count} train / ${test.count} test images`);
  const net = LeNet.init(new Rng(CLEAN_CONFIG.seed));
  const liveTop1 = () =>
    evaluate(net, test.pixels, test.labels, EXPORT_IMAGES).toFixed(1);
  train(net, trainSplit.pixels, trainSplit.labels, CLEAN_CONFIG,
        (m) => console.log(`[clean] ${m}`));
  console.log(`clean stage: ${liveTop1()}% on the first ${EXPORT_IMAGES} test images`);

  const plans = HASH_LADDER.map((k) => buildHashedPlan(HASH_PLAN_SEED, k));
  trainHashed(net, trainSplit.pixels, trainSplit.labels, HASHED_CONFIG, plans,
              (m) => console.log(`[hashed] ${m}`));
  console.log(`hashed stage: ${liveTop1()}%`);

  const modelBytes = serializeModel(buildRecords(net));
  const datasetBytes = serializeDataset(buildDataset(test, EXPORT_IMAGES));

  // the reference numbers come from re-reading the bytes we just produced,
  // so they describe the files, not the in-memory training state
  const layers = parseModel(modelBytes);
  const ds = parseDataset(datasetBytes);
  const { top1, predictions } = evaluateRecords(
    layers, ds.data, ds.labels, ds.count, ds.c, ds.h, ds.w);
  console.log(`exported f32 model: ${top1.toFixed(1)}% on the exported dataset`);

  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, 'lenet5.dcam'), modelBytes);
  writeFileSync(join(outDir, 'mnist1k.dcds'), datasetBytes);
  const sidecar = {
    model: 'lenet5.dcam',
    dataset: 'mnist1k.dcds',
    images: ds.count,
    top1_percent: top1,
    predictions,
    train: {
      clean: {
        samples: CLEAN_CONFIG.samples,
        epochs: CLEAN_CONFIG.epochs,
        batch_size: CLEAN_CONFIG.batchSize,
        seed: CLEAN_CONFIG.seed,
      },
      hashed: {
        samples: HASHED_CONFIG.samples,
        epochs: HASHED_CONFIG.epochs,
        hash_lengths: HASH_LADDER,
        plan_seed: Number(HASH_PLAN_SEED),
      },
    },
  };
  writeFileSync(join(outDir, 'lenet5.ref.json'), JSON.stringify(sidecar, null, 2) + '\n');
  console.log(`wrote lenet5.dcam (${modelBytes.length} bytes), ` +
              `mnist1k.dcds (${datasetBytes.length} bytes), lenet5.ref.json`);
}

const self = resolve(fileURLToPath(import.meta.url));
if (process.argv[1] && resolve(process.argv[1]) === self) {
  const outDir = process.argv[2] ?? join(dirname(self), '..', '..', 'fixtures');
  main(outDir);
}
