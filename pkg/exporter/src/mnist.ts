import { readFileSync } from 'node:fs';
import { join, dirname } from 'node:path';
import { createRequire } from 'node:module';

export interface MnistSplit {
  count: number;
  rows: number;
  cols: number;
  /** count*rows*cols raw bytes, row-major per image. */
  pixels: Uint8Array;
  labels: Uint8Array;
}

const IMAGE_MAGIC = 2051;
const LABEL_MAGIC = 2049;

function readU32BE(buf: Uint8Array, off: number): number {
  return (buf[off] << 24) | (buf[off + 1] << 16) | (buf[off + 2] << 8) | buf[off + 3];
}

export function readIdxImages(path: string): { count: number; rows: number; cols: number; pixels: Uint8Array } {
  const buf = readFileSync(path);
  const magic = readU32BE(buf, 0);
  if (magic !== IMAGE_MAGIC) throw new Error(`${path}: bad image magic ${magic}`);
  const count = readU32BE(buf, 4);
  const rows = readU32BE(buf, 8);
  const cols = readU32BE(buf, 12);
  const pixels = new Uint8Array(buf.buffer, buf.byteOffset + 16, count * rows * cols);
  return { count, rows, cols, pixels };
}

export function readIdxLabels(path: string): Uint8Array {
  const buf = readFileSync(path);
  const magic = readU32BE(buf, 0);
  if (magic !== LABEL_MAGIC) throw new Error(`${path}: bad label magic ${magic}`);
  const count = readU32BE(buf, 4);
  return new Uint8Array(buf.buffer, buf.byteOffset + 8, count);
}

function loadSplit(dir: string, stem: string): MnistSplit {
  const img = readIdxImages(join(dir, `${stem}-images-idx3-ubyte`));
  const labels = readIdxLabels(join(dir, `${stem}-labels-idx1-ubyte`));
  if (labels.length !== img.count) {
    throw new Error(`${stem}: ${img.count} images but ${labels.length} labels`);
  }
  return { ...img, labels };
}

/** Locate the idx files shipped inside the mnist-data package. */
export function defaultDataDir(): string {
  const require = createRequire(import.meta.url);
  return join(dirname(require.resolve('mnist-data/package.json')), 'data');
}

export function loadMnist(dir: string = defaultDataDir()): { train: MnistSplit; test: MnistSplit } {
  return { train: loadSplit(dir, 'train'), test: loadSplit(dir, 't10k') };
}
