// f64 forward pass over parsed layer records: the reference the sidecar
// accuracy numbers are computed with, reading exactly the f32 values that
// went into the files.

import { LayerRecord } from './formats.js';
import { argmax, convForward, convOut, linearForward, reluForward } from './tensor.js';

function promote(arr: Float32Array): Float64Array {
  const out = new Float64Array(arr.length);
  for (let i = 0; i < arr.length; i++) out[i] = arr[i];
  return out;
}

function pool(
  x: Float64Array, c: number, h: number, w: number,
  ph: number, pw: number, stride: number, pad: number, mode: 'max' | 'avg',
): { out: Float64Array; h: number; w: number } {
  const oh = convOut(h, ph, stride, pad);
  const ow = convOut(w, pw, stride, pad);
  const out = new Float64Array(c * oh * ow);
  for (let ch = 0; ch < c; ch++) {
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        let acc = mode === 'max' ? -Infinity : 0;
        for (let dy = 0; dy < ph; dy++) {
          const iy = oy * stride + dy - pad;
          if (iy < 0 || iy >= h) continue;
          for (let dx = 0; dx < pw; dx++) {
            const ix = ox * stride + dx - pad;
            if (ix < 0 || ix >= w) continue;
            const v = x[(ch * h + iy) * w + ix];
            if (mode === 'max') {
              if (v > acc) acc = v;
            } else {
              acc += v;
            }
          }
        }
        // avg divides by the full window, padding included
        out[(ch * oh + oy) * ow + ox] = mode === 'avg' ? acc / (ph * pw) : acc;
      }
    }
  }
  return { out, h: oh, w: ow };
}

/** Run a parsed model on one (C,H,W) image; returns the logits. */
export function runRecords(
  layers: LayerRecord[], image: Float64Array, c: number, h: number, w: number,
): Float64Array {
  let x = image;
  let shape: [number, number, number] | null = [c, h, w];
  for (const layer of layers) {
    if (layer.kind === 'conv2d') {
      if (!shape) throw new Error('conv2d needs a (C,H,W) input');
      const [ic, ih, iw] = shape;
      if (ic !== layer.inC || ih !== layer.inH || iw !== layer.inW) {
        throw new Error(`conv2d expects ${layer.inC}x${layer.inH}x${layer.inW}, got ${ic}x${ih}x${iw}`);
      }
      const oh = convOut(ih, layer.kh, layer.stride, layer.pad);
      const ow = convOut(iw, layer.kw, layer.stride, layer.pad);
      const out = new Float64Array(layer.outC * oh * ow);
      const bias = layer.bias ? promote(layer.bias) : new Float64Array(layer.outC);
      convForward(x, ic, ih, iw, promote(layer.weights), bias,
                  layer.outC, layer.kh, layer.kw, layer.stride, layer.pad, out);
      if (layer.reluAfter) reluForward(out, out);
      x = out;
      shape = [layer.outC, oh, ow];
    } else if (layer.kind === 'linear') {
      if (x.length !== layer.inF) {
        throw new Error(`linear expects ${layer.inF} features, got ${x.length}`);
      }
      const out = new Float64Array(layer.outF);
      const bias = layer.bias ? promote(layer.bias) : new Float64Array(layer.outF);
      linearForward(x, promote(layer.weights), bias, layer.outF, layer.inF, out);
      if (layer.reluAfter) reluForward(out, out);
      x = out;
      shape = null;
    } else if (layer.kind === 'maxpool' || layer.kind === 'avgpool') {
      if (!shape) throw new Error('pool needs a (C,H,W) input');
      const mode = layer.kind === 'maxpool' ? 'max' : 'avg';
      const r = pool(x, shape[0], shape[1], shape[2],
                     layer.ph, layer.pw, layer.stride, layer.pad, mode);
      x = r.out;
      shape = [shape[0], r.h, r.w];
    } else if (layer.kind === 'relu') {
      const out = new Float64Array(x.length);
      reluForward(x, out);
      x = out;
    } else if (layer.kind === 'flatten') {
      shape = null; // storage is already C-order
    }
  }
  return x;
}

/** Top-1 percent plus per-image predictions of a parsed model on a parsed dataset. */
export function evaluateRecords(
  layers: LayerRecord[],
  data: Float32Array, labels: ArrayLike<number>,
  count: number, c: number, h: number, w: number,
): { top1: number; predictions: number[] } {
  const size = c * h * w;
  const image = new Float64Array(size);
  const predictions: number[] = [];
  let hits = 0;
  for (let i = 0; i < count; i++) {
    for (let j = 0; j < size; j++) image[j] = data[i * size + j];
    const pred = argmax(runRecords(layers, image, c, h, w));
    predictions.push(pred);
    if (pred === labels[i]) hits++;
  }
  return { top1: (100 * hits) / count, predictions };
}
