// DCAM (model) and DCDS (dataset) containers, little-endian, f32 payloads.
//
//   model:   'DCAM' u16 version=1 u16 layer_count, then per record
//            u8 kind u8 flags payload  (kinds: 1 conv2d 2 linear 3 relu
//            4 maxpool 5 avgpool 6 batchnorm 7 flatten; flags bit0 bias,
//            bit1 relu_after, dot layers only)
//   dataset: 'DCDS' u16 version=1 u32 count u32 C,H,W u16 num_classes
//            f32 data[count*C*H*W] u16 labels[count]
//
// Readers here are for self-checks; the downstream consumer revalidates.

export const FORMAT_VERSION = 1;

export interface ConvRecord {
  kind: 'conv2d';
  inC: number; inH: number; inW: number;
  outC: number; kh: number; kw: number;
  stride: number; pad: number;
  weights: Float32Array;          // (outC, inC*kh*kw) row-major
  bias: Float32Array | null;
  reluAfter: boolean;
}

export interface LinearRecord {
  kind: 'linear';
  inF: number; outF: number;
  weights: Float32Array;          // (outF, inF) row-major
  bias: Float32Array | null;
  reluAfter: boolean;
}

export interface PoolRecord {
  kind: 'maxpool' | 'avgpool';
  ph: number; pw: number; stride: number; pad: number;
}

export interface PlainRecord {
  kind: 'relu' | 'flatten';
}

export type LayerRecord = ConvRecord | LinearRecord | PoolRecord | PlainRecord;

export interface DatasetFile {
  count: number; c: number; h: number; w: number;
  numClasses: number;
  data: Float32Array;             // count*c*h*w
  labels: Uint16Array;
}

const KIND_TAGS: Record<string, number> = {
  conv2d: 1, linear: 2, relu: 3, maxpool: 4, avgpool: 5, batchnorm: 6, flatten: 7,
};
const TAG_KINDS: Record<number, string> = {};
for (const [k, v] of Object.entries(KIND_TAGS)) TAG_KINDS[v] = k;

class ByteWriter {
  private buf = new ArrayBuffer(1 << 16);
  private view = new DataView(this.buf);
  private len = 0;

  private grow(extra: number): void {
    if (this.len + extra <= this.buf.byteLength) return;
    let cap = this.buf.byteLength;
    while (cap < this.len + extra) cap *= 2;
    const next = new ArrayBuffer(cap);
    new Uint8Array(next).set(new Uint8Array(this.buf, 0, this.len));
    this.buf = next;
    this.view = new DataView(next);
  }

  ascii(s: string): void {
    this.grow(s.length);
    for (let i = 0; i < s.length; i++) this.view.setUint8(this.len++, s.charCodeAt(i));
  }

  u8(v: number): void {
    this.grow(1);
    this.view.setUint8(this.len++, v);
  }

  u16(v: number): void {
    this.grow(2);
    this.view.setUint16(this.len, v, true);
    this.len += 2;
  }

  u32(v: number): void {
    this.grow(4);
    this.view.setUint32(this.len, v, true);
    this.len += 4;
  }

  f32s(arr: Float32Array): void {
    this.grow(4 * arr.length);
    for (let i = 0; i < arr.length; i++) {
      this.view.setFloat32(this.len, arr[i], true);
      this.len += 4;
    }
  }

  bytes(): Uint8Array {
    return new Uint8Array(this.buf.slice(0, this.len));
  }
}

class ByteReader {
  private view: DataView;
  pos = 0;

  constructor(private data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  private need(count: number, what: string): void {
    if (this.pos + count > this.data.length) {
      throw new Error(`file ends inside ${what} (at byte ${this.pos})`);
    }
  }

  ascii(count: number): string {
    this.need(count, 'magic');
    let s = '';
    for (let i = 0; i < count; i++) s += String.fromCharCode(this.data[this.pos + i]);
    this.pos += count;
    return s;
  }

  u8(what: string): number {
    this.need(1, what);
    return this.view.getUint8(this.pos++);
  }

  u16(what: string): number {
    this.need(2, what);
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  f32s(count: number, what: string): Float32Array {
    this.need(4 * count, what);
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      out[i] = this.view.getFloat32(this.pos, true);
      this.pos += 4;
    }
    return out;
  }

  u16s(count: number, what: string): Uint16Array {
    this.need(2 * count, what);
    const out = new Uint16Array(count);
    for (let i = 0; i < count; i++) {
      out[i] = this.view.getUint16(this.pos, true);
      this.pos += 2;
    }
    return out;
  }

  done(): void {
    if (this.pos !== this.data.length) {
      throw new Error(`${this.data.length - this.pos} trailing bytes after payload`);
    }
  }
}

export function serializeModel(layers: LayerRecord[]): Uint8Array {
  if (layers.length < 1 || layers.length > 0xffff) {
    throw new Error('layer count does not fit the header');
  }
  const w = new ByteWriter();
  w.ascii('DCAM');
  w.u16(FORMAT_VERSION);
  w.u16(layers.length);
  for (const layer of layers) {
    w.u8(KIND_TAGS[layer.kind]);
    if (layer.kind === 'conv2d' || layer.kind === 'linear') {
      let flags = 0;
      if (layer.bias) flags |= 0x01;
      if (layer.reluAfter) flags |= 0x02;
      w.u8(flags);
    } else {
      w.u8(0);
    }
    if (layer.kind === 'conv2d') {
      for (const v of [layer.inC, layer.inH, layer.inW, layer.outC,
                       layer.kh, layer.kw, layer.stride, layer.pad]) {
        w.u32(v);
      }
      if (layer.weights.length !== layer.outC * layer.inC * layer.kh * layer.kw) {
        throw new Error('conv2d weight blob has the wrong size');
      }
      w.f32s(layer.weights);
      if (layer.bias) w.f32s(layer.bias);
    } else if (layer.kind === 'linear') {
      w.u32(layer.inF);
      w.u32(layer.outF);
      if (layer.weights.length !== layer.inF * layer.outF) {
        throw new Error('linear weight blob has the wrong size');
      }
      w.f32s(layer.weights);
      if (layer.bias) w.f32s(layer.bias);
    } else if (layer.kind === 'maxpool' || layer.kind === 'avgpool') {
      for (const v of [layer.ph, layer.pw, layer.stride, layer.pad]) w.u32(v);
    }
    // relu / flatten carry no payload
  }
  return w.bytes();
}

export function parseModel(data: Uint8Array): LayerRecord[] {
  const r = new ByteReader(data);
  const magic = r.ascii(4);
  if (magic !== 'DCAM') throw new Error(`expected DCAM magic, found ${JSON.stringify(magic)}`);
  const version = r.u16('version');
  if (version !== FORMAT_VERSION) throw new Error(`unsupported model version ${version}`);
  const count = r.u16('layer count');
  if (count < 1) throw new Error('model must contain at least one layer');
  const layers: LayerRecord[] = [];
  for (let i = 0; i < count; i++) {
    const tag = r.u8('layer kind');
    const kind = TAG_KINDS[tag];
    if (!kind) throw new Error(`unknown layer kind tag ${tag}`);
    const flags = r.u8('layer flags');
    const hasBias = (flags & 0x01) !== 0;
    const reluAfter = (flags & 0x02) !== 0;
    if (kind === 'conv2d') {
      const inC = r.u32('in_channels');
      const inH = r.u32('in_h');
      const inW = r.u32('in_w');
      const outC = r.u32('out_channels');
      const kh = r.u32('kernel_h');
      const kw = r.u32('kernel_w');
      const stride = r.u32('stride');
      const pad = r.u32('padding');
      const weights = r.f32s(outC * inC * kh * kw, 'conv2d weights');
      const bias = hasBias ? r.f32s(outC, 'conv2d bias') : null;
      layers.push({ kind, inC, inH, inW, outC, kh, kw, stride, pad, weights, bias, reluAfter });
    } else if (kind === 'linear') {
      const inF = r.u32('in_features');
      const outF = r.u32('out_features');
      const weights = r.f32s(inF * outF, 'linear weights');
      const bias = hasBias ? r.f32s(outF, 'linear bias') : null;
      layers.push({ kind, inF, outF, weights, bias, reluAfter });
    } else if (kind === 'maxpool' || kind === 'avgpool') {
      const ph = r.u32('pool_h');
      const pw = r.u32('pool_w');
      const stride = r.u32('stride');
      const pad = r.u32('padding');
      layers.push({ kind, ph, pw, stride, pad });
    } else if (kind === 'relu' || kind === 'flatten') {
      layers.push({ kind });
    } else {
      throw new Error(`layer kind ${kind} is not produced by this exporter`);
    }
  }
  r.done();
  return layers;
}

export function serializeDataset(ds: DatasetFile): Uint8Array {
  if (ds.data.length !== ds.count * ds.c * ds.h * ds.w) {
    throw new Error('dataset blob has the wrong size');
  }
  if (ds.labels.length !== ds.count) throw new Error('one label per image required');
  const w = new ByteWriter();
  w.ascii('DCDS');
  w.u16(FORMAT_VERSION);
  w.u32(ds.count);
  w.u32(ds.c);
  w.u32(ds.h);
  w.u32(ds.w);
  w.u16(ds.numClasses);
  w.f32s(ds.data);
  for (let i = 0; i < ds.labels.length; i++) w.u16(ds.labels[i]);
  return w.bytes();
}

export function parseDataset(data: Uint8Array): DatasetFile {
  const r = new ByteReader(data);
  const magic = r.ascii(4);
  if (magic !== 'DCDS') throw new Error(`expected DCDS magic, found ${JSON.stringify(magic)}`);
  const version = r.u16('version');
  if (version !== FORMAT_VERSION) throw new Error(`unsupported dataset version ${version}`);
  const count = r.u32('sample count');
  const c = r.u32('channels');
  const h = r.u32('height');
  const w = r.u32('width');
  const numClasses = r.u16('num_classes');
  const blob = r.f32s(count * c * h * w, 'image data');
  const labels = r.u16s(count, 'labels');
  r.done();
  return { count, c, h, w, numClasses, data: blob, labels };
}
