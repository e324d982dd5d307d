/**
 * Deterministic toy datasets. No downloads: both variants are generated.
 *
 * "synthetic": per-class Gaussian blobs around seeded mean images.
 * "small-image-subset": patterned images (class-dependent stripe frequency
 * and orientation) with additive noise, a stand-in for a tiny image subset.
 */

export interface DatasetConfig {
  kind: "synthetic" | "small-image-subset";
  samples: number;
  height: number;
  width: number;
  channels: number;
  numClasses: number;
  seed: number;
}

export interface Dataset {
  images: Float32Array; // [n, h, w, c] row-major
  labels: Int32Array; // class indices
  n: number;
}

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussian(rng: () => number): number {
  // Box-Muller; rng never returns exactly 0 after the +1e-12 guard
  const u = Math.max(rng(), 1e-12);
  const v = rng();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
}

export function generateDataset(config: DatasetConfig): Dataset {
  const { samples, height, width, channels, numClasses, seed } = config;
  const rng = makeRng(seed ^ 0x9e3779b9);
  const pixels = height * width * channels;
  const images = new Float32Array(samples * pixels);
  const labels = new Int32Array(samples);

  const classMeans: Float32Array[] = [];
  for (let c = 0; c < numClasses; c++) {
    const mean = new Float32Array(pixels);
    if (config.kind === "synthetic") {
      for (let i = 0; i < pixels; i++) mean[i] = gaussian(rng) * 0.8;
    } else {
      // stripes: frequency and orientation keyed to the class index
      const freq = 1 + (c % 3);
      const vertical = c % 2 === 0;
      let i = 0;
      for (let y = 0; y < height; y++) {
        for (let x = 0; x < width; x++) {
          const phase = vertical ? x : y;
          const value = Math.sin((2 * Math.PI * freq * phase) / (vertical ? width : height));
          for (let ch = 0; ch < channels; ch++) mean[i++] = value * (1 + 0.2 * ch);
        }
      }
    }
    classMeans.push(mean);
  }

  for (let s = 0; s < samples; s++) {
    const label = s % numClasses;
    labels[s] = label;
    const mean = classMeans[label];
    const offset = s * pixels;
    for (let i = 0; i < pixels; i++) {
      images[offset + i] = mean[i] + gaussian(rng) * 0.25;
    }
  }
  return { images, labels, n: samples };
}

/** Deterministic train/validation split: every fourth sample validates. */
export function splitDataset(data: Dataset, pixels: number): { train: Dataset; val: Dataset } {
  const valIdx: number[] = [];
  const trainIdx: number[] = [];
  for (let i = 0; i < data.n; i++) (i % 4 === 3 ? valIdx : trainIdx).push(i);

  const take = (idx: number[]): Dataset => {
    const images = new Float32Array(idx.length * pixels);
    const labels = new Int32Array(idx.length);
    idx.forEach((src, dst) => {
      images.set(data.images.subarray(src * pixels, (src + 1) * pixels), dst * pixels);
      labels[dst] = data.labels[src];
    });
    return { images, labels, n: idx.length };
  };
  return { train: take(trainIdx), val: take(valIdx) };
}
