import { describe, expect, it } from "vitest";
import { DatasetConfig, generateDataset, makeRng, splitDataset } from "../src/data";

const base: DatasetConfig = {
  kind: "synthetic",
  samples: 32,
  height: 6,
  width: 6,
  channels: 3,
  numClasses: 4,
  seed: 11,
};

describe("generateDataset", () => {
  it("is deterministic for a given seed", () => {
    const a = generateDataset(base);
    const b = generateDataset(base);
    expect(Array.from(a.images.subarray(0, 20))).toEqual(Array.from(b.images.subarray(0, 20)));
    expect(Array.from(a.labels)).toEqual(Array.from(b.labels));
  });

  it("changes with the seed and covers all classes", () => {
    const a = generateDataset(base);
    const b = generateDataset({ ...base, seed: 12 });
    expect(a.images[0]).not.toBe(b.images[0]);
    expect(new Set(a.labels).size).toBe(base.numClasses);
  });

  it("supports the patterned subset variant", () => {
    const data = generateDataset({ ...base, kind: "small-image-subset" });
    expect(data.n).toBe(base.samples);
    expect(data.images.some((v) => v !== 0)).toBe(true);
  });
});

describe("splitDataset", () => {
  it("places every fourth sample in the validation split", () => {
    const pixels = base.height * base.width * base.channels;
    const { train, val } = splitDataset(generateDataset(base), pixels);
    expect(val.n).toBe(8);
    expect(train.n).toBe(24);
    expect(train.images.length).toBe(24 * pixels);
  });
});

describe("makeRng", () => {
  it("yields a reproducible uniform stream", () => {
    const a = makeRng(5);
    const b = makeRng(5);
    for (let i = 0; i < 100; i++) {
      const x = a();
      expect(x).toBe(b());
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThan(1);
    }
  });
});
