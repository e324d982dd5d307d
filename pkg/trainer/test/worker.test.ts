import { execFileSync } from "node:child_process";
import { existsSync } from "node:fs";
import { join } from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

const WORKER = join(__dirname, "..", "dist", "worker.js");

function archJson(overrides: Record<string, unknown> = {}) {
  return {
    version: 1,
    input_shape: { height: 6, width: 6, channels: 3 },
    channel_width: 4,
    stem: true,
    num_classes: 3,
    blocks: [
      {
        stride: 1,
        cells: [
          { i1: 1, i2: 1, op1: "conv3x3", op2: "dwconv3x3", combine: { mode: "sum", included: true } },
        ],
      },
      {
        stride: 2,
        cells: [
          { i1: 1, i2: 1, op1: "conv3x3", op2: "maxpool3x3", combine: { mode: "concat", included: true } },
        ],
      },
    ],
    ...overrides,
  };
}

function serve(lines: string[], args: string[] = []) {
  const stdout = execFileSync(
    process.execPath,
    [WORKER, "--dataset", "synthetic", "--samples", "32", ...args],
    {
      input: lines.join("\n") + "\n",
      maxBuffer: 1024 * 1024,
      timeout: 120_000,
      encoding: "utf8",
      stdio: ["pipe", "pipe", "ignore"],
    },
  );
  return stdout
    .split("\n")
    .filter((l) => l.trim())
    .map((l) => JSON.parse(l));
}

describe("worker protocol", () => {
  beforeAll(() => {
    expect(existsSync(WORKER), "run `npm run build` first").toBe(true);
  });

  it("answers a scripted corpus with id-matched, line-valid replies", () => {
    const invalid = archJson({ stem: false });
    (invalid.blocks[0].cells[0] as { op1: string }).op1 = "avgpool3x3";
    const lines = [
      JSON.stringify({ id: "ok-1", arch: archJson(), seed: 1, epochs: 1 }),
      "definitely not json",
      JSON.stringify({ id: "shape-bad", arch: invalid, seed: 1, epochs: 1 }),
      JSON.stringify({ id: "no-arch-here" }),
      JSON.stringify({ id: "zz-out-of-lexical-order", arch: archJson(), seed: 2, epochs: 1 }),
    ];
    const replies = serve(lines);
    expect(replies).toHaveLength(5);
    const byId = new Map(replies.map((r) => [r.id, r]));
    expect(byId.get("ok-1").accuracy).toBeGreaterThanOrEqual(0);
    expect(byId.get("ok-1").accuracy).toBeLessThanOrEqual(1);
    expect(byId.get(null).error).toMatch(/JSON/);
    expect(byId.get("shape-bad").error).toMatch(/sum combine/);
    expect(byId.get("no-arch-here").error).toMatch(/arch/);
    expect(byId.get("zz-out-of-lexical-order").accuracy).toBeDefined();
    for (const reply of replies) {
      expect(Object.keys(reply).every((k) => ["id", "accuracy", "error", "wall_time"].includes(k))).toBe(true);
    }
  });

  it("repeats the same request with matching accuracy", () => {
    const request = JSON.stringify({ id: "r", arch: archJson(), seed: 9, epochs: 2 });
    const lines = [request.replace('"r"', '"r1"'), request.replace('"r"', '"r2"')];
    const replies = serve(lines);
    const [a, b] = replies.map((r) => r.accuracy as number);
    expect(Math.abs(a - b)).toBeLessThanOrEqual(0.05);
  });

  it("honors the image-size override and patterned dataset", () => {
    const replies = serve(
      [JSON.stringify({ id: "p", arch: archJson(), seed: 3, epochs: 1 })],
      ["--image-size", "8", "--dataset", "small-image-subset"],
    );
    expect(replies[0].accuracy).toBeGreaterThanOrEqual(0);
  });

  it("rejects unknown flags with exit code 2", () => {
    expect(() =>
      execFileSync(process.execPath, [WORKER, "--bogus"], {
        input: "",
        timeout: 30_000,
        stdio: ["pipe", "pipe", "ignore"],
      }),
    ).toThrowError(expect.objectContaining({ status: 2 }));
  });
});
