import { describe, expect, it } from "vitest";
import { ArchValidationError, inferShapes, parseArch } from "../src/arch";

function cell(i1: number, i2: number, op1: string, op2: string, mode = "sum", included = true) {
  return { i1, i2, op1, op2, combine: { mode, included } };
}

function arch(blocks: unknown[], overrides: Record<string, unknown> = {}) {
  return parseArch({
    version: 1,
    input_shape: { height: 8, width: 8, channels: 3 },
    channel_width: 4,
    stem: true,
    num_classes: 3,
    blocks,
    ...overrides,
  });
}

describe("parseArch", () => {
  it("accepts the documented schema", () => {
    const parsed = arch([{ stride: 1, cells: [cell(1, 1, "conv3x3", "conv3x3")] }]);
    expect(parsed.blocks).toHaveLength(1);
    expect(parsed.blocks[0].cells[0].op1).toBe("conv3x3");
  });

  it("rejects unknown versions, ops and strides", () => {
    expect(() => arch([], { version: 2 })).toThrow(ArchValidationError);
    expect(() =>
      arch([{ stride: 1, cells: [cell(1, 1, "conv9x9", "conv3x3")] }]),
    ).toThrow(/unknown op/);
    expect(() => arch([{ stride: 3, cells: [] }])).toThrow(/stride/);
  });
});

describe("inferShapes", () => {
  it("halves spatial dims exactly once in a stride-2 block", () => {
    const parsed = arch([
      { stride: 2, cells: [cell(1, 1, "conv3x3", "conv3x3")] },
      { stride: 1, cells: [cell(1, 1, "conv3x3", "conv3x3")] },
    ]);
    const { blockSlots, output } = inferShapes(parsed);
    expect(blockSlots[0][1]).toEqual({ height: 4, width: 4, channels: 4 });
    expect(output).toEqual({ height: 4, width: 4, channels: 4 });
  });

  it("adds channels on concat and on the block output", () => {
    const parsed = arch([
      {
        stride: 1,
        cells: [
          cell(1, 1, "conv3x3", "conv3x3", "concat", true),
          cell(1, 1, "conv3x3", "conv3x3", "sum", true),
        ],
      },
    ]);
    const { output } = inferShapes(parsed);
    expect(output.channels).toBe(8 + 4);
  });

  it("rejects sum combines of unequal channel counts like the engine does", () => {
    // pooling preserves the 3 input channels, conv emits channel_width
    const parsed = arch([{ stride: 1, cells: [cell(1, 1, "avgpool3x3", "conv3x3")] }], {
      stem: false,
    });
    expect(() => inferShapes(parsed)).toThrow(/sum combine/);
  });

  it("rejects identity in a stride-2 input position", () => {
    const parsed = arch([{ stride: 2, cells: [cell(1, 1, "identity", "conv3x3")] }]);
    expect(() => inferShapes(parsed)).toThrow(/identity/);
  });

  it("rejects forward slot references and empty block outputs", () => {
    expect(() =>
      inferShapes(arch([{ stride: 1, cells: [cell(2, 1, "conv3x3", "conv3x3")] }])),
    ).toThrow(/slot reference/);
    expect(() =>
      inferShapes(arch([{ stride: 1, cells: [cell(1, 1, "conv3x3", "conv3x3", "sum", false)] }])),
    ).toThrow(/included/);
  });
});
