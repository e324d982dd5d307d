/**
 * Architecture JSON schema types, shape inference and validation.
 *
 * Mirrors the engine-side contract: slot 1 of a block is the block input and
 * slot k+1 is the k-th cell's combine output; conv-family ops emit
 * channel_width channels, pooling preserves channels, identity is a shape
 * passthrough; in a stride-2 block exactly the ops reading the block input
 * apply stride 2 (so an identity there is invalid); sum combines need equal
 * shapes, concat needs equal spatial dims; the block output concatenates the
 * included cell outputs.
 */

export const OP_NAMES = [
  "conv3x3",
  "dwconv3x3",
  "dwconv5x5",
  "conv1x7_7x1",
  "avgpool3x3",
  "maxpool3x3",
  "dilconv3x3",
  "identity",
] as const;

export type OpName = (typeof OP_NAMES)[number];

export interface CombineJson {
  mode: "sum" | "concat";
  included: boolean;
}

export interface CellJson {
  i1: number;
  i2: number;
  op1: OpName;
  op2: OpName;
  combine: CombineJson;
}

export interface BlockJson {
  stride: number;
  cells: CellJson[];
}

export interface ArchJson {
  version: number;
  input_shape: { height: number; width: number; channels: number };
  channel_width: number;
  stem: boolean;
  num_classes: number;
  blocks: BlockJson[];
}

export interface Shape {
  height: number;
  width: number;
  channels: number;
}

export class ArchValidationError extends Error {}

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

export function parseArch(raw: unknown): ArchJson {
  if (!isRecord(raw)) throw new ArchValidationError("arch must be an object");
  if (raw.version !== 1) throw new ArchValidationError(`unsupported arch version: ${raw.version}`);
  const shape = raw.input_shape;
  if (!isRecord(shape)) throw new ArchValidationError("missing input_shape");
  for (const key of ["height", "width", "channels"]) {
    const v = (shape as Record<string, unknown>)[key];
    if (typeof v !== "number" || v < 1) throw new ArchValidationError(`bad input_shape.${key}`);
  }
  if (typeof raw.channel_width !== "number" || raw.channel_width < 1) {
    throw new ArchValidationError("bad channel_width");
  }
  if (!Array.isArray(raw.blocks)) throw new ArchValidationError("blocks must be an array");
  const blocks: BlockJson[] = raw.blocks.map((blk, bi) => {
    if (!isRecord(blk)) throw new ArchValidationError(`block ${bi + 1} must be an object`);
    if (blk.stride !== 1 && blk.stride !== 2) {
      throw new ArchValidationError(`block ${bi + 1}: stride must be 1 or 2`);
    }
    if (!Array.isArray(blk.cells)) throw new ArchValidationError(`block ${bi + 1}: bad cells`);
    const cells = blk.cells.map((cell, ci) => {
      if (!isRecord(cell)) throw new ArchValidationError(`cell ${ci + 1} must be an object`);
      const { i1, i2, op1, op2, combine } = cell as Partial<CellJson> & Record<string, unknown>;
      if (typeof i1 !== "number" || typeof i2 !== "number" || i1 < 1 || i2 < 1) {
        throw new ArchValidationError(`block ${bi + 1} cell ${ci + 1}: bad input slots`);
      }
      for (const op of [op1, op2]) {
        if (typeof op !== "string" || !OP_NAMES.includes(op as OpName)) {
          throw new ArchValidationError(`block ${bi + 1} cell ${ci + 1}: unknown op ${op}`);
        }
      }
      if (
        !isRecord(combine) ||
        (combine.mode !== "sum" && combine.mode !== "concat") ||
        typeof combine.included !== "boolean"
      ) {
        throw new ArchValidationError(`block ${bi + 1} cell ${ci + 1}: bad combine`);
      }
      return cell as unknown as CellJson;
    });
    return { stride: blk.stride, cells };
  });
  return {
    version: 1,
    input_shape: shape as ArchJson["input_shape"],
    channel_width: raw.channel_width,
    stem: Boolean(raw.stem),
    num_classes: typeof raw.num_classes === "number" ? raw.num_classes : 0,
    blocks,
  };
}

const POOL_OPS: ReadonlySet<string> = new Set(["avgpool3x3", "maxpool3x3"]);

function opOutputShape(op: OpName, input: Shape, stride: number, width: number): Shape {
  if (op === "identity") {
    if (stride !== 1) throw new ArchValidationError("identity cannot apply stride 2");
    return input;
  }
  const height = Math.ceil(input.height / stride);
  const w = Math.ceil(input.width / stride);
  if (POOL_OPS.has(op)) return { height, width: w, channels: input.channels };
  return { height, width: w, channels: width };
}

function sameShape(a: Shape, b: Shape): boolean {
  return a.height === b.height && a.width === b.width && a.channels === b.channels;
}

/** Shapes of every slot of every block, validating as it goes. */
export function inferShapes(arch: ArchJson): { blockSlots: Shape[][]; output: Shape } {
  let current: Shape = arch.stem
    ? { ...arch.input_shape, channels: arch.channel_width }
    : { ...arch.input_shape };
  const blockSlots: Shape[][] = [];
  arch.blocks.forEach((block, bi) => {
    const slots: Shape[] = [current];
    block.cells.forEach((cell, ci) => {
      if (cell.i1 > slots.length || cell.i2 > slots.length) {
        throw new ArchValidationError(
          `block ${bi + 1} cell ${ci + 1}: slot reference ahead of definition`,
        );
      }
      const outs = [
        [cell.i1, cell.op1],
        [cell.i2, cell.op2],
      ].map(([slot, op]) =>
        opOutputShape(
          op as OpName,
          slots[(slot as number) - 1],
          block.stride === 2 && slot === 1 ? 2 : 1,
          arch.channel_width,
        ),
      );
      let out: Shape;
      if (cell.combine.mode === "sum") {
        if (!sameShape(outs[0], outs[1])) {
          throw new ArchValidationError(
            `block ${bi + 1} cell ${ci + 1}: sum combine of unequal shapes`,
          );
        }
        out = outs[0];
      } else {
        if (outs[0].height !== outs[1].height || outs[0].width !== outs[1].width) {
          throw new ArchValidationError(
            `block ${bi + 1} cell ${ci + 1}: concat combine of unequal spatial dims`,
          );
        }
        out = { ...outs[0], channels: outs[0].channels + outs[1].channels };
      }
      slots.push(out);
    });
    const included = block.cells
      .map((cell, ci) => (cell.combine.included ? slots[ci + 1] : null))
      .filter((s): s is Shape => s !== null);
    if (included.length === 0) {
      throw new ArchValidationError(`block ${bi + 1}: no cell output is included`);
    }
    if (included.some((s) => s.height !== included[0].height || s.width !== included[0].width)) {
      throw new ArchValidationError(`block ${bi + 1}: included outputs disagree on spatial dims`);
    }
    current = {
      height: included[0].height,
      width: included[0].width,
      channels: included.reduce((sum, s) => sum + s.channels, 0),
    };
    blockSlots.push(slots);
  });
  return { blockSlots, output: current };
}
