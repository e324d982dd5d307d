/** Build a trainable tfjs model from a validated architecture. */

import type * as tfTypes from "@tensorflow/tfjs";
import { ArchJson, ArchValidationError, OpName, inferShapes } from "./arch";

// tfjs is loaded lazily so that protocol plumbing stays importable in tests
// without pulling in the numerical runtime.
let tfModule: typeof tfTypes | null = null;

export function tf(): typeof tfTypes {
  if (tfModule === null) {
    tfModule = require("@tensorflow/tfjs") as typeof tfTypes;
  }
  return tfModule;
}

type Sym = tfTypes.SymbolicTensor;

class SeedStream {
  constructor(private next: number) {}

  take(): number {
    this.next = (this.next * 1103515245 + 12345) % 2147483647;
    return this.next;
  }
}

function convInit(seeds: SeedStream) {
  return tf().initializers.glorotUniform({ seed: seeds.take() });
}

interface DilatedConvArgs {
  filters: number;
  stride: number;
  seed: number;
}

/** 3x3 convolution with dilation rate 2, built as a 5x5 kernel whose
 * off-tap entries are structural zeros; plain conv gradients then apply. */
function makeDilatedConvClass() {
  const t = tf();

  class DilatedConv3x3Layer extends t.layers.Layer {
    static className = "DilatedConv3x3Layer";
    private filters: number;
    private stride: number;
    private seed: number;
    private kernel: ReturnType<tfTypes.layers.Layer["addWeight"]> | null = null;

    constructor(args: DilatedConvArgs) {
      super({});
      this.filters = args.filters;
      this.stride = args.stride;
      this.seed = args.seed;
    }

    override build(inputShape: tfTypes.Shape | tfTypes.Shape[]): void {
      const shape = (Array.isArray(inputShape[0]) ? inputShape[0] : inputShape) as number[];
      const inChannels = shape[shape.length - 1] as number;
      this.kernel = this.addWeight(
        "kernel",
        [3, 3, inChannels, this.filters],
        "float32",
        t.initializers.glorotUniform({ seed: this.seed }),
      );
      super.build(inputShape);
    }

    override computeOutputShape(inputShape: tfTypes.Shape): tfTypes.Shape {
      const [batch, h, w] = inputShape as number[];
      return [
        batch,
        h == null ? null : Math.ceil(h / this.stride),
        w == null ? null : Math.ceil(w / this.stride),
        this.filters,
      ];
    }

    override call(inputs: tfTypes.Tensor | tfTypes.Tensor[]): tfTypes.Tensor {
      const input = (Array.isArray(inputs) ? inputs[0] : inputs) as tfTypes.Tensor4D;
      return t.tidy(() => {
        const k3 = this.kernel!.read() as tfTypes.Tensor4D;
        const col = (c: number) => t.slice(k3, [0, c, 0, 0], [3, 1, -1, -1]);
        const zeroCol = t.zerosLike(col(0));
        const wide = t.concat([col(0), zeroCol, col(1), zeroCol, col(2)], 1); // [3,5,ci,co]
        const row = (r: number) => t.slice(wide, [r, 0, 0, 0], [1, 5, -1, -1]);
        const zeroRow = t.zerosLike(row(0));
        const k5 = t.concat([row(0), zeroRow, row(1), zeroRow, row(2)], 0); // [5,5,ci,co]
        return t.relu(t.conv2d(input, k5, this.stride, "same"));
      });
    }
  }

  t.serialization.registerClass(DilatedConv3x3Layer);
  return DilatedConv3x3Layer;
}

type DilatedConvCtor = new (args: DilatedConvArgs) => tfTypes.layers.Layer;

let dilatedClass: DilatedConvCtor | null = null;

function DilatedConv3x3(args: DilatedConvArgs): tfTypes.layers.Layer {
  if (dilatedClass === null) {
    dilatedClass = makeDilatedConvClass() as unknown as DilatedConvCtor;
  }
  const ctor: DilatedConvCtor = dilatedClass;
  return new ctor(args);
}

function applyOp(
  op: OpName,
  input: Sym,
  stride: number,
  width: number,
  seeds: SeedStream,
): Sym {
  const t = tf();
  switch (op) {
    case "conv3x3":
      return t.layers
        .conv2d({
          filters: width,
          kernelSize: 3,
          strides: stride,
          padding: "same",
          activation: "relu",
          kernelInitializer: convInit(seeds),
        })
        .apply(input) as Sym;
    case "dwconv3x3":
    case "dwconv5x5":
      return t.layers
        .separableConv2d({
          filters: width,
          kernelSize: op === "dwconv3x3" ? 3 : 5,
          strides: stride,
          padding: "same",
          activation: "relu",
          depthwiseInitializer: convInit(seeds),
          pointwiseInitializer: convInit(seeds),
        })
        .apply(input) as Sym;
    case "conv1x7_7x1": {
      const mid = t.layers
        .conv2d({
          filters: width,
          kernelSize: [1, 7],
          strides: [1, stride],
          padding: "same",
          activation: "relu",
          kernelInitializer: convInit(seeds),
        })
        .apply(input) as Sym;
      return t.layers
        .conv2d({
          filters: width,
          kernelSize: [7, 1],
          strides: [stride, 1],
          padding: "same",
          activation: "relu",
          kernelInitializer: convInit(seeds),
        })
        .apply(mid) as Sym;
    }
    case "avgpool3x3":
      return t.layers
        .averagePooling2d({ poolSize: 3, strides: stride, padding: "same" })
        .apply(input) as Sym;
    case "maxpool3x3":
      return t.layers
        .maxPooling2d({ poolSize: 3, strides: stride, padding: "same" })
        .apply(input) as Sym;
    case "dilconv3x3":
      // the js backend cannot differentiate conv2d with dilation > 1, so the
      // dilated 3x3 is realized exactly as a 5x5 kernel with zero gaps
      return DilatedConv3x3({ filters: width, stride, seed: seeds.take() }).apply(
        input,
      ) as Sym;
    case "identity":
      if (stride !== 1) throw new ArchValidationError("identity cannot apply stride 2");
      return input;
  }
}

export function buildModel(arch: ArchJson, seed: number): tfTypes.LayersModel {
  inferShapes(arch); // reject shape-invalid networks before touching tfjs
  if (arch.num_classes < 2) {
    throw new ArchValidationError("training requires num_classes >= 2");
  }
  const t = tf();
  const seeds = new SeedStream((seed >>> 0) + 1);
  const { height, width, channels } = arch.input_shape;
  const input = t.input({ shape: [height, width, channels] });
  let current: Sym = input;
  if (arch.stem) {
    current = t.layers
      .conv2d({
        filters: arch.channel_width,
        kernelSize: 3,
        padding: "same",
        activation: "relu",
        kernelInitializer: convInit(seeds),
      })
      .apply(current) as Sym;
  }
  for (const block of arch.blocks) {
    const slots: Sym[] = [current];
    const included: Sym[] = [];
    for (const cell of block.cells) {
      const sides = [
        [cell.i1, cell.op1],
        [cell.i2, cell.op2],
      ].map(([slot, op]) =>
        applyOp(
          op as OpName,
          slots[(slot as number) - 1],
          block.stride === 2 && slot === 1 ? 2 : 1,
          arch.channel_width,
          seeds,
        ),
      );
      let out: Sym;
      if (cell.combine.mode === "sum") {
        out = t.layers.add().apply(sides) as Sym;
      } else {
        out = t.layers.concatenate({ axis: -1 }).apply(sides) as Sym;
      }
      slots.push(out);
      if (cell.combine.included) included.push(out);
    }
    current =
      included.length === 1
        ? included[0]
        : (t.layers.concatenate({ axis: -1 }).apply(included) as Sym);
  }
  const pooled = t.layers.globalAveragePooling2d({}).apply(current) as Sym;
  const logits = t.layers
    .dense({
      units: arch.num_classes,
      activation: "softmax",
      kernelInitializer: convInit(seeds),
    })
    .apply(pooled) as Sym;
  return t.model({ inputs: input, outputs: logits });
}
