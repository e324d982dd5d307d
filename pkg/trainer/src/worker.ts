/**
 * Trainer worker: reads one JSON request per stdin line, builds the network,
 * trains it briefly on a generated dataset, and writes one JSON reply per
 * line to stdout. Malformed requests get {"id", "error"} replies; the process
 * keeps serving until end-of-input and then exits 0.
 *
 * Only protocol bytes go to stdout; everything else (including library
 * banners) is routed to stderr. MEMNAS_TRAINER_DEBUG=1 traces the protocol.
 */

// route stray console output away from the protocol stream before any
// library can print its hello
console.log = (...args: unknown[]) => console.error(...args);

import { ArchValidationError, parseArch } from "./arch";
import { DatasetConfig, generateDataset, splitDataset } from "./data";
import { buildModel, tf } from "./model";
import { ProtocolError, TrainReply, parseRequestLine, serializeReply } from "./protocol";

interface WorkerConfig {
  dataset: "synthetic" | "small-image-subset";
  epochs: number | null; // null = per-request budget
  batchSize: number;
  lr: number;
  momentum: number;
  samples: number;
  imageSize: number | null; // null = the arch's own input size
  device: string;
}

function parseArgs(argv: string[]): WorkerConfig {
  const config: WorkerConfig = {
    dataset: "synthetic",
    epochs: null,
    batchSize: 16,
    lr: 0.01,
    momentum: 0.9,
    samples: 96,
    imageSize: null,
    device: "cpu",
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = argv[i + 1];
    switch (flag) {
      case "--dataset":
        if (value !== "synthetic" && value !== "small-image-subset") {
          throw new Error(`unknown dataset: ${value}`);
        }
        config.dataset = value;
        i++;
        break;
      case "--epochs":
        config.epochs = Math.max(1, parseInt(value, 10));
        i++;
        break;
      case "--batch-size":
        config.batchSize = Math.max(1, parseInt(value, 10));
        i++;
        break;
      case "--lr":
        config.lr = parseFloat(value);
        i++;
        break;
      case "--momentum":
        config.momentum = parseFloat(value);
        i++;
        break;
      case "--samples":
        config.samples = Math.max(8, parseInt(value, 10));
        i++;
        break;
      case "--image-size":
        config.imageSize = Math.max(4, parseInt(value, 10));
        i++;
        break;
      case "--device":
        config.device = value;
        i++;
        break;
      default:
        throw new Error(`unknown flag: ${flag}`);
    }
  }
  return config;
}

const TRACE = Boolean(process.env.MEMNAS_TRAINER_DEBUG);

function trace(direction: string, line: string) {
  if (TRACE) console.error(`[trainer ${direction}] ${line}`);
}

function send(reply: TrainReply) {
  const line = serializeReply(reply);
  trace("->", line);
  process.stdout.write(line + "\n");
}

function extractId(line: string): string | null {
  try {
    const obj = JSON.parse(line);
    if (obj && typeof obj === "object" && !Array.isArray(obj) && "id" in obj) {
      return String((obj as Record<string, unknown>).id);
    }
  } catch {
    // not JSON: no id to echo
  }
  return null;
}

async function handle(line: string, config: WorkerConfig): Promise<TrainReply> {
  const started = Date.now();
  const id: string | null = extractId(line);
  try {
    const request = parseRequestLine(line);
    const arch = parseArch(request.arch);
    if (config.imageSize !== null) {
      arch.input_shape = {
        height: config.imageSize,
        width: config.imageSize,
        channels: arch.input_shape.channels,
      };
    }
    const epochs = config.epochs ?? request.epochs;
    const model = buildModel(arch, request.seed);
    const t = tf();

    const dataConfig: DatasetConfig = {
      kind: config.dataset,
      samples: config.samples,
      height: arch.input_shape.height,
      width: arch.input_shape.width,
      channels: arch.input_shape.channels,
      numClasses: arch.num_classes,
      seed: request.seed,
    };
    const pixels = dataConfig.height * dataConfig.width * dataConfig.channels;
    const { train, val } = splitDataset(generateDataset(dataConfig), pixels);

    const shape = (n: number) => [n, dataConfig.height, dataConfig.width, dataConfig.channels];
    const xs = t.tensor4d(train.images, shape(train.n) as [number, number, number, number]);
    const ys = t.oneHot(t.tensor1d(train.labels, "int32"), arch.num_classes);
    const valXs = t.tensor4d(val.images, shape(val.n) as [number, number, number, number]);
    const valYs = t.oneHot(t.tensor1d(val.labels, "int32"), arch.num_classes);

    try {
      model.compile({
        optimizer: t.train.momentum(config.lr, config.momentum),
        loss: "categoricalCrossentropy",
        metrics: ["accuracy"],
      });
      await model.fit(xs, ys, {
        epochs,
        batchSize: Math.min(config.batchSize, train.n),
        shuffle: false,
        verbose: 0,
      });
      const evaluated = model.evaluate(valXs, valYs) as tfTypes_Scalars;
      const accuracy = (await evaluated[1].data())[0];
      evaluated.forEach((s) => s.dispose());
      return {
        id,
        accuracy: Math.min(1, Math.max(0, accuracy)),
        wall_time: (Date.now() - started) / 1000,
      };
    } finally {
      xs.dispose();
      ys.dispose();
      valXs.dispose();
      valYs.dispose();
      model.dispose();
    }
  } catch (err) {
    if (err instanceof ProtocolError || err instanceof ArchValidationError) {
      return { id, error: err.message };
    }
    return { id, error: `internal: ${err instanceof Error ? err.message : String(err)}` };
  }
}

type tfjs_Scalar = { data(): Promise<ArrayLike<number>>; dispose(): void };
type tfTypes_Scalars = tfjs_Scalar[];

async function main(): Promise<number> {
  let config: WorkerConfig;
  try {
    config = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const readline = await import("node:readline");
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  for await (const line of rl) {
    if (!line.trim()) continue;
    trace("<-", line);
    send(await handle(line, config));
  }
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`fatal: ${err}`);
    process.exit(1);
  },
);
