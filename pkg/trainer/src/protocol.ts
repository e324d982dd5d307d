/** Wire format: one JSON object per line on stdin/stdout. */

export interface TrainRequest {
  id: string;
  arch: unknown;
  seed: number;
  epochs: number;
}

export type TrainReply =
  | { id: string | null; accuracy: number; wall_time?: number }
  | { id: string | null; error: string };

export class ProtocolError extends Error {}

export function parseRequestLine(line: string): TrainRequest {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    throw new ProtocolError("request line is not valid JSON");
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolError("request must be a JSON object");
  }
  const rec = obj as Record<string, unknown>;
  if (typeof rec.id !== "string" && typeof rec.id !== "number") {
    throw new ProtocolError("request is missing an id");
  }
  if (rec.arch === undefined) {
    throw new ProtocolError("request is missing an arch");
  }
  return {
    id: String(rec.id),
    arch: rec.arch,
    seed: typeof rec.seed === "number" ? rec.seed : 0,
    epochs: typeof rec.epochs === "number" && rec.epochs >= 1 ? Math.floor(rec.epochs) : 1,
  };
}

export function serializeReply(reply: TrainReply): string {
  return JSON.stringify(reply);
}
