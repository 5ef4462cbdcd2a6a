/**
 * NDJSON run-log parsing.
 *
 * A log starts with a header record carrying the schema version and the
 * run's agent/environment tags, followed by demo/train/eval records. Only
 * schema version 1 is understood; anything else is rejected per file. A
 * truncated final line (a run killed mid-write) is tolerated and dropped.
 */

export const SUPPORTED_SCHEMA = 1;

export interface MetricsRecord {
  kind: string;
  step: number;
  [key: string]: unknown;
}

export interface RunLogView {
  path: string;
  schema: number;
  agent: string;
  env: string;
  seed: number;
  records: MetricsRecord[];
}

export class SchemaError extends Error {}

export function parseRunLog(text: string, path: string): RunLogView {
  const lines = text.split("\n");
  const records: MetricsRecord[] = [];
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === "") continue;
    let obj: unknown;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      if (i >= lines.length - 2) continue; // truncated tail is tolerated
      throw new SchemaError(`${path}:${i + 1}: invalid JSON record`);
    }
    const rec = obj as MetricsRecord;
    if (typeof rec.kind !== "string" || typeof rec.step !== "number") {
      throw new SchemaError(`${path}:${i + 1}: record missing kind/step`);
    }
    records.push(rec);
  }
  if (records.length === 0 || records[0].kind !== "header") {
    throw new SchemaError(`${path}: missing header record`);
  }
  const header = records[0];
  const schema = header.schema as number;
  if (schema !== SUPPORTED_SCHEMA) {
    throw new SchemaError(
      `${path}: unsupported log schema ${String(schema)} (supported: ${SUPPORTED_SCHEMA})`
    );
  }
  return {
    path,
    schema,
    agent: String(header.agent ?? "unknown"),
    env: String(header.env ?? "unknown"),
    seed: Number(header.seed ?? 0),
    records,
  };
}

export function evalEpisodes(log: RunLogView): MetricsRecord[] {
  return log.records.filter((r) => r.kind === "eval_episode");
}

export function trainEpisodes(log: RunLogView): MetricsRecord[] {
  return log.records.filter((r) => r.kind === "train_episode");
}
