#!/usr/bin/env node
/**
 * myoe-plot --logs GLOB [--logs GLOB ...] --out DIR [--window N]
 *
 * Reads NDJSON run logs, writes per-environment learning-curve SVGs, the
 * plotted series as CSV, and a summary table (success over the last 100
 * evaluation episodes, "x.xx ± y.yy" cells).
 *
 * Exit codes: 0 on success, 1 if every input failed to parse or the output
 * could not be produced, 2 on usage errors. Individual unreadable files are
 * reported and skipped.
 */

import * as fs from "fs";
import * as path from "path";

import { seriesToCsv } from "./csv";
import { expandGlob } from "./glob";
import { RunLogView, parseRunLog } from "./schema";
import { aggregate } from "./series";
import { renderChart } from "./svg";
import { summarize, tableToCsv } from "./table";

export interface CliOptions {
  logs: string[];
  out: string;
  window: number;
}

export function parseArgs(argv: string[]): CliOptions {
  const opts: CliOptions = { logs: [], out: "", window: 10 };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--logs") opts.logs.push(argv[++i]);
    else if (a === "--out") opts.out = argv[++i];
    else if (a === "--window") opts.window = Number(argv[++i]);
    else throw new Error(`unknown argument: ${a}`);
  }
  if (opts.logs.length === 0 || !opts.out) {
    throw new Error("usage: myoe-plot --logs GLOB --out DIR [--window N]");
  }
  if (!Number.isFinite(opts.window) || opts.window < 1) {
    throw new Error("--window must be a positive integer");
  }
  return opts;
}

export function runCli(argv: string[], log: (msg: string) => void = console.error): number {
  let opts: CliOptions;
  try {
    opts = parseArgs(argv);
  } catch (err) {
    log(String(err instanceof Error ? err.message : err));
    return 2;
  }
  const files = opts.logs.flatMap(expandGlob);
  if (files.length === 0) {
    log(`no files match: ${opts.logs.join(", ")}`);
    return 1;
  }
  const parsed: RunLogView[] = [];
  for (const file of files) {
    try {
      parsed.push(parseRunLog(fs.readFileSync(file, "utf-8"), file));
    } catch (err) {
      log(`skipping ${file}: ${err instanceof Error ? err.message : err}`);
    }
  }
  if (parsed.length === 0) {
    log("all input logs failed to parse");
    return 1;
  }
  fs.mkdirSync(opts.out, { recursive: true });

  const envs = [...new Set(parsed.map((p) => p.env))].sort();
  for (const env of envs) {
    const members = parsed.filter((p) => p.env === env);
    for (const metric of ["success", "episode_return"]) {
      const agg = aggregate(members, metric, opts.window);
      const stem = `${env}-${metric.replace(/_/g, "-")}`;
      fs.writeFileSync(
        path.join(opts.out, `${stem}.svg`),
        renderChart(`${env}: ${metric}`, agg)
      );
      fs.writeFileSync(path.join(opts.out, `${stem}.csv`), seriesToCsv(agg));
    }
  }
  const cells = summarize(parsed);
  fs.writeFileSync(path.join(opts.out, "summary.csv"), tableToCsv(cells));
  log(`wrote report for ${parsed.length} runs to ${opts.out}`);
  return 0;
}

if (require.main === module) {
  process.exit(runCli(process.argv.slice(2)));
}
