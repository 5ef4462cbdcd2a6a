export { parseRunLog, RunLogView, MetricsRecord, SchemaError, SUPPORTED_SCHEMA } from "./schema";
export { evalRoundSeries, smooth, aggregate, AggregatedSeries } from "./series";
export { summarize, formatCell, tableToCsv, lastEvalSuccesses } from "./table";
export { renderChart } from "./svg";
export { seriesToCsv } from "./csv";
export { expandGlob } from "./glob";
export { runCli, parseArgs } from "./cli";
