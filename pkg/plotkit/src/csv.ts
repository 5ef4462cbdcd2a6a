/** CSV emission for plotted series (one file per environment/metric). */

import { AggregatedSeries } from "./series";

export function seriesToCsv(series: AggregatedSeries[]): string {
  const lines = ["env,agent,metric,step,mean,min,max"];
  for (const s of series) {
    for (let i = 0; i < s.steps.length; i++) {
      lines.push(
        `${s.env},${s.agent},${s.metric},${s.steps[i]},` +
          `${s.mean[i]},${s.min[i]},${s.max[i]}`
      );
    }
  }
  return lines.join("\n") + "\n";
}
