// Server-side SVG rendering; no DOM, no animation, deterministic output.

import * as echarts from "echarts";
import type { EChartsOption } from "echarts";

export function renderSvg(option: EChartsOption, width: number, height: number): string {
  const chart = echarts.init(null, null, { renderer: "svg", ssr: true, width, height });
  try {
    chart.setOption(option);
    return canonicalizeClasses(chart.renderToSVGString());
  } finally {
    chart.dispose();
  }
}

// zrender prefixes CSS classes and clip ids with a process-global instance
// counter, and numbers classes with another global counter, so two renders of
// the same figure differ in those names only.  Renumber classes by order of
// first appearance and drop the instance id to make the SVG byte-stable.
function canonicalizeClasses(svg: string): string {
  const seen = new Map<string, string>();
  return svg
    .replace(/zr\d+-cls-\d+/g, (token) => {
      if (!seen.has(token)) seen.set(token, `zr-cls-${seen.size}`);
      return seen.get(token)!;
    })
    .replace(/zr\d+-/g, "zr-");
}
