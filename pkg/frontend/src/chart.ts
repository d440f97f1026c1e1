/** Tiny SVG line-chart math, kept pure for testing. */

export interface ChartScale {
  width: number;
  height: number;
  maxY: number;
}

/** Map a series to SVG polyline points ("x,y x,y …"), newest at the right
 * edge. Values are clamped to the scale so spikes stay on-canvas.
 */
export function polylinePoints(values: number[], scale: ChartScale): string {
  if (values.length === 0) {
    return "";
  }
  if (scale.maxY <= 0 || scale.width <= 0 || scale.height <= 0) {
    throw new Error("chart scale must be positive");
  }
  const step = values.length > 1 ? scale.width / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const clamped = Math.min(Math.max(v, 0), scale.maxY);
      const x = values.length > 1 ? i * step : scale.width / 2;
      const y = scale.height - (clamped / scale.maxY) * scale.height;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

/** A readable ceiling for the y-axis: the next "nice" value above the max
 * observed, with a floor so a flat series still has headroom.
 */
export function niceCeiling(values: number[], floor = 10): number {
  const max = values.reduce((a, b) => Math.max(a, b), 0);
  if (max <= floor) {
    return floor;
  }
  const magnitude = Math.pow(10, Math.floor(Math.log10(max)));
  for (const mult of [1, 2, 5, 10]) {
    if (max <= mult * magnitude) {
      return mult * magnitude;
    }
  }
  return 10 * magnitude;
}
