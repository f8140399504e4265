// Discomfort heatmap colors: comfortable green through amber to red.

export function discomfortColor(value: number, alpha: number = 0.55): string {
  const t = Math.min(Math.max(value / 100, 0), 1);
  const r = Math.round(t < 0.5 ? 2 * t * 255 : 255);
  const g = Math.round(t < 0.5 ? 200 : (1 - (t - 0.5) * 2) * 200);
  return `rgba(${r}, ${g}, 60, ${alpha})`;
}

export interface HeatCell {
  x: number;
  y: number;
  w: number;
  h: number;
  color: string;
}

/** Flatten the service heatmap into drawable cells (nulls are skipped). */
export function heatmapCells(
  cells: (number | null)[][],
  bbox: [number, number, number, number],
): HeatCell[] {
  const [xmin, ymin, xmax, ymax] = bbox;
  const rows = cells.length;
  const cols = rows > 0 ? cells[0].length : 0;
  const w = (xmax - xmin) / cols;
  const h = (ymax - ymin) / rows;
  const out: HeatCell[] = [];
  for (let iy = 0; iy < rows; iy++) {
    for (let ix = 0; ix < cols; ix++) {
      const value = cells[iy][ix];
      if (value === null) continue;
      out.push({
        x: xmin + ix * w,
        y: ymin + iy * h,
        w,
        h,
        color: discomfortColor(value),
      });
    }
  }
  return out;
}
