// Hand-rolled SVG chart writer. Everything is emitted in a fixed order with
// fixed number formatting, so identical chart specs produce identical bytes.

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color?: string;
  dash?: string;
  /** 'line' joins points, 'dot' draws markers only, 'both' does both. */
  style?: 'line' | 'dot' | 'both';
  /** marker radius in px when dots are drawn */
  r?: number;
  /** open circles instead of filled */
  open?: boolean;
}

export interface VLine {
  x: number;
  color?: string;
  dash?: string;
}

export interface TextMark {
  x: number;
  y: number;
  text: string;
  anchor?: 'start' | 'middle' | 'end';
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  width: number;
  height: number;
  xLog?: boolean;
  yLog?: boolean;
  series: Series[];
  vlines?: VLine[];
  texts?: TextMark[];
  /** explicit tick positions; default is computed from the data */
  xTicks?: number[];
  yTicks?: number[];
  legend?: boolean;
}

export const PALETTE = [
  '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd',
  '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf',
];

const MARGIN = { top: 34, right: 24, bottom: 52, left: 72 };
const LEGEND_WIDTH = 150;

function px(v: number): string {
  // two decimals is below visual resolution and keeps output stable
  return v.toFixed(2);
}

function trimNum(s: string): string {
  return s.includes('.') ? s.replace(/0+$/, '').replace(/\.$/, '') : s;
}

/** Tick/annotation label formatting: plain within [1e-3, 1e4), else e-notation. */
export function fmt(v: number): string {
  if (v === 0) return '0';
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) {
    const e = Math.floor(Math.log10(a));
    const m = trimNum((v / 10 ** e).toPrecision(3));
    return m === '1' ? `1e${e}` : m === '-1' ? `-1e${e}` : `${m}e${e}`;
  }
  return trimNum(v.toPrecision(6));
}

export function esc(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** Round tick step to 1/2/5 times a power of ten covering [lo, hi]. */
export function niceTicks(lo: number, hi: number, n = 6): number[] {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.5 : 1;
    lo -= pad;
    hi += pad;
  }
  const raw = (hi - lo) / Math.max(n - 1, 1);
  const mag = 10 ** Math.floor(Math.log10(raw));
  const norm = raw / mag;
  const step = (norm <= 1 ? 1 : norm <= 2 ? 2 : norm <= 5 ? 5 : 10) * mag;
  const first = Math.ceil(lo / step - 1e-9) * step;
  const ticks: number[] = [];
  for (let t = first; t <= hi + step * 1e-9; t += step) {
    ticks.push(Math.abs(t) < step * 1e-9 ? 0 : t);
  }
  return ticks;
}

/** Powers of ten spanning [lo, hi]; lo must be positive. */
export function logTicks(lo: number, hi: number): number[] {
  const e0 = Math.floor(Math.log10(lo) + 1e-9);
  const e1 = Math.ceil(Math.log10(hi) - 1e-9);
  const ticks: number[] = [];
  for (let e = e0; e <= e1; e++) ticks.push(10 ** e);
  return ticks;
}

interface Scale {
  (v: number): number;
  lo: number;
  hi: number;
  ticks: number[];
}

function makeScale(values: number[], explicit: number[] | undefined,
                   log: boolean, r0: number, r1: number): Scale {
  if (values.length === 0) throw new Error('no data for axis');
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  let ticks: number[];
  if (log) {
    if (lo <= 0) throw new Error('log axis needs positive values');
    ticks = explicit ?? logTicks(lo, hi);
    lo = Math.min(lo, ticks[0]);
    hi = Math.max(hi, ticks[ticks.length - 1]);
    const llo = Math.log10(lo);
    const lhi = Math.log10(hi);
    const f = ((v: number) =>
      r0 + (Math.log10(v) - llo) / (lhi - llo || 1) * (r1 - r0)) as Scale;
    f.lo = lo; f.hi = hi; f.ticks = ticks;
    return f;
  }
  ticks = explicit ?? niceTicks(lo, hi);
  lo = Math.min(lo, ticks[0]);
  hi = Math.max(hi, ticks[ticks.length - 1]);
  if (explicit) {
    // explicit ticks mark categories; pad so the extremes sit inside
    const pad = (hi - lo || 1) * 0.18;
    lo -= pad;
    hi += pad;
  }
  const f = ((v: number) => r0 + (v - lo) / (hi - lo || 1) * (r1 - r0)) as Scale;
  f.lo = lo; f.hi = hi; f.ticks = ticks;
  return f;
}

export function renderChart(spec: ChartSpec): string {
  const drawn = spec.series.filter(s => s.x.length > 0);
  if (drawn.length === 0) {
    throw new Error('nothing to draw: every series is empty');
  }
  const legend = spec.legend !== false;
  const right = MARGIN.right + (legend ? LEGEND_WIDTH : 0);
  const x0 = MARGIN.left;
  const x1 = spec.width - right;
  const y0 = spec.height - MARGIN.bottom;
  const y1 = MARGIN.top;

  const texts = spec.texts ?? [];
  const xs = drawn.flatMap(s => s.x)
    .concat((spec.vlines ?? []).map(v => v.x))
    .concat(texts.map(t => t.x));
  const ys = drawn.flatMap(s => s.y).concat(texts.map(t => t.y));
  const sx = makeScale(xs, spec.xTicks, !!spec.xLog, x0, x1);
  const sy = makeScale(ys, spec.yTicks, !!spec.yLog, y0, y1);

  const out: string[] = [];
  out.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${spec.width}" height="${spec.height}" viewBox="0 0 ${spec.width} ${spec.height}">`);
  out.push(`<rect width="${spec.width}" height="${spec.height}" fill="white"/>`);
  out.push(`<text x="${px((x0 + x1) / 2)}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">${esc(spec.title)}</text>`);

  // gridlines under everything else
  for (const t of sx.ticks) {
    out.push(`<line x1="${px(sx(t))}" y1="${px(y0)}" x2="${px(sx(t))}" y2="${px(y1)}" stroke="#dddddd" stroke-width="1"/>`);
  }
  for (const t of sy.ticks) {
    out.push(`<line x1="${px(x0)}" y1="${px(sy(t))}" x2="${px(x1)}" y2="${px(sy(t))}" stroke="#dddddd" stroke-width="1"/>`);
  }

  for (const v of spec.vlines ?? []) {
    out.push(`<line x1="${px(sx(v.x))}" y1="${px(y0)}" x2="${px(sx(v.x))}" y2="${px(y1)}" stroke="${v.color ?? '#555555'}" stroke-width="1" stroke-dasharray="${v.dash ?? '5 4'}"/>`);
  }

  drawn.forEach((s, i) => {
    const color = s.color ?? PALETTE[i % PALETTE.length];
    const style = s.style ?? 'both';
    if (style !== 'dot') {
      const pts = s.x.map((v, j) => `${px(sx(v))},${px(sy(s.y[j]))}`).join(' ');
      const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : '';
      out.push(`<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="1.5"${dash}/>`);
    }
    if (style !== 'line') {
      const r = s.r ?? 2.5;
      const fill = s.open ? 'none' : color;
      const stroke = s.open ? ` stroke="${color}" stroke-width="1.2"` : '';
      for (let j = 0; j < s.x.length; j++) {
        out.push(`<circle cx="${px(sx(s.x[j]))}" cy="${px(sy(s.y[j]))}" r="${r}" fill="${fill}"${stroke}/>`);
      }
    }
  });

  // frame and ticks on top of the data
  out.push(`<rect x="${px(x0)}" y="${px(y1)}" width="${px(x1 - x0)}" height="${px(y0 - y1)}" fill="none" stroke="#333333" stroke-width="1"/>`);
  for (const t of sx.ticks) {
    out.push(`<line x1="${px(sx(t))}" y1="${px(y0)}" x2="${px(sx(t))}" y2="${px(y0 + 5)}" stroke="#333333" stroke-width="1"/>`);
    out.push(`<text x="${px(sx(t))}" y="${px(y0 + 18)}" font-family="sans-serif" font-size="10" text-anchor="middle">${esc(fmt(t))}</text>`);
  }
  for (const t of sy.ticks) {
    out.push(`<line x1="${px(x0 - 5)}" y1="${px(sy(t))}" x2="${px(x0)}" y2="${px(sy(t))}" stroke="#333333" stroke-width="1"/>`);
    out.push(`<text x="${px(x0 - 8)}" y="${px(sy(t) + 3.5)}" font-family="sans-serif" font-size="10" text-anchor="end">${esc(fmt(t))}</text>`);
  }
  out.push(`<text x="${px((x0 + x1) / 2)}" y="${px(y0 + 38)}" font-family="sans-serif" font-size="12" text-anchor="middle">${esc(spec.xLabel)}</text>`);
  out.push(`<text x="18" y="${px((y0 + y1) / 2)}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 ${px((y0 + y1) / 2)})">${esc(spec.yLabel)}</text>`);

  for (const m of texts) {
    out.push(`<text x="${px(sx(m.x))}" y="${px(sy(m.y))}" font-family="sans-serif" font-size="11" text-anchor="${m.anchor ?? 'start'}">${esc(m.text)}</text>`);
  }

  if (legend) {
    const lx = x1 + 12;
    drawn.forEach((s, i) => {
      const color = s.color ?? PALETTE[i % PALETTE.length];
      const ly = y1 + 10 + i * 18;
      if ((s.style ?? 'both') === 'dot') {
        const fill = s.open ? 'none' : color;
        const stroke = s.open ? ` stroke="${color}" stroke-width="1.2"` : '';
        out.push(`<circle cx="${px(lx + 11)}" cy="${px(ly)}" r="3" fill="${fill}"${stroke}/>`);
      } else {
        const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : '';
        out.push(`<line x1="${px(lx)}" y1="${px(ly)}" x2="${px(lx + 22)}" y2="${px(ly)}" stroke="${color}" stroke-width="1.5"${dash}/>`);
      }
      out.push(`<text x="${px(lx + 28)}" y="${px(ly + 3.5)}" font-family="sans-serif" font-size="11">${esc(s.label)}</text>`);
    });
  }

  out.push('</svg>');
  return out.join('\n') + '\n';
}
