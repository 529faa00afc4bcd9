import { Table, SchemaError, validateHeader, column, numColumn } from './csv';
import { SCHEMAS } from './schema';
import { ChartSpec, Series, VLine, TextMark, PALETTE, renderChart } from './svg';

export type FigureKind =
  'rate-lines' | 'distance-scan' | 'ber-waterfall' |
  'doppler-slices' | 'target-recovery';

export const FIGURE_KINDS: FigureKind[] = [
  'rate-lines', 'distance-scan', 'ber-waterfall',
  'doppler-slices', 'target-recovery',
];

export interface FigureOptions {
  title?: string;
  xLabel?: string;
  yLabel?: string;
  width?: number;
  height?: number;
}

function shortNum(v: number): string {
  const s = v.toPrecision(4);
  return s.includes('.') ? s.replace(/0+$/, '').replace(/\.$/, '') : s;
}

/** Match the table against candidate schemas; on failure, diff vs the closest. */
function identify(table: Table, candidates: string[]): string {
  for (const c of candidates) {
    const exp = SCHEMAS[c];
    if (table.header.length === exp.length &&
        table.header.every((h, i) => h === exp[i])) {
      return c;
    }
  }
  let best = candidates[0];
  let bestShared = -1;
  for (const c of candidates) {
    const shared = SCHEMAS[c].filter(col => table.header.includes(col)).length;
    if (shared > bestShared) {
      bestShared = shared;
      best = c;
    }
  }
  validateHeader(table, SCHEMAS[best]);
  return best;
}

function requireRows(table: Table): void {
  if (table.rows.length === 0) {
    throw new SchemaError(`${table.path}: no data rows`);
  }
}

/** Row indices grouped by key, preserving first-appearance order. */
function groupRows(keys: string[]): Map<string, number[]> {
  const groups = new Map<string, number[]>();
  keys.forEach((k, i) => {
    const g = groups.get(k);
    if (g) g.push(i);
    else groups.set(k, [i]);
  });
  return groups;
}

function pick(values: number[], idx: number[]): number[] {
  return idx.map(i => values[i]);
}

// --- rate-lines: achievable rate vs Eb/N0, one line per packing factor ----
// Accepts any mix of analytic-capacity and Monte-Carlo rate tables; rates in
// bits/symbol are normalized by tau * (1 + beta) onto the shared
// bits/s/Hz axis.

function rateLines(tables: Table[]): ChartSpec {
  const series: Series[] = [];
  for (const table of tables) {
    const which = identify(table, ['capacity', 'rates']);
    requireRows(table);
    const tau = numColumn(table, 'tau');
    const ebn0 = numColumn(table, 'EbN0_dB');
    const rate = numColumn(table, 'rate');
    const beta = numColumn(table, 'beta');
    const tag = which === 'capacity'
      ? column(table, 'method')
      : column(table, 'constellation');
    const keys = tau.map((t, i) => `${tag[i]} tau=${shortNum(t)}`);
    for (const [label, idx] of groupRows(keys)) {
      const y = which === 'capacity'
        ? pick(rate, idx)
        : idx.map(i => rate[i] / (tau[i] * (1 + beta[i])));
      series.push({
        label,
        x: pick(ebn0, idx),
        y,
        style: which === 'capacity' ? 'line' : 'both',
      });
    }
  }
  return {
    title: 'Achievable rate vs Eb/N0',
    xLabel: 'Eb/N0 (dB)',
    yLabel: 'rate (bits/s/Hz)',
    width: 720,
    height: 440,
    series,
  };
}

// --- distance-scan: minimum squared distance vs packing factor ------------
// One line per pulse; the dashed vertical line marks the detected limit
// below which the minimum distance drops.

function distanceScan(tables: Table[]): ChartSpec {
  if (tables.length !== 1) {
    throw new SchemaError(`distance-scan takes exactly 1 input, got ${tables.length}`);
  }
  const table = tables[0];
  identify(table, ['mazo']);
  requireRows(table);
  const kind = column(table, 'kind');
  const beta = numColumn(table, 'beta');
  const tau = numColumn(table, 'tau');
  const d2min = numColumn(table, 'd2min');
  const limit = numColumn(table, 'limit');
  const keys = kind.map((k, i) => k === 'sinc' ? 'sinc' : `${k} beta=${shortNum(beta[i])}`);
  const series: Series[] = [];
  const vlines: VLine[] = [];
  let i = 0;
  for (const [label, idx] of groupRows(keys)) {
    const order = [...idx].sort((a, b) => tau[a] - tau[b]);
    const color = PALETTE[i % PALETTE.length];
    series.push({ label, x: pick(tau, order), y: pick(d2min, order), color, style: 'line' });
    vlines.push({ x: limit[idx[0]], color, dash: '5 4' });
    i++;
  }
  return {
    title: 'Minimum distance vs packing factor',
    xLabel: 'packing factor tau',
    yLabel: 'min squared distance',
    width: 720,
    height: 440,
    series,
    vlines,
  };
}

// --- ber-waterfall: BER vs Eb/N0 on a log axis -----------------------------
// Iteration-resolved tables get one line per receiver iteration; uncoded
// tables get one line per (tau, equalizer). Zero-error points cannot sit on
// a log axis and are dropped.

function berWaterfall(tables: Table[]): ChartSpec {
  if (tables.length !== 1) {
    throw new SchemaError(`ber-waterfall takes exactly 1 input, got ${tables.length}`);
  }
  const table = tables[0];
  const which = identify(table, ['coded', 'ber_td', 'ber_fd']);
  requireRows(table);
  const ebn0 = numColumn(table, 'EbN0_dB');
  const ber = numColumn(table, 'ber');
  let keys: string[];
  if (which === 'coded') {
    keys = column(table, 'iteration').map(v => `iteration ${v}`);
  } else {
    const tau = numColumn(table, 'tau');
    const eq = column(table, 'equalizer');
    keys = tau.map((t, i) => `${eq[i]} tau=${shortNum(t)}`);
  }
  const series: Series[] = [];
  for (const [label, idx] of groupRows(keys)) {
    const kept = idx.filter(i => ber[i] > 0);
    if (kept.length === 0) continue;
    series.push({ label, x: pick(ebn0, kept), y: pick(ber, kept) });
  }
  if (series.length === 0) {
    throw new SchemaError(`${table.path}: every BER is zero, nothing to draw on a log axis`);
  }
  return {
    title: 'Bit error rate vs Eb/N0',
    xLabel: 'Eb/N0 (dB)',
    yLabel: 'BER',
    width: 720,
    height: 440,
    yLog: true,
    series,
  };
}

// --- doppler-slices: zero-delay ambiguity slice per packing factor ---------
// Optional second input overlays the detected spurious peaks as open
// circles.

function dopplerSlices(tables: Table[]): ChartSpec {
  if (tables.length < 1 || tables.length > 2) {
    throw new SchemaError(`doppler-slices takes 1 or 2 inputs, got ${tables.length}`);
  }
  const grid = tables[0];
  identify(grid, ['af_grid']);
  requireRows(grid);
  const delay = numColumn(grid, 'delay');
  const tau = numColumn(grid, 'tau');
  const doppler = numColumn(grid, 'doppler');
  const value = numColumn(grid, 'value');
  const zero = delay.map((_, i) => i).filter(i => delay[i] === 0);
  if (zero.length === 0) {
    throw new SchemaError(`${grid.path}: no zero-delay rows to slice`);
  }
  const keys = zero.map(i => `tau=${shortNum(tau[i])}`);
  const series: Series[] = [];
  for (const [label, idx] of groupRows(keys)) {
    const rows = pick(zero, idx);
    series.push({ label, x: pick(doppler, rows), y: pick(value, rows), style: 'line' });
  }
  if (tables.length === 2) {
    const peaks = tables[1];
    identify(peaks, ['af_peaks']);
    if (peaks.rows.length > 0) {
      series.push({
        label: 'replica peaks',
        x: numColumn(peaks, 'doppler'),
        y: numColumn(peaks, 'value'),
        color: '#000000',
        style: 'dot',
        r: 4,
        open: true,
      });
    }
  }
  return {
    title: 'Expected squared ambiguity, zero-delay slice',
    xLabel: 'Doppler (cycles per unit time)',
    yLabel: 'normalized expected |ambiguity|^2',
    width: 720,
    height: 440,
    yLog: true,
    series,
  };
}

// --- target-recovery: per-run Doppler estimates as strips per packing ------
// Strongest and second estimates cluster at the true target Dopplers when
// recovery works; the optional summary input annotates recovery rates.

function targetRecovery(tables: Table[]): ChartSpec {
  if (tables.length < 1 || tables.length > 2) {
    throw new SchemaError(`target-recovery takes 1 or 2 inputs, got ${tables.length}`);
  }
  const runs = tables[0];
  identify(runs, ['sense_ml_runs']);
  requireRows(runs);
  const tau = numColumn(runs, 'tau');
  const est1 = numColumn(runs, 'est_doppler_1');
  const est2 = numColumn(runs, 'est_doppler_2');
  const series: Series[] = [];
  const yTicks: number[] = [];
  let i = 0;
  for (const [key, idx] of groupRows(tau.map(t => shortNum(t)))) {
    const t = tau[idx[0]];
    yTicks.push(t);
    const color = PALETTE[i % PALETTE.length];
    series.push({
      label: `tau=${key} strongest`,
      x: pick(est1, idx),
      y: idx.map(() => t + 0.03),
      color,
      style: 'dot',
    });
    series.push({
      label: `tau=${key} second`,
      x: pick(est2, idx),
      y: idx.map(() => t - 0.03),
      color,
      style: 'dot',
      open: true,
    });
    i++;
  }
  const texts: TextMark[] = [];
  if (tables.length === 2) {
    const summary = tables[1];
    identify(summary, ['sense_ml_summary']);
    const stau = numColumn(summary, 'tau');
    const both = numColumn(summary, 'both_rate');
    const weak = numColumn(summary, 'weak_rate');
    const xAll = est1.concat(est2);
    const xRight = Math.max(...xAll);
    stau.forEach((t, j) => {
      texts.push({
        x: xRight,
        y: t + 0.11,
        text: `both ${Math.round(both[j] * 100)}%, weak ${Math.round(weak[j] * 100)}%`,
        anchor: 'end',
      });
    });
  }
  return {
    title: 'Two-target Doppler estimates across runs',
    xLabel: 'estimated Doppler (cycles per unit time)',
    yLabel: 'packing factor tau',
    width: 720,
    height: 440,
    series,
    yTicks,
    texts,
  };
}

const RENDERERS: Record<FigureKind, (tables: Table[]) => ChartSpec> = {
  'rate-lines': rateLines,
  'distance-scan': distanceScan,
  'ber-waterfall': berWaterfall,
  'doppler-slices': dopplerSlices,
  'target-recovery': targetRecovery,
};

export function renderFigure(kind: FigureKind, tables: Table[],
                             opts: FigureOptions = {}): string {
  if (tables.length === 0) {
    throw new SchemaError('at least one input table is required');
  }
  const chart = RENDERERS[kind](tables);
  if (opts.title !== undefined) chart.title = opts.title;
  if (opts.xLabel !== undefined) chart.xLabel = opts.xLabel;
  if (opts.yLabel !== undefined) chart.yLabel = opts.yLabel;
  if (opts.width !== undefined) chart.width = opts.width;
  if (opts.height !== undefined) chart.height = opts.height;
  return renderChart(chart);
}
