import { readFileSync } from 'fs';
import { dirname, resolve } from 'path';
import { FigureKind, FIGURE_KINDS } from './figures';

export class SpecError extends Error {}

export interface PlotSpec {
  kind: FigureKind;
  /** resolved against the spec file's directory */
  inputs: string[];
  output: string;
  title?: string;
  xLabel?: string;
  yLabel?: string;
  width?: number;
  height?: number;
}

function fail(path: string, msg: string): never {
  throw new SpecError(`${path}: ${msg}`);
}

export function loadSpec(path: string): PlotSpec {
  let text: string;
  try {
    text = readFileSync(path, 'utf8');
  } catch {
    throw new SpecError(`spec file not found: ${path}`);
  }
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (e) {
    fail(path, `not valid JSON: ${(e as Error).message}`);
  }
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    fail(path, 'spec must be a JSON object');
  }
  const obj = raw as Record<string, unknown>;

  const known = new Set(['kind', 'inputs', 'output', 'title', 'xLabel',
                         'yLabel', 'width', 'height']);
  for (const key of Object.keys(obj)) {
    if (!known.has(key)) fail(path, `unknown key '${key}'`);
  }

  const kind = obj.kind;
  if (typeof kind !== 'string' || !FIGURE_KINDS.includes(kind as FigureKind)) {
    fail(path, `'kind' must be one of ${FIGURE_KINDS.join(', ')}, got ${JSON.stringify(kind)}`);
  }
  const inputs = obj.inputs;
  if (!Array.isArray(inputs) || inputs.length === 0 ||
      !inputs.every(v => typeof v === 'string')) {
    fail(path, `'inputs' must be a non-empty array of CSV paths`);
  }
  const output = obj.output;
  if (typeof output !== 'string' || !output.endsWith('.svg')) {
    fail(path, `'output' must be a .svg path`);
  }
  for (const key of ['title', 'xLabel', 'yLabel'] as const) {
    if (obj[key] !== undefined && typeof obj[key] !== 'string') {
      fail(path, `'${key}' must be a string`);
    }
  }
  for (const key of ['width', 'height'] as const) {
    const v = obj[key];
    if (v !== undefined && (typeof v !== 'number' || !(v >= 100) || !(v <= 4000))) {
      fail(path, `'${key}' must be a number in [100, 4000]`);
    }
  }

  const base = dirname(resolve(path));
  return {
    kind: kind as FigureKind,
    inputs: (inputs as string[]).map(p => resolve(base, p)),
    output: resolve(base, output),
    title: obj.title as string | undefined,
    xLabel: obj.xLabel as string | undefined,
    yLabel: obj.yLabel as string | undefined,
    width: obj.width as number | undefined,
    height: obj.height as number | undefined,
  };
}
