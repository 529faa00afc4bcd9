#!/usr/bin/env node
// ftn-plots --spec <path> [--out <file>]
// Reads the CSV inputs named by the spec, renders one SVG figure, writes it.
// Exit codes: 0 ok, 2 spec/schema/CSV problem, 1 unexpected failure.

import { readFileSync, writeFileSync, mkdirSync } from 'fs';
import { dirname, resolve } from 'path';
import { parseCsv, CsvError, SchemaError, Table } from './csv';
import { renderFigure } from './figures';
import { loadSpec, SpecError } from './spec';

const USAGE = 'usage: ftn-plots --spec <path> [--out <file>]';

export function main(argv: string[]): number {
  let specPath: string | undefined;
  let outOverride: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === '--spec') specPath = argv[++i];
    else if (a === '--out') outOverride = argv[++i];
    else if (a === '--help' || a === '-h') {
      process.stdout.write(USAGE + '\n');
      return 0;
    } else {
      process.stderr.write(`unknown argument: ${a}\n${USAGE}\n`);
      return 2;
    }
  }
  if (!specPath) {
    process.stderr.write(USAGE + '\n');
    return 2;
  }

  try {
    const spec = loadSpec(specPath);
    const tables: Table[] = spec.inputs.map(p => {
      let text: string;
      try {
        text = readFileSync(p, 'utf8');
      } catch {
        throw new SpecError(`input CSV not found: ${p}`);
      }
      return parseCsv(text, p);
    });
    const svg = renderFigure(spec.kind, tables, spec);
    const outPath = outOverride ? resolve(outOverride) : spec.output;
    mkdirSync(dirname(outPath), { recursive: true });
    writeFileSync(outPath, svg);
    process.stdout.write(outPath + '\n');
    return 0;
  } catch (e) {
    if (e instanceof SpecError || e instanceof SchemaError || e instanceof CsvError) {
      process.stderr.write(`plot error: ${e.message}\n`);
      return 2;
    }
    process.stderr.write(`internal error: ${(e as Error).message}\n`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
