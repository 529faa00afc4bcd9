// Minimal CSV reader for ftn-lab artifacts. The emitter never quotes and
// never embeds commas or newlines in values, so a plain split is exact.

export class CsvError extends Error {}
export class SchemaError extends Error {}

export interface Table {
  path: string;
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string, path: string): Table {
  const lines = text.split('\n');
  // trailing newline produces one empty tail entry; CRLF input is tolerated
  while (lines.length > 0 && lines[lines.length - 1].trim() === '') lines.pop();
  if (lines.length === 0) {
    throw new CsvError(`${path}: file is empty`);
  }
  const header = lines[0].replace(/\r$/, '').split(',');
  const rows: string[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].replace(/\r$/, '').split(',');
    if (cells.length !== header.length) {
      throw new CsvError(
        `${path}: row ${i + 1} has ${cells.length} cells, header has ${header.length}`);
    }
    rows.push(cells);
  }
  return { path, header, rows };
}

/** Exact header match; anything else is refused with a column diff. */
export function validateHeader(table: Table, expected: string[]): void {
  if (table.header.length === expected.length &&
      table.header.every((c, i) => c === expected[i])) {
    return;
  }
  const found = new Set(table.header);
  const want = new Set(expected);
  const missing = expected.filter(c => !found.has(c));
  const unexpected = table.header.filter(c => !want.has(c));
  const parts = [
    `schema mismatch in ${table.path}`,
    `  expected: ${expected.join(',')}`,
    `  found:    ${table.header.join(',')}`,
  ];
  if (missing.length > 0) parts.push(`  missing:  ${missing.join(',')}`);
  if (unexpected.length > 0) parts.push(`  unexpected: ${unexpected.join(',')}`);
  if (missing.length === 0 && unexpected.length === 0) {
    parts.push('  column order differs');
  }
  throw new SchemaError(parts.join('\n'));
}

export function column(table: Table, name: string): string[] {
  const i = table.header.indexOf(name);
  if (i < 0) throw new SchemaError(`${table.path}: no column '${name}'`);
  return table.rows.map(r => r[i]);
}

export function numColumn(table: Table, name: string): number[] {
  return column(table, name).map((v, r) => {
    const x = Number(v);
    if (!Number.isFinite(x)) {
      throw new CsvError(`${table.path}: column '${name}' row ${r + 2}: not a number: '${v}'`);
    }
    return x;
  });
}
