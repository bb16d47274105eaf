import { readFileSync } from "node:fs";

import Papa from "papaparse";

import { CsvTable, SchemaError } from "./schemas.js";

export function loadCsv(path: string): CsvTable {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new SchemaError(`cannot read input file ${path}`);
  }
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new SchemaError(`${path}: CSV parse error: ${first.message}`);
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0) {
    throw new SchemaError(`${path}: no header row`);
  }
  return { columns, rows: parsed.data };
}

export function loadJson(path: string): unknown {
  let text: string;
  try {
    text = readFileSync(path, "utf-8");
  } catch {
    throw new SchemaError(`cannot read input file ${path}`);
  }
  try {
    return JSON.parse(text);
  } catch (err) {
    throw new SchemaError(`${path}: invalid JSON (${(err as Error).message})`);
  }
}
