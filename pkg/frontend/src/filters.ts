import type { FilterSpecJson } from "./api.js";

export interface FilterInputs {
  taxon: string;
  months: string;
  bbox: string;
}

export function parseMonths(text: string): number[] | undefined {
  const trimmed = text.trim();
  if (!trimmed) return undefined;
  const months: number[] = [];
  for (const part of trimmed.split(",")) {
    const value = Number(part.trim());
    if (!Number.isInteger(value) || value < 1 || value > 12) {
      throw new Error(`months must be integers 1-12, got "${part.trim()}"`);
    }
    if (!months.includes(value)) {
      months.push(value);
    }
  }
  months.sort((a, b) => a - b);
  return months;
}

export function parseBbox(text: string): FilterSpecJson["geo"] | undefined {
  const trimmed = text.trim();
  if (!trimmed) return undefined;
  const parts = trimmed.split(",").map((p) => Number(p.trim()));
  if (parts.length !== 4 || parts.some((p) => !Number.isFinite(p))) {
    throw new Error("bounds must be four numbers: lat min, lat max, lon min, lon max");
  }
  const [latMin, latMax, lonMin, lonMax] = parts as [number, number, number, number];
  if (latMin > latMax || lonMin > lonMax) {
    throw new Error("bounds are inverted: min must not exceed max");
  }
  return { lat_min: latMin, lat_max: latMax, lon_min: lonMin, lon_max: lonMax };
}

export function parseTaxon(text: string): number | undefined {
  const trimmed = text.trim();
  if (!trimmed) return undefined;
  const value = Number(trimmed);
  if (!Number.isInteger(value) || value < 0) {
    throw new Error(`taxon id must be a non-negative integer, got "${trimmed}"`);
  }
  return value;
}

export function buildFilters(inputs: FilterInputs): FilterSpecJson | undefined {
  const spec: FilterSpecJson = {};
  const taxon = parseTaxon(inputs.taxon);
  if (taxon !== undefined) spec.taxon_id = taxon;
  const months = parseMonths(inputs.months);
  if (months !== undefined) spec.months = months;
  const geo = parseBbox(inputs.bbox);
  if (geo !== undefined) spec.geo = geo;
  return Object.keys(spec).length > 0 ? spec : undefined;
}
