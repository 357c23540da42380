import { beforeEach, describe, expect, it, vi } from "vitest";
import { createApi, type Hit } from "../src/api.js";
import { initApp, type AppHandle } from "../src/main.js";
import fixture from "./fixtures/roundtrip.json";

interface RecordedSearch {
  request: { query_text: string; k: number; nprobe?: number; filters?: Record<string, unknown> };
  response: { hits: Hit[] };
}

const searches = fixture.searches as RecordedSearch[];
const marks = fixture.marks as { request: Record<string, unknown>; response: unknown }[];

function deepEqual(a: unknown, b: unknown): boolean {
  if (a === b) return true;
  if (Array.isArray(a) && Array.isArray(b)) {
    return a.length === b.length && a.every((v, i) => deepEqual(v, b[i]));
  }
  if (a && b && typeof a === "object" && typeof b === "object") {
    const ka = Object.keys(a).sort();
    const kb = Object.keys(b).sort();
    return (
      deepEqual(ka, kb) &&
      ka.every((k) => deepEqual((a as Record<string, unknown>)[k], (b as Record<string, unknown>)[k]))
    );
  }
  return false;
}

/** Replays the recorded server exchanges; any unrecorded request fails loudly. */
function replayFetch(): typeof fetch {
  const sid = fixture.session_id;
  return (async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url);
    const method = init?.method ?? "GET";
    if (method === "GET" && path === "/v1/health") {
      return Response.json(fixture.health);
    }
    if (method === "POST" && path === "/v1/sessions") {
      return Response.json({ session_id: sid });
    }
    if (method === "POST" && path === `/v1/sessions/${sid}/search`) {
      const body = JSON.parse(String(init?.body));
      const match = searches.find((s) => deepEqual(s.request, body));
      if (!match) throw new Error(`unrecorded search: ${init?.body}`);
      return Response.json(match.response);
    }
    if (method === "POST" && path === `/v1/sessions/${sid}/marks`) {
      const body = JSON.parse(String(init?.body));
      const match = marks.find((m) => deepEqual(m.request, body));
      if (!match) throw new Error(`unrecorded mark: ${init?.body}`);
      return Response.json(match.response);
    }
    if (method === "GET" && path === `/v1/sessions/${sid}/export.csv`) {
      return new Response(fixture.export_text, {
        status: 200,
        headers: { "content-type": "text/csv; charset=utf-8" },
      });
    }
    throw new Error(`unrecorded request: ${method} ${path}`);
  }) as typeof fetch;
}

function setInput(id: string, value: string): void {
  (document.getElementById(id) as HTMLInputElement).value = value;
}

function applyRequestToForm(request: RecordedSearch["request"]): void {
  setInput("query-text", request.query_text);
  setInput("search-k", String(request.k));
  setInput("search-nprobe", request.nprobe === undefined ? "" : String(request.nprobe));
  const filters = request.filters ?? {};
  setInput("filter-taxon", filters.taxon_id === undefined ? "" : String(filters.taxon_id));
  setInput("filter-months", Array.isArray(filters.months) ? filters.months.join(",") : "");
  const geo = filters.geo as { lat_min: number; lat_max: number; lon_min: number; lon_max: number } | undefined;
  setInput("filter-bbox", geo ? `${geo.lat_min},${geo.lat_max},${geo.lon_min},${geo.lon_max}` : "");
}

describe("recorded round trip", () => {
  let handle: AppHandle;

  beforeEach(async () => {
    vi.stubGlobal("fetch", replayFetch());
    document.body.innerHTML = `<div id="app"></div>`;
    handle = await initApp(document.getElementById("app") as HTMLElement, createApi());
  });

  it("renders the grid in response rank order for each recorded query", async () => {
    for (const recorded of searches) {
      applyRequestToForm(recorded.request);
      await handle.search();
      const cards = Array.from(document.querySelectorAll(".hit-card"));
      expect(cards.length).toBe(recorded.response.hits.length);
      expect(cards.map((c) => Number((c as HTMLElement).dataset.rank))).toEqual(
        recorded.response.hits.map((h) => h.rank),
      );
      expect(cards.map((c) => Number((c as HTMLElement).dataset.oid))).toEqual(
        recorded.response.hits.map((h) => h.observation_id),
      );
    }
  });

  it("marks five hits and downloads a CSV equal to the server export bytes", async () => {
    for (const recorded of searches) {
      applyRequestToForm(recorded.request);
      await handle.search();
    }
    for (const mark of marks) {
      await handle.toggleMark(mark.request.observation_id as number);
    }
    for (const mark of marks) {
      const card = document.querySelector(`.hit-card[data-oid="${mark.request.observation_id}"]`);
      expect(card?.classList.contains("marked")).toBe(true);
    }
    const text = await handle.exportCsv();
    expect(text).toBe(fixture.export_text);
    const bytes = new TextEncoder().encode(text ?? "");
    const expected = new TextEncoder().encode(fixture.export_text);
    expect(bytes.length).toBe(expected.length);
    expect(Array.from(bytes)).toEqual(Array.from(expected));
    const markedRows = (text ?? "")
      .split("\r\n")
      .filter((line) => line.split(",")[1] === "true")
      .map((line) => Number(line.split(",")[0]));
    expect(new Set(markedRows)).toEqual(new Set(marks.map((m) => m.request.observation_id)));
  });
});
