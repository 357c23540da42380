import { ApiError, createApi, type Api, type Hit, type SearchRequest } from "./api.js";
import { buildFilters } from "./filters.js";
import { renderApp, renderGrid, renderStatus } from "./render.js";

export interface AppHandle {
  search(): Promise<void>;
  toggleMark(observationId: number): Promise<void>;
  exportCsv(): Promise<string | null>;
  getHits(): Hit[];
  getSessionId(): string | null;
}

function input(root: ParentNode, id: string): HTMLInputElement {
  return root.querySelector(`#${id}`) as HTMLInputElement;
}

export function downloadFile(name: string, text: string): void {
  const blob = new Blob([text], { type: "text/csv" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = name;
  anchor.click();
  URL.revokeObjectURL(url);
}

export async function initApp(root: HTMLElement, api: Api): Promise<AppHandle> {
  let health = null;
  try {
    health = await api.health();
  } catch {
    // render anyway; the status line reports failures per action
  }
  root.innerHTML = renderApp(health);

  const status = root.querySelector("#status") as HTMLElement;
  const grid = root.querySelector("#hit-grid") as HTMLElement;
  const exportButton = root.querySelector("#export-button") as HTMLButtonElement;

  let sessionId: string | null = null;
  let hits: Hit[] = [];

  function setStatus(kind: "info" | "error", text: string): void {
    status.innerHTML = renderStatus(kind, text);
  }

  function redraw(): void {
    grid.innerHTML = renderGrid(hits);
    exportButton.disabled = hits.length === 0;
  }

  async function ensureSession(): Promise<string> {
    if (sessionId === null) {
      sessionId = await api.createSession();
    }
    return sessionId;
  }

  function reportError(err: unknown): void {
    const text = err instanceof ApiError ? err.message : String(err);
    setStatus("error", text);
  }

  async function search(): Promise<void> {
    const queryText = input(root, "query-text").value.trim();
    if (!queryText) {
      setStatus("error", "enter query text first");
      return;
    }
    let request: SearchRequest;
    try {
      request = { query_text: queryText, k: Number(input(root, "search-k").value) || 20 };
      const nprobe = input(root, "search-nprobe").value.trim();
      if (nprobe) request.nprobe = Number(nprobe);
      const filters = buildFilters({
        taxon: input(root, "filter-taxon").value,
        months: input(root, "filter-months").value,
        bbox: input(root, "filter-bbox").value,
      });
      if (filters) request.filters = filters;
    } catch (err) {
      setStatus("error", String(err instanceof Error ? err.message : err));
      return;
    }
    setStatus("info", "searching...");
    try {
      hits = await api.search(await ensureSession(), request);
      redraw();
      setStatus("info", `${hits.length} result${hits.length === 1 ? "" : "s"}`);
    } catch (err) {
      reportError(err);
    }
  }

  async function toggleMark(observationId: number): Promise<void> {
    const hit = hits.find((h) => h.observation_id === observationId);
    if (!hit || sessionId === null) return;
    const previous = hit.marked;
    hit.marked = !previous;
    redraw();
    try {
      await api.setMark(sessionId, observationId, hit.marked);
    } catch (err) {
      hit.marked = previous;
      redraw();
      reportError(err);
    }
  }

  async function exportCsv(): Promise<string | null> {
    if (sessionId === null) {
      setStatus("error", "search before exporting");
      return null;
    }
    try {
      const text = await api.exportCsv(sessionId);
      setStatus("info", "export ready");
      return text;
    } catch (err) {
      reportError(err);
      return null;
    }
  }

  const form = root.querySelector("#search-form") as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void search();
  });

  grid.addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest(".mark-toggle");
    if (button instanceof HTMLElement && button.dataset.oid) {
      void toggleMark(Number(button.dataset.oid));
    }
  });

  exportButton.addEventListener("click", () => {
    void exportCsv().then((text) => {
      if (text !== null) {
        downloadFile(`ecosearch-${sessionId}.csv`, text);
      }
    });
  });

  return { search, toggleMark, exportCsv, getHits: () => hits, getSessionId: () => sessionId };
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void initApp(document.getElementById("app") as HTMLElement, createApi());
}
