import type { HealthInfo, Hit } from "./api.js";

export function escapeHtml(str: string): string {
  return str
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function escapeAttr(str: string): string {
  return escapeHtml(str).replace(/'/g, "&#39;");
}

export function renderApp(health: HealthInfo | null): string {
  const corpusNote = health
    ? `${health.corpus_size.toLocaleString()} observations, ${health.nlist} lists`
    : "corpus unavailable";
  return `
    <header class="topbar">
      <h1>ecosearch</h1>
      <span class="corpus-note" id="corpus-note">${escapeHtml(corpusNote)}</span>
    </header>
    <form id="search-form" autocomplete="off">
      <div class="query-row">
        <input id="query-text" type="text" placeholder="Describe what the image shows..." />
        <button type="submit" id="search-button">Search</button>
        <button type="button" id="export-button" disabled>Export CSV</button>
      </div>
      <details class="filter-panel">
        <summary>Filters</summary>
        <div class="filter-grid">
          <label>Taxon id
            <input id="filter-taxon" type="text" inputmode="numeric" placeholder="e.g. 47126" />
          </label>
          <label>Months
            <input id="filter-months" type="text" placeholder="e.g. 6,7,8" />
          </label>
          <label>Bounds (lat min, lat max, lon min, lon max)
            <input id="filter-bbox" type="text" placeholder="e.g. 34,42,-124,-115" />
          </label>
          <label>Results
            <input id="search-k" type="number" min="1" value="20" />
          </label>
          <label>Probe lists
            <input id="search-nprobe" type="number" min="1" placeholder="default" />
          </label>
        </div>
      </details>
    </form>
    <div id="status" class="status"></div>
    <div id="hit-grid" class="hit-grid"></div>
  `;
}

export function renderHitCard(hit: Hit): string {
  const coords =
    hit.latitude !== undefined && hit.longitude !== undefined
      ? `${hit.latitude.toFixed(2)}, ${hit.longitude.toFixed(2)}`
      : "no coordinates";
  return `
    <figure class="hit-card${hit.marked ? " marked" : ""}"
            data-oid="${hit.observation_id}" data-rank="${hit.rank}">
      <div class="thumb">
        <img src="${escapeAttr(hit.image_url)}" alt="observation ${hit.observation_id}"
             loading="lazy" onerror="this.closest('.thumb').classList.add('broken')" />
        <span class="rank-badge">#${hit.rank}</span>
      </div>
      <figcaption>
        <div class="hit-line">
          <span class="taxon">${escapeHtml(hit.taxon_path.join(" / "))}</span>
          <span class="score">${hit.score.toFixed(4)}</span>
        </div>
        <div class="hit-line muted">
          <span>${escapeHtml(hit.observed_at)}</span>
          <span>${escapeHtml(coords)}</span>
        </div>
        <button type="button" class="mark-toggle" data-oid="${hit.observation_id}">
          ${hit.marked ? "Marked" : "Mark"}
        </button>
      </figcaption>
    </figure>
  `;
}

export function renderGrid(hits: Hit[]): string {
  if (hits.length === 0) {
    return `<div class="empty-note">No results. Try different text or wider filters.</div>`;
  }
  return hits.map(renderHitCard).join("");
}

export function renderStatus(kind: "info" | "error", text: string): string {
  return `<span class="status-${kind}">${escapeHtml(text)}</span>`;
}
