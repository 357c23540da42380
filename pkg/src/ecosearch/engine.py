"""Corpus directory lifecycle: build the on-disk artifacts once, serve them
read-only behind a session-aware search facade.

A corpus directory holds four files written together by build_index_dir:
embeddings.inqe (normalized vectors), metadata.tsv (processed records),
index.inqi (the partitioned index), and manifest.json tying them together.
load_engine memory-maps the index and answers queries against it.
"""

from __future__ import annotations

import json
from pathlib import Path

from .encoders import EncoderBackend, encode_text
from .errors import CorruptionError, EncoderConfigurationError, FormatError
from .filters import (
    FilterSpec,
    build_geo_columns,
    build_month_index,
    build_taxon_index,
    filtered_search,
)
from .ivf import build_ivf, open_index, save_index, search
from .kmeans import default_nlist, train_kmeans
from .session import DEFAULT_LINK_TEMPLATE, SessionStore
from .store import (
    build_corpus,
    load_embeddings,
    load_metadata,
    write_embeddings,
    write_metadata,
)

MANIFEST_NAME = "manifest.json"
EMBEDDINGS_NAME = "embeddings.inqe"
METADATA_NAME = "metadata.tsv"
INDEX_NAME = "index.inqi"

_MANIFEST_KEYS = ("embeddings", "metadata", "index", "dim", "count", "nlist")


def build_index_dir(
    embeddings_path: str | Path,
    metadata_path: str | Path,
    out_dir: str | Path,
    *,
    nlist: int | None = None,
    seed: int = 0,
    quantization: str = "none",
    round_coords: bool = False,
    link_template: str = DEFAULT_LINK_TEMPLATE,
) -> dict:
    """Train, build, and persist a complete corpus directory.

    Input embeddings are renormalized during load; the directory stores the
    normalized matrix so serving never has to renormalize. Metadata is stored
    post-processing, so round_coords is applied exactly once.
    """
    matrix = load_embeddings(embeddings_path)
    records = load_metadata(metadata_path, round_coords=round_coords)
    corpus = build_corpus(matrix, records)
    if nlist is None:
        nlist = default_nlist(len(corpus))
    centroids = train_kmeans(corpus.embeddings.data, nlist, seed=seed)
    index = build_ivf(corpus, centroids, quantization=quantization)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(corpus.embeddings, out / EMBEDDINGS_NAME)
    write_metadata(list(corpus.records), out / METADATA_NAME)
    save_index(index, out / INDEX_NAME)
    index.close()
    manifest = {
        "format": "ecosearch-corpus",
        "version": 1,
        "embeddings": EMBEDDINGS_NAME,
        "metadata": METADATA_NAME,
        "index": INDEX_NAME,
        "count": len(corpus),
        "dim": corpus.dim,
        "nlist": nlist,
        "quantization": quantization,
        "seed": seed,
        "round_coords": round_coords,
        "link_template": link_template,
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(index_dir: str | Path) -> dict:
    path = Path(index_dir) / MANIFEST_NAME
    if not path.is_file():
        raise FormatError(f"no {MANIFEST_NAME} in {index_dir}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"manifest is not valid JSON: {exc}") from None
    missing = [key for key in _MANIFEST_KEYS if key not in manifest]
    if missing:
        raise FormatError(f"manifest missing keys: {', '.join(missing)}")
    return manifest


def load_engine(
    index_dir: str | Path,
    encoder: EncoderBackend,
    *,
    cache_budget_bytes: int | None = None,
    sessions_dir: str | Path | None = None,
) -> "SearchEngine":
    """Open a corpus directory for serving.

    The stored matrix is loaded without renormalization: its rows were
    normalized at build time and must stay bit-identical to the vectors
    inside the index so both scoring paths agree exactly.
    """
    root = Path(index_dir)
    manifest = read_manifest(root)
    matrix = load_embeddings(root / manifest["embeddings"], normalize=False)
    records = load_metadata(root / manifest["metadata"])
    corpus = build_corpus(matrix, records)
    if corpus.dim != manifest["dim"] or len(corpus) != manifest["count"]:
        raise CorruptionError(
            f"manifest says {manifest['count']} x {manifest['dim']}, "
            f"directory holds {len(corpus)} x {corpus.dim}"
        )
    if encoder.dim != corpus.dim:
        raise EncoderConfigurationError(
            f"encoder dim {encoder.dim} does not match corpus dim {corpus.dim}"
        )
    index = open_index(
        root / manifest["index"],
        observation_ids=corpus.observation_ids,
        cache_budget_bytes=cache_budget_bytes,
    )
    try:
        if index.nlist != manifest["nlist"]:
            raise CorruptionError(
                f"manifest says nlist={manifest['nlist']}, index has {index.nlist}"
            )
        sessions = SessionStore(
            sessions_dir if sessions_dir is not None else root / "sessions",
            link_template=manifest.get("link_template", DEFAULT_LINK_TEMPLATE),
        )
    except Exception:
        index.close()
        raise
    return SearchEngine(corpus, index, encoder, sessions)


class SearchEngine:
    """Session-aware query facade over one immutable corpus directory."""

    def __init__(self, corpus, index, encoder: EncoderBackend, sessions: SessionStore):
        self.corpus = corpus
        self.index = index
        self.encoder = encoder
        self.sessions = sessions
        self.taxon_index = build_taxon_index(corpus)
        self.month_index = build_month_index(corpus)
        self.geo_columns = build_geo_columns(corpus)

    def create_session(self) -> str:
        return self.sessions.create().session_id

    def query_rows(
        self,
        query_text: str,
        spec: FilterSpec | None = None,
        k: int = 50,
        nprobe: int | None = None,
    ) -> list[dict]:
        """One-shot query: ranked hits joined with metadata, no session."""
        if k < 1:
            raise ValueError("k must be >= 1")
        query = encode_text(self.encoder, query_text)
        if spec is None:
            spec = FilterSpec()
        if spec.empty:
            hits = search(self.index, query, k, nprobe=nprobe)
        else:
            hits = filtered_search(
                self.index,
                self.corpus,
                spec,
                query,
                k,
                nprobe=nprobe,
                taxon_index=self.taxon_index,
                month_index=self.month_index,
                geo_columns=self.geo_columns,
            )
        return [self._hit_row(hit, rank) for rank, hit in enumerate(hits, start=1)]

    def search_page(
        self,
        session_id: str,
        query_text: str,
        spec: FilterSpec | None = None,
        k: int = 50,
        nprobe: int | None = None,
    ) -> list[dict]:
        """Run one query, append it to the session, return the joined page."""
        session = self.sessions.get(session_id)
        if spec is None:
            spec = FilterSpec()
        rows = self.query_rows(query_text, spec, k=k, nprobe=nprobe)
        self.sessions.record_search(session_id, query_text, spec.to_json(), k, nprobe, rows)
        return [
            dict(row, marked=session.mark_state(row["observation_id"])) for row in rows
        ]

    def _hit_row(self, hit, rank: int) -> dict:
        record = self.corpus.records[hit.vector_position]
        return {
            "observation_id": int(hit.observation_id),
            "rank": rank,
            "score": float(hit.score),
            "taxon_path": list(record.taxon_path),
            "leaf_taxon_id": record.leaf_taxon_id,
            "observed_at": record.observed_at.isoformat(),
            "latitude": record.latitude,
            "longitude": record.longitude,
            "image_url": record.image_url,
        }

    def mark(self, session_id: str, observation_id: int, marked: bool) -> dict:
        return self.sessions.mark(session_id, observation_id, marked)

    def export_csv(self, session_id: str) -> bytes:
        return self.sessions.export_csv(session_id)

    def health(self) -> dict:
        return {
            "status": "ok",
            "corpus_size": len(self.corpus),
            "dim": self.corpus.dim,
            "nlist": self.index.nlist,
        }

    def close(self) -> None:
        self.index.close()

    def __enter__(self) -> "SearchEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
