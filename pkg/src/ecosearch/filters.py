"""Taxon, month, and geography filtering over a corpus, plus filtered search.

Filters narrow a query to a candidate subset before (or during) the vector
scan. Taxon and month predicates resolve through precomputed posting lists;
geographic boxes are evaluated by scanning coordinates of the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoordinateRangeError
from .ivf import IvfIndex, SearchHit, _check_query, _rank_hits, _row_scores, search
from .kmeans import default_nprobe
from .store import Corpus, ObservationRecord

PREFILTER_THRESHOLD = 100_000


@dataclass(frozen=True)
class GeoBox:
    """Inclusive lat/lon bounds in signed degrees; no antimeridian wrap."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (-90.0 <= self.lat_min <= 90.0 and -90.0 <= self.lat_max <= 90.0):
            raise CoordinateRangeError(f"latitude bounds {self.lat_min}..{self.lat_max} outside [-90, 90]")
        if not (-180.0 <= self.lon_min <= 180.0 and -180.0 <= self.lon_max <= 180.0):
            raise CoordinateRangeError(f"longitude bounds {self.lon_min}..{self.lon_max} outside [-180, 180]")
        if self.lat_min > self.lat_max:
            raise ValueError("lat_min > lat_max")
        if self.lon_min > self.lon_max:
            raise ValueError("lon_min > lon_max")

    def contains(self, latitude: float, longitude: float) -> bool:
        return (
            self.lat_min <= latitude <= self.lat_max
            and self.lon_min <= longitude <= self.lon_max
        )


@dataclass(frozen=True)
class FilterSpec:
    """Conjunction of optional predicates; an empty spec matches everything."""

    taxon_id: int | None = None
    months: frozenset[int] | None = None
    geo: GeoBox | None = None

    def __post_init__(self):
        if self.taxon_id is not None:
            if isinstance(self.taxon_id, bool) or not isinstance(self.taxon_id, int) or self.taxon_id < 0:
                raise ValueError(f"taxon_id must be a non-negative integer, got {self.taxon_id!r}")
        if self.months is not None:
            months = frozenset(self.months)
            if not months:
                raise ValueError("months must be non-empty when present")
            if not months <= set(range(1, 13)):
                raise ValueError(f"months must be within 1..12, got {sorted(months)}")
            object.__setattr__(self, "months", months)

    @classmethod
    def from_json(cls, obj: dict) -> "FilterSpec":
        if not isinstance(obj, dict):
            raise ValueError("filters must be a JSON object")
        unknown = set(obj) - {"taxon_id", "months", "geo"}
        if unknown:
            raise ValueError(f"unknown filter keys: {sorted(unknown)}")
        geo = None
        if obj.get("geo") is not None:
            g = obj["geo"]
            if not isinstance(g, dict):
                raise ValueError("geo must be an object")
            missing = {"lat_min", "lat_max", "lon_min", "lon_max"} - set(g)
            if missing:
                raise ValueError(f"geo missing keys: {sorted(missing)}")
            extra = set(g) - {"lat_min", "lat_max", "lon_min", "lon_max"}
            if extra:
                raise ValueError(f"unknown geo keys: {sorted(extra)}")
            geo = GeoBox(float(g["lat_min"]), float(g["lat_max"]), float(g["lon_min"]), float(g["lon_max"]))
        months = obj.get("months")
        if months is not None:
            if not isinstance(months, (list, tuple, set, frozenset)):
                raise ValueError("months must be an array")
            months = frozenset(int(m) for m in months)
        taxon_id = obj.get("taxon_id")
        if taxon_id is not None:
            taxon_id = int(taxon_id)
        return cls(taxon_id=taxon_id, months=months, geo=geo)

    def to_json(self) -> dict:
        out: dict = {}
        if self.taxon_id is not None:
            out["taxon_id"] = self.taxon_id
        if self.months is not None:
            out["months"] = sorted(self.months)
        if self.geo is not None:
            out["geo"] = {
                "lat_min": self.geo.lat_min,
                "lat_max": self.geo.lat_max,
                "lon_min": self.geo.lon_min,
                "lon_max": self.geo.lon_max,
            }
        return out

    @property
    def empty(self) -> bool:
        return self.taxon_id is None and self.months is None and self.geo is None


class TaxonIndex:
    """taxon id -> ascending positions whose taxon_path contains that id."""

    def __init__(self, postings: dict[int, np.ndarray]):
        self.postings = postings

    def positions_for(self, taxon_id: int) -> np.ndarray:
        return self.postings.get(taxon_id, np.empty(0, dtype=np.int64))


class MonthIndex:
    """calendar month (1..12) -> ascending positions observed in that month."""

    def __init__(self, by_month: dict[int, np.ndarray]):
        self.by_month = by_month

    def positions_for(self, month: int) -> np.ndarray:
        return self.by_month.get(month, np.empty(0, dtype=np.int64))


class GeoColumns:
    """Column view of record coordinates; NaN where a record has none."""

    def __init__(self, latitudes: np.ndarray, longitudes: np.ndarray):
        self.latitudes = latitudes
        self.longitudes = longitudes


def build_taxon_index(corpus: Corpus) -> TaxonIndex:
    lists: dict[int, list[int]] = {}
    for pos, rec in enumerate(corpus.records):
        for taxon in rec.taxon_path:
            lists.setdefault(taxon, []).append(pos)
    return TaxonIndex({t: np.array(p, dtype=np.int64) for t, p in lists.items()})


def build_month_index(corpus: Corpus) -> MonthIndex:
    lists: dict[int, list[int]] = {m: [] for m in range(1, 13)}
    for pos, rec in enumerate(corpus.records):
        lists[rec.observed_at.month].append(pos)
    return MonthIndex({m: np.array(p, dtype=np.int64) for m, p in lists.items()})


def build_geo_columns(corpus: Corpus) -> GeoColumns:
    n = len(corpus)
    lat = np.full(n, np.nan)
    lon = np.full(n, np.nan)
    for pos, rec in enumerate(corpus.records):
        if rec.latitude is not None:
            lat[pos] = rec.latitude
            lon[pos] = rec.longitude
    return GeoColumns(lat, lon)


def eval_filter(spec: FilterSpec, record: ObservationRecord) -> bool:
    """True iff every present predicate holds for the record."""
    if spec.taxon_id is not None and spec.taxon_id not in record.taxon_path:
        return False
    if spec.months is not None and record.observed_at.month not in spec.months:
        return False
    if spec.geo is not None:
        if record.latitude is None:
            return False
        if not spec.geo.contains(record.latitude, record.longitude):
            return False
    return True


def candidate_set(
    spec: FilterSpec,
    taxon_index: TaxonIndex,
    month_index: MonthIndex,
    corpus: Corpus,
    geo_columns: GeoColumns | None = None,
) -> np.ndarray:
    """Ascending positions passing the filter: posting intersection, then geo scan."""
    cands: np.ndarray | None = None
    if spec.taxon_id is not None:
        cands = taxon_index.positions_for(spec.taxon_id)
    if spec.months is not None:
        month_positions = np.sort(
            np.concatenate([month_index.positions_for(m) for m in sorted(spec.months)])
        )
        cands = month_positions if cands is None else np.intersect1d(
            cands, month_positions, assume_unique=True
        )
    if cands is None:
        cands = np.arange(len(corpus), dtype=np.int64)
    if spec.geo is not None and cands.size:
        if geo_columns is None:
            geo_columns = build_geo_columns(corpus)
        lat = geo_columns.latitudes[cands]
        lon = geo_columns.longitudes[cands]
        keep = (
            (lat >= spec.geo.lat_min)
            & (lat <= spec.geo.lat_max)
            & (lon >= spec.geo.lon_min)
            & (lon <= spec.geo.lon_max)
        )
        cands = cands[keep]
    return cands


def filtered_search(
    index: IvfIndex,
    corpus: Corpus,
    spec: FilterSpec,
    query,
    k: int,
    nprobe: int | None = None,
    *,
    taxon_index: TaxonIndex | None = None,
    month_index: MonthIndex | None = None,
    geo_columns: GeoColumns | None = None,
    prefilter_threshold: int = PREFILTER_THRESHOLD,
) -> list[SearchHit]:
    """Top-k hits restricted to records passing the filter.

    A candidate set at most prefilter_threshold long is scored exhaustively;
    a larger one falls back to the IVF scan with a membership mask, doubling
    nprobe (up to nlist) until k hits are accepted or every list is scanned.
    """
    q = _check_query(query, corpus.dim)
    if k < 1:
        raise ValueError("k must be >= 1")
    if taxon_index is None:
        taxon_index = build_taxon_index(corpus)
    if month_index is None:
        month_index = build_month_index(corpus)
    cands = candidate_set(spec, taxon_index, month_index, corpus, geo_columns)
    if cands.size == 0:
        return []
    if cands.size <= prefilter_threshold:
        vecs = np.ascontiguousarray(corpus.embeddings.data[cands])
        scores = _row_scores(vecs, q)
        return _rank_hits(cands, scores, corpus.observation_ids[cands], k)
    mask = np.zeros(len(corpus), dtype=bool)
    mask[cands] = True
    if nprobe is None:
        nprobe = default_nprobe(index.nlist)
    nprobe = min(max(1, nprobe), index.nlist)
    while True:
        hits = search(index, q, k, nprobe=nprobe, allowed_mask=mask)
        if len(hits) >= k or nprobe >= index.nlist:
            return hits
        nprobe = min(index.nlist, nprobe * 2)
