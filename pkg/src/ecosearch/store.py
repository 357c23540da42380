"""Embedding and observation-metadata ingestion.

Loads precomputed image embeddings from a compact binary format, parses the
tab-separated observation metadata that accompanies them, and aligns the two
into an immutable Corpus keyed by row position.
"""

from __future__ import annotations

import datetime
import math
import struct
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    CoordinateRangeError,
    CorruptionError,
    DegenerateVectorError,
    DuplicateIdError,
    FormatError,
    MetadataParseError,
    NormalizationError,
)

EMBEDDING_MAGIC = b"INQE"
EMBEDDING_VERSION = 1
_DTYPE_F32 = 1
# magic, version u32, count u64, dim u32, dtype u8, 7 reserved bytes
_HEADER = struct.Struct("<4sIQIB7s")

NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense float32 matrix, one unit-normalized row per observation."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.dtype != np.float32:
            raise ValueError("embedding data must be a 2-D float32 array")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ObservationRecord:
    """One community-science observation and its metadata fields."""

    observation_id: int
    taxon_path: tuple[int, ...]
    observed_at: datetime.date
    latitude: float | None
    longitude: float | None
    image_url: str

    def __post_init__(self):
        if not self.taxon_path:
            raise ValueError("taxon_path must be non-empty")
        if len(set(self.taxon_path)) != len(self.taxon_path):
            raise ValueError("taxon_path contains duplicate ids")
        if (self.latitude is None) != (self.longitude is None):
            raise ValueError("latitude and longitude must be present together")
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise CoordinateRangeError(f"latitude {self.latitude} outside [-90, 90]")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise CoordinateRangeError(f"longitude {self.longitude} outside [-180, 180]")

    @property
    def leaf_taxon_id(self) -> int:
        return self.taxon_path[-1]

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None


@dataclass(frozen=True)
class Corpus:
    """Immutable alignment of records with embedding rows (position i <-> row i)."""

    records: tuple[ObservationRecord, ...]
    embeddings: EmbeddingMatrix
    observation_ids: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def dim(self) -> int:
        return self.embeddings.dim


def write_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write a matrix in the binary embedding format (little-endian f32 rows)."""
    header = _HEADER.pack(
        EMBEDDING_MAGIC, EMBEDDING_VERSION, matrix.count, matrix.dim, _DTYPE_F32, b"\0" * 7
    )
    payload = np.ascontiguousarray(matrix.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_embeddings(path: str | Path, normalize: bool = True) -> EmbeddingMatrix:
    """Load an embedding file, validating the header and row norms.

    With normalize=True every row is rescaled to unit L2 norm; a zero-norm row
    is an error because it has no direction. With normalize=False rows must
    already be unit-normalized to within NORM_TOLERANCE.

    Raises:
        FormatError: wrong magic bytes, version, or dtype tag.
        CorruptionError: payload shorter or longer than the header promises.
        DegenerateVectorError: zero-norm row encountered while normalizing.
        NormalizationError: non-unit row encountered with normalize=False.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptionError(f"{path}: file shorter than header")
    magic, version, count, dim, dtype_tag, _reserved = _HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype_tag != _DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype tag {dtype_tag}")
    expected = count * dim * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    if count == 0:
        return EmbeddingMatrix(data)
    norms = np.linalg.norm(data.astype(np.float64), axis=1)
    if normalize:
        zero_rows = np.flatnonzero(norms == 0.0)
        if zero_rows.size:
            raise DegenerateVectorError(int(zero_rows[0]))
        data = (data.astype(np.float64) / norms[:, None]).astype(np.float32)
    else:
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if bad.size:
            row = int(bad[0])
            raise NormalizationError(
                f"row {row} has norm {norms[row]:.6f}, expected 1.0 within {NORM_TOLERANCE}"
            )
    return EmbeddingMatrix(data)


def quantize_coord(value: float) -> float:
    """Round a coordinate to the nearest 0.01 degree, ties away from zero."""
    if not math.isfinite(value):
        raise ValueError(f"coordinate must be finite, got {value}")
    # Decimal(repr(x)) rounds the shortest decimal form of the float, so a
    # textual "40.575" quantizes to 40.58 despite the binary value being
    # fractionally below the tie.
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _parse_line(line: str, line_number: int) -> ObservationRecord:
    fields = line.split("\t")
    if len(fields) != 6:
        raise MetadataParseError(line_number, f"expected 6 tab-separated fields, got {len(fields)}")
    obs_id_s, taxon_s, date_s, lat_s, lon_s, image_url = fields
    try:
        observation_id = int(obs_id_s)
        if observation_id < 0:
            raise ValueError
    except ValueError:
        raise MetadataParseError(line_number, f"bad observation_id {obs_id_s!r}") from None
    try:
        taxon_path = tuple(int(part) for part in taxon_s.split("/"))
    except ValueError:
        raise MetadataParseError(line_number, f"bad taxon_path {taxon_s!r}") from None
    try:
        observed_at = datetime.date.fromisoformat(date_s)
    except ValueError:
        raise MetadataParseError(line_number, f"bad date {date_s!r}") from None
    if (lat_s == "") != (lon_s == ""):
        raise MetadataParseError(line_number, "latitude and longitude must be present together")
    latitude = longitude = None
    if lat_s != "":
        try:
            latitude, longitude = float(lat_s), float(lon_s)
        except ValueError:
            raise MetadataParseError(line_number, f"bad coordinates {lat_s!r}, {lon_s!r}") from None
    try:
        return ObservationRecord(observation_id, taxon_path, observed_at, latitude, longitude, image_url)
    except CoordinateRangeError:
        raise
    except ValueError as exc:
        raise MetadataParseError(line_number, str(exc)) from None


def load_metadata(path: str | Path, round_coords: bool = False) -> list[ObservationRecord]:
    """Parse tab-separated observation records, one per line, in file order.

    round_coords additionally quantizes coordinates to 0.01 degrees at
    ingestion (off by default).
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            record = _parse_line(line, line_number)
            if round_coords and record.latitude is not None:
                record = ObservationRecord(
                    record.observation_id,
                    record.taxon_path,
                    record.observed_at,
                    quantize_coord(record.latitude),
                    quantize_coord(record.longitude),
                    record.image_url,
                )
            records.append(record)
    return records


def write_metadata(records: list[ObservationRecord], path: str | Path) -> None:
    """Write records in the tab-separated metadata format."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            lat = "" if rec.latitude is None else repr(rec.latitude)
            lon = "" if rec.longitude is None else repr(rec.longitude)
            fh.write(
                "\t".join(
                    [
                        str(rec.observation_id),
                        "/".join(str(t) for t in rec.taxon_path),
                        rec.observed_at.isoformat(),
                        lat,
                        lon,
                        rec.image_url,
                    ]
                )
                + "\n"
            )


def build_corpus(embeddings: EmbeddingMatrix, records: list[ObservationRecord]) -> Corpus:
    """Pair embeddings with records positionally, enforcing alignment and id uniqueness."""
    if embeddings.count != len(records):
        raise AlignmentError(
            f"{embeddings.count} embedding rows but {len(records)} metadata records"
        )
    ids = np.array([rec.observation_id for rec in records], dtype=np.uint64)
    if len(np.unique(ids)) != len(ids):
        seen: set[int] = set()
        for rec in records:
            if rec.observation_id in seen:
                raise DuplicateIdError(f"duplicate observation_id {rec.observation_id}")
            seen.add(rec.observation_id)
    return Corpus(tuple(records), embeddings, ids)
