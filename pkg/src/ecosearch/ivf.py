"""Inverted-file similarity index with a memory-mappable on-disk layout.

The index partitions unit vectors across k-means cells. Searches scan the
nprobe most promising cells and rank candidates by inner product. A saved
index can be reopened as a memory-mapped view whose pages are loaded on
demand and optionally dropped once a scan-byte budget is exceeded, so files
much larger than RAM stay searchable.

Scoring uses one einsum kernel everywhere (brute force, in-memory scans,
mapped scans) so the same vectors produce bit-identical float32 scores in
every path.
"""

from __future__ import annotations

import mmap
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    CorruptionError,
    FormatError,
    NormalizationError,
    ShapeError,
)
from .kmeans import Centroids, assign_to_centroids, default_nprobe
from .store import Corpus

INDEX_MAGIC = b"INQI"
INDEX_VERSION = 1
# magic, version u32, dim u32, nlist u32, quantization u8, total_vectors u64
_HEADER = struct.Struct("<4sIIIBQ")
_DIR_DTYPE = np.dtype([("off", "<u8"), ("len", "<u8")])
_QUANT_CODES = {"none": 0, "int8": 1}
_QUANT_NAMES = {code: name for name, code in _QUANT_CODES.items()}
_ALIGN = 64

QUERY_NORM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SearchHit:
    vector_position: int
    observation_id: int
    score: float


def _entry_dtype(dim: int, quantization: str) -> np.dtype:
    kind = "i1" if quantization == "int8" else "<f4"
    return np.dtype([("pos", "<u4"), ("vec", kind, (dim,))])


def _check_query(query, dim: int) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != dim:
        raise ShapeError(f"query has shape {q.shape}, index dim is {dim}")
    norm = float(np.linalg.norm(q.astype(np.float64)))
    if abs(norm - 1.0) > QUERY_NORM_TOLERANCE:
        raise NormalizationError(f"query norm {norm:.6f} is not unit")
    return q


def _row_scores(vectors: np.ndarray, query: np.ndarray) -> np.ndarray:
    # fixed per-row reduction, independent of row count, so scores are
    # reproducible across full scans and per-list scans
    return np.einsum("ij,j->i", vectors, query)


def _rank_hits(positions, scores, observation_ids, k: int) -> list[SearchHit]:
    scores = np.clip(scores, np.float32(-1.0), np.float32(1.0))
    order = np.lexsort((observation_ids, -scores))[:k]
    return [
        SearchHit(int(positions[i]), int(observation_ids[i]), float(scores[i]))
        for i in order
    ]


class IvfIndex:
    """Immutable inverted-file index, either in memory or a mapped file view."""

    def __init__(self):
        raise TypeError("use build_ivf or open_index")

    @classmethod
    def _new(cls):
        return object.__new__(cls)

    # common fields: centroids, quantization, total_vectors, observation_ids
    # in-memory mode: _lists = [(positions u32, vectors f32|i8)], _scales f32
    # mapped mode: _mm, _file, _offsets, _lengths, _budget, _touched

    @property
    def nlist(self) -> int:
        return self.centroids.nlist

    @property
    def dim(self) -> int:
        return self.centroids.dim

    def _get_list(self, i: int):
        """Return (positions u32, vectors, scale) for inverted list i."""
        if self._mm is None:
            positions, vectors = self._lists[i]
            scale = float(self._scales[i]) if self.quantization == "int8" else 1.0
            return positions, vectors, scale
        off = int(self._offsets[i])
        length = int(self._lengths[i])
        scale = 1.0
        base = off
        touched = 0
        if self.quantization == "int8":
            scale = float(np.frombuffer(self._mm, dtype="<f4", count=1, offset=off)[0])
            base = off + 4
            touched = 4
        ent = np.frombuffer(self._mm, dtype=self._edtype, count=length, offset=base)
        positions = np.ascontiguousarray(ent["pos"])
        vectors = np.ascontiguousarray(ent["vec"])
        self._account(touched + length * self._edtype.itemsize)
        return positions, vectors, scale

    def _account(self, nbytes: int) -> None:
        if self._budget is None:
            return
        self._touched += nbytes
        if self._touched >= self._budget:
            try:
                self._mm.madvise(mmap.MADV_DONTNEED)
            except (AttributeError, OSError):
                pass
            self._touched = 0

    def _ids_for(self, positions: np.ndarray) -> np.ndarray:
        if self.observation_ids is not None:
            return self.observation_ids[positions]
        return positions.astype(np.uint64)

    def close(self) -> None:
        if self._mm is not None:
            self._mm.close()
            self._file.close()
            self._mm = None
            self._file = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def build_ivf(
    corpus: Corpus, centroids: Centroids, quantization: str = "none"
) -> IvfIndex:
    """Assign every corpus vector to its nearest centroid and bucket them.

    int8 mode stores each list's vectors as round(v / scale) with a per-list
    scale of max|component| / 127; searches rescore on the dequantized values.
    """
    if quantization not in _QUANT_CODES:
        raise ValueError(f"unknown quantization {quantization!r}")
    data = corpus.embeddings.data
    if centroids.dim != corpus.dim:
        raise ShapeError(f"centroid dim {centroids.dim} != corpus dim {corpus.dim}")
    n = len(corpus)
    assign = assign_to_centroids(data, centroids.data)
    if n:
        # spot-check assignment optimality against an independent scoring pass
        sample = np.linspace(0, n - 1, num=min(n, 512), dtype=np.int64)
        best = np.max(data[sample] @ centroids.data.T, axis=1)
        got = np.einsum("ij,ij->i", data[sample], centroids.data[assign[sample]])
        if np.any(got < best - 1e-5):
            raise CorruptionError("assignment verification failed")
    order = np.argsort(assign, kind="stable").astype(np.int64)
    sorted_assign = assign[order]
    starts = np.searchsorted(sorted_assign, np.arange(centroids.nlist), side="left")
    ends = np.searchsorted(sorted_assign, np.arange(centroids.nlist), side="right")
    lists = []
    scales = np.zeros(centroids.nlist, dtype=np.float32)
    for i in range(centroids.nlist):
        members = order[starts[i] : ends[i]]
        positions = members.astype(np.uint32)
        vecs = np.ascontiguousarray(data[members])
        if quantization == "int8":
            maxabs = np.float32(np.max(np.abs(vecs))) if members.size else np.float32(0)
            scale = maxabs / np.float32(127.0)
            scales[i] = scale
            if scale > 0:
                q = np.clip(np.round(vecs / scale), -127, 127).astype(np.int8)
            else:
                q = np.zeros(vecs.shape, dtype=np.int8)
            lists.append((positions, q))
        else:
            lists.append((positions, vecs))
    index = IvfIndex._new()
    index.centroids = centroids
    index.quantization = quantization
    index.total_vectors = n
    index.observation_ids = corpus.observation_ids
    index._lists = lists
    index._scales = scales
    index._mm = None
    index._file = None
    index._edtype = _entry_dtype(centroids.dim, quantization)
    index._budget = None
    return index


def _layout(index: IvfIndex) -> tuple[np.ndarray, int]:
    """Compute 64-byte-aligned payload offsets; returns (directory, file size)."""
    nlist = index.nlist
    directory = np.zeros(nlist, dtype=_DIR_DTYPE)
    cursor = _HEADER.size + nlist * index.dim * 4 + nlist * _DIR_DTYPE.itemsize
    entry = _entry_dtype(index.dim, index.quantization).itemsize
    prefix = 4 if index.quantization == "int8" else 0
    for i in range(nlist):
        cursor += (-cursor) % _ALIGN
        length = int(index._lengths[i]) if index._mm is not None else len(index._lists[i][0])
        directory[i] = (cursor, length)
        cursor += prefix + length * entry
    return directory, cursor


def save_index(index: IvfIndex, path: str | Path) -> None:
    """Persist an index; identical build inputs produce byte-identical files."""
    directory, _total_size = _layout(index)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                INDEX_MAGIC,
                INDEX_VERSION,
                index.dim,
                index.nlist,
                _QUANT_CODES[index.quantization],
                index.total_vectors,
            )
        )
        fh.write(np.ascontiguousarray(index.centroids.data, dtype="<f4").tobytes())
        fh.write(directory.tobytes())
        cursor = _HEADER.size + index.nlist * index.dim * 4 + directory.nbytes
        edtype = _entry_dtype(index.dim, index.quantization)
        for i in range(index.nlist):
            pad = (-cursor) % _ALIGN
            fh.write(b"\0" * pad)
            cursor += pad
            positions, vectors, scale = index._get_list(i)
            if index.quantization == "int8":
                fh.write(struct.pack("<f", scale))
                cursor += 4
            ent = np.zeros(len(positions), dtype=edtype)
            ent["pos"] = positions
            ent["vec"] = vectors
            fh.write(ent.tobytes())
            cursor += ent.nbytes


def open_index(
    path: str | Path,
    observation_ids: np.ndarray | None = None,
    cache_budget_bytes: int | None = None,
) -> IvfIndex:
    """Map a saved index without reading the payload.

    Centroids and the list directory are copied to heap memory; list payloads
    stay on disk and are paged in per search. cache_budget_bytes caps how many
    payload bytes may be scanned before resident pages are dropped.

    observation_ids, when given, must align with the corpus the index was
    built from; without it hits report the vector position as the id.
    """
    fh = open(path, "rb")
    try:
        mm = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
    except ValueError:
        fh.close()
        raise CorruptionError(f"{path}: empty index file") from None
    try:
        mm.madvise(mmap.MADV_RANDOM)
    except (AttributeError, OSError):
        pass
    try:
        if len(mm) < _HEADER.size:
            raise CorruptionError(f"{path}: file shorter than header")
        magic, version, dim, nlist, quant_code, total = _HEADER.unpack(mm[: _HEADER.size])
        if magic != INDEX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != INDEX_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if quant_code not in _QUANT_NAMES:
            raise FormatError(f"{path}: unknown quantization code {quant_code}")
        if dim < 1 or nlist < 1:
            raise CorruptionError(f"{path}: degenerate header (dim={dim}, nlist={nlist})")
        quantization = _QUANT_NAMES[quant_code]
        cent_end = _HEADER.size + nlist * dim * 4
        dir_end = cent_end + nlist * _DIR_DTYPE.itemsize
        if len(mm) < dir_end:
            raise CorruptionError(f"{path}: truncated before list directory")
        # copy, never view: lingering views would pin the map if open fails
        cent = np.frombuffer(mm, dtype="<f4", count=nlist * dim, offset=_HEADER.size).copy()
        centroids = Centroids(cent.reshape(nlist, dim))
        directory = np.frombuffer(mm, dtype=_DIR_DTYPE, count=nlist, offset=cent_end).copy()
        offsets = directory["off"].astype(np.int64)
        lengths = directory["len"].astype(np.int64)
        if int(lengths.sum()) != total:
            raise CorruptionError(
                f"{path}: directory sums to {int(lengths.sum())} entries, header says {total}"
            )
        edtype = _entry_dtype(dim, quantization)
        prefix = 4 if quantization == "int8" else 0
        for i in range(nlist):
            if offsets[i] % _ALIGN:
                raise AlignmentError(f"{path}: list {i} payload not 64-byte aligned")
            end = offsets[i] + prefix + lengths[i] * edtype.itemsize
            if end > len(mm):
                raise CorruptionError(f"{path}: list {i} payload extends past end of file")
        if observation_ids is not None:
            observation_ids = np.ascontiguousarray(observation_ids, dtype=np.uint64)
            if observation_ids.shape != (total,):
                raise AlignmentError(
                    f"{len(observation_ids)} observation ids for {total} indexed vectors"
                )
    except Exception:
        mm.close()
        fh.close()
        raise
    index = IvfIndex._new()
    index.centroids = centroids
    index.quantization = quantization
    index.total_vectors = int(total)
    index.observation_ids = observation_ids
    index._lists = None
    index._scales = None
    index._mm = mm
    index._file = fh
    index._offsets = offsets
    index._lengths = lengths
    index._edtype = edtype
    index._budget = cache_budget_bytes
    index._touched = 0
    return index


def search(
    index: IvfIndex,
    query,
    k: int,
    nprobe: int | None = None,
    allowed_mask: np.ndarray | None = None,
) -> list[SearchHit]:
    """Top-k hits from the nprobe lists whose centroids best match the query.

    allowed_mask, when given, is a boolean array over vector positions;
    candidates outside the mask are skipped before scoring.
    """
    q = _check_query(query, index.dim)
    if k < 1:
        raise ValueError("k must be >= 1")
    if nprobe is None:
        nprobe = default_nprobe(index.nlist)
    if not 1 <= nprobe <= index.nlist:
        raise ValueError(f"nprobe {nprobe} outside [1, {index.nlist}]")
    cscores = _row_scores(index.centroids.data, q)
    probe = np.argsort(-cscores, kind="stable")[:nprobe]
    pos_parts: list[np.ndarray] = []
    score_parts: list[np.ndarray] = []
    for li in probe:
        positions, vectors, scale = index._get_list(int(li))
        if positions.size == 0:
            continue
        if allowed_mask is not None:
            sel = allowed_mask[positions]
            if not sel.any():
                continue
            positions = positions[sel]
            vectors = vectors[sel]
        if index.quantization == "int8":
            vectors = vectors.astype(np.float32) * np.float32(scale)
        pos_parts.append(positions)
        score_parts.append(_row_scores(np.ascontiguousarray(vectors), q))
    if not pos_parts:
        return []
    positions = np.concatenate(pos_parts)
    scores = np.concatenate(score_parts)
    return _rank_hits(positions, scores, index._ids_for(positions), k)


def brute_force_search(corpus: Corpus, query, k: int) -> list[SearchHit]:
    """Exact top-k by inner product over the whole corpus."""
    q = _check_query(query, corpus.dim)
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(corpus)
    if n == 0:
        return []
    scores = _row_scores(corpus.embeddings.data, q)
    positions = np.arange(n, dtype=np.uint32)
    return _rank_hits(positions, scores, corpus.observation_ids, k)
