"""Shared fixture builders: synthetic observation corpora written to disk."""

import datetime

import numpy as np
import pytest

from ecosearch.engine import build_index_dir
from ecosearch.store import (
    EmbeddingMatrix,
    ObservationRecord,
    write_embeddings,
    write_metadata,
)

FIXTURE_GENERA = {10: (101, 102, 103), 20: (201, 202), 30: (301,)}


def _write_corpus_files(dir_path, n, dim, seed):
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((n, dim)).astype(np.float32)
    emb_path = dir_path / "raw.inqe"
    write_embeddings(EmbeddingMatrix(vectors), emb_path)
    genera = sorted(FIXTURE_GENERA)
    records = []
    for i in range(n):
        genus = genera[int(rng.integers(len(genera)))]
        species = FIXTURE_GENERA[genus][int(rng.integers(len(FIXTURE_GENERA[genus])))]
        day = datetime.date(2021, 1, 1) + datetime.timedelta(days=int(rng.integers(365)))
        if rng.random() < 0.85:
            lat = float(rng.uniform(35.0, 45.0))
            lon = float(rng.uniform(-110.0, -100.0))
        else:
            lat = lon = None
        records.append(
            ObservationRecord(
                observation_id=1000 + i,
                taxon_path=(1, genus, species),
                observed_at=day,
                latitude=lat,
                longitude=lon,
                image_url=f"https://img.example/{1000 + i}.jpg",
            )
        )
    meta_path = dir_path / "raw.tsv"
    write_metadata(records, meta_path)
    return emb_path, meta_path, records


@pytest.fixture()
def corpus_files(tmp_path):
    """Callable returning (embeddings_path, metadata_path, records)."""

    def build(n=400, dim=16, seed=7):
        return _write_corpus_files(tmp_path, n, dim, seed)

    return build


@pytest.fixture()
def built_corpus_dir(tmp_path):
    """Callable building a full corpus directory; returns (dir, records)."""

    def build(n=400, dim=16, seed=7, **kwargs):
        emb_path, meta_path, records = _write_corpus_files(tmp_path, n, dim, seed)
        out = tmp_path / "corpus"
        build_index_dir(emb_path, meta_path, out, seed=3, **kwargs)
        return out, records

    return build
