import datetime

import numpy as np
import pytest

from ecosearch.errors import CoordinateRangeError
from ecosearch.filters import (
    FilterSpec,
    GeoBox,
    build_geo_columns,
    build_month_index,
    build_taxon_index,
    candidate_set,
    eval_filter,
    filtered_search,
)
from ecosearch.ivf import brute_force_search, build_ivf
from ecosearch.kmeans import train_kmeans
from ecosearch.store import EmbeddingMatrix, ObservationRecord, build_corpus

GENERA = {10: [101, 102, 103], 20: [201, 202], 30: [301]}


def synth_corpus(rng, count):
    genus_keys = sorted(GENERA)
    records = []
    for i in range(count):
        genus = genus_keys[int(rng.integers(len(genus_keys)))]
        species = GENERA[genus][int(rng.integers(len(GENERA[genus])))]
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 28))
        if rng.random() < 0.15:
            lat = lon = None
        else:
            lat = float(np.round(rng.uniform(35, 45), 3))
            lon = float(np.round(rng.uniform(-110, -100), 3))
        records.append(
            ObservationRecord(
                observation_id=50_000 + i,
                taxon_path=(1, genus, species),
                observed_at=datetime.date(2021, month, day),
                latitude=lat,
                longitude=lon,
                image_url=f"https://img/{i}.jpg",
            )
        )
    data = rng.standard_normal((count, 12))
    data /= np.linalg.norm(data, axis=1, keepdims=True)
    return build_corpus(EmbeddingMatrix(data.astype(np.float32)), records)


def random_spec(rng):
    taxon = None
    if rng.random() < 0.5:
        pool = [1] + list(GENERA) + [s for v in GENERA.values() for s in v] + [999]
        taxon = int(pool[int(rng.integers(len(pool)))])
    months = None
    if rng.random() < 0.5:
        count = int(rng.integers(1, 5))
        months = frozenset(int(m) for m in rng.choice(np.arange(1, 13), count, replace=False))
    geo = None
    if rng.random() < 0.5:
        lat0 = float(rng.uniform(34, 44))
        lon0 = float(rng.uniform(-111, -102))
        geo = GeoBox(lat0, lat0 + float(rng.uniform(0.5, 6)), lon0, lon0 + float(rng.uniform(0.5, 6)))
    return FilterSpec(taxon_id=taxon, months=months, geo=geo)


@pytest.fixture(scope="module")
def fixture_corpus():
    return synth_corpus(np.random.default_rng(200), 200)


@pytest.fixture(scope="module")
def search_setup():
    rng = np.random.default_rng(201)
    corpus = synth_corpus(rng, 5000)
    index = build_ivf(corpus, train_kmeans(corpus.embeddings, nlist=64, seed=9))
    return corpus, index


def unit_query(rng, dim=12):
    q = rng.standard_normal(dim)
    return (q / np.linalg.norm(q)).astype(np.float32)


# ---- spec validation ----


def test_spec_validation():
    FilterSpec(months=frozenset({6, 7, 8}))
    with pytest.raises(ValueError):
        FilterSpec(months=frozenset())
    with pytest.raises(ValueError):
        FilterSpec(months=frozenset({0, 5}))
    with pytest.raises(ValueError):
        FilterSpec(months=frozenset({13}))
    with pytest.raises(ValueError):
        FilterSpec(taxon_id=-4)
    with pytest.raises(ValueError):
        GeoBox(41.0, 40.0, -105.0, -104.0)
    with pytest.raises(ValueError):
        GeoBox(40.0, 41.0, -104.0, -105.0)
    with pytest.raises(CoordinateRangeError):
        GeoBox(-91.0, 40.0, -105.0, -104.0)
    with pytest.raises(CoordinateRangeError):
        GeoBox(40.0, 41.0, -105.0, 181.0)


def test_spec_json_roundtrip():
    spec = FilterSpec(
        taxon_id=47126,
        months=frozenset({6, 7, 8}),
        geo=GeoBox(40.57, 40.75, -105.54, -105.18),
    )
    again = FilterSpec.from_json(spec.to_json())
    assert again == spec
    assert FilterSpec.from_json({}) == FilterSpec()
    assert FilterSpec.from_json({"months": [6, 6, 7]}).months == frozenset({6, 7})


def test_spec_json_rejects_unknown_keys():
    with pytest.raises(ValueError):
        FilterSpec.from_json({"month": [6]})
    with pytest.raises(ValueError):
        FilterSpec.from_json({"geo": {"lat_min": 1, "lat_max": 2, "lon_min": 3}})
    with pytest.raises(ValueError):
        FilterSpec.from_json({"geo": {"lat_min": 1, "lat_max": 2, "lon_min": 3, "lon_max": 4, "x": 5}})


# ---- posting indexes ----


def test_ancestor_expansion():
    rec = ObservationRecord(1, (1, 10, 100), datetime.date(2021, 5, 1), None, None, "u")
    corpus = build_corpus(
        EmbeddingMatrix(np.eye(1, 4, dtype=np.float32)), [rec]
    )
    tindex = build_taxon_index(corpus)
    for key in (1, 10, 100):
        assert list(tindex.positions_for(key)) == [0]
    assert list(tindex.positions_for(55)) == []


def test_shared_leaf_ascending():
    recs = [
        ObservationRecord(7, (1, 10, 100), datetime.date(2021, 5, 1), None, None, "u"),
        ObservationRecord(3, (1, 10, 100), datetime.date(2021, 6, 1), None, None, "u"),
    ]
    corpus = build_corpus(EmbeddingMatrix(np.eye(2, 4, dtype=np.float32)), recs)
    tindex = build_taxon_index(corpus)
    assert list(tindex.positions_for(100)) == [0, 1]


def test_posting_membership_linear_scan_oracle(fixture_corpus):
    tindex = build_taxon_index(fixture_corpus)
    all_taxa = {t for rec in fixture_corpus.records for t in rec.taxon_path}
    assert set(tindex.postings) == all_taxa
    for taxon, postings in tindex.postings.items():
        expected = [
            pos for pos, rec in enumerate(fixture_corpus.records) if taxon in rec.taxon_path
        ]
        assert list(postings) == expected
        assert np.all(np.diff(postings) > 0) or postings.size <= 1


def test_month_partition(fixture_corpus):
    mindex = build_month_index(fixture_corpus)
    combined = np.concatenate([mindex.positions_for(m) for m in range(1, 13)])
    assert len(combined) == len(fixture_corpus)
    assert len(np.unique(combined)) == len(fixture_corpus)
    for m in range(1, 13):
        for pos in mindex.positions_for(m):
            assert fixture_corpus.records[pos].observed_at.month == m


# ---- predicate evaluation ----


def test_eval_filter_geo_box():
    spec = FilterSpec(geo=GeoBox(40.57, 40.75, -105.54, -105.18))
    rec = ObservationRecord(1, (1,), datetime.date(2021, 7, 1), 40.60, -105.30, "u")
    assert eval_filter(spec, rec)
    outside = ObservationRecord(2, (1,), datetime.date(2021, 7, 1), 40.76, -105.30, "u")
    assert not eval_filter(spec, outside)


def test_eval_filter_inclusive_bounds():
    spec = FilterSpec(geo=GeoBox(40.57, 40.75, -105.54, -105.18))
    corner = ObservationRecord(1, (1,), datetime.date(2021, 7, 1), 40.57, -105.18, "u")
    assert eval_filter(spec, corner)
    corner2 = ObservationRecord(2, (1,), datetime.date(2021, 7, 1), 40.75, -105.54, "u")
    assert eval_filter(spec, corner2)


def test_eval_filter_empty_spec(fixture_corpus):
    spec = FilterSpec()
    assert all(eval_filter(spec, rec) for rec in fixture_corpus.records)


def test_eval_filter_months():
    spec = FilterSpec(months=frozenset({6, 7, 8}))
    winter = ObservationRecord(1, (1,), datetime.date(2021, 12, 5), None, None, "u")
    assert not eval_filter(spec, winter)
    summer = ObservationRecord(2, (1,), datetime.date(2021, 7, 5), None, None, "u")
    assert eval_filter(spec, summer)


def test_eval_filter_missing_coords_fail_geo():
    spec = FilterSpec(geo=GeoBox(-90, 90, -180, 180))
    rec = ObservationRecord(1, (1,), datetime.date(2021, 7, 1), None, None, "u")
    assert not eval_filter(spec, rec)


def test_eval_filter_taxon_on_path():
    spec = FilterSpec(taxon_id=10)
    rec = ObservationRecord(1, (1, 10, 100), datetime.date(2021, 7, 1), None, None, "u")
    assert eval_filter(spec, rec)
    assert not eval_filter(FilterSpec(taxon_id=20), rec)


# ---- candidate_set ----


def test_candidate_set_matches_predicate_scan(fixture_corpus):
    tindex = build_taxon_index(fixture_corpus)
    mindex = build_month_index(fixture_corpus)
    geo_cols = build_geo_columns(fixture_corpus)
    rng = np.random.default_rng(202)
    for _ in range(100):
        spec = random_spec(rng)
        got = list(candidate_set(spec, tindex, mindex, fixture_corpus, geo_cols))
        expected = [
            pos for pos, rec in enumerate(fixture_corpus.records) if eval_filter(spec, rec)
        ]
        assert got == expected


def test_candidate_set_unknown_taxon(fixture_corpus):
    tindex = build_taxon_index(fixture_corpus)
    mindex = build_month_index(fixture_corpus)
    spec = FilterSpec(taxon_id=999)
    assert candidate_set(spec, tindex, mindex, fixture_corpus).size == 0


def test_candidate_set_all_months_is_everything(fixture_corpus):
    tindex = build_taxon_index(fixture_corpus)
    mindex = build_month_index(fixture_corpus)
    spec = FilterSpec(months=frozenset(range(1, 13)))
    assert list(candidate_set(spec, tindex, mindex, fixture_corpus)) == list(
        range(len(fixture_corpus))
    )


# ---- filtered_search ----


def test_filtered_search_single_match(search_setup):
    corpus, index = search_setup
    target = corpus.records[1234]
    spec = FilterSpec(
        taxon_id=target.leaf_taxon_id,
        months=frozenset({target.observed_at.month}),
        geo=GeoBox(target.latitude, target.latitude, target.longitude, target.longitude),
    )
    matching = [pos for pos, r in enumerate(corpus.records) if eval_filter(spec, r)]
    if len(matching) != 1:
        pytest.skip("fixture surfaced more than one identical record")
    rng = np.random.default_rng(203)
    for _ in range(3):
        hits = filtered_search(index, corpus, spec, unit_query(rng), k=10)
        assert [h.vector_position for h in hits] == [1234]


def test_filtered_search_equals_subset_brute_force(search_setup):
    corpus, index = search_setup
    rng = np.random.default_rng(204)
    tindex = build_taxon_index(corpus)
    mindex = build_month_index(corpus)
    geo_cols = build_geo_columns(corpus)
    for _ in range(25):
        spec = random_spec(rng)
        q = unit_query(rng)
        hits = filtered_search(
            index, corpus, spec, q, k=20,
            taxon_index=tindex, month_index=mindex, geo_columns=geo_cols,
        )
        everything = brute_force_search(corpus, q, len(corpus))
        expected = [h for h in everything if eval_filter(spec, corpus.records[h.vector_position])][:20]
        assert hits == expected


def test_filtered_search_strategy_equivalence(search_setup):
    corpus, index = search_setup
    rng = np.random.default_rng(205)
    tindex = build_taxon_index(corpus)
    mindex = build_month_index(corpus)
    geo_cols = build_geo_columns(corpus)
    for _ in range(25):
        spec = random_spec(rng)
        q = unit_query(rng)
        kw = dict(taxon_index=tindex, month_index=mindex, geo_columns=geo_cols)
        prefiltered = filtered_search(index, corpus, spec, q, k=15, **kw)
        # both strategies run to completion at full probe and must agree exactly
        scanned = filtered_search(
            index, corpus, spec, q, k=15, nprobe=index.nlist, prefilter_threshold=0, **kw
        )
        assert prefiltered == scanned
        # the early-stopping scan is approximate but still sound and ordered
        partial = filtered_search(index, corpus, spec, q, k=15, prefilter_threshold=0, **kw)
        assert all(eval_filter(spec, corpus.records[h.vector_position]) for h in partial)
        assert [h.score for h in partial] == sorted((h.score for h in partial), reverse=True)


def test_filtered_search_soundness(search_setup):
    corpus, index = search_setup
    rng = np.random.default_rng(206)
    for _ in range(20):
        spec = random_spec(rng)
        hits = filtered_search(index, corpus, spec, unit_query(rng), k=30)
        for h in hits:
            assert eval_filter(spec, corpus.records[h.vector_position])


def test_filtered_search_ancestor_superset(search_setup):
    corpus, index = search_setup
    rng = np.random.default_rng(207)
    q = unit_query(rng)
    genus, species = 10, 101
    genus_hits = filtered_search(index, corpus, FilterSpec(taxon_id=genus), q, k=len(corpus))
    species_hits = filtered_search(index, corpus, FilterSpec(taxon_id=species), q, k=len(corpus))
    genus_ids = {h.observation_id for h in genus_hits}
    species_ids = {h.observation_id for h in species_hits}
    assert species_ids and species_ids <= genus_ids


def test_filtered_search_empty_candidates(search_setup):
    corpus, index = search_setup
    rng = np.random.default_rng(208)
    assert filtered_search(index, corpus, FilterSpec(taxon_id=999), unit_query(rng), k=5) == []
