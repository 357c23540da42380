import csv
import io

import pytest

from ecosearch.errors import EmptyExportError, InvalidMarkError, SessionNotFoundError
from ecosearch.session import EXPORT_COLUMNS, SessionStore


def hit(oid, rank, score, **kw):
    row = {
        "observation_id": oid,
        "rank": rank,
        "score": score,
        "vector_position": oid - 1000,
        "taxon_path": [1, 10, 100],
        "leaf_taxon_id": 100,
        "observed_at": "2021-06-15",
        "latitude": 40.58,
        "longitude": -105.3,
        "image_url": f"https://img/{oid}.jpg",
    }
    row.update(kw)
    return row


def page(*oids, base_score=0.9):
    return [hit(oid, i + 1, base_score - i * 0.05) for i, oid in enumerate(oids)]


@pytest.fixture()
def store(tmp_path):
    return SessionStore(tmp_path / "sessions")


def test_create_and_get(store):
    s = store.create()
    assert store.get(s.session_id) is s
    with pytest.raises(SessionNotFoundError):
        store.get("deadbeef")


def test_search_appends_and_surfaces(store):
    s = store.create()
    store.record_search(s.session_id, "dead bird", {}, 3, None, page(1001, 1002))
    store.record_search(s.session_id, "dead bird again", {}, 3, None, page(1003))
    assert [q["query_text"] for q in s.queries] == ["dead bird", "dead bird again"]
    assert s.surfaced == {1001, 1002, 1003}
    assert [h["observation_id"] for h in s.last_results] == [1003]


def test_mark_idempotent_with_timestamp_refresh(store):
    s = store.create()
    store.record_search(s.session_id, "q", {}, 2, None, page(1001, 1002))
    first = store.mark(s.session_id, 1001, True)
    assert first["marked"] is True
    second = store.mark(s.session_id, 1001, True)
    assert second["marked"] is True
    assert second["marked_at"] >= first["marked_at"]
    assert len(s.marks) == 1
    store.mark(s.session_id, 1001, False)
    assert s.mark_state(1001) is False


def test_mark_requires_surfaced_observation(store):
    s = store.create()
    store.record_search(s.session_id, "q", {}, 2, None, page(1001))
    with pytest.raises(InvalidMarkError):
        store.mark(s.session_id, 9999, True)
    # surfaced on an earlier page stays markable after later queries
    store.record_search(s.session_id, "other", {}, 2, None, page(1002))
    store.mark(s.session_id, 1001, True)


def test_replay_from_disk(tmp_path):
    store = SessionStore(tmp_path / "sessions")
    s = store.create()
    store.record_search(s.session_id, "q", {"months": [6]}, 2, 4, page(1001, 1002))
    store.mark(s.session_id, 1002, True)
    reopened = SessionStore(tmp_path / "sessions")
    replayed = reopened.get(s.session_id)
    assert replayed.surfaced == {1001, 1002}
    assert replayed.mark_state(1002) is True
    assert replayed.mark_state(1001) is False
    assert replayed.queries[0]["filters"] == {"months": [6]}
    assert reopened.export_csv(s.session_id) == store.export_csv(s.session_id)


def test_export_layout(store):
    s = store.create()
    store.record_search(s.session_id, "q", {}, 3, None, page(1001, 1002, 1003))
    store.mark(s.session_id, 1002, True)
    data = store.export_csv(s.session_id)
    text = data.decode("utf-8")
    lines = text.split("\r\n")
    assert lines[-1] == ""
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == EXPORT_COLUMNS
    assert len(rows) == 4
    marked_flags = [r[1] for r in rows[1:]]
    assert marked_flags == ["false", "true", "false"]
    assert rows[1][0] == "1001"
    assert rows[1][2] == "1"
    assert rows[1][9] == "https://www.inaturalist.org/observations/1001"


def test_export_score_text_round_trips(store):
    s = store.create()
    score = 0.6981065273284912
    store.record_search(s.session_id, "q", {}, 1, None, [hit(1001, 1, score)])
    rows = list(csv.reader(io.StringIO(store.export_csv(s.session_id).decode())))
    assert rows[1][3] == repr(score)
    assert float(rows[1][3]) == score


def test_export_missing_coordinates_empty_fields(store):
    s = store.create()
    h = hit(1001, 1, 0.5, latitude=None, longitude=None)
    store.record_search(s.session_id, "q", {}, 1, None, [h])
    rows = list(csv.reader(io.StringIO(store.export_csv(s.session_id).decode())))
    assert rows[1][6] == ""
    assert rows[1][7] == ""


def test_export_latest_page_only_with_mark_preserved(store):
    s = store.create()
    store.record_search(s.session_id, "first", {}, 2, None, page(1001, 1002))
    store.mark(s.session_id, 1001, True)
    store.record_search(s.session_id, "second", {}, 2, None, page(1001, 1005))
    rows = list(csv.reader(io.StringIO(store.export_csv(s.session_id).decode())))
    assert [r[0] for r in rows[1:]] == ["1001", "1005"]
    assert rows[1][1] == "true"


def test_export_round_trip_byte_identical(store):
    s = store.create()
    tricky = hit(1001, 1, 0.25, image_url='https://img/1.jpg?a=b,c&d="x"')
    store.record_search(s.session_id, "q", {}, 2, None, [tricky, hit(1002, 2, 0.2)])
    data = store.export_csv(s.session_id)
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    buf = io.StringIO(newline="")
    csv.writer(buf, dialect="excel").writerows(rows)
    assert buf.getvalue().encode("utf-8") == data


def test_export_requires_results(store):
    s = store.create()
    with pytest.raises(EmptyExportError):
        store.export_csv(s.session_id)


def test_session_isolation(store):
    a = store.create()
    b = store.create()
    store.record_search(a.session_id, "q", {}, 1, None, page(1001))
    store.record_search(b.session_id, "q", {}, 1, None, page(2001, base_score=0.7))
    store.mark(a.session_id, 1001, True)
    assert b.marks == {}
    assert b.surfaced == {2001}
    with pytest.raises(InvalidMarkError):
        store.mark(b.session_id, 1001, True)


def test_custom_link_template(tmp_path):
    store = SessionStore(tmp_path / "s", link_template="https://example.org/obs/{id}")
    s = store.create()
    store.record_search(s.session_id, "q", {}, 1, None, page(1001))
    rows = list(csv.reader(io.StringIO(store.export_csv(s.session_id).decode())))
    assert rows[1][9] == "https://example.org/obs/1001"
