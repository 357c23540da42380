"""Record live API responses into test/fixtures/roundtrip.json.

Run against a server built from the 300-row seed-99 demo corpus (see the
repository verify recipe), e.g.:

    ecosearch serve --index corpus --encoder test --port 8732
    python3 scripts/record_fixtures.py http://127.0.0.1:8732

The round-trip test replays these exchanges through a stubbed fetch, so
the UI is tested against byte-exact server behavior without a backend.
"""

import json
import sys
from pathlib import Path

import requests

SEARCHES = [
    {"query_text": "golden eagle soaring", "k": 8},
    {"query_text": "mule deer in snow", "k": 8, "filters": {"months": [5, 6, 7]}},
    {"query_text": "charred pine snag", "k": 8, "nprobe": 17, "filters": {"taxon_id": 10}},
]


def main() -> int:
    base = sys.argv[1] if len(sys.argv) > 1 else "http://127.0.0.1:8732"
    out = Path(__file__).resolve().parent.parent / "test" / "fixtures" / "roundtrip.json"
    health = requests.get(f"{base}/v1/health", timeout=5).json()
    session_id = requests.post(f"{base}/v1/sessions", timeout=5).json()["session_id"]
    searches = []
    for body in SEARCHES:
        resp = requests.post(f"{base}/v1/sessions/{session_id}/search", json=body, timeout=30)
        resp.raise_for_status()
        searches.append({"request": body, "response": resp.json()})
    last_hits = searches[-1]["response"]["hits"]
    if len(last_hits) < 5:
        raise SystemExit(f"final page has {len(last_hits)} hits; need 5 to mark")
    marks = []
    for hit in last_hits[:5]:
        body = {"observation_id": hit["observation_id"], "marked": True}
        resp = requests.post(f"{base}/v1/sessions/{session_id}/marks", json=body, timeout=5)
        resp.raise_for_status()
        marks.append({"request": body, "response": resp.json()})
    export = requests.get(f"{base}/v1/sessions/{session_id}/export.csv", timeout=10)
    export.raise_for_status()
    fixture = {
        "base_url": base,
        "health": health,
        "session_id": session_id,
        "searches": searches,
        "marks": marks,
        "export_text": export.content.decode("utf-8"),
    }
    out.write_text(json.dumps(fixture, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} ({out.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
