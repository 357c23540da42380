"""Verification sessions: query history, marks, and CSV export.

Every session is an append-only JSONL event log on disk. The in-memory view
is a pure fold over those events, so a service restart (or a browser reload
on the other end) replays the log and loses nothing. Export serializes the
latest result page with current mark state, one row per image.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    CorruptionError,
    EmptyExportError,
    InvalidMarkError,
    SessionNotFoundError,
)

DEFAULT_LINK_TEMPLATE = "https://www.inaturalist.org/observations/{id}"

EXPORT_COLUMNS = [
    "observation_id",
    "marked",
    "rank",
    "score",
    "leaf_taxon_id",
    "observed_at",
    "latitude",
    "longitude",
    "image_url",
    "observation_link",
]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Session:
    """Replayed state of one verification session."""

    session_id: str
    created_at: str
    queries: list = field(default_factory=list)
    last_results: list = field(default_factory=list)
    surfaced: set = field(default_factory=set)
    marks: dict = field(default_factory=dict)

    def apply(self, event: dict) -> None:
        kind = event.get("event")
        if kind == "created":
            self.created_at = event["at"]
        elif kind == "search":
            self.queries.append(
                {
                    "query_text": event["query_text"],
                    "filters": event["filters"],
                    "k": event["k"],
                    "nprobe": event.get("nprobe"),
                    "at": event["at"],
                }
            )
            self.last_results = event["hits"]
            for hit in event["hits"]:
                self.surfaced.add(hit["observation_id"])
        elif kind == "mark":
            oid = event["observation_id"]
            self.marks[oid] = {"marked": event["marked"], "marked_at": event["at"]}
        else:
            raise CorruptionError(f"unknown session event {kind!r}")

    def mark_state(self, observation_id: int) -> bool:
        entry = self.marks.get(observation_id)
        return bool(entry and entry["marked"])


class SessionStore:
    """File-backed collection of sessions; one JSONL log per session."""

    def __init__(self, root: str | Path, link_template: str = DEFAULT_LINK_TEMPLATE):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.link_template = link_template
        self._cache: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def _append(self, session: Session, event: dict) -> None:
        with open(self._path(session.session_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, separators=(",", ":")) + "\n")
        session.apply(event)

    def create(self) -> Session:
        with self._lock:
            session_id = uuid.uuid4().hex
            session = Session(session_id=session_id, created_at="")
            self._cache[session_id] = session
            self._append(
                session, {"event": "created", "session_id": session_id, "at": _now()}
            )
            return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            return self._get_locked(session_id)

    def _get_locked(self, session_id: str) -> Session:
        if session_id in self._cache:
            return self._cache[session_id]
        path = self._path(session_id)
        if not path.is_file():
            raise SessionNotFoundError(f"no session {session_id}")
        session = Session(session_id=session_id, created_at="")
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    session.apply(json.loads(line))
        self._cache[session_id] = session
        return session

    def record_search(
        self,
        session_id: str,
        query_text: str,
        filters: dict,
        k: int,
        nprobe: int | None,
        hits: list[dict],
    ) -> list[dict]:
        """Append a result page; returns the stored hit rows."""
        with self._lock:
            session = self._get_locked(session_id)
            event = {
                "event": "search",
                "session_id": session_id,
                "at": _now(),
                "query_text": query_text,
                "filters": filters,
                "k": k,
                "nprobe": nprobe,
                "hits": hits,
            }
            self._append(session, event)
            return session.last_results

    def mark(self, session_id: str, observation_id: int, marked: bool) -> dict:
        """Idempotently set a mark; the observation must have been surfaced."""
        with self._lock:
            session = self._get_locked(session_id)
            if observation_id not in session.surfaced:
                raise InvalidMarkError(
                    f"observation {observation_id} never appeared in session results"
                )
            self._append(
                session,
                {
                    "event": "mark",
                    "session_id": session_id,
                    "at": _now(),
                    "observation_id": observation_id,
                    "marked": bool(marked),
                },
            )
            return {
                "observation_id": observation_id,
                **session.marks[observation_id],
            }

    def export_csv(self, session_id: str) -> bytes:
        """Latest result page as RFC-4180 CSV with current mark state."""
        with self._lock:
            session = self._get_locked(session_id)
            if not session.queries:
                raise EmptyExportError(f"session {session_id} has no results to export")
            buf = io.StringIO(newline="")
            writer = csv.writer(buf, dialect="excel")
            writer.writerow(EXPORT_COLUMNS)
            for hit in session.last_results:
                writer.writerow(export_row(hit, session, self.link_template))
            return buf.getvalue().encode("utf-8")


def export_row(hit: dict, session: Session, link_template: str) -> list[str]:
    oid = hit["observation_id"]
    lat = hit.get("latitude")
    lon = hit.get("longitude")
    return [
        str(oid),
        "true" if session.mark_state(oid) else "false",
        str(hit["rank"]),
        repr(hit["score"]),
        str(hit["leaf_taxon_id"]),
        hit["observed_at"],
        "" if lat is None else repr(lat),
        "" if lon is None else repr(lon),
        hit["image_url"],
        link_template.format(id=oid),
    ]
