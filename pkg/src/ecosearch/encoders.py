"""Text-to-vector encoder backends behind one adapter.

Three interchangeable backends produce query vectors: an HTTP endpoint
wrapping a real text encoder, a JSON lookup table of precomputed vectors,
and a deterministic hash-seeded generator for tests and offline work. The
adapter renormalizes whatever comes back so callers always hold a unit
vector of the configured dimensionality.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import requests

from .errors import EncoderConfigurationError, EncoderUnavailableError

KINDS = ("remote_endpoint", "lookup_file", "deterministic_test")

_lookup_cache: dict[str, tuple[int, dict]] = {}


@dataclass(frozen=True)
class EncoderBackend:
    kind: str
    dim: int
    endpoint: str | None = None
    path: str | None = None
    timeout_seconds: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EncoderConfigurationError(f"unknown encoder kind {self.kind!r}")
        if self.dim < 1:
            raise EncoderConfigurationError("encoder dim must be >= 1")
        if self.kind == "remote_endpoint" and not self.endpoint:
            raise EncoderConfigurationError("remote_endpoint backend needs an endpoint URL")
        if self.kind == "lookup_file" and not self.path:
            raise EncoderConfigurationError("lookup_file backend needs a table path")


def _finish(raw, backend: EncoderBackend) -> np.ndarray:
    vec = np.asarray(raw, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != backend.dim:
        raise EncoderConfigurationError(
            f"encoder returned shape {vec.shape}, configured dim is {backend.dim}"
        )
    if not np.all(np.isfinite(vec)):
        raise EncoderConfigurationError("encoder returned non-finite values")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EncoderConfigurationError("encoder returned a zero vector")
    return (vec / norm).astype(np.float32)


def _lookup_table(path: str) -> dict:
    key = os.path.abspath(path)
    try:
        mtime = os.stat(key).st_mtime_ns
    except OSError as exc:
        raise EncoderConfigurationError(f"lookup table unreadable: {exc}") from None
    cached = _lookup_cache.get(key)
    if cached and cached[0] == mtime:
        return cached[1]
    with open(key, encoding="utf-8") as fh:
        try:
            table = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EncoderConfigurationError(f"lookup table is not valid JSON: {exc}") from None
    if not isinstance(table, dict):
        raise EncoderConfigurationError("lookup table must map text to vectors")
    _lookup_cache[key] = (mtime, table)
    return table


def _encode_deterministic(backend: EncoderBackend, text: str) -> np.ndarray:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return _finish(rng.standard_normal(backend.dim), backend)


def _encode_lookup(backend: EncoderBackend, text: str) -> np.ndarray:
    table = _lookup_table(backend.path)
    if text not in table:
        raise EncoderUnavailableError(f"no stored vector for text {text!r}")
    return _finish(table[text], backend)


def _encode_remote(backend: EncoderBackend, text: str) -> np.ndarray:
    try:
        resp = requests.post(
            backend.endpoint, json={"text": text}, timeout=backend.timeout_seconds
        )
    except requests.RequestException as exc:
        raise EncoderUnavailableError(f"encoder endpoint failed: {exc}") from None
    if resp.status_code != 200:
        raise EncoderUnavailableError(
            f"encoder endpoint returned HTTP {resp.status_code}"
        )
    try:
        body = resp.json()
    except ValueError:
        raise EncoderUnavailableError("encoder endpoint returned non-JSON body") from None
    if not isinstance(body, dict) or "embedding" not in body:
        raise EncoderUnavailableError('encoder response lacks an "embedding" field')
    return _finish(body["embedding"], backend)


def encode_text(backend: EncoderBackend, text: str) -> np.ndarray:
    """Encode text to a unit float32 vector of backend.dim values."""
    if not text or not text.strip():
        raise ValueError("query text must be non-empty")
    if backend.kind == "deterministic_test":
        return _encode_deterministic(backend, text)
    if backend.kind == "lookup_file":
        return _encode_lookup(backend, text)
    return _encode_remote(backend, text)
