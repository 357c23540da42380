"""Command-line interface: build corpus directories, serve and query them,
export verification sessions, and run the case-study statistics.

Every flag reads a 1:1 environment-variable fallback when absent: flag
--foo-bar falls back to ECOSEARCH_FOO_BAR. Flags always win over variables.
"""

from __future__ import annotations

import argparse
import calendar
import csv
import datetime
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .analysis import (
    CategoricalGrid,
    MonthlySeries,
    aggregate_categorical_grid,
    category_proportions,
    day_of_year,
    mortality_index,
    phenology_anova,
)
from .encoders import EncoderBackend
from .engine import build_index_dir, load_engine, read_manifest
from .errors import EcoSearchError
from .filters import FilterSpec, GeoBox
from .session import DEFAULT_LINK_TEMPLATE, SessionStore

_TRUE_WORDS = {"1", "true", "yes", "on"}


def _env_key(flag: str) -> str:
    return "ECOSEARCH_" + flag.lstrip("-").upper().replace("-", "_")


def _env(flag: str) -> str | None:
    return os.environ.get(_env_key(flag))


def _env_flag(flag: str) -> bool:
    return os.environ.get(_env_key(flag), "").strip().lower() in _TRUE_WORDS


def _print_table(headers: list[str], rows: list[list[str]], out=None) -> None:
    out = out or sys.stdout
    widths = [
        max(len(header), *(len(row[i]) for row in rows)) if rows else len(header)
        for i, header in enumerate(headers)
    ]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(), file=out)
    for row in rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip(), file=out)


def _json_number(value):
    """JSON-safe scalar: infinities become strings, None stays null."""
    if value is None:
        return None
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _parse_encoder(spec: str, dim: int) -> EncoderBackend:
    if spec == "test":
        return EncoderBackend(kind="deterministic_test", dim=dim)
    kind, sep, target = spec.partition("=")
    if sep and target:
        if kind == "remote":
            return EncoderBackend(kind="remote_endpoint", dim=dim, endpoint=target)
        if kind == "lookup":
            return EncoderBackend(kind="lookup_file", dim=dim, path=target)
    raise ValueError('encoder must be "test", "remote=URL", or "lookup=FILE"')


def _build_spec(args) -> FilterSpec:
    months = None
    if args.months:
        months = frozenset(int(m) for m in str(args.months).split(",") if m.strip())
    geo = None
    if args.bbox:
        parts = [float(p) for p in str(args.bbox).split(",")]
        if len(parts) != 4:
            raise ValueError("bbox must be latmin,latmax,lonmin,lonmax")
        geo = GeoBox(parts[0], parts[1], parts[2], parts[3])
    return FilterSpec(taxon_id=args.taxon, months=months, geo=geo)


def cmd_build_index(args) -> int:
    manifest = build_index_dir(
        args.embeddings,
        args.metadata,
        args.out,
        nlist=args.nlist,
        seed=args.seed,
        quantization=args.quantize,
        round_coords=args.round_coords,
        link_template=args.link_template,
    )
    print(f"built corpus directory {args.out}")
    print(f"  vectors: {manifest['count']} x {manifest['dim']}")
    print(f"  lists: {manifest['nlist']}  quantization: {manifest['quantization']}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    manifest = read_manifest(args.index)
    encoder = _parse_encoder(args.encoder, manifest["dim"])
    engine = load_engine(
        args.index,
        encoder,
        cache_budget_bytes=args.cache_budget,
        sessions_dir=args.sessions,
    )
    try:
        app = create_app(engine, ui_dir=args.ui)
        print(f"serving {args.index} on http://{args.host}:{args.port}")
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    finally:
        engine.close()
    return 0


def cmd_query(args) -> int:
    spec = _build_spec(args)
    manifest = read_manifest(args.index)
    encoder = _parse_encoder(args.encoder, manifest["dim"])
    # one-shot queries must not leave session logs in the corpus directory
    with tempfile.TemporaryDirectory(prefix="ecosearch-query-") as scratch:
        with load_engine(args.index, encoder, sessions_dir=scratch) as engine:
            rows = engine.query_rows(args.text, spec, k=args.k, nprobe=args.nprobe)
    if args.json:
        print(json.dumps({"hits": rows}, indent=2))
        return 0
    table = [
        [
            str(r["rank"]),
            f"{r['score']:.6f}",
            str(r["observation_id"]),
            "/".join(str(t) for t in r["taxon_path"]),
            r["observed_at"],
            "" if r["latitude"] is None else f"{r['latitude']:.5f}",
            "" if r["longitude"] is None else f"{r['longitude']:.5f}",
            r["image_url"],
        ]
        for r in rows
    ]
    _print_table(
        ["rank", "score", "observation_id", "taxon", "observed_at", "lat", "lon", "image_url"],
        table,
    )
    return 0


def cmd_export(args) -> int:
    if args.sessions:
        sessions_dir = Path(args.sessions)
    elif args.index:
        sessions_dir = Path(args.index) / "sessions"
    else:
        raise ValueError("provide --sessions or --index to locate session logs")
    link_template = DEFAULT_LINK_TEMPLATE
    if args.index:
        link_template = read_manifest(args.index).get("link_template", DEFAULT_LINK_TEMPLATE)
    store = SessionStore(sessions_dir, link_template=link_template)
    data = store.export_csv(args.session)
    if args.out == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(args.out).write_bytes(data)
        print(f"wrote {len(data)} bytes to {args.out}")
    return 0


def _read_csv_rows(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no data rows")
    return rows


def _require_column(rows: list[dict], column: str, path: str) -> None:
    if column not in rows[0]:
        raise ValueError(f"column {column!r} not found in {path}")


def cmd_analyze_proportions(args) -> int:
    rows = _read_csv_rows(args.csv)
    _require_column(rows, args.by, args.csv)
    counts: dict = {}
    for row in rows:
        counts[row[args.by]] = counts.get(row[args.by], 0) + 1
    proportions = category_proportions(counts)
    if args.json:
        print(json.dumps({"counts": counts, "proportions": proportions}, indent=2))
        return 0
    _print_table(
        ["category", "count", "proportion", "percent"],
        [
            [label, str(counts[label]), f"{value:.4f}", f"{100.0 * value:.1f}%"]
            for label, value in proportions.items()
        ],
    )
    return 0


def _read_monthly_counts(path: str) -> tuple:
    values = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                values.append(int(line))
    if len(values) != 12:
        raise ValueError(f"{path}: expected 12 monthly counts, got {len(values)}")
    return tuple(values)


def cmd_analyze_mortality(args) -> int:
    series = MonthlySeries(
        _read_monthly_counts(args.deaths), _read_monthly_counts(args.observations)
    )
    values = mortality_index(series)
    if args.json:
        print(json.dumps({"index": [_json_number(v) for v in values]}, indent=2))
        return 0
    rows = []
    for month, (value, deaths, obs) in enumerate(
        zip(values, series.deaths, series.observations), start=1
    ):
        if value is None:
            text = "undefined"
        elif math.isinf(value):
            text = "-inf"
        else:
            text = f"{value:+.4f}"
        rows.append([calendar.month_abbr[month], str(deaths), str(obs), text])
    _print_table(["month", "deaths", "observations", "log2_index"], rows)
    return 0


def cmd_analyze_phenology(args) -> int:
    rows = _read_csv_rows(args.csv)
    _require_column(rows, args.column, args.csv)
    _require_column(rows, args.group, args.csv)
    groups: dict[str, list] = {}
    for row in rows:
        day = day_of_year(datetime.date.fromisoformat(row[args.column]))
        groups.setdefault(row[args.group], []).append(float(day))
    labels = list(groups)
    result = phenology_anova([groups[label] for label in labels])
    if args.json:
        payload = {
            "groups": labels,
            "f_statistic": _json_number(result.f_statistic),
            "df_between": result.df_between,
            "df_within": result.df_within,
            "p_value": result.p_value,
            "pairs": [
                {
                    "a": labels[p.i],
                    "b": labels[p.j],
                    "q": _json_number(p.q),
                    "critical": p.critical,
                    "significant": p.significant,
                }
                for p in result.pairs
            ],
        }
        print(json.dumps(payload, indent=2))
        return 0
    print(
        f"F = {result.f_statistic:.4f}  df = ({result.df_between}, {result.df_within})"
        f"  p = {result.p_value:.6g}"
    )
    _print_table(
        ["group_a", "group_b", "q", "critical", "significant"],
        [
            [labels[p.i], labels[p.j], f"{p.q:.4f}", f"{p.critical:.4f}", "yes" if p.significant else "no"]
            for p in result.pairs
        ],
    )
    return 0


def cmd_analyze_grid(args) -> int:
    with open(args.grid, newline="", encoding="utf-8") as fh:
        cells = [[int(v) for v in row] for row in csv.reader(fh) if row]
    grid = CategoricalGrid(np.array(cells, dtype=np.int64), args.cell_size)
    out = aggregate_categorical_grid(grid, args.factor)
    if args.json:
        print(
            json.dumps(
                {"cells": out.cells.tolist(), "cell_size_degrees": out.cell_size_degrees},
                indent=2,
            )
        )
        return 0
    print(
        f"aggregated {grid.height}x{grid.width} -> {out.height}x{out.width}"
        f" at {out.cell_size_degrees:g} degrees per cell"
    )
    for row in out.cells.tolist():
        print(",".join(str(v) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecosearch",
        description="Natural-language image retrieval over ecological observation corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="train and write a corpus directory")
    p.add_argument("--embeddings", default=_env("--embeddings"), help="input embedding file")
    p.add_argument("--metadata", default=_env("--metadata"), help="input metadata TSV")
    p.add_argument("--out", default=_env("--out"), help="corpus directory to create")
    p.add_argument("--nlist", type=int, default=_env("--nlist"), help="partition count (default sqrt of corpus size)")
    p.add_argument("--seed", type=int, default=_env("--seed") or 0)
    p.add_argument("--quantize", choices=["none", "int8"], default=_env("--quantize") or "none")
    p.add_argument("--round-coords", action="store_true", default=_env_flag("--round-coords"),
                   help="quantize coordinates to 0.01 degrees at ingest")
    p.add_argument("--link-template", default=_env("--link-template") or DEFAULT_LINK_TEMPLATE)
    p.set_defaults(func=cmd_build_index, required_flags=("embeddings", "metadata", "out"))

    p = sub.add_parser("serve", help="serve the HTTP API for a corpus directory")
    p.add_argument("--index", default=_env("--index"), help="corpus directory")
    p.add_argument("--encoder", default=_env("--encoder") or "test",
                   help='text encoder backend: "test", "remote=URL", or "lookup=FILE"')
    p.add_argument("--port", type=int, default=_env("--port") or 8000)
    p.add_argument("--host", default=_env("--host") or "127.0.0.1")
    p.add_argument("--sessions", default=_env("--sessions"), help="session log directory (default INDEX/sessions)")
    p.add_argument("--ui", default=_env("--ui"), help="built web asset directory to mount at /ui")
    p.add_argument("--cache-budget", type=int, default=_env("--cache-budget"),
                   help="mapped-list cache budget in bytes")
    p.set_defaults(func=cmd_serve, required_flags=("index",))

    p = sub.add_parser("query", help="run one query and print the result table")
    p.add_argument("--index", default=_env("--index"))
    p.add_argument("--text", default=_env("--text"), help="query text")
    p.add_argument("--encoder", default=_env("--encoder") or "test",
                   help='text encoder backend: "test", "remote=URL", or "lookup=FILE"')
    p.add_argument("--taxon", type=int, default=_env("--taxon"), help="restrict to a taxon id")
    p.add_argument("--months", default=_env("--months"), help="comma-separated months, e.g. 6,7,8")
    p.add_argument("--bbox", default=_env("--bbox"), help="latmin,latmax,lonmin,lonmax in signed degrees")
    p.add_argument("-k", dest="k", type=int, default=_env("--k") or 50, help="result count")
    p.add_argument("--nprobe", type=int, default=_env("--nprobe"))
    p.add_argument("--json", action="store_true", default=_env_flag("--json"))
    p.set_defaults(func=cmd_query, required_flags=("index", "text"))

    p = sub.add_parser("export", help="write a session's verified results as CSV")
    p.add_argument("--session", default=_env("--session"), help="session id")
    p.add_argument("--out", default=_env("--out"), help='output file ("-" for stdout)')
    p.add_argument("--sessions", default=_env("--sessions"), help="session log directory")
    p.add_argument("--index", default=_env("--index"), help="corpus directory holding the sessions")
    p.set_defaults(func=cmd_export, required_flags=("session", "out"))

    p = sub.add_parser("analyze", help="statistics over exported CSV files")
    asub = p.add_subparsers(dest="analysis", required=True)

    a = asub.add_parser("proportions", help="category share of rows")
    a.add_argument("csv", help="exported CSV file")
    a.add_argument("--by", default=_env("--by"), help="category column name")
    a.add_argument("--json", action="store_true", default=_env_flag("--json"))
    a.set_defaults(func=cmd_analyze_proportions, required_flags=("by",))

    a = asub.add_parser("mortality", help="monthly log2 mortality index")
    a.add_argument("--deaths", default=_env("--deaths"), help="file of 12 monthly death counts, January first")
    a.add_argument("--observations", default=_env("--observations"), help="file of 12 monthly observation counts")
    a.add_argument("--json", action="store_true", default=_env_flag("--json"))
    a.set_defaults(func=cmd_analyze_mortality, required_flags=("deaths", "observations"))

    a = asub.add_parser("phenology", help="day-of-year ANOVA with pairwise comparisons")
    a.add_argument("csv", help="CSV with a date column and a group column")
    a.add_argument("--column", default=_env("--column") or "observed_at", help="date column name")
    a.add_argument("--group", default=_env("--group"), help="group column name")
    a.add_argument("--json", action="store_true", default=_env_flag("--json"))
    a.set_defaults(func=cmd_analyze_phenology, required_flags=("group",))

    a = asub.add_parser("grid-mode", help="blockwise mode aggregation of a categorical grid")
    a.add_argument("--grid", default=_env("--grid"), help="CSV of integer category ordinals")
    a.add_argument("--factor", type=int, default=_env("--factor"), help="block edge length in cells")
    a.add_argument("--cell-size", type=float, default=_env("--cell-size") or 1.0,
                   help="input cell size in degrees")
    a.add_argument("--json", action="store_true", default=_env_flag("--json"))
    a.set_defaults(func=cmd_analyze_grid, required_flags=("grid", "factor"))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    missing = [
        flag
        for flag in getattr(args, "required_flags", ())
        if getattr(args, flag.replace("-", "_")) is None
    ]
    if missing:
        parser.error(
            "missing required arguments: "
            + ", ".join(f"--{flag} (or {_env_key('--' + flag)})" for flag in missing)
        )
    try:
        return args.func(args)
    except (EcoSearchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
