"""Statistics for turning verified search exports into case-study numbers.

Covers categorical proportions, the monthly mortality index, blockwise mode
aggregation of categorical grids, day-of-year phenology comparisons (one-way
ANOVA plus Tukey HSD), return rates, and duplicate collapsing of exported
observation rows.
"""

from __future__ import annotations

import datetime
import math
from dataclasses import dataclass, field

import numpy as np

from ._qtable import q_crit
from .errors import DegenerateSeriesError, EmptyDenominatorError
from .store import quantize_coord

NEG_INFINITE = float("-inf")
# months with zero observation effort have no defined rate
UNDEFINED = None


def category_proportions(counts: dict) -> dict:
    """Fraction of the total per category, in the input's category order."""
    for label, value in counts.items():
        if value < 0:
            raise ValueError(f"negative count for {label!r}")
    total = sum(counts.values())
    if total == 0:
        raise EmptyDenominatorError("all category counts are zero")
    return {label: value / total for label, value in counts.items()}


@dataclass(frozen=True)
class MonthlySeries:
    """Calendar-aligned death and observation counts, January first."""

    deaths: tuple
    observations: tuple

    def __post_init__(self):
        if len(self.deaths) != 12 or len(self.observations) != 12:
            raise ValueError("monthly series need exactly 12 entries")
        if any(d < 0 for d in self.deaths) or any(o < 0 for o in self.observations):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "deaths", tuple(self.deaths))
        object.__setattr__(self, "observations", tuple(self.observations))


def mortality_index(series: MonthlySeries) -> list:
    """log2 of each month's mortality rate over the mean defined monthly rate.

    Months without observations yield UNDEFINED; months with a zero rate
    yield NEG_INFINITE. The mean is the unweighted arithmetic mean of the
    defined monthly rates, not pooled deaths over pooled observations.
    """
    rates = [
        d / o if o > 0 else None
        for d, o in zip(series.deaths, series.observations)
    ]
    defined = [r for r in rates if r is not None]
    if not defined or all(r == 0.0 for r in defined):
        raise DegenerateSeriesError("no month has a positive mortality rate")
    if all(r == defined[0] for r in defined):
        # the mean of identical rates must be that rate bit for bit, so a
        # uniform series maps to exact zeros instead of rounding residue
        mean = defined[0]
    else:
        mean = math.fsum(defined) / len(defined)
    out = []
    for r in rates:
        if r is None:
            out.append(UNDEFINED)
        elif r == 0.0:
            out.append(NEG_INFINITE)
        else:
            out.append(math.log2(r / mean))
    return out


@dataclass(frozen=True)
class CategoricalGrid:
    """2-D grid of small non-negative category ordinals."""

    cells: np.ndarray
    cell_size_degrees: float = 1.0

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ValueError("grid cells must be 2-D")
        if not np.issubdtype(cells.dtype, np.integer):
            raise ValueError("grid cells must be integers")
        if cells.size and cells.min() < 0:
            raise ValueError("category ordinals must be non-negative")
        object.__setattr__(self, "cells", cells)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]


def aggregate_categorical_grid(grid: CategoricalGrid, factor: int) -> CategoricalGrid:
    """Downsample by taking the mode of each factor x factor block.

    Ties go to the lowest ordinal. Edge blocks may be partial and take the
    mode of whatever cells they cover.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return CategoricalGrid(grid.cells.copy(), grid.cell_size_degrees)
    out_h = -(-grid.height // factor)
    out_w = -(-grid.width // factor)
    out = np.zeros((out_h, out_w), dtype=grid.cells.dtype)
    for bi in range(out_h):
        for bj in range(out_w):
            block = grid.cells[bi * factor : (bi + 1) * factor, bj * factor : (bj + 1) * factor]
            # bincount argmax returns the lowest ordinal among tied modes
            out[bi, bj] = np.argmax(np.bincount(block.ravel()))
    return CategoricalGrid(out, grid.cell_size_degrees * factor)


def day_of_year(date: datetime.date) -> int:
    """Ordinal day within the year, 1..366, leap years respected."""
    if not isinstance(date, datetime.date):
        raise ValueError(f"expected a date, got {type(date).__name__}")
    return date.timetuple().tm_yday


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz iteration."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to absolute accuracy well under 1e-10."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, df1: int, df2: int) -> float:
    """P(F >= f) for an F distribution with (df1, df2) degrees of freedom."""
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return min(1.0, max(0.0, regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x)))


@dataclass(frozen=True)
class TukeyPair:
    i: int
    j: int
    q: float
    critical: float
    significant: bool


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    df_between: int
    df_within: int
    p_value: float
    pairs: tuple = field(default=())


def _group_stats(groups):
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    cleaned = []
    for g in groups:
        values = [float(v) for v in g]
        if len(values) < 2:
            raise ValueError("every group needs at least 2 values")
        cleaned.append(values)
    sizes = [len(g) for g in cleaned]
    means = [sum(g) / len(g) for g in cleaned]
    total_n = sum(sizes)
    grand = sum(sum(g) for g in cleaned) / total_n
    ssb = sum(n * (m - grand) ** 2 for n, m in zip(sizes, means))
    ssw = sum(sum((v - m) ** 2 for v in g) for g, m in zip(cleaned, means))
    return cleaned, sizes, means, ssb, ssw, len(cleaned) - 1, total_n - len(cleaned)


def one_way_anova(groups) -> AnovaResult:
    """Standard one-way F test; p from the regularized incomplete beta."""
    _, _, _, ssb, ssw, dfb, dfw = _group_stats(groups)
    if ssw == 0.0:
        if ssb == 0.0:
            raise ValueError("all groups are identical constants; F is undefined")
        return AnovaResult(float("inf"), dfb, dfw, 0.0)
    f = (ssb / dfb) / (ssw / dfw)
    return AnovaResult(f, dfb, dfw, f_survival(f, dfb, dfw))


def tukey_hsd(groups) -> tuple:
    """Pairwise studentized-range tests at alpha = 0.05.

    q_ij = |mean_i - mean_j| / sqrt(MSW/2 * (1/n_i + 1/n_j)), flagged
    significant when q exceeds the tabulated critical value.
    """
    _, sizes, means, ssb, ssw, _, dfw = _group_stats(groups)
    if ssw == 0.0 and ssb == 0.0:
        raise ValueError("all groups are identical constants; q is undefined")
    msw = ssw / dfw
    critical = q_crit(len(groups), dfw)
    pairs = []
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            diff = abs(means[i] - means[j])
            if msw == 0.0:
                q = float("inf") if diff > 0.0 else 0.0
            else:
                q = diff / math.sqrt(msw / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j]))
            pairs.append(TukeyPair(i, j, q, critical, q > critical))
    return tuple(pairs)


def phenology_anova(groups) -> AnovaResult:
    """ANOVA with the Tukey pair flags attached."""
    result = one_way_anova(groups)
    return AnovaResult(
        result.f_statistic,
        result.df_between,
        result.df_within,
        result.p_value,
        tukey_hsd(groups),
    )


def return_rate(marked: int, queried: int) -> float:
    """Fraction of inspected results that matched the queried concept."""
    if queried <= 0:
        raise ValueError("queried must be positive")
    if marked < 0:
        raise ValueError("marked must be non-negative")
    if marked > queried:
        raise ValueError(f"marked ({marked}) exceeds queried ({queried})")
    return marked / queried


def dedupe_observations(rows, species_key: str = "leaf_taxon_id") -> list:
    """Drop rows repeating {species, month, quantized lat, quantized lon}.

    Rows are exported-CSV dicts; the first occurrence of each key is kept in
    order. Coordinates are compared after 0.01-degree quantization; missing
    coordinates compare equal to each other.
    """
    seen = set()
    kept = []
    for row in rows:
        lat_raw = row.get("latitude")
        lon_raw = row.get("longitude")
        lat = quantize_coord(float(lat_raw)) if lat_raw not in (None, "") else None
        lon = quantize_coord(float(lon_raw)) if lon_raw not in (None, "") else None
        month = int(str(row["observed_at"])[5:7])
        key = (row[species_key], month, lat, lon)
        if key in seen:
            continue
        seen.add(key)
        kept.append(row)
    return kept
