"""Capacity factors, bottom-up aggregation, goodness-of-fit statistics and notch significance."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DataError
from .reanalysis import Grid, occupied_cells

log = logging.getLogger(__name__)

NOTCH_CONSTANT = 1.57
TEMPORAL_LEVELS = ("hourly", "daily", "monthly")
_BUCKET_UNIT = {"daily": "D", "monthly": "M"}


@dataclass(eq=False)
class CapacityFactorSeries:
    timestamps: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[ns]")
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool) | ~np.isfinite(self.values)
        if not (len(self.timestamps) == len(self.values) == len(self.mask)):
            raise ValueError("timestamps, values and mask differ in length")

    def masked_values(self) -> np.ndarray:
        return np.where(self.mask, np.nan, self.values)

    def with_mask(self, mask) -> "CapacityFactorSeries":
        return CapacityFactorSeries(self.timestamps, self.values, self.mask | np.asarray(mask, bool))


@dataclass(frozen=True)
class ValidationMetrics:
    pearson_r: float
    rmse: float
    mbe: float
    n: int

    @property
    def r_defined(self) -> bool:
        return not math.isnan(self.pearson_r)


@dataclass(frozen=True)
class NotchInterval:
    median: float
    q25: float
    q75: float
    n: int
    lo: float
    hi: float

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


def to_capacity_factor(values, installed, mask=None, timestamps=None) -> CapacityFactorSeries:
    """``generation / installed`` per step; steps with zero capacity are masked.

    ``values`` may be a series object exposing ``timestamps``, ``values`` and
    ``mask`` (simulated or observed), or a plain array with ``timestamps``.
    """
    if hasattr(values, "timestamps"):
        timestamps = values.timestamps
        mask = values.mask if mask is None else np.asarray(mask, bool) | values.mask
        values = values.values
    gen = np.asarray(values, dtype=float)
    cap = np.broadcast_to(np.asarray(installed, dtype=float), gen.shape)
    mask = np.zeros(gen.shape, bool) if mask is None else np.asarray(mask, bool).copy()
    mask |= ~np.isfinite(gen)
    if np.any(gen[~mask] < 0):
        raise DataError("negative generation")
    mask |= cap <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cf = np.where(mask, np.nan, gen / np.where(cap > 0, cap, 1.0))
    if timestamps is None:
        raise ValueError("timestamps required for plain arrays")
    return CapacityFactorSeries(timestamps, cf, mask)


def aggregate_spatial(members: list[CapacityFactorSeries], capacities: list) -> CapacityFactorSeries:
    """Capacity-weighted mean of member capacity factors over unmasked members per step."""
    if not members:
        raise DataError("cannot aggregate an empty member set")
    if len(members) != len(capacities):
        raise ValueError("one capacity timeline per member required")
    ts = members[0].timestamps
    num = np.zeros(len(ts))
    den = np.zeros(len(ts))
    for m, cap in zip(members, capacities):
        if not np.array_equal(m.timestamps, ts):
            raise DataError("members do not share a time axis")
        c = np.broadcast_to(np.asarray(cap, dtype=float), num.shape)
        live = ~m.mask
        num[live] += m.values[live] * c[live]
        den[live] += c[live]
    mask = den <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cf = np.where(mask, np.nan, num / np.where(mask, 1.0, den))
    return CapacityFactorSeries(ts, cf, mask)


def aggregate_temporal(series: CapacityFactorSeries, target: str) -> CapacityFactorSeries:
    """Mean of unmasked values per UTC calendar day or month; empty buckets are masked."""
    if target == "hourly":
        return series
    if target not in _BUCKET_UNIT:
        raise ValueError(f"unknown temporal level {target!r}")
    buckets = series.timestamps.astype(f"datetime64[{_BUCKET_UNIT[target]}]")
    axis, idx = np.unique(buckets, return_inverse=True)
    live = ~series.mask
    counts = np.bincount(idx, weights=live.astype(float), minlength=len(axis))
    sums = np.bincount(idx, weights=np.where(live, series.values, 0.0), minlength=len(axis))
    mask = counts == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.where(mask, np.nan, sums / np.where(mask, 1.0, counts))
    return CapacityFactorSeries(axis.astype("datetime64[ns]"), means, mask)


def _joint(a, b, mask=None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, CapacityFactorSeries):
        a = a.masked_values()
    if isinstance(b, CapacityFactorSeries):
        b = b.masked_values()
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise ValueError("series differ in length")
    keep = np.isfinite(x) & np.isfinite(y)
    if mask is not None:
        keep &= ~np.asarray(mask, bool)
    return x[keep], y[keep]


def pearson(a, b, mask=None) -> float:
    """Pearson correlation over jointly unmasked steps; NaN when undefined."""
    x, y = _joint(a, b, mask)
    if len(x) < 2:
        return math.nan
    if np.all(x == x[0]) or np.all(y == y[0]):
        log.debug("constant input; correlation undefined")
        return math.nan
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        log.debug("zero variance; correlation undefined")
        return math.nan
    r = float(np.dot(dx, dy)) / (math.sqrt(sxx) * math.sqrt(syy))
    return max(-1.0, min(1.0, r))


def rmse(simulated, observed, mask=None) -> float:
    x, y = _joint(simulated, observed, mask)
    if len(x) == 0:
        return math.nan
    return math.sqrt(float(np.mean((x - y) ** 2)))


def mbe(simulated, observed, mask=None) -> float:
    """Mean of ``simulated - observed``; positive means the simulation overestimates."""
    x, y = _joint(simulated, observed, mask)
    if len(x) == 0:
        return math.nan
    return float(np.mean(x - y))


def evaluate(simulated, observed, mask=None) -> ValidationMetrics:
    x, y = _joint(simulated, observed, mask)
    return ValidationMetrics(pearson(x, y), rmse(x, y), mbe(x, y), len(x))


def notch_interval(samples, constant: float = NOTCH_CONSTANT) -> NotchInterval:
    """Median with notch bounds ``M +/- constant * IQR / sqrt(n)``.

    Quartiles use linear interpolation between order statistics
    (``numpy.percentile`` default).  NaN samples are ignored.
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("notch interval needs at least one sample")
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    half = constant * (q75 - q25) / math.sqrt(x.size)
    return NotchInterval(float(med), float(q25), float(q75), int(x.size), float(med - half), float(med + half))


def medians_differ(a_samples, b_samples, constant: float = NOTCH_CONSTANT) -> bool:
    """True when the two notch intervals do not overlap."""
    a = notch_interval(a_samples, constant)
    b = notch_interval(b_samples, constant)
    return a.hi < b.lo or b.hi < a.lo


def boxplot_stats(samples, constant: float = NOTCH_CONSTANT) -> dict:
    """Notched-boxplot summary with Tukey whiskers (1.5 IQR, clipped to the data)."""
    x = np.sort(np.asarray(samples, dtype=float)[np.isfinite(samples)])
    notch = notch_interval(x, constant)
    lo_fence = notch.q25 - 1.5 * notch.iqr
    hi_fence = notch.q75 + 1.5 * notch.iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    return {
        "n": notch.n,
        "median": notch.median,
        "q25": notch.q25,
        "q75": notch.q75,
        "notch_lo": notch.lo,
        "notch_hi": notch.hi,
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "outliers": int(x.size - inside.size),
    }


def system_size(locations: Iterable, grid: Grid) -> int:
    """Number of distinct reanalysis cells occupied by ``locations``."""
    cells = occupied_cells(grid, locations)
    if not cells:
        raise ValueError("system size needs at least one location")
    return len(cells)


def system_size_band(size: int) -> int:
    """Report band: 1 for size < 5, 2 for 5 <= size < 25, 3 for size >= 25."""
    if size < 5:
        return 1
    if size < 25:
        return 2
    return 3


@dataclass(frozen=True)
class AggregationExample:
    """Two regional pairs and their equal-weight aggregates."""

    x1: np.ndarray
    y1: np.ndarray
    x2: np.ndarray
    y2: np.ndarray
    a: float = 0.5
    b: float = 0.5

    @property
    def x(self) -> np.ndarray:
        return self.a * self.x1 + self.b * self.x2

    @property
    def y(self) -> np.ndarray:
        return self.a * self.y1 + self.b * self.y2


def correlation_gain_example(n: int = 1000, seed: int = 0, noise_scale: float = 0.1) -> AggregationExample:
    """Uncorrelated pairs whose aggregates correlate perfectly.

    ``x1``, ``y1`` independent; ``x2 = -x1 + z``, ``y2 = -y1 + z``, so both
    aggregates equal ``z / 2``.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=noise_scale, size=n)
    x1 = rng.normal(size=n)
    y1 = rng.normal(size=n)
    return AggregationExample(x1, y1, -x1 + z, -y1 + z)


def correlation_loss_example(n: int = 1000, seed: int = 0, noise_scale: float = 0.1) -> AggregationExample:
    """Perfectly correlated pairs whose aggregates are uncorrelated.

    ``x2 = -x1 + z``, ``y1 = 3 x1``, ``y2 = -x1``: the aggregates are ``z / 2``
    and ``x1``, independent by construction.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=noise_scale, size=n)
    x1 = rng.normal(size=n)
    return AggregationExample(x1, 3.0 * x1, -x1 + z, -x1)
