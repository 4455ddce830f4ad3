"""Quality control of observed generation series.

Nothing is deleted: every rule masks steps and records why, so all series keep
their full time axis and can be aligned by position.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import AlignmentError, FormatError

log = logging.getLogger(__name__)

# reason codes; index 0 means "kept"
RULES = (
    "kept",
    "missing",
    "edge_zeros",
    "constant_run",
    "zero_run",
    "cf_above_one",
    "zero_capacity",
    "excluded",
    "group_missing",
)
_CODE = {name: i for i, name in enumerate(RULES)}

CONSTANT_RUN_HOURS = 24.0
ZERO_RUN_HOURS = 180.0
MIN_YEARS = 2.0
HOURS_PER_YEAR = 8760
ROUND_DECIMALS = 3


@dataclass(eq=False)
class ObservedSeries:
    """Observed generation (kW) or capacity factor with per-step masking reasons."""

    name: str
    timestamps: np.ndarray
    values: np.ndarray
    reason: np.ndarray
    capacity_kw: np.ndarray | None = None
    filled: int = 0
    # "kw" for generation, "cf" for capacity factors
    unit: str = "kw"

    @classmethod
    def from_values(cls, name: str, timestamps, values, capacity_kw=None, unit: str = "kw") -> "ObservedSeries":
        ts = np.asarray(timestamps, dtype="datetime64[ns]")
        vals = np.asarray(values, dtype=float)
        if ts.shape != vals.shape:
            raise ValueError("timestamps and values differ in length")
        reason = np.where(np.isfinite(vals), 0, _CODE["missing"]).astype(np.int8)
        cap = None if capacity_kw is None else np.broadcast_to(np.asarray(capacity_kw, float), vals.shape).copy()
        return cls(name, ts, vals, reason, cap, unit=unit)

    @property
    def mask(self) -> np.ndarray:
        return self.reason != 0

    @property
    def empty(self) -> bool:
        return bool(self.mask.all())

    @property
    def step_hours(self) -> float:
        return _step_hours(self.timestamps)

    @property
    def log(self) -> dict[str, int]:
        counts = np.bincount(self.reason, minlength=len(RULES))
        return {RULES[i]: int(c) for i, c in enumerate(counts) if i and c}

    def masked_values(self) -> np.ndarray:
        return np.where(self.mask, np.nan, self.values)

    def mask_steps(self, steps, rule: str) -> "ObservedSeries":
        """Mask ``steps`` (bool array) under ``rule``; already masked steps keep their first reason."""
        new = np.asarray(steps, dtype=bool) & ~self.mask
        if not new.any():
            return self
        reason = self.reason.copy()
        reason[new] = _CODE[rule]
        return replace(self, reason=reason)

    def with_mask(self, mask) -> "ObservedSeries":
        return self.mask_steps(mask, "group_missing")


def _step_hours(ts: np.ndarray) -> float:
    if len(ts) < 2:
        return 1.0
    return float(np.median(np.diff(ts)) / np.timedelta64(1, "h"))


def runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """``(start, length)`` of each maximal run of True values."""
    f = np.concatenate([[False], np.asarray(flags, bool), [False]])
    edges = np.flatnonzero(np.diff(f.astype(np.int8)))
    return [(int(s), int(e - s)) for s, e in zip(edges[::2], edges[1::2])]


def _rounded(values: np.ndarray) -> np.ndarray:
    return np.round(values, ROUND_DECIMALS)


def trim_edge_zeros(series: ObservedSeries) -> ObservedSeries:
    """Mask the zero-production prefix and suffix.

    Edges are judged on the raw values (missing steps inside an edge are passed
    over), so the rule is unaffected by masks set by other rules.
    """
    zeroish = ~np.isfinite(series.values) | (np.nan_to_num(_rounded(series.values), nan=0.0) == 0)
    n = len(zeroish)
    if zeroish.all():
        out = series.mask_steps(np.ones(n, bool), "edge_zeros")
        log.warning("series %s has no production; fully masked", series.name)
        return out
    first = int(np.argmin(zeroish))
    last = n - int(np.argmin(zeroish[::-1]))
    edge = np.zeros(n, bool)
    edge[:first] = True
    edge[last:] = True
    return series.mask_steps(edge, "edge_zeros")


def _mask_long_runs(series: ObservedSeries, eligible: np.ndarray, min_hours: float, rule: str) -> ObservedSeries:
    """Mask runs of identical rounded values among consecutive ``eligible`` steps longer than ``min_hours``."""
    vals = _rounded(series.values)
    threshold = min_hours / series.step_hours
    starts = eligible.copy()
    starts[1:] &= ~(eligible[:-1] & (vals[1:] == vals[:-1]))
    label = np.cumsum(starts)
    label[~eligible] = 0
    lengths = np.bincount(label)
    long_labels = np.flatnonzero(lengths > threshold)
    long_labels = long_labels[long_labels > 0]
    return series.mask_steps(np.isin(label, long_labels), rule)


def remove_constant_runs(series: ObservedSeries, min_hours: float = CONSTANT_RUN_HOURS) -> ObservedSeries:
    eligible = ~series.mask & (_rounded(series.values) != 0)
    return _mask_long_runs(series, eligible, min_hours, "constant_run")


def remove_zero_runs(series: ObservedSeries, min_hours: float = ZERO_RUN_HOURS) -> ObservedSeries:
    eligible = ~series.mask & (_rounded(series.values) == 0)
    return _mask_long_runs(series, eligible, min_hours, "zero_run")


def remove_cf_above_one(series: ObservedSeries, capacity_kw=None) -> ObservedSeries:
    """Mask steps whose value exceeds installed capacity (capacity factor > 1).

    Steps with zero capacity but nonzero generation are masked under
    ``zero_capacity``.  Without a capacity the values are taken as capacity
    factors.
    """
    cap = capacity_kw if capacity_kw is not None else series.capacity_kw
    cap = np.ones_like(series.values) if cap is None else np.broadcast_to(np.asarray(cap, float), series.values.shape)
    live = ~series.mask
    zero_cap = live & (cap == 0) & (series.values != 0)
    over = live & (cap > 0) & (series.values > cap)
    return series.mask_steps(over, "cf_above_one").mask_steps(zero_cap, "zero_capacity")


def usable_hours(series: ObservedSeries) -> float:
    return float((~series.mask).sum()) * series.step_hours


def enforce_min_length(series: ObservedSeries, min_years: float = MIN_YEARS) -> bool:
    """True to keep: at least ``min_years`` of unmasked data, consecutive or not."""
    return usable_hours(series) >= min_years * HOURS_PER_YEAR


def interpolate_short_gaps(
    series: ObservedSeries, native_step=pd.Timedelta(minutes=5), max_gap=pd.Timedelta(hours=1)
) -> ObservedSeries:
    """Linearly fill interior runs of missing steps lasting at most ``max_gap``."""
    max_steps = int(pd.Timedelta(max_gap) / pd.Timedelta(native_step))
    missing = series.reason == _CODE["missing"]
    values = series.values.copy()
    reason = series.reason.copy()
    n = len(values)
    filled = 0
    for start, length in runs(missing):
        end = start + length
        if start == 0 or end == n or length > max_steps or series.mask[start - 1] or series.mask[end]:
            continue
        lo, hi = values[start - 1], values[end]
        frac = np.arange(1, length + 1) / (length + 1)
        values[start:end] = lo + (hi - lo) * frac
        reason[start:end] = 0
        filled += length
    if not filled:
        return series
    return replace(series, values=values, reason=reason, filled=series.filled + filled)


def resample_hourly(series: ObservedSeries) -> ObservedSeries:
    """Average sub-hourly steps into hours; an hour with any masked step is missing."""
    hours = series.timestamps.astype("datetime64[h]")
    axis, idx = np.unique(hours, return_inverse=True)
    counts = np.bincount(idx)
    masked_any = np.bincount(idx, weights=series.mask.astype(float)) > 0
    sums = np.bincount(idx, weights=np.where(series.mask, 0.0, series.values))
    means = np.where(masked_any, np.nan, sums / counts)
    cap = None
    if series.capacity_kw is not None:
        cap = np.bincount(idx, weights=series.capacity_kw) / counts
    out = ObservedSeries.from_values(series.name, axis.astype("datetime64[ns]"), means, cap, series.unit)
    return replace(out, filled=series.filled)


@dataclass(frozen=True)
class Exclusion:
    region: str
    start: np.datetime64 | None = None
    end: np.datetime64 | None = None


def load_exclusions(path) -> list[Exclusion]:
    """CSV with columns ``region,start,end``; blank bounds are open."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {"region", "start", "end"} - set(df.columns)
    if missing:
        raise FormatError(f"{Path(path).name}: missing columns {sorted(missing)}")
    out = []
    for row in df.itertuples(index=False):
        start = np.datetime64(pd.Timestamp(row.start), "ns") if row.start.strip() else None
        end = np.datetime64(pd.Timestamp(row.end), "ns") if row.end.strip() else None
        out.append(Exclusion(row.region.strip(), start, end))
    return out


def apply_exclusions(series: ObservedSeries, region: str, exclusions: list[Exclusion]) -> ObservedSeries:
    for ex in exclusions:
        if ex.region != region:
            continue
        sel = np.ones(len(series.timestamps), bool)
        if ex.start is not None:
            sel &= series.timestamps >= ex.start
        if ex.end is not None:
            sel &= series.timestamps <= ex.end
        series = series.mask_steps(sel, "excluded")
    return series


@dataclass(frozen=True)
class Thresholds:
    constant_run_hours: float = CONSTANT_RUN_HOURS
    zero_run_hours: float = ZERO_RUN_HOURS
    min_years: float = MIN_YEARS


@dataclass
class CleaningResult:
    series: ObservedSeries
    keep: bool
    # steps newly masked by each rule, in execution order
    applied: dict = field(default_factory=dict)


def clean_series(series: ObservedSeries, capacity_kw=None, thresholds: Thresholds | None = None) -> CleaningResult:
    """Edge-zero trim, then constant runs, zero runs, capacity factor > 1, minimum length."""
    t = thresholds or Thresholds()
    applied = {}
    steps = [
        ("edge_zeros", trim_edge_zeros),
        ("constant_run", lambda s: remove_constant_runs(s, t.constant_run_hours)),
        ("zero_run", lambda s: remove_zero_runs(s, t.zero_run_hours)),
        ("cf_above_one", lambda s: remove_cf_above_one(s, capacity_kw)),
    ]
    for name, fn in steps:
        before = int(series.mask.sum())
        series = fn(series)
        applied[name] = int(series.mask.sum()) - before
    keep = enforce_min_length(series, t.min_years)
    applied["short_series"] = 0 if keep else 1
    return CleaningResult(series, keep, applied)


ATTRITION_STEPS = ("edge_zeros", "constant_run", "zero_run", "cf_above_one", "short_series")


def attrition_table(results: list[CleaningResult]) -> list[dict]:
    """Per rule: how many series it touched and how many series remain afterwards."""
    remaining = len(results)
    rows = [{"rule": "total", "applies_to": "", "remaining": remaining}]
    for step in ATTRITION_STEPS:
        applies = sum(1 for r in results if r.applied.get(step, 0) > 0)
        if step == "short_series":
            remaining -= applies
        rows.append({"rule": step, "applies_to": applies, "remaining": remaining})
    return rows


def mask_intervals(series: ObservedSeries, rule: str) -> list[tuple[np.datetime64, np.datetime64]]:
    sel = series.reason == _CODE[rule]
    return [(series.timestamps[s], series.timestamps[s + n - 1]) for s, n in runs(sel)]


def write_cleaning_report(series: ObservedSeries, path) -> None:
    """CSV with one row per rule: rule, steps_masked, intervals (``start/end`` joined by ``;``)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rule", "steps_masked", "intervals"])
        for rule, count in series.log.items():
            ivals = ";".join(
                f"{pd.Timestamp(a).isoformat()}/{pd.Timestamp(b).isoformat()}" for a, b in mask_intervals(series, rule)
            )
            w.writerow([rule, count, ivals])
        if series.filled:
            w.writerow(["filled_by_interpolation", series.filled, ""])


def align_and_mask(sim_set: list, obs_set: list) -> tuple[list, list]:
    """Mask, in every member of a group, each step missing in any observed member.

    All members must share one time axis.  Members need ``timestamps``,
    ``mask`` and ``with_mask``.
    """
    members = list(sim_set) + list(obs_set)
    if not members:
        return [], []
    axis = members[0].timestamps
    for m in members[1:]:
        if len(m.timestamps) != len(axis) or not np.array_equal(m.timestamps, axis):
            raise AlignmentError("group members do not share a time axis")
    union = np.zeros(len(axis), bool)
    for o in obs_set:
        union |= o.mask
    if union.all():
        log.warning("aggregation group is empty after alignment")
    if not union.any():
        return list(sim_set), list(obs_set)
    return [s.with_mask(union) for s in sim_set], [o.with_mask(union) for o in obs_set]


def group_is_empty(obs_set: list) -> bool:
    return bool(obs_set) and bool(np.logical_or.reduce([o.mask for o in obs_set]).all())


def format_timestamps(ts: np.ndarray) -> list[str]:
    return list(np.datetime_as_string(np.asarray(ts, dtype="datetime64[s]"), unit="s"))


def load_observed(path, name: str | None = None) -> ObservedSeries:
    """Read an observed series CSV.

    Columns: ``timestamp`` plus either ``generation_kw`` or ``capacity_factor``;
    optional ``capacity_kw`` and ``reason`` (written by :func:`write_observed`).
    """
    path = Path(path)
    df = pd.read_csv(path, float_precision="round_trip")
    if "timestamp" not in df.columns:
        raise FormatError(f"{path.name}: missing column 'timestamp'")
    if "generation_kw" in df.columns:
        col, unit = "generation_kw", "kw"
    elif "capacity_factor" in df.columns:
        col, unit = "capacity_factor", "cf"
    else:
        raise FormatError(f"{path.name}: need a 'generation_kw' or 'capacity_factor' column")
    ts = pd.to_datetime(df["timestamp"], utc=True).dt.tz_localize(None).to_numpy("datetime64[ns]")
    if len(ts) > 1 and not (np.diff(ts) > np.timedelta64(0, "ns")).all():
        raise FormatError(f"{path.name}: timestamps must be strictly increasing")
    if len(ts) > 2 and len(np.unique(np.diff(ts))) != 1:
        raise FormatError(f"{path.name}: timestamps must be uniformly spaced (write missing steps as blanks)")
    cap = df["capacity_kw"].to_numpy(float) if "capacity_kw" in df.columns else None
    series = ObservedSeries.from_values(name or path.stem, ts, df[col].to_numpy(float), cap, unit)
    if "reason" in df.columns:
        labels = df["reason"].fillna("").astype(str).str.strip()
        unknown = set(labels) - set(RULES) - {""}
        if unknown:
            raise FormatError(f"{path.name}: unknown mask reasons {sorted(unknown)}")
        codes = np.array([_CODE.get(lbl or "kept") for lbl in labels], dtype=np.int8)
        reason = np.where(series.reason != 0, series.reason, codes).astype(np.int8)
        series = replace(series, reason=reason)
    return series


def write_observed(series: ObservedSeries, path) -> None:
    col = "generation_kw" if series.unit == "kw" else "capacity_factor"
    data = {"timestamp": [t + "Z" for t in format_timestamps(series.timestamps)], col: series.values}
    if series.capacity_kw is not None:
        data["capacity_kw"] = series.capacity_kw
    data["reason"] = [RULES[c] if c else "" for c in series.reason]
    pd.DataFrame(data).to_csv(path, index=False, lineterminator="\n")
