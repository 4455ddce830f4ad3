"""Turbine / wind park registry: CSV I/O, gap filling, specific-power repair, name matching.

Fleet CSV schema (version 1)::

    #schema=windval-fleet/1
    id,name,lat,lon,capacity_kw,hub_height_m,rotor_diameter_m,commissioning,commissioning_precision,state,country

``commissioning`` is ``YYYY-MM-DD``, ``YYYY-MM`` or ``YYYY``; when
``commissioning_precision`` is blank it is inferred from that format.  Empty
numeric cells are missing values.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from difflib import SequenceMatcher
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import AmbiguousMatchError, FormatError, ImputationError

SCHEMA_TAG = "#schema=windval-fleet/1"
FLEET_COLUMNS = [
    "id",
    "name",
    "lat",
    "lon",
    "capacity_kw",
    "hub_height_m",
    "rotor_diameter_m",
    "commissioning",
    "commissioning_precision",
    "state",
    "country",
]
PRECISIONS = ("day", "month", "year")
SP_FLOOR = 100.0
SIMILAR_CAPACITY_TOLERANCE = 0.10

IMPUTABLE = ("commissioning", "capacity_kw", "hub_height_m", "rotor_diameter_m")


@dataclass(frozen=True)
class FleetRecord:
    id: str
    name: str
    lat: float
    lon: float
    capacity_kw: float | None
    hub_height_m: float | None
    rotor_diameter_m: float | None
    commissioning: dt.date | None
    commissioning_precision: str = "day"
    state: str = ""
    country: str = ""
    # fields whose value was filled or repaired rather than read from source
    imputed: frozenset = field(default_factory=frozenset)

    @property
    def location(self) -> tuple[float, float]:
        return (self.lat, self.lon)

    @property
    def missing(self) -> frozenset:
        return frozenset(f for f in IMPUTABLE if getattr(self, f) is None)

    @property
    def commissioning_year(self) -> int | None:
        return None if self.commissioning is None else self.commissioning.year

    @property
    def specific_power(self) -> float | None:
        if self.capacity_kw is None or not self.rotor_diameter_m:
            return None
        return specific_power(self.capacity_kw, self.rotor_diameter_m)


def specific_power(capacity_kw: float, rotor_diameter_m: float) -> float:
    """Installed capacity per swept rotor area, in W/m^2."""
    if capacity_kw <= 0 or rotor_diameter_m <= 0:
        raise ValueError("capacity and rotor diameter must be positive")
    return 1000.0 * capacity_kw / (math.pi * (rotor_diameter_m / 2.0) ** 2)


def diameter_for_specific_power(capacity_kw: float, sp: float) -> float:
    return 2.0 * math.sqrt(1000.0 * capacity_kw / (math.pi * sp))


@dataclass
class ImputationReport:
    """Per-field counts of missing (at load) or filled (after imputation) values."""

    n_records: int
    counts: dict = field(default_factory=dict)
    methods: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not any(self.counts.values())

    def rows(self) -> list[dict]:
        return [
            {"field": f, "count": self.counts.get(f, 0), "method": self.methods.get(f, "")}
            for f in sorted(set(self.counts) | set(self.methods))
        ]

    def summary(self) -> str:
        if self.empty:
            return f"{self.n_records} records, nothing to impute"
        parts = [f"{r['field']}: {r['count']}" + (f" ({r['method']})" if r["method"] else "") for r in self.rows()]
        return f"{self.n_records} records; " + "; ".join(parts)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["field", "count", "method"])
            w.writeheader()
            w.writerows(self.rows())


# ---------------------------------------------------------------------------
# CSV I/O


def parse_commissioning(text: str, precision: str = "") -> tuple[dt.date | None, str]:
    """Parse a commissioning date; month precision maps to the 15th, year precision to Jan 1."""
    text = text.strip()
    precision = precision.strip().lower()
    if not text:
        return None, precision or "year"
    parts = text.split("-")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"unparseable commissioning date {text!r}") from None
    inferred = ("year", "month", "day")[len(nums) - 1] if 1 <= len(nums) <= 3 else None
    if inferred is None:
        raise ValueError(f"unparseable commissioning date {text!r}")
    precision = precision or inferred
    if precision not in PRECISIONS:
        raise ValueError(f"unknown commissioning precision {precision!r}")
    year = nums[0]
    month = nums[1] if len(nums) > 1 else 1
    if precision == "year":
        return dt.date(year, 1, 1), precision
    if precision == "month":
        return dt.date(year, month, 15), precision
    if len(nums) < 3:
        raise ValueError(f"day precision needs a full date, got {text!r}")
    return dt.date(year, month, nums[2]), precision


def _opt_float(text: str, column: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"{column} must be finite")
    return value


def load_fleet(path) -> tuple[list[FleetRecord], ImputationReport]:
    """Read a fleet CSV; missing values are flagged in the report, not filled."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    offset = 0
    if lines and lines[0].startswith("#"):
        if lines[0].strip() != SCHEMA_TAG:
            raise FormatError(f"{path.name}: unsupported schema tag {lines[0].strip()!r}")
        offset = 1
    reader = csv.DictReader(lines[offset:])
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != FLEET_COLUMNS:
        raise FormatError(f"{path.name}: header must be {','.join(FLEET_COLUMNS)}")

    records: list[FleetRecord] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=offset + 2):
        if None in row or any(v is None for v in row.values()):
            raise FormatError(f"{path.name}:{lineno}: wrong number of fields")
        try:
            rec_id = row["id"].strip()
            if not rec_id:
                raise ValueError("empty id")
            date, precision = parse_commissioning(row["commissioning"], row["commissioning_precision"])
            rec = FleetRecord(
                id=rec_id,
                name=row["name"].strip(),
                lat=float(row["lat"]),
                lon=float(row["lon"]),
                capacity_kw=_opt_float(row["capacity_kw"], "capacity_kw"),
                hub_height_m=_opt_float(row["hub_height_m"], "hub_height_m"),
                rotor_diameter_m=_opt_float(row["rotor_diameter_m"], "rotor_diameter_m"),
                commissioning=date,
                commissioning_precision=precision,
                state=row["state"].strip(),
                country=row["country"].strip(),
            )
        except ValueError as exc:
            raise FormatError(f"{path.name}:{lineno}: {exc}") from None
        if not (math.isfinite(rec.lat) and math.isfinite(rec.lon)):
            raise FormatError(f"{path.name}:{lineno}: non-finite location")
        if rec.capacity_kw is not None and rec.capacity_kw <= 0:
            raise FormatError(f"{path.name}:{lineno}: capacity must be positive")
        if rec.id in seen:
            raise FormatError(f"{path.name}:{lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records, missing_report(records)


def missing_report(records: list[FleetRecord]) -> ImputationReport:
    counts = Counter(f for r in records for f in r.missing)
    return ImputationReport(len(records), {f: counts.get(f, 0) for f in IMPUTABLE})


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _format_commissioning(rec: FleetRecord) -> str:
    if rec.commissioning is None:
        return ""
    d = rec.commissioning
    if rec.commissioning_precision == "year":
        return f"{d.year:04d}"
    if rec.commissioning_precision == "month":
        return f"{d.year:04d}-{d.month:02d}"
    return d.isoformat()


def write_fleet(records: Iterable[FleetRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(SCHEMA_TAG + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLEET_COLUMNS)
        for r in records:
            w.writerow(
                [
                    r.id,
                    r.name,
                    _fmt(r.lat),
                    _fmt(r.lon),
                    _fmt(r.capacity_kw),
                    _fmt(r.hub_height_m),
                    _fmt(r.rotor_diameter_m),
                    _format_commissioning(r),
                    r.commissioning_precision if r.commissioning is not None else "",
                    r.state,
                    r.country,
                ]
            )


def total_capacity_kw(records: Iterable[FleetRecord]) -> float:
    return float(sum(r.capacity_kw or 0.0 for r in records))


# ---------------------------------------------------------------------------
# Imputation


@dataclass(frozen=True)
class ImputationPolicy:
    similar_capacity_tolerance: float = SIMILAR_CAPACITY_TOLERANCE
    repair_zero_dimensions: bool = True


def _mark(rec: FleetRecord, *fields: str, **changes) -> FleetRecord:
    return replace(rec, imputed=rec.imputed | frozenset(fields), **changes)


def _similar_capacity_peers(rec: FleetRecord, pool: list[FleetRecord], tol: float) -> list[FleetRecord]:
    same = [p for p in pool if p.capacity_kw == rec.capacity_kw]
    if same:
        return same
    close = [p for p in pool if abs(p.capacity_kw - rec.capacity_kw) <= tol * rec.capacity_kw]
    if not close:
        return []
    best = min(abs(p.capacity_kw - rec.capacity_kw) for p in close)
    return [p for p in close if abs(p.capacity_kw - rec.capacity_kw) == best]


def _repair_zero_dimensions(records: list[FleetRecord], tol: float, report: ImputationReport) -> list[FleetRecord]:
    """Zero hub height or rotor diameter: copy means from turbines of similar capacity.

    Records without such peers get the zero replaced by a missing value, to be
    filled by the generic rules.
    """

    def broken(r):
        return r.hub_height_m == 0 or r.rotor_diameter_m == 0

    pool = [r for r in records if not broken(r) and r.capacity_kw and r.hub_height_m and r.rotor_diameter_m]
    out = []
    n = 0
    for r in records:
        if not broken(r):
            out.append(r)
            continue
        peers = _similar_capacity_peers(r, pool, tol) if r.capacity_kw else []
        if peers:
            hub = float(np.mean([p.hub_height_m for p in peers]))
            diam = float(np.mean([p.rotor_diameter_m for p in peers]))
            out.append(_mark(r, "hub_height_m", "rotor_diameter_m", hub_height_m=hub, rotor_diameter_m=diam))
            n += 1
        else:
            out.append(
                replace(
                    r,
                    hub_height_m=r.hub_height_m or None,
                    rotor_diameter_m=r.rotor_diameter_m or None,
                )
            )
    if n:
        report.counts["zero_dimensions"] = n
        report.methods["zero_dimensions"] = "mean of similar-capacity turbines"
    return out


def impute_missing(
    records: list[FleetRecord], policy: ImputationPolicy | None = None
) -> tuple[list[FleetRecord], ImputationReport]:
    """Fill missing attributes.

    Order: commissioning year (overall mean year, rounded half up, year
    precision), then capacity and hub height (mean over source-complete records
    of the same commissioning year, else overall mean), then rotor diameter
    (univariate least squares on hub height over source-complete records).
    """
    policy = policy or ImputationPolicy()
    report = ImputationReport(len(records))
    recs = list(records)
    if policy.repair_zero_dimensions:
        recs = _repair_zero_dimensions(recs, policy.similar_capacity_tolerance, report)

    def need(f):
        return [i for i, r in enumerate(recs) if getattr(r, f) is None]

    def complete(f):
        return [r for r in recs if getattr(r, f) is not None and f not in r.imputed]

    todo = need("commissioning")
    if todo:
        donors = complete("commissioning")
        if not donors:
            raise ImputationError("no record has a commissioning date")
        mean_year = float(np.mean([r.commissioning.year for r in donors]))
        year = int(math.floor(mean_year + 0.5))
        for i in todo:
            recs[i] = _mark(recs[i], "commissioning", commissioning=dt.date(year, 1, 1), commissioning_precision="year")
        report.counts["commissioning"] = len(todo)
        report.methods["commissioning"] = "overall mean year"

    for f in ("capacity_kw", "hub_height_m"):
        todo = need(f)
        if not todo:
            continue
        donors = complete(f)
        if not donors:
            raise ImputationError(f"no record has a value for {f}")
        by_year: dict[int, list[float]] = defaultdict(list)
        for r in donors:
            by_year[r.commissioning.year].append(getattr(r, f))
        overall = float(np.mean([getattr(r, f) for r in donors]))
        for i in todo:
            vals = by_year.get(recs[i].commissioning.year)
            recs[i] = _mark(recs[i], f, **{f: float(np.mean(vals)) if vals else overall})
        report.counts[f] = len(todo)
        report.methods[f] = "yearly mean, overall mean fallback"

    todo = need("rotor_diameter_m")
    if todo:
        donors = [r for r in complete("rotor_diameter_m") if r.hub_height_m is not None and "hub_height_m" not in r.imputed]
        if not donors:
            raise ImputationError("no record has both hub height and rotor diameter")
        slope, intercept = fit_diameter_model(
            [r.hub_height_m for r in donors], [r.rotor_diameter_m for r in donors]
        )
        for i in todo:
            diam = slope * recs[i].hub_height_m + intercept
            if not diam > 0:
                raise ImputationError(f"record {recs[i].id}: fitted rotor diameter {diam:.3g} m is not positive")
            recs[i] = _mark(recs[i], "rotor_diameter_m", rotor_diameter_m=float(diam))
        report.counts["rotor_diameter_m"] = len(todo)
        report.methods["rotor_diameter_m"] = "linear fit on hub height"
    return recs, report


def fit_diameter_model(hub_heights, diameters) -> tuple[float, float]:
    """Least-squares line ``diameter = slope * hub_height + intercept``.

    With a single distinct hub height the slope is zero and the intercept is the
    mean diameter.
    """
    x = np.asarray(hub_heights, dtype=float)
    y = np.asarray(diameters, dtype=float)
    if np.ptp(x) == 0:
        return 0.0, float(y.mean())
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def repair_specific_power(
    records: list[FleetRecord], floor: float = SP_FLOOR
) -> list[FleetRecord]:
    """Raise specific power below ``floor`` by recomputing the rotor diameter.

    The target is the mean specific power of other records with the same
    capacity that are at or above the floor; failing that, the mean over all
    such records; failing that, ``floor`` itself.  Repaired records carry
    ``"specific_power"`` in ``imputed``.
    """
    sps = [r.specific_power for r in records]
    if any(sp is None for sp in sps):
        raise ImputationError("specific power needs capacity and rotor diameter on every record")
    ok = [(r, sp) for r, sp in zip(records, sps) if sp >= floor]
    global_mean = float(np.mean([sp for _, sp in ok])) if ok else float(floor)
    by_cap: dict[float, list[float]] = defaultdict(list)
    for r, sp in ok:
        by_cap[r.capacity_kw].append(sp)

    out = []
    for r, sp in zip(records, sps):
        if sp >= floor:
            out.append(r)
            continue
        peers = by_cap.get(r.capacity_kw)
        target = float(np.mean(peers)) if peers else global_mean
        diam = diameter_for_specific_power(r.capacity_kw, target)
        flags = ("rotor_diameter_m", "specific_power") + (() if peers else ("specific_power_global_mean",))
        out.append(_mark(r, *flags, rotor_diameter_m=diam))
    return out


def check_record(rec: FleetRecord, floor: float = SP_FLOOR) -> list[str]:
    """Invariant violations of a fully repaired record (empty when valid)."""
    problems = []
    if rec.capacity_kw is None or not rec.capacity_kw > 0:
        problems.append("capacity")
    if rec.hub_height_m is None or not rec.hub_height_m > 0:
        problems.append("hub_height")
    if rec.rotor_diameter_m is None or not rec.rotor_diameter_m > 0:
        problems.append("rotor_diameter")
    elif rec.capacity_kw and rec.specific_power < floor * (1 - 1e-12):
        problems.append("specific_power")
    if rec.commissioning is None:
        problems.append("commissioning")
    if not (math.isfinite(rec.lat) and math.isfinite(rec.lon)):
        problems.append("location")
    return problems


def prepare_fleet(records: list[FleetRecord], floor: float = SP_FLOOR) -> tuple[list[FleetRecord], ImputationReport]:
    recs, report = impute_missing(records)
    repaired = repair_specific_power(recs, floor)
    n_sp = sum("specific_power" in r.imputed and "specific_power" not in o.imputed for r, o in zip(repaired, recs))
    if n_sp:
        report.counts["specific_power"] = n_sp
        report.methods["specific_power"] = "mean specific power of same-capacity turbines"
    return repaired, report


# ---------------------------------------------------------------------------
# Name matching

_NON_ALNUM = re.compile(r"[^0-9a-z]+")


def normalize_name(name: str) -> str:
    """Case-fold, strip accents and special characters, collapse whitespace."""
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(_NON_ALNUM.sub(" ", stripped.casefold()).split())


def match_score(a: str, b: str) -> int:
    """0-100 similarity of normalised names; 100 iff they are equal after normalisation."""
    na, nb = normalize_name(a), normalize_name(b)
    if na == nb:
        return 100
    return min(99, int(round(100 * SequenceMatcher(None, na, nb).ratio())))


def match_names(sim_names: list[str], obs_names: list[str]) -> list[tuple[str, str, int]]:
    """One-to-one pairs of names whose normalised forms are identical (score 100).

    Raises :class:`AmbiguousMatchError` when a name on either side equals more
    than one name on the other side.
    """
    sim_by_key: dict[str, list[str]] = defaultdict(list)
    for s in sim_names:
        sim_by_key[normalize_name(s)].append(s)
    obs_by_key: dict[str, list[str]] = defaultdict(list)
    for o in obs_names:
        obs_by_key[normalize_name(o)].append(o)

    pairs = []
    for key, obs_group in obs_by_key.items():
        sims = sim_by_key.get(key)
        if not sims:
            continue
        if len(sims) > 1:
            raise AmbiguousMatchError(obs_group[0], sims)
        if len(obs_group) > 1:
            raise AmbiguousMatchError(sims[0], obs_group)
        pairs.append((sims[0], obs_group[0], 100))
    order = {name: i for i, name in enumerate(sim_names)}
    return sorted(pairs, key=lambda p: order[p[0]])
