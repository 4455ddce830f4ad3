"""Batch steps behind the CLI: simulate, clean, validate, report, capacity-check.

Output layout under ``output_dir``::

    simulate/<dataset>/<correction>/<record_id>.csv
    simulate/manifest.json
    simulate/imputation_report.csv
    clean/series/<series_id>.csv + index.csv     (kept series)
    clean/dropped/<series_id>.csv                 (too short after cleaning)
    clean/reports/<series_id>.csv
    clean/audit/<series_id>.csv                   (before cleaning, with --audit)
    clean/attrition.csv, clean/summary.csv
    validate/metrics.csv, validate/boxplot_stats.csv
    report/significance.csv
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import os
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import cleaning as cl
from .bias_correction import load_raster
from .config import RunConfig
from .errors import ConfigError, DataError, FormatError
from .fleet import FleetRecord, load_fleet, match_names, prepare_fleet
from .power import GenerationSeries, SimulationOptions, capacity_timeline, simulate_location
from .reanalysis import load_wind_field, nearest_cell
from .validation import (
    TEMPORAL_LEVELS,
    aggregate_spatial,
    aggregate_temporal,
    boxplot_stats,
    evaluate,
    medians_differ,
    notch_interval,
    system_size_band,
    to_capacity_factor,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "WINDVAL_WORKERS"
SPATIAL_LEVELS = ("park", "state", "subsystem", "country")
METRICS_COLUMNS = [
    "region_id", "dataset_tag", "gwa_tag", "temporal_level", "spatial_level", "system_size", "n", "pearson", "rmse", "mbe",
]
GENERATION_COLUMNS = ["timestamp", "record_id", "power_kw", "installed_kw", "flags"]


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError("worker count must be at least 1")
    return workers


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _num(x) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _correction_order(tags) -> list[str]:
    return sorted(tags, key=lambda t: (t != "none", t))


# ---------------------------------------------------------------------------
# generation series I/O


def write_generation_csv(gen: GenerationSeries, path: Path) -> None:
    stamps = [s + "Z" for s in cl.format_timestamps(gen.timestamps)]
    rows = zip(stamps, itertools.repeat(gen.record_id), map(_num, gen.power_kw), map(_num, gen.installed_kw), gen.flags)
    _write_rows(path, GENERATION_COLUMNS, rows)


def read_generation_csv(path) -> GenerationSeries:
    df = pd.read_csv(path, dtype={"record_id": str}, float_precision="round_trip")
    missing = set(GENERATION_COLUMNS) - set(df.columns)
    if missing:
        raise FormatError(f"{Path(path).name}: missing columns {sorted(missing)}")
    ts = pd.to_datetime(df["timestamp"], utc=True).dt.tz_localize(None).to_numpy("datetime64[ns]")
    ids = df["record_id"].unique()
    if len(ids) != 1:
        raise FormatError(f"{Path(path).name}: expected one record id, found {len(ids)}")
    return GenerationSeries(
        str(ids[0]), ts, df["power_kw"].to_numpy(float), df["installed_kw"].to_numpy(float), df["flags"].to_numpy(np.int64)
    )


# ---------------------------------------------------------------------------
# simulate


def load_prepared_fleet(cfg: RunConfig):
    records, _ = load_fleet(cfg.path(cfg.fleet))
    if not records:
        raise DataError("fleet file has no records")
    records, report = prepare_fleet(records, cfg.thresholds.sp_floor)
    return sorted(records, key=lambda r: r.id), report


def cmd_simulate(cfg: RunConfig, workers: int | None = None) -> dict:
    """Simulate every fleet record for every dataset x correction pair; returns the manifest."""
    workers = resolve_workers(workers)
    out = cfg.out / "simulate"
    out.mkdir(parents=True, exist_ok=True)
    records, report = load_prepared_fleet(cfg)
    report.write_csv(out / "imputation_report.csv")
    log.info("fleet: %s", report.summary())

    manifest: dict = {
        "tool": "windval",
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "inputs": {"fleet": sha256_file(cfg.path(cfg.fleet))},
        "records": [r.id for r in records],
        "datasets": {},
        "corrections": _correction_order(cfg.corrections),
        "files": {},
    }
    files: list[Path] = []
    for tag in sorted(cfg.datasets):
        wind_path = cfg.path(cfg.datasets[tag])
        field = load_wind_field(wind_path, cfg.bbox, cfg.time_range)
        manifest["inputs"][f"dataset.{tag}"] = sha256_file(wind_path)
        manifest["datasets"][tag] = {
            "levels_m": [field.levels.h_lo, field.levels.h_hi],
            "grid": [field.grid.lat_start, field.grid.lat_step, field.grid.lon_start, field.grid.lon_step,
                     field.grid.n_lat, field.grid.n_lon],
            "n_time": field.n_time,
            "cells": {r.id: list(map(int, nearest_cell(field.grid, r.location))) for r in records},
        }
        for corr in _correction_order(cfg.corrections):
            raster = None
            rpath = cfg.raster_path(corr, field.levels.h_hi)
            if rpath is not None:
                raster = load_raster(rpath, height=field.levels.h_hi)
                manifest["inputs"][f"correction.{corr}.{field.levels.h_hi:g}"] = sha256_file(rpath)
            options = SimulationOptions(dataset_tag=tag, gwa_tag=corr)
            target = out / tag / corr
            target.mkdir(parents=True, exist_ok=True)

            def run(rec: FleetRecord, field=field, raster=raster, options=options, target=target) -> Path:
                gen = simulate_location(rec, field, raster, options)
                path = target / f"{safe_name(rec.id)}.csv"
                write_generation_csv(gen, path)
                return path

            if workers == 1:
                files.extend(map(run, records))
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    files.extend(pool.map(run, records))
    manifest["files"] = {p.relative_to(out).as_posix(): sha256_file(p) for p in files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# ---------------------------------------------------------------------------
# clean


@dataclass
class IndexEntry:
    series_id: str
    spatial_level: str
    region: str
    members: tuple = ()


def read_index(obs_dir: Path, files: list[Path]) -> dict[str, IndexEntry]:
    path = obs_dir / "index.csv"
    entries = {}
    if path.exists():
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        for col in ("series_id", "spatial_level", "region"):
            if col not in df.columns:
                raise FormatError(f"{path}: missing column {col!r}")
        for row in df.to_dict("records"):
            level = row["spatial_level"].strip()
            if level not in SPATIAL_LEVELS:
                raise FormatError(f"{path}: unknown spatial level {level!r}")
            members = tuple(m for m in row.get("members", "").split(";") if m)
            entries[row["series_id"].strip()] = IndexEntry(row["series_id"].strip(), level, row["region"].strip(), members)
    for f in files:
        entries.setdefault(f.stem, IndexEntry(f.stem, "park", f.stem))
    return entries


def _resolve_members(entries: dict[str, IndexEntry], records: list[FleetRecord]) -> dict[str, tuple]:
    """Fleet record ids behind each observed series; parks by exact normalised name match."""
    resolved = {}
    by_name = defaultdict(list)
    for r in records:
        by_name[r.name].append(r.id)
    parks = [e for e in entries.values() if e.spatial_level == "park" and not e.members]
    pairs = match_names(list(by_name), [e.region for e in parks])
    matched = {obs: sim for sim, obs, _ in pairs}
    tag_attr = {"state": "state", "country": "country"}
    known = {r.id for r in records}
    for e in entries.values():
        if e.members:
            unknown = set(e.members) - known
            if unknown:
                raise DataError(f"series {e.series_id}: unknown fleet records {sorted(unknown)}")
            resolved[e.series_id] = e.members
        elif e.spatial_level == "park":
            resolved[e.series_id] = tuple(by_name[matched[e.region]]) if e.region in matched else ()
        elif e.spatial_level in tag_attr:
            attr = tag_attr[e.spatial_level]
            resolved[e.series_id] = tuple(r.id for r in records if getattr(r, attr) == e.region)
        else:
            resolved[e.series_id] = ()
    return resolved


def _prepare_observed(series: cl.ObservedSeries) -> cl.ObservedSeries:
    step = series.step_hours
    if step < 1.0:
        series = cl.interpolate_short_gaps(series, native_step=pd.Timedelta(hours=step))
        series = cl.resample_hourly(series)
    elif step != 1.0:
        raise DataError(f"series {series.name}: only hourly or finer observations are supported")
    return series


def cmd_clean(cfg: RunConfig, audit: bool = False) -> dict:
    """Clean every observed series; returns ``{"attrition": rows, "summary": rows, "results": [...]}``.

    With ``audit`` the pre-cleaning series is also written to ``clean/audit/``.
    """
    if cfg.observed_dir is None:
        raise ConfigError("observed_dir is not set")
    obs_dir = cfg.path(cfg.observed_dir)
    files = sorted(p for p in obs_dir.glob("*.csv") if p.name != "index.csv")
    if not files:
        raise DataError(f"no observed series in {obs_dir}")
    records, _ = load_prepared_fleet(cfg)
    rec_by_id = {r.id: r for r in records}
    entries = read_index(obs_dir, files)
    members = _resolve_members(entries, records)
    exclusions = cl.load_exclusions(cfg.path(cfg.exclusions)) if cfg.exclusions else []
    th = cl.Thresholds(cfg.thresholds.constant_run_hours, cfg.thresholds.zero_run_hours, cfg.thresholds.min_years)

    out = cfg.out / "clean"
    for sub in ("series", "dropped", "reports", "audit"):
        (out / sub).mkdir(parents=True, exist_ok=True)
        for old in (out / sub).glob("*.csv"):
            old.unlink()

    results, summary, kept_index = [], [], []
    for f in files:
        entry = entries[f.stem]
        ids = members.get(entry.series_id, ())
        if not ids:
            summary.append([entry.series_id, entry.spatial_level, entry.region, "unmatched", "", ""])
            continue
        series = _prepare_observed(cl.load_observed(f, entry.series_id))
        if series.capacity_kw is None and series.unit == "kw":
            cap = sum(capacity_timeline(rec_by_id[i], series.timestamps) for i in ids)
            series = cl.ObservedSeries(series.name, series.timestamps, series.values, series.reason,
                                       np.asarray(cap, float), series.filled, series.unit)
        series = cl.apply_exclusions(series, entry.region, exclusions)
        if audit:
            cl.write_observed(series, out / "audit" / f"{safe_name(entry.series_id)}.csv")
        result = cl.clean_series(series, None, th)
        results.append(result)
        cl.write_cleaning_report(result.series, out / "reports" / f"{safe_name(entry.series_id)}.csv")
        status = "kept" if result.keep else "dropped"
        cl.write_observed(result.series, out / ("series" if result.keep else "dropped") / f"{safe_name(entry.series_id)}.csv")
        if result.keep:
            kept_index.append([entry.series_id, entry.spatial_level, entry.region, ";".join(ids)])
        log_str = ";".join(f"{k}={v}" for k, v in result.series.log.items())
        summary.append([entry.series_id, entry.spatial_level, entry.region, status,
                        _num(cl.usable_hours(result.series)), log_str])

    _write_rows(out / "series" / "index.csv", ["series_id", "spatial_level", "region", "members"], kept_index)
    _write_rows(out / "summary.csv", ["series_id", "spatial_level", "region", "status", "usable_hours", "masked"], summary)
    attrition = [{"rule": "observed", "applies_to": "", "remaining": len(files)},
                 {"rule": "matched", "applies_to": "", "remaining": len(results)}]
    attrition += cl.attrition_table(results)[1:]
    _write_rows(out / "attrition.csv", ["rule", "applies_to", "remaining"],
                [[r["rule"], r["applies_to"], r["remaining"]] for r in attrition])
    return {"attrition": attrition, "summary": summary, "results": results}


# ---------------------------------------------------------------------------
# validate


def _obs_capacity_factor(obs: cl.ObservedSeries, member_sims: list[GenerationSeries]):
    installed = sum(s.installed_kw for s in member_sims)
    if obs.unit == "cf":
        cap = obs.capacity_kw if obs.capacity_kw is not None else installed
        return to_capacity_factor(obs.values, 1.0, obs.mask, obs.timestamps), np.asarray(cap, float)
    cap = obs.capacity_kw if obs.capacity_kw is not None else installed
    return to_capacity_factor(obs.values, cap, obs.mask, obs.timestamps), np.asarray(cap, float)


def evaluate_group(obs_list: list[cl.ObservedSeries], obs_members: list[tuple], sims: dict[str, GenerationSeries]):
    """Align a group, aggregate simulated and observed capacity factors, score per temporal level."""
    member_ids = sorted({i for ids in obs_members for i in ids})
    sim_list = [sims[i] for i in member_ids]
    sim_list, obs_list = cl.align_and_mask(sim_list, obs_list)
    sim_by_id = dict(zip(member_ids, sim_list))
    sim_cfs = [to_capacity_factor(s, s.installed_kw) for s in sim_list]
    sim_cf = aggregate_spatial(sim_cfs, [s.installed_kw for s in sim_list])
    obs_cfs, obs_caps = [], []
    for obs, ids in zip(obs_list, obs_members):
        cf, cap = _obs_capacity_factor(obs, [sim_by_id[i] for i in ids])
        obs_cfs.append(cf)
        obs_caps.append(cap)
    obs_cf = aggregate_spatial(obs_cfs, obs_caps)
    return {level: evaluate(aggregate_temporal(sim_cf, level), aggregate_temporal(obs_cf, level))
            for level in TEMPORAL_LEVELS}


def _load_kept(cfg: RunConfig):
    series_dir = cfg.out / "clean" / "series"
    index_path = series_dir / "index.csv"
    if not index_path.exists():
        raise DataError(f"{index_path} not found; run 'windval clean' first")
    entries = read_index(series_dir, [])
    kept = {sid: cl.load_observed(series_dir / f"{safe_name(sid)}.csv", sid) for sid in sorted(entries)}
    return entries, kept


def cmd_validate(cfg: RunConfig) -> list[dict]:
    manifest_path = cfg.out / "simulate" / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{manifest_path} not found; run 'windval simulate' first")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    entries, kept = _load_kept(cfg)
    records, _ = load_prepared_fleet(cfg)
    rec_by_id = {r.id: r for r in records}
    for sid, e in entries.items():
        missing = set(e.members) - set(manifest["records"])
        if missing:
            raise DataError(f"series {sid}: records {sorted(missing)} were not simulated; rerun 'windval simulate'")

    groups = []  # (region_id, spatial_level, [series ids])
    for sid, e in sorted(entries.items()):
        groups.append((sid, e.spatial_level, [sid]))
    # bottom-up aggregates of park-level observations
    for attr in ("state", "country"):
        buckets = defaultdict(list)
        for sid, e in sorted(entries.items()):
            if e.spatial_level != "park":
                continue
            tags = {getattr(rec_by_id[i], attr) for i in e.members}
            if len(tags) == 1 and "" not in tags:
                buckets[tags.pop()].append(sid)
        for tag, sids in sorted(buckets.items()):
            if len(sids) >= 2:
                groups.append((f"{attr}:{tag}", attr, sids))

    rows = []
    level_rank = {lvl: k for k, lvl in enumerate(SPATIAL_LEVELS)}
    for dataset in sorted(manifest["datasets"]):
        cells = manifest["datasets"][dataset]["cells"]
        for corr in manifest["corrections"]:
            sims = {rid: read_generation_csv(cfg.out / "simulate" / dataset / corr / f"{safe_name(rid)}.csv")
                    for rid in manifest["records"]}
            for region_id, level, sids in sorted(groups, key=lambda g: (level_rank[g[1]], g[0])):
                obs_members = [entries[s].members for s in sids]
                size = len({tuple(cells[i]) for ids in obs_members for i in ids})
                scores = evaluate_group([kept[s] for s in sids], obs_members, sims)
                for temporal in TEMPORAL_LEVELS:
                    m = scores[temporal]
                    rows.append({
                        "region_id": region_id, "dataset_tag": dataset, "gwa_tag": corr, "temporal_level": temporal,
                        "spatial_level": level, "system_size": size, "n": m.n,
                        "pearson": m.pearson_r, "rmse": m.rmse, "mbe": m.mbe,
                    })
    out = cfg.out / "validate"
    _write_rows(out / "metrics.csv", METRICS_COLUMNS,
                [[r[c] if not isinstance(r[c], float) else _num(r[c]) for c in METRICS_COLUMNS] for r in rows])
    _write_boxplot_stats(rows, out / "boxplot_stats.csv", cfg.thresholds.notch_constant)
    return rows


BOX_COLUMNS = ["dataset_tag", "gwa_tag", "temporal_level", "metric", "n", "median", "q25", "q75",
               "notch_lo", "notch_hi", "whisker_lo", "whisker_hi", "outliers"]


def _write_boxplot_stats(rows: list[dict], path: Path, constant: float) -> None:
    groups = defaultdict(list)
    for r in rows:
        for metric in ("pearson", "rmse", "mbe"):
            if not math.isnan(r[metric]):
                groups[(r["dataset_tag"], r["gwa_tag"], r["temporal_level"], metric)].append(r[metric])
    out = []
    t_rank = {t: k for k, t in enumerate(TEMPORAL_LEVELS)}
    for key in sorted(groups, key=lambda k: (k[0], k[1], t_rank[k[2]], k[3])):
        st = boxplot_stats(groups[key], constant)
        out.append(list(key) + [st["n"]] + [_num(st[c]) for c in BOX_COLUMNS[5:12]] + [st["outliers"]])
    _write_rows(path, BOX_COLUMNS, out)


# ---------------------------------------------------------------------------
# report


def cmd_report(cfg: RunConfig) -> list[list]:
    """Pairwise notch comparisons of metric medians between configurations, temporal levels and size bands."""
    path = cfg.out / "validate" / "metrics.csv"
    if not path.exists():
        raise DataError(f"{path} not found; run 'windval validate' first")
    df = pd.read_csv(path, dtype={"region_id": str})
    df["config"] = df["dataset_tag"] + "/" + df["gwa_tag"]
    df["size_band"] = df["system_size"].map(system_size_band)
    const = cfg.thresholds.notch_constant
    rows = []

    def compare(kind, scope, metric, a_name, a, b_name, b):
        a = a.dropna().to_numpy()
        b = b.dropna().to_numpy()
        if len(a) == 0 or len(b) == 0:
            return
        na, nb = notch_interval(a, const), notch_interval(b, const)
        rows.append([kind, scope, metric, a_name, b_name, _num(na.median), _num(nb.median),
                     str(medians_differ(a, b, const)).lower()])

    for metric in ("pearson", "rmse", "mbe"):
        for temporal in TEMPORAL_LEVELS:
            sub = df[df["temporal_level"] == temporal]
            configs = sorted(sub["config"].unique())
            for a, b in itertools.combinations(configs, 2):
                compare("config", temporal, metric, a, sub.loc[sub["config"] == a, metric],
                        b, sub.loc[sub["config"] == b, metric])
        for config in sorted(df["config"].unique()):
            sub = df[df["config"] == config]
            for a, b in itertools.combinations(TEMPORAL_LEVELS, 2):
                compare("temporal", config, metric, a, sub.loc[sub["temporal_level"] == a, metric],
                        b, sub.loc[sub["temporal_level"] == b, metric])
            hourly = sub[sub["temporal_level"] == "hourly"]
            for a, b in itertools.combinations(sorted(hourly["size_band"].unique()), 2):
                compare("size_band", config, metric, f"band{a}", hourly.loc[hourly["size_band"] == a, metric],
                        f"band{b}", hourly.loc[hourly["size_band"] == b, metric])
    _write_rows(cfg.out / "report" / "significance.csv",
                ["comparison", "scope", "metric", "a", "b", "median_a", "median_b", "medians_differ"], rows)
    return rows


# ---------------------------------------------------------------------------
# capacity check


def cmd_capacity_check(fleet_path, reference_path, out_path=None) -> list[dict]:
    """Cumulative fleet capacity per year divided by a reference national capacity.

    The reference CSV has columns ``year,capacity_mw``; a blank capacity flags
    the row.  Years present on only one side are listed with a flag.
    """
    from .fleet import impute_missing

    records, _ = load_fleet(fleet_path)
    records, _ = impute_missing(records)
    ref = pd.read_csv(reference_path, dtype=str, keep_default_na=False)
    if not {"year", "capacity_mw"} <= set(ref.columns):
        raise FormatError(f"{Path(reference_path).name}: need columns year,capacity_mw")
    reference = {}
    for row in ref.itertuples(index=False):
        try:
            year = int(row.year)
        except ValueError:
            raise FormatError(f"{Path(reference_path).name}: bad year {row.year!r}") from None
        reference[year] = float(row.capacity_mw) if row.capacity_mw.strip() else None

    by_year = defaultdict(float)
    for r in records:
        by_year[r.commissioning.year] += r.capacity_kw / 1000.0
    fleet_years = set(by_year)
    years = sorted(fleet_years | set(reference))
    out = []
    cumulative = 0.0
    for y in range(years[0], years[-1] + 1):
        cumulative += by_year.get(y, 0.0)
        if y not in reference and y not in fleet_years:
            continue
        ref_mw = reference.get(y)
        if y not in reference:
            flag, ratio = "not_in_reference", None
        elif ref_mw is None:
            flag, ratio = "missing_reference", None
        elif ref_mw == 0:
            flag, ratio = "zero_reference", None
        else:
            flag, ratio = "", cumulative / ref_mw
        out.append({"year": y, "fleet_mw": cumulative, "reference_mw": ref_mw, "ratio": ratio, "flag": flag})
    if out_path is not None:
        _write_rows(Path(out_path), ["year", "fleet_mw", "reference_mw", "ratio", "flag"],
                    [[r["year"], _num(r["fleet_mw"]), "" if r["reference_mw"] is None else _num(r["reference_mw"]),
                      "" if r["ratio"] is None else _num(r["ratio"]), r["flag"]] for r in out])
    return out
