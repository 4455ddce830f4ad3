"""Seeded synthetic inputs: wind fields, rasters, fleets and observed series.

Used by the test suite and by ``windval make-fixture`` to build a small,
self-contained run directory.
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import numpy as np
import yaml
from scipy.signal import lfilter

from .bias_correction import MeanWindRaster, write_ascii_grid
from .cleaning import ObservedSeries, write_observed
from .fleet import FleetRecord, write_fleet
from .power import simulate_location
from .reanalysis import Grid, WindField, write_wind_field_csv
from .wind_math import HeightPair

FIXTURE_START = "2019-01-01T00:00"
FIXTURE_HOURS = 8760


def hourly_axis(start: str, hours: int) -> np.ndarray:
    return np.datetime64(start, "ns") + np.arange(hours) * np.timedelta64(1, "h")


def _ar1(rng, n: int, shape: tuple, phi: float) -> np.ndarray:
    noise = rng.standard_normal((n,) + shape) * np.sqrt(1 - phi**2)
    return lfilter([1.0], [1.0, -phi], noise, axis=0)


def synthetic_wind_field(
    grid: Grid, start: str = FIXTURE_START, hours: int = FIXTURE_HOURS, seed: int = 0,
    levels: tuple[float, float] = (10.0, 100.0), mean_speed: float = 7.5,
) -> WindField:
    """Spatially correlated, autocorrelated winds with a diurnal cycle and variable shear."""
    rng = np.random.default_rng(seed)
    shape = (grid.n_lat, grid.n_lon)
    common = _ar1(rng, hours, (1, 1), 0.97)
    local = _ar1(rng, hours, shape, 0.9)
    t = np.arange(hours)[:, None, None]
    diurnal = 0.8 * np.sin(2 * np.pi * (t % 24) / 24.0)
    offset = rng.uniform(-1.0, 1.0, shape)
    s_hi = np.clip(mean_speed + offset + 2.5 * common + 1.0 * local + diurnal, 0.0, None)
    alpha = np.clip(0.16 + 0.06 * _ar1(rng, hours, shape, 0.95), 0.02, 0.4)
    s_lo = s_hi * (levels[0] / levels[1]) ** alpha
    theta = np.cumsum(0.05 * rng.standard_normal((hours,) + shape), axis=0)
    u = np.stack([s_lo * np.cos(theta), s_hi * np.cos(theta)], axis=1)
    v = np.stack([s_lo * np.sin(theta), s_hi * np.sin(theta)], axis=1)
    return WindField(grid, hourly_axis(start, hours), HeightPair(*levels), u, v)


def synthetic_raster(grid: Grid, height: float = 100.0, pixel: float = 0.05, seed: int = 0, nodata_fraction=0.02):
    """Mean wind raster covering the grid's cells, with a smooth gradient and scattered nodata."""
    rng = np.random.default_rng(seed + 1)
    north = grid.lat_end + grid.lat_step / 2
    south = grid.lat_start - grid.lat_step / 2
    west = grid.lon_start - grid.lon_step / 2
    east = grid.lon_end + grid.lon_step / 2
    n_rows = int(round((north - south) / pixel))
    n_cols = int(round((east - west) / pixel))
    rr, cc = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    values = 7.0 + 1.5 * np.sin(rr / 7.0) * np.cos(cc / 9.0) + 0.2 * rng.standard_normal((n_rows, n_cols))
    valid = rng.random((n_rows, n_cols)) >= nodata_fraction
    return MeanWindRaster(north, west, pixel, height, values, valid)


def fixture_fleet() -> list[FleetRecord]:
    """Three parks: day-precision mid-series, month precision before the series, year precision in it."""
    return [
        FleetRecord("P1", "Parque Alfa", -9.1, -39.4, 30000.0, 100.0, 110.0, dt.date(2019, 3, 10), "day", "CE", "BR"),
        FleetRecord("P2", "Parque Beta", -9.6, -38.7, 20000.0, 80.0, 90.0, dt.date(2018, 11, 15), "month", "CE", "BR"),
        FleetRecord("P3", "Parque Gama", -8.6, -38.2, 25000.0, 120.0, 130.0, dt.date(2019, 1, 1), "year", "RN", "BR"),
    ]


FIXTURE_GRID = Grid(-10.0, 0.5, -40.0, 0.625, 4, 4)


def observed_from_simulation(record, field, seed: int, name: str) -> ObservedSeries:
    """Observed-like series: simulation on perturbed winds plus noise, gaps and artefacts."""
    rng = np.random.default_rng(seed)
    factor = 1.0 + 0.08 * _ar1(rng, field.n_time, (1, 1, 1), 0.98)
    perturbed = WindField(field.grid, field.timestamps, field.levels, field.u * factor * 0.95, field.v * factor * 0.95)
    sim = simulate_location(record, perturbed)
    values = np.clip(sim.power_kw * (1 + 0.03 * rng.standard_normal(field.n_time)), 0.0, None)
    values = np.minimum(values, sim.installed_kw)
    live = np.flatnonzero(sim.installed_kw > 0)
    if len(live) > 400:
        i = int(live[100])
        values[i : i + 30] = np.round(0.42 * sim.installed_kw[i], 3)
        values[int(live[250])] = 1.05 * sim.installed_kw[int(live[250])]
        gap = rng.choice(live[300:], size=20, replace=False)
        values[gap] = np.nan
    return ObservedSeries.from_values(name, field.timestamps, values, sim.installed_kw)


def write_fixture(directory, seed: int = 0, datasets=("fixture",), gwa=("gwa2",)) -> Path:
    """Write a complete run directory and return the path of its ``config.yaml``."""
    d = Path(directory)
    (d / "observed").mkdir(parents=True, exist_ok=True)
    field = synthetic_wind_field(FIXTURE_GRID, seed=seed)
    write_wind_field_csv(field, d / "wind.csv")
    fleet = fixture_fleet()
    write_fleet(fleet, d / "fleet.csv")

    corrections: dict = {"none": None}
    for k, tag in enumerate(gwa):
        raster = synthetic_raster(FIXTURE_GRID, 100.0, seed=seed + 10 * k)
        write_ascii_grid(raster, d / f"{tag}_100.asc")
        corrections[tag] = {100: f"{tag}_100.asc"}

    index = ["series_id,spatial_level,region"]
    for k, rec in enumerate(fleet):
        obs_name = rec.name.upper().replace(" ", "-")
        sid = f"obs_{rec.id.lower()}"
        obs = observed_from_simulation(rec, field, seed + 100 + k, sid)
        write_observed(obs, d / "observed" / f"{sid}.csv")
        index.append(f"{sid},park,{obs_name}")
    (d / "observed" / "index.csv").write_text("\n".join(index) + "\n", encoding="utf-8")

    config = {
        "datasets": {tag: "wind.csv" for tag in datasets},
        "fleet": "fleet.csv",
        "observed_dir": "observed",
        "corrections": corrections,
        "output_dir": "out",
        "thresholds": {"min_years": 0.5},
        "seed": seed,
    }
    path = d / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path


def attrition_corpus(seed: int = 0, capacity_kw: float = 10000.0) -> list[ObservedSeries]:
    """70 hourly park series seeded with rule violations.

    Series 0-49 hold a 30 h nonzero plateau, 20-47 a 200 h zero stretch, 0-58
    three steps above capacity, and 53-69 cover only 1.5 years.  Expected
    attrition: 50, 28, 59 and 17 series affected; 53 remain.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(70):
        hours = int(1.5 * 8760) if i >= 53 else int(2.5 * 8760)
        ts = hourly_axis("2015-01-01T00:00", hours)
        cf = rng.uniform(0.05, 0.95, hours)
        if i < 50:
            cf[1000:1030] = 0.5
        if 20 <= i < 48:
            cf[3000:3200] = 0.0
        if i < 59:
            cf[[5000, 6000, 7000]] = 1.2
        out.append(ObservedSeries.from_values(f"park_{i:02d}", ts, cf * capacity_kw, capacity_kw))
    return out
