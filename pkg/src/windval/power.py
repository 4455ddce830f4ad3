"""Hub-height wind speed to power: specific-power curves, capacity timelines, per-location simulation."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from . import bias_correction as bc
from .errors import DataError, DomainError, HeightMismatchError, SimulationError
from .fleet import FleetRecord, specific_power
from .reanalysis import WindField, extract_series, nearest_cell
from .wind_math import ALPHA_BOUNDS, MIN_SHEAR_SPEED, NEUTRAL_ALPHA, effective_speed, extrapolate_to_hub, hellmann_exponent

log = logging.getLogger(__name__)

CUT_IN = 3.5
CUT_OUT = 25.0
AIR_DENSITY = 1.225
REFERENCE_CP = 0.45
MIN_SPECIFIC_POWER = 100.0

# per-timestep flag bits in GenerationSeries.flags
FLAG_ALPHA_FALLBACK = 1
FLAG_ALPHA_CLAMPED = 2
FLAG_NOT_COMMISSIONED = 4

__all__ = [
    "PowerCurve",
    "GenerationSeries",
    "SimulationOptions",
    "specific_power",
    "build_power_curve",
    "power_output",
    "capacity_timeline",
    "simulate_location",
]


@dataclass(frozen=True)
class PowerCurve:
    specific_power: float
    cut_in: float
    rated_speed: float
    cut_out: float

    def __post_init__(self):
        if not (0 < self.cut_in < self.rated_speed < self.cut_out):
            raise DomainError(
                f"need 0 < cut_in < rated < cut_out, got {self.cut_in}, {self.rated_speed}, {self.cut_out}"
            )

    def __call__(self, v_hub):
        """Normalised output in [0, 1]: cubic rise from cut-in to rated, flat to cut-out."""
        v = np.asarray(v_hub, dtype=float)
        ci3 = self.cut_in**3
        ramp = (v**3 - ci3) / (self.rated_speed**3 - ci3)
        out = np.where(v < self.cut_in, 0.0, np.where(v < self.rated_speed, ramp, 1.0))
        out = np.where(v >= self.cut_out, 0.0, out)
        return out.item() if out.ndim == 0 else out


def rated_speed_for(sp: float, rho: float = AIR_DENSITY, cp: float = REFERENCE_CP) -> float:
    """Speed at which a rotor with power coefficient ``cp`` delivers ``sp`` W/m^2."""
    return (2.0 * sp / (rho * cp)) ** (1.0 / 3.0)


def build_power_curve(sp: float, cut_in: float = CUT_IN, cut_out: float = CUT_OUT) -> PowerCurve:
    if not sp >= MIN_SPECIFIC_POWER:
        raise DomainError(f"specific power {sp:.4g} W/m2 below {MIN_SPECIFIC_POWER:g} W/m2")
    rated = rated_speed_for(sp)
    if rated >= cut_out:
        raise DomainError(f"specific power {sp:.4g} W/m2 gives a rated speed above cut-out")
    return PowerCurve(sp, cut_in, rated, cut_out)


def power_output(curve: PowerCurve, v_hub, installed):
    v = np.asarray(v_hub, dtype=float)
    cap = np.asarray(installed, dtype=float)
    if np.any(v < 0) or np.any(cap < 0):
        raise DomainError("wind speed and installed capacity must be non-negative")
    out = cap * curve(v)
    return out.item() if np.ndim(out) == 0 else out


def commissioning_instant(record: FleetRecord) -> np.datetime64:
    if record.commissioning is None:
        raise DataError(f"record {record.id} has no commissioning date")
    d = record.commissioning
    if record.commissioning_precision == "year":
        d = dt.date(d.year, 1, 1)
    return np.datetime64(d.isoformat(), "ns")


def capacity_timeline(record: FleetRecord, timestamps) -> np.ndarray:
    """Installed capacity (kW) at each timestamp.

    Day or month precision: zero before the commissioning instant, full capacity
    from it on.  Year precision: linear ramp from 0 at Jan 1 00:00 to full
    capacity at the next Jan 1 00:00.
    """
    ts = np.asarray(timestamps, dtype="datetime64[ns]")
    if record.capacity_kw is None:
        raise DataError(f"record {record.id} has no capacity")
    cap = float(record.capacity_kw)
    start = commissioning_instant(record)
    if len(ts) and start > ts[-1]:
        log.warning("record %s is commissioned after the simulated period", record.id)
    if record.commissioning_precision == "year":
        end = np.datetime64(f"{record.commissioning.year + 1:04d}-01-01", "ns")
        frac = (ts - start).astype(np.int64) / float((end - start).astype(np.int64))
        return cap * np.clip(frac, 0.0, 1.0)
    return np.where(ts >= start, cap, 0.0)


@dataclass(frozen=True)
class SimulationOptions:
    dataset_tag: str = "fixture"
    gwa_tag: str = "none"
    eps: float = MIN_SHEAR_SPEED
    fallback_alpha: float = NEUTRAL_ALPHA
    alpha_bounds: tuple = ALPHA_BOUNDS


@dataclass(eq=False)
class GenerationSeries:
    record_id: str
    timestamps: np.ndarray
    power_kw: np.ndarray
    installed_kw: np.ndarray
    flags: np.ndarray
    metadata: dict = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.zeros(len(self.timestamps), dtype=bool)

    @property
    def values(self) -> np.ndarray:
        return self.power_kw

    def with_mask(self, mask) -> "GenerationSeries":
        return GenerationSeries(
            self.record_id, self.timestamps, self.power_kw, self.installed_kw, self.flags, dict(self.metadata),
            np.asarray(mask, dtype=bool) | self.mask,
        )


def hub_wind_speed(record: FleetRecord, field: WindField, raster=None, options: SimulationOptions | None = None):
    """Hub-height wind speed at ``record`` plus per-step flags and the correction factor used.

    Extrapolation starts from the upper reanalysis level.  With a raster, the
    factor is built at the upper level and applied to the hub-height series.
    """
    options = options or SimulationOptions()
    cell = nearest_cell(field.grid, record.location)
    s_lo = effective_speed(*extract_series(field, cell, "lo"))
    s_hi = effective_speed(*extract_series(field, cell, "hi"))
    shear = hellmann_exponent(
        s_lo, s_hi, field.levels, eps=options.eps, fallback=options.fallback_alpha, bounds=options.alpha_bounds
    )
    v_hub = extrapolate_to_hub(s_hi, field.levels.h_hi, shear.alpha, record.hub_height_m)
    cf = None
    if raster is not None:
        if raster.height != field.levels.h_hi:
            raise HeightMismatchError(
                f"raster height {raster.height:g} m does not match upper reanalysis level {field.levels.h_hi:g} m"
            )
        gwa_mean = bc.sample_raster(raster, record.location)
        cf = bc.correction_factor(gwa_mean, s_hi, gwa_height=raster.height, series_height=field.levels.h_hi)
        v_hub = bc.apply_correction(v_hub, cf)
    flags = shear.fallback * FLAG_ALPHA_FALLBACK + shear.clamped * FLAG_ALPHA_CLAMPED
    return np.atleast_1d(v_hub), flags.astype(np.int64), cf, cell


def simulate_location(
    record: FleetRecord, field: WindField, raster=None, options: SimulationOptions | None = None
) -> GenerationSeries:
    """Full chain for one turbine or park: grid lookup, shear, extrapolation, correction, power curve."""
    options = options or SimulationOptions()
    try:
        if record.hub_height_m is None or record.rotor_diameter_m is None or record.capacity_kw is None:
            raise DataError("record has unfilled attributes; run fleet imputation first")
        v_hub, flags, cf, cell = hub_wind_speed(record, field, raster, options)
        curve = build_power_curve(specific_power(record.capacity_kw, record.rotor_diameter_m))
        installed = capacity_timeline(record, field.timestamps)
        power = power_output(curve, v_hub, installed)
    except (DataError, ValueError) as exc:
        raise SimulationError(record.id, exc) from exc
    flags = flags | np.where(installed == 0, FLAG_NOT_COMMISSIONED, 0)
    meta = {
        "dataset": options.dataset_tag,
        "gwa": options.gwa_tag if raster is not None else "none",
        "cell": [int(cell.i_lat), int(cell.i_lon)],
        "specific_power_w_m2": curve.specific_power,
        "rated_speed_m_s": curve.rated_speed,
        "correction_factor": None if cf is None else cf.factor,
    }
    return GenerationSeries(record.id, field.timestamps, np.asarray(power, float), installed, flags, meta)

