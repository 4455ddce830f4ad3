"""Gridded u/v wind fields at two heights: loading, subsetting and cell lookup.

Two on-disk formats are supported:

* NetCDF (classic via scipy, NetCDF4/HDF5 via h5py) with variables ``u``, ``v``
  over ``time, level, lat, lon`` (common aliases accepted, any order).
* A plain CSV fixture with columns ``time,lat,lon,u_lo,v_lo,u_hi,v_hi``.  The
  two level heights are given by a leading comment line ``# levels_m: 10,100``
  or by the ``levels`` argument of :func:`load_wind_field`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import pandas as pd

from .errors import EmptySelectionError, FormatError, OutOfDomainError
from .wind_math import HeightPair

HOUR = np.timedelta64(1, "h")
TIE_TOL = 1e-12  # degrees
LEVEL_NAMES = ("lo", "hi")

# conversion factors to m/s, keyed by normalised units string
_SPEED_UNITS = {
    "m/s": 1.0,
    "ms-1": 1.0,
    "ms**-1": 1.0,
    "ms^-1": 1.0,
    "meterpersecond": 1.0,
    "meterspersecond": 1.0,
    "km/h": 1.0 / 3.6,
    "kmh-1": 1.0 / 3.6,
    "knots": 0.514444,
    "kt": 0.514444,
}

_DIM_ALIASES = {
    "time": ("time", "valid_time"),
    "level": ("level", "height", "lev"),
    "lat": ("lat", "latitude"),
    "lon": ("lon", "longitude"),
}


class BBox(NamedTuple):
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float


class GridIndex(NamedTuple):
    i_lat: int
    i_lon: int


@dataclass(frozen=True)
class Grid:
    lat_start: float
    lat_step: float
    lon_start: float
    lon_step: float
    n_lat: int
    n_lon: int

    def __post_init__(self):
        if not (self.lat_step > 0 and self.lon_step > 0):
            raise FormatError("grid steps must be positive")
        if self.n_lat < 1 or self.n_lon < 1:
            raise FormatError("grid must have at least one cell per axis")

    @property
    def lats(self) -> np.ndarray:
        return self.lat_start + self.lat_step * np.arange(self.n_lat)

    @property
    def lons(self) -> np.ndarray:
        return self.lon_start + self.lon_step * np.arange(self.n_lon)

    @property
    def lat_end(self) -> float:
        return self.lat_start + self.lat_step * (self.n_lat - 1)

    @property
    def lon_end(self) -> float:
        return self.lon_start + self.lon_step * (self.n_lon - 1)

    def contains(self, cell: GridIndex) -> bool:
        return 0 <= cell.i_lat < self.n_lat and 0 <= cell.i_lon < self.n_lon

    @classmethod
    def from_centers(cls, lats, lons) -> "Grid":
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        return cls(
            float(lats[0]), _axis_step(lats, "lat"), float(lons[0]), _axis_step(lons, "lon"), len(lats), len(lons)
        )


def _axis_step(centers: np.ndarray, name: str) -> float:
    if len(centers) == 1:
        return 1.0
    diffs = np.diff(centers)
    step = float(diffs.mean())
    if step <= 0 or not np.allclose(diffs, step, rtol=1e-6, atol=1e-9):
        raise FormatError(f"{name} axis is not a regular, strictly increasing grid")
    return step


@dataclass(frozen=True, eq=False)
class WindField:
    """Wind components on a regular grid, shaped ``[time, level, lat, lon]``.

    Arrays are made read-only on construction.
    """

    grid: Grid
    timestamps: np.ndarray
    levels: HeightPair
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[ns]")
        u = np.array(self.u, dtype=float)
        v = np.array(self.v, dtype=float)
        shape = (len(ts), 2, self.grid.n_lat, self.grid.n_lon)
        if u.shape != shape or v.shape != shape:
            raise FormatError(f"u/v shapes {u.shape}/{v.shape} do not match expected {shape}")
        _check_time_axis(ts)
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise FormatError("wind field contains non-finite values")
        for arr in (ts, u, v):
            arr.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n_time(self) -> int:
        return len(self.timestamps)

    def level_height(self, level: str) -> float:
        return self.levels.h_lo if _level_index(level) == 0 else self.levels.h_hi

    def equals(self, other: "WindField") -> bool:
        return (
            self.grid == other.grid
            and self.levels == other.levels
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )


def _check_time_axis(ts: np.ndarray) -> None:
    if len(ts) == 0:
        raise EmptySelectionError("wind field has no timestamps")
    if len(ts) > 1:
        steps = np.diff(ts)
        if not (steps == HOUR).all():
            raise FormatError("time axis must be strictly increasing with a uniform hourly step")


def _level_index(level: str) -> int:
    try:
        return LEVEL_NAMES.index(level)
    except ValueError:
        raise ValueError(f"level must be 'lo' or 'hi', got {level!r}") from None


def _as_bbox(bbox) -> BBox | None:
    if bbox is None:
        return None
    box = BBox(*map(float, bbox))
    if box.lat_min > box.lat_max or box.lon_min > box.lon_max:
        raise ValueError(f"inverted bounding box {box}")
    return box


def _as_time_range(time_range):
    if time_range is None:
        return None
    start, end = time_range
    return to_utc_naive(start), to_utc_naive(end)


def to_utc_naive(instant) -> np.datetime64:
    ts = pd.Timestamp(instant)
    if ts.tzinfo is not None:
        ts = ts.tz_convert("UTC").tz_localize(None)
    return np.datetime64(ts, "ns")


def subset(field: WindField, bbox=None, time_range=None) -> WindField:
    """Restrict ``field`` to cell centres inside ``bbox`` and instants inside ``time_range``.

    Both bounds are inclusive.  ``bbox`` is ``(lat_min, lat_max, lon_min, lon_max)``.
    """
    box = _as_bbox(bbox)
    tr = _as_time_range(time_range)
    grid = field.grid
    tol = 1e-9
    lat_sel = np.ones(grid.n_lat, bool)
    lon_sel = np.ones(grid.n_lon, bool)
    if box is not None:
        lat_sel = (grid.lats >= box.lat_min - tol) & (grid.lats <= box.lat_max + tol)
        lon_sel = (grid.lons >= box.lon_min - tol) & (grid.lons <= box.lon_max + tol)
    t_sel = np.ones(field.n_time, bool)
    if tr is not None:
        t_sel = (field.timestamps >= tr[0]) & (field.timestamps <= tr[1])
    if not (lat_sel.any() and lon_sel.any()):
        raise EmptySelectionError(f"bounding box {box} does not contain any grid cell centre")
    if not t_sel.any():
        raise EmptySelectionError(f"time range {time_range} does not intersect the time axis")
    if lat_sel.all() and lon_sel.all() and t_sel.all():
        return field

    ilat = np.flatnonzero(lat_sel)
    ilon = np.flatnonzero(lon_sel)
    new_grid = Grid(
        float(grid.lats[ilat[0]]), grid.lat_step, float(grid.lons[ilon[0]]), grid.lon_step, len(ilat), len(ilon)
    )
    sel = np.ix_(np.flatnonzero(t_sel), [0, 1], ilat, ilon)
    return WindField(new_grid, field.timestamps[t_sel], field.levels, field.u[sel], field.v[sel])


def load_wind_field(path, bbox=None, time_range=None, levels: tuple[float, float] | None = None) -> WindField:
    """Load a wind field from NetCDF (``.nc``) or the CSV fixture format (``.csv``).

    Parameters
    ----------
    path : path-like
        Input file.
    bbox : tuple, optional
        ``(lat_min, lat_max, lon_min, lon_max)``; cells whose centres fall inside are kept.
    time_range : tuple, optional
        Inclusive ``(start, end)`` instants, UTC.
    levels : tuple, optional
        Level heights in metres for CSV files without a ``# levels_m:`` line.

    Raises
    ------
    FormatError
        Missing variables, irregular axes, non-hourly time steps or non-finite values.
    EmptySelectionError
        ``bbox`` or ``time_range`` selects nothing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix in (".nc", ".nc4", ".netcdf"):
        field = _load_netcdf(path)
    elif suffix == ".csv":
        field = _load_csv(path, levels)
    else:
        raise FormatError(f"unsupported wind field format: {path.name}")
    return subset(field, bbox, time_range)


def _speed_factor(units: str | None, var: str) -> float:
    if units is None:
        return 1.0
    key = units.replace(" ", "").lower()
    if key not in _SPEED_UNITS:
        raise FormatError(f"variable {var!r} has unsupported units {units!r}")
    return _SPEED_UNITS[key]


_CF_TIME_UNITS = {"days": "D", "day": "D", "hours": "h", "hour": "h", "minutes": "m", "seconds": "s"}


def _decode_cf_time(values, units: str | None, name: str) -> np.ndarray:
    """Decode ``<unit> since <reference>`` time coordinates to naive UTC datetime64[ns]."""
    if not units or " since " not in units:
        raise FormatError(f"{name}: time coordinate lacks CF 'units since reference' metadata")
    unit, _, ref = units.partition(" since ")
    unit = unit.strip().lower()
    if unit not in _CF_TIME_UNITS:
        raise FormatError(f"{name}: unsupported time unit {unit!r}")
    origin = to_utc_naive(pd.Timestamp(ref.strip()))
    offsets = pd.to_timedelta(np.asarray(values, dtype=float), unit=_CF_TIME_UNITS[unit])
    return (origin + offsets.to_numpy()).astype("datetime64[ns]")


def _unpack(raw, attrs: dict) -> np.ndarray:
    """Apply ``_FillValue``/``missing_value`` and ``scale_factor``/``add_offset`` packing."""
    arr = np.asarray(raw)
    out = arr.astype(float)
    for key in ("_FillValue", "missing_value"):
        if key in attrs:
            out[arr == np.asarray(attrs[key]).astype(arr.dtype)] = np.nan
    if "scale_factor" in attrs:
        out = out * float(np.asarray(attrs["scale_factor"]).ravel()[0])
    if "add_offset" in attrs:
        out = out + float(np.asarray(attrs["add_offset"]).ravel()[0])
    return out


def _attr_str(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bytes):
        return value.decode("utf-8")
    if isinstance(value, np.ndarray):
        return _attr_str(value.ravel()[0]) if value.size else None
    return str(value)


def _read_netcdf3(path: Path) -> dict:
    from scipy.io import netcdf_file

    out = {}
    with netcdf_file(path, "r", mmap=False) as nc:
        for name, var in nc.variables.items():
            attrs = {k: v for k, v in var._attributes.items()}
            out[name] = (tuple(var.dimensions), np.array(var.data), attrs)
    return out


def _read_netcdf4(path: Path) -> dict:
    import h5py

    out = {}
    with h5py.File(path, "r") as f:
        for name, ds in f.items():
            if not isinstance(ds, h5py.Dataset):
                continue
            dims = []
            for k, dim in enumerate(ds.dims):
                dims.append(dim[0].name.lstrip("/") if len(dim) else f"dim{k}")
            attrs = {k: v for k, v in ds.attrs.items() if k not in ("DIMENSION_LIST", "REFERENCE_LIST", "CLASS", "NAME")}
            out[name] = (tuple(dims), ds[()], attrs)
    return out


def _read_netcdf_variables(path: Path) -> dict:
    with path.open("rb") as fh:
        magic = fh.read(4)
    if magic[:3] == b"CDF":
        return _read_netcdf3(path)
    if magic == b"\x89HDF":
        return _read_netcdf4(path)
    raise FormatError(f"{path.name}: not a NetCDF file")


def _load_netcdf(path: Path) -> WindField:
    variables = _read_netcdf_variables(path)
    for var in ("u", "v"):
        if var not in variables:
            raise FormatError(f"{path.name}: missing variable {var!r}")
    var_dims = variables["u"][0]
    if len(var_dims) != 4 or variables["v"][0] != var_dims:
        raise FormatError(f"{path.name}: u and v must share four dimensions")
    dims = {}
    for canonical, aliases in _DIM_ALIASES.items():
        found = [a for a in aliases if a in var_dims and a in variables]
        if not found:
            raise FormatError(f"{path.name}: missing dimension {canonical!r}")
        dims[canonical] = found[0]
    order = [var_dims.index(dims[c]) for c in ("time", "level", "lat", "lon")]

    def coord(c):
        return variables[dims[c]]

    levels = _unpack(coord("level")[1], coord("level")[2])
    lats = _unpack(coord("lat")[1], coord("lat")[2])
    lons = _unpack(coord("lon")[1], coord("lon")[2])
    times = _decode_cf_time(coord("time")[1], _attr_str(coord("time")[2].get("units")), path.name)
    arrays = []
    for var in ("u", "v"):
        _, raw, attrs = variables[var]
        arr = np.transpose(_unpack(raw, attrs), order)
        arrays.append(arr * _speed_factor(_attr_str(attrs.get("units")), var))
    u_arr, v_arr = arrays

    if len(levels) != 2:
        raise FormatError(f"{path.name}: expected exactly two levels, found {len(levels)}")
    lev_order = np.argsort(levels)
    lat_order = np.argsort(lats)
    lon_order = np.argsort(lons)
    u_arr = u_arr[:, lev_order][:, :, lat_order][:, :, :, lon_order]
    v_arr = v_arr[:, lev_order][:, :, lat_order][:, :, :, lon_order]
    grid = Grid.from_centers(lats[lat_order], lons[lon_order])
    return WindField(grid, times, HeightPair(*levels[lev_order]), u_arr, v_arr)


_CSV_COLUMNS = ["time", "lat", "lon", "u_lo", "v_lo", "u_hi", "v_hi"]


def _read_levels_comment(path: Path) -> tuple[float, float] | None:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.startswith("#") and "levels_m" in first:
        _, _, rest = first.partition(":")
        parts = [float(p) for p in rest.replace(" ", "").split(",") if p]
        if len(parts) != 2:
            raise FormatError(f"{path.name}: malformed levels line {first!r}")
        return parts[0], parts[1]
    return None


def _load_csv(path: Path, levels) -> WindField:
    declared = _read_levels_comment(path)
    levels = declared or levels
    if levels is None:
        raise FormatError(f"{path.name}: level heights not declared (add '# levels_m: lo,hi')")
    df = pd.read_csv(path, comment="#")
    for col in _CSV_COLUMNS:
        if col not in df.columns:
            raise FormatError(f"{path.name}: missing variable {col!r}")
    times = pd.to_datetime(df["time"], utc=True).dt.tz_localize(None).to_numpy("datetime64[ns]")
    t_axis, t_idx = np.unique(times, return_inverse=True)
    lat_axis, lat_idx = np.unique(df["lat"].to_numpy(float), return_inverse=True)
    lon_axis, lon_idx = np.unique(df["lon"].to_numpy(float), return_inverse=True)
    shape = (len(t_axis), 2, len(lat_axis), len(lon_axis))
    expected = shape[0] * shape[2] * shape[3]
    flat = (t_idx * shape[2] + lat_idx) * shape[3] + lon_idx
    if len(df) != expected or len(np.unique(flat)) != expected:
        raise FormatError(f"{path.name}: rows do not form a complete time x lat x lon grid")
    u = np.empty(shape)
    v = np.empty(shape)
    for k, lev in enumerate(LEVEL_NAMES):
        u[t_idx, k, lat_idx, lon_idx] = df[f"u_{lev}"].to_numpy(float)
        v[t_idx, k, lat_idx, lon_idx] = df[f"v_{lev}"].to_numpy(float)
    grid = Grid.from_centers(lat_axis, lon_axis)
    return WindField(grid, t_axis, HeightPair(float(levels[0]), float(levels[1])), u, v)


def write_wind_field_csv(field: WindField, path) -> None:
    path = Path(path)
    nt, _, nlat, nlon = field.u.shape
    tt, ii, jj = np.meshgrid(np.arange(nt), np.arange(nlat), np.arange(nlon), indexing="ij")
    tt, ii, jj = tt.ravel(), ii.ravel(), jj.ravel()
    df = pd.DataFrame(
        {
            "time": pd.DatetimeIndex(field.timestamps[tt]).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "lat": field.grid.lats[ii],
            "lon": field.grid.lons[jj],
            "u_lo": field.u[tt, 0, ii, jj],
            "v_lo": field.v[tt, 0, ii, jj],
            "u_hi": field.u[tt, 1, ii, jj],
            "v_hi": field.v[tt, 1, ii, jj],
        }
    )
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# levels_m: {field.levels.h_lo:g},{field.levels.h_hi:g}\n")
        df.to_csv(fh, index=False, float_format="%.6f")


def write_wind_field_netcdf(field: WindField, path) -> None:
    """Write a NetCDF3 (classic, 64-bit offset) file readable by :func:`load_wind_field`."""
    from scipy.io import netcdf_file

    hours = (field.timestamps - field.timestamps[0]) / HOUR
    origin = np.datetime_as_string(field.timestamps[0].astype("datetime64[s]"), unit="s").replace("T", " ")
    with netcdf_file(path, "w", version=2) as nc:
        for name, n in (("time", field.n_time), ("level", 2), ("lat", field.grid.n_lat), ("lon", field.grid.n_lon)):
            nc.createDimension(name, n)
        t = nc.createVariable("time", "f8", ("time",))
        t[:] = hours
        t.units = f"hours since {origin}"
        lev = nc.createVariable("level", "f8", ("level",))
        lev[:] = [field.levels.h_lo, field.levels.h_hi]
        lev.units = "m"
        nc.createVariable("lat", "f8", ("lat",))[:] = field.grid.lats
        nc.createVariable("lon", "f8", ("lon",))[:] = field.grid.lons
        for name, data in (("u", field.u), ("v", field.v)):
            var = nc.createVariable(name, "f8", ("time", "level", "lat", "lon"))
            var[:] = data
            var.units = "m s-1"


def nearest_cell(grid: Grid, location) -> GridIndex:
    """Index of the cell centre closest to ``(lat, lon)`` in degree space.

    Equidistant candidates resolve to the smallest ``i_lat``, then the smallest
    ``i_lon``.  Points more than one cell pitch outside the grid hull raise
    :class:`OutOfDomainError`.
    """
    lat, lon = map(float, location)
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise OutOfDomainError(f"non-finite location {location}")
    if not (
        grid.lat_start - grid.lat_step <= lat <= grid.lat_end + grid.lat_step
        and grid.lon_start - grid.lon_step <= lon <= grid.lon_end + grid.lon_step
    ):
        raise OutOfDomainError(f"location ({lat}, {lon}) lies outside the grid")
    return GridIndex(
        _nearest_on_axis(lat, grid.lat_start, grid.lat_step, grid.n_lat),
        _nearest_on_axis(lon, grid.lon_start, grid.lon_step, grid.n_lon),
    )


def _nearest_on_axis(x: float, start: float, step: float, n: int) -> int:
    # Distance is separable per axis, so per-axis argmin is the joint argmin.
    i = min(max(math.floor((x - start) / step), 0), n - 1)
    if i + 1 < n:
        d_lo = abs(x - (start + i * step))
        d_hi = abs(x - (start + (i + 1) * step))
        # midpoints (to TIE_TOL degrees) resolve to the lower index
        if d_hi < d_lo - TIE_TOL:
            i += 1
    return i


def extract_series(field: WindField, cell: GridIndex, level: str) -> tuple[np.ndarray, np.ndarray]:
    """Return the stored ``(u, v)`` component series at ``cell`` and ``level`` ('lo' or 'hi')."""
    k = _level_index(level)
    if not field.grid.contains(GridIndex(*cell)):
        raise IndexError(f"cell {tuple(cell)} outside grid of shape ({field.grid.n_lat}, {field.grid.n_lon})")
    i, j = cell
    return field.u[:, k, i, j].copy(), field.v[:, k, i, j].copy()


def insert_series(field: WindField, cell: GridIndex, level: str, u, v) -> WindField:
    """Copy of ``field`` with the component series at ``cell``/``level`` replaced."""
    k = _level_index(level)
    if not field.grid.contains(GridIndex(*cell)):
        raise IndexError(f"cell {tuple(cell)} outside grid")
    new_u = np.array(field.u)
    new_v = np.array(field.v)
    new_u[:, k, cell[0], cell[1]] = u
    new_v[:, k, cell[0], cell[1]] = v
    return WindField(field.grid, field.timestamps, field.levels, new_u, new_v)


def occupied_cells(grid: Grid, locations: Iterable) -> set[GridIndex]:
    return {nearest_cell(grid, loc) for loc in locations}
