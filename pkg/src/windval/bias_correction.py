"""Mean-bias correction of reanalysis wind speeds with a high-resolution mean wind raster."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateSeriesError, FormatError, HeightMismatchError, NodataError, OutOfDomainError

NODATA_SEARCH_RADIUS = 5
RASTER_HEIGHTS = (50.0, 100.0)

# GeoTIFF tag codes
_TAG_PIXEL_SCALE = 33550
_TAG_TIEPOINT = 33922
_TAG_GDAL_NODATA = 42113

_ASCII_HEADER_KEYS = {
    "ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter", "cellsize", "nodata_value", "height",
}


@dataclass(frozen=True, eq=False)
class MeanWindRaster:
    """Long-term mean wind speed on a regular lat/lon raster.

    ``origin_lat``/``origin_lon`` locate the north-west corner of pixel ``(0, 0)``;
    rows run southward, columns eastward.  ``valid`` is False on nodata pixels.
    """

    origin_lat: float
    origin_lon: float
    pixel_size: float
    height: float
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        valid = np.array(self.valid, dtype=bool) & np.isfinite(values)
        if values.ndim != 2 or valid.shape != values.shape:
            raise FormatError("raster values must be a 2-D array with a matching validity mask")
        if not self.pixel_size > 0:
            raise FormatError("pixel size must be positive")
        if float(self.height) not in RASTER_HEIGHTS:
            raise FormatError(f"raster height must be one of {RASTER_HEIGHTS}, got {self.height}")
        if np.any(values[valid] < 0):
            raise FormatError("mean wind speeds must be non-negative")
        values.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "height", float(self.height))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def pixel_of(self, location) -> tuple[int, int]:
        lat, lon = map(float, location)
        south = self.origin_lat - self.n_rows * self.pixel_size
        east = self.origin_lon + self.n_cols * self.pixel_size
        if not (south <= lat <= self.origin_lat and self.origin_lon <= lon <= east):
            raise OutOfDomainError(f"location ({lat}, {lon}) outside raster extent")
        row = min(int(math.floor((self.origin_lat - lat) / self.pixel_size)), self.n_rows - 1)
        col = min(int(math.floor((lon - self.origin_lon) / self.pixel_size)), self.n_cols - 1)
        return row, col

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_lat - (row + 0.5) * self.pixel_size,
            self.origin_lon + (col + 0.5) * self.pixel_size,
        )


@dataclass(frozen=True)
class CorrectionFactor:
    factor: float
    gwa_mean: float
    reanalysis_mean: float


def _search_offsets(radius: int) -> list[tuple[int, int]]:
    offs = [
        (dr, dc)
        for dr in range(-radius, radius + 1)
        for dc in range(-radius, radius + 1)
        if 0 < dr * dr + dc * dc <= radius * radius
    ]
    # nearest first; equidistant pixels in row-major order
    return sorted(offs, key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))


_OFFSETS = _search_offsets(NODATA_SEARCH_RADIUS)


def sample_raster(raster: MeanWindRaster, location) -> float:
    """Mean wind speed of the pixel containing ``location`` (``(lat, lon)``).

    A nodata pixel is replaced by the nearest valid pixel within
    ``NODATA_SEARCH_RADIUS`` pixels (Euclidean, in pixel units); ties go to the
    smaller row, then the smaller column.
    """
    row, col = raster.pixel_of(location)
    if raster.valid[row, col]:
        return float(raster.values[row, col])
    for dr, dc in _OFFSETS:
        r, c = row + dr, col + dc
        if 0 <= r < raster.n_rows and 0 <= c < raster.n_cols and raster.valid[r, c]:
            return float(raster.values[r, c])
    raise NodataError(f"no valid raster pixel within {NODATA_SEARCH_RADIUS} pixels of {tuple(location)}")


def correction_factor(gwa_mean: float, series, *, gwa_height=None, series_height=None) -> CorrectionFactor:
    """Ratio of the raster mean to the mean of a reanalysis speed series.

    When both heights are given they must agree; a 50 m raster cannot correct a
    100 m series.
    """
    if gwa_height is not None and series_height is not None and float(gwa_height) != float(series_height):
        raise HeightMismatchError(f"raster height {gwa_height} m does not match series height {series_height} m")
    arr = np.asarray(series, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        raise DegenerateSeriesError("cannot build a correction factor from an empty series")
    mean = float(arr.mean())
    if mean <= 0:
        raise DegenerateSeriesError(f"series mean is {mean}; correction factor undefined")
    if not gwa_mean > 0:
        raise DataError(f"raster mean wind speed must be positive, got {gwa_mean}")
    return CorrectionFactor(gwa_mean / mean, float(gwa_mean), mean)


def apply_correction(series, cf: CorrectionFactor) -> np.ndarray:
    if not cf.factor > 0:
        raise DataError(f"correction factor must be positive, got {cf.factor}")
    return np.asarray(series, dtype=float) * cf.factor


def load_raster(path, height: float | None = None) -> MeanWindRaster:
    """Read a GeoTIFF (``.tif``/``.tiff``) or ESRI ASCII grid (``.asc``) mean wind raster.

    ASCII grids may declare their height with a ``height`` header line; otherwise
    ``height`` must be passed.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix in (".tif", ".tiff"):
        if height is None:
            raise FormatError(f"{path.name}: GeoTIFF rasters need an explicit height")
        return _load_geotiff(path, height)
    if suffix == ".asc":
        return _load_ascii_grid(path, height)
    raise FormatError(f"unsupported raster format: {path.name}")


def _load_geotiff(path: Path, height: float) -> MeanWindRaster:
    import tifffile

    with tifffile.TiffFile(path) as tif:
        page = tif.pages[0]
        tags = page.tags
        if _TAG_PIXEL_SCALE not in tags or _TAG_TIEPOINT not in tags:
            raise FormatError(f"{path.name}: missing GeoTIFF georeferencing tags")
        sx, sy = tags[_TAG_PIXEL_SCALE].value[:2]
        tie = tags[_TAG_TIEPOINT].value
        nodata = None
        if _TAG_GDAL_NODATA in tags:
            nodata = float(str(tags[_TAG_GDAL_NODATA].value).strip("\x00 "))
        data = page.asarray().astype(float)
    if data.ndim != 2:
        raise FormatError(f"{path.name}: expected a single-band raster")
    if not math.isclose(sx, sy, rel_tol=1e-9):
        raise FormatError(f"{path.name}: non-square pixels ({sx}, {sy}) are not supported")
    i, j, _, x, y, _ = tie[:6]
    origin_lon = x - i * sx
    origin_lat = y + j * sy
    valid = np.isfinite(data) if nodata is None else (data != nodata) & np.isfinite(data)
    return MeanWindRaster(origin_lat, origin_lon, float(sx), height, data, valid)


def write_geotiff(raster: MeanWindRaster, path, nodata: float = -9999.0) -> None:
    import tifffile

    data = np.where(raster.valid, raster.values, nodata).astype(np.float32)
    px = raster.pixel_size
    tifffile.imwrite(
        path,
        data,
        extratags=[
            (_TAG_PIXEL_SCALE, "d", 3, (px, px, 0.0), True),
            (_TAG_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, raster.origin_lon, raster.origin_lat, 0.0), True),
            (_TAG_GDAL_NODATA, "s", 0, f"{nodata:g}", True),
        ],
    )


def _load_ascii_grid(path: Path, height: float | None) -> MeanWindRaster:
    header: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for k, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in _ASCII_HEADER_KEYS:
            header[parts[0].lower()] = parts[1]
            body_start = k + 1
        else:
            break
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        cell = float(header["cellsize"])
        xll = float(header.get("xllcorner", header.get("xllcenter", "nan")))
        yll = float(header.get("yllcorner", header.get("yllcenter", "nan")))
    except KeyError as exc:
        raise FormatError(f"{path.name}: missing header field {exc.args[0]!r}") from None
    if "xllcenter" in header:
        xll -= cell / 2
    if "yllcenter" in header:
        yll -= cell / 2
    nodata = float(header.get("nodata_value", "nan"))
    if "height" in header:
        declared = float(header["height"])
        if height is not None and float(height) != declared:
            raise HeightMismatchError(f"{path.name}: declared height {declared} m, requested {height} m")
        height = declared
    if height is None:
        raise FormatError(f"{path.name}: raster height not declared")
    rows = [line.split() for line in lines[body_start:] if line.strip()]
    try:
        data = np.array(rows, dtype=float)
    except ValueError:
        raise FormatError(f"{path.name}: ragged or non-numeric raster body") from None
    if data.shape != (nrows, ncols):
        raise FormatError(f"{path.name}: body shape {data.shape} != ({nrows}, {ncols})")
    valid = np.isfinite(data) if math.isnan(nodata) else data != nodata
    return MeanWindRaster(yll + nrows * cell, xll, cell, height, data, valid)


def write_ascii_grid(raster: MeanWindRaster, path, nodata: float = -9999.0) -> None:
    lines = [
        f"ncols {raster.n_cols}",
        f"nrows {raster.n_rows}",
        f"xllcorner {raster.origin_lon!r}",
        f"yllcorner {raster.origin_lat - raster.n_rows * raster.pixel_size!r}",
        f"cellsize {raster.pixel_size!r}",
        f"NODATA_value {nodata:g}",
        f"height {raster.height:g}",
    ]
    data = np.where(raster.valid, raster.values, nodata)
    lines += [" ".join(f"{x:.6g}" for x in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
