import itertools

import h5py
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windval.errors import EmptySelectionError, FormatError, OutOfDomainError
from windval.reanalysis import (
    Grid,
    GridIndex,
    WindField,
    extract_series,
    insert_series,
    load_wind_field,
    nearest_cell,
    subset,
    write_wind_field_csv,
    write_wind_field_netcdf,
)
from windval.synthetic import hourly_axis, synthetic_wind_field
from windval.wind_math import HeightPair

GRID4 = Grid(-10.0, 0.5, -40.0, 0.625, 4, 4)


def brute_nearest(grid, lat, lon):
    best = None
    for i, j in itertools.product(range(grid.n_lat), range(grid.n_lon)):
        d = (lat - grid.lats[i]) ** 2 + (lon - grid.lons[j]) ** 2
        if best is None or d < best[0]:
            best = (d, i, j)
    return best


def field_24h(grid=GRID4, seed=0):
    return synthetic_wind_field(grid, "2020-03-01T00:00", 24, seed=seed)


def test_grid_invariants():
    with pytest.raises(FormatError):
        Grid(0, 0, 0, 1, 2, 2)
    with pytest.raises(FormatError):
        Grid(0, 1, 0, 1, 0, 2)


def test_windfield_rejects_bad_time_axis_and_nan():
    g = Grid(0, 1, 0, 1, 1, 1)
    ts = hourly_axis("2020-01-01", 3)
    u = np.ones((3, 2, 1, 1))
    with pytest.raises(FormatError):
        WindField(g, ts[[0, 1, 1]], HeightPair(10, 100), u, u)
    bad = u.copy()
    bad[1, 0, 0, 0] = np.nan
    with pytest.raises(FormatError):
        WindField(g, ts, HeightPair(10, 100), bad, u)


def test_windfield_is_read_only():
    f = field_24h()
    with pytest.raises(ValueError):
        f.u[0, 0, 0, 0] = 1.0


def test_nearest_cell_examples():
    g = Grid(0.0, 1.0, 0.0, 1.0, 3, 3)
    assert nearest_cell(g, (1.0, 2.0)) == GridIndex(1, 2)
    assert nearest_cell(g, (0.5, 1.5)) == GridIndex(0, 1)
    assert nearest_cell(g, (0.4, 1.6)) == GridIndex(0, 2)
    d, i, j = brute_nearest(g, 0.4, 1.6)
    assert (i, j) == (0, 2)


def test_nearest_cell_out_of_domain():
    g = Grid(0.0, 1.0, 0.0, 1.0, 3, 3)
    assert nearest_cell(g, (-0.99, 3.0)) == GridIndex(0, 2)
    for loc in [(-1.01, 0.0), (0.0, 3.01), (float("nan"), 0.0)]:
        with pytest.raises(OutOfDomainError):
            nearest_cell(g, loc)


@settings(max_examples=1500)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 7), st.integers(1, 7), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
def test_nearest_cell_matches_brute_force(fy, fx, n_lat, n_lon, dlat, dlon):
    g = Grid(-5.0, dlat, 20.0, dlon, n_lat, n_lon)
    lat = g.lat_start + fy * (g.lat_end - g.lat_start)
    lon = g.lon_start + fx * (g.lon_end - g.lon_start)
    got = nearest_cell(g, (lat, lon))
    dist = {
        (i, j): (lat - g.lats[i]) ** 2 + (lon - g.lons[j]) ** 2
        for i, j in itertools.product(range(n_lat), range(n_lon))
    }
    best = min(dist.values())
    tol = 1e-9
    tied = sorted(c for c, d in dist.items() if d <= best + tol)
    if len(tied) == 1:
        assert tuple(got) == tied[0]
    else:
        # equidistant up to rounding; either answer is a nearest cell
        assert tuple(got) in tied


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("steps", [(0.25, 0.5), (0.1, 0.3), (0.5, 0.625)])
def test_nearest_cell_midpoints_go_low(n, steps):
    g = Grid(-10.0, steps[0], -40.0, steps[1], n, n)
    for k in range(n - 1):
        mid_lat = (g.lats[k] + g.lats[k + 1]) / 2
        mid_lon = (g.lons[k] + g.lons[k + 1]) / 2
        assert nearest_cell(g, (mid_lat, mid_lon)) == GridIndex(k, k)


def test_extract_constant_and_ramp():
    g = Grid(0, 1, 0, 1, 2, 2)
    ts = hourly_axis("2020-01-01", 5)
    u = np.full((5, 2, 2, 2), 3.0)
    v = np.full((5, 2, 2, 2), 4.0)
    u[:, 1, 1, 0] = np.arange(5)
    f = WindField(g, ts, HeightPair(10, 100), u, v)
    uu, vv = extract_series(f, GridIndex(0, 1), "lo")
    np.testing.assert_array_equal(uu, 3.0)
    np.testing.assert_array_equal(vv, 4.0)
    ramp, _ = extract_series(f, GridIndex(1, 0), "hi")
    np.testing.assert_array_equal(ramp, np.arange(5.0))
    with pytest.raises(IndexError):
        extract_series(f, GridIndex(2, 0), "lo")


def test_extract_insert_round_trip():
    f = field_24h()
    cell = GridIndex(1, 2)
    u, v = extract_series(f, cell, "hi")
    assert f.equals(insert_series(f, cell, "hi", u, v))


def test_subset_interior_and_full_extent():
    f = field_24h()
    g = f.grid
    inner = subset(f, (g.lats[1], g.lats[2], g.lons[1], g.lons[2]))
    assert (inner.grid.n_lat, inner.grid.n_lon) == (2, 2)
    np.testing.assert_array_equal(inner.u, f.u[:, :, 1:3, 1:3])
    full = subset(f, (g.lat_start, g.lat_end, g.lon_start, g.lon_end))
    assert full.equals(f)


def test_subset_time_range_counts_12_steps():
    f = field_24h()
    out = subset(f, time_range=("2020-03-01T06:00", "2020-03-01T17:00"))
    assert out.n_time == 12
    assert out.timestamps[0] == np.datetime64("2020-03-01T06:00")


def test_subset_accepts_aware_bounds():
    f = field_24h()
    out = subset(f, time_range=("2020-03-01T03:00-03:00", "2020-03-01T08:00Z"))
    assert out.n_time == 3


def test_subset_idempotent_and_empty():
    f = field_24h()
    box = (-9.6, -9.0, -39.5, -38.7)
    once = subset(f, box)
    assert subset(once, box).equals(once)
    with pytest.raises(EmptySelectionError):
        subset(f, (50, 60, 0, 1))
    with pytest.raises(EmptySelectionError):
        subset(f, time_range=("2021-01-01", "2021-01-02"))


def test_csv_round_trip(tmp_path):
    f = field_24h()
    path = tmp_path / "wind.csv"
    write_wind_field_csv(f, path)
    back = load_wind_field(path)
    assert back.grid == f.grid and back.levels == f.levels
    np.testing.assert_allclose(back.u, f.u, atol=5e-7)
    np.testing.assert_array_equal(back.timestamps, f.timestamps)


def test_csv_missing_variable_named(tmp_path):
    path = tmp_path / "wind.csv"
    path.write_text("# levels_m: 10,100\ntime,lat,lon,u_lo,v_lo,u_hi\n2020-01-01T00:00Z,0,0,1,1,1\n")
    with pytest.raises(FormatError, match="v_hi"):
        load_wind_field(path)


def test_csv_requires_levels(tmp_path):
    path = tmp_path / "wind.csv"
    path.write_text("time,lat,lon,u_lo,v_lo,u_hi,v_hi\n2020-01-01T00:00Z,0,0,1,1,1,1\n")
    with pytest.raises(FormatError):
        load_wind_field(path)
    assert load_wind_field(path, levels=(10, 50)).levels == HeightPair(10, 50)


def test_csv_non_uniform_time_axis(tmp_path):
    rows = ["# levels_m: 10,100", "time,lat,lon,u_lo,v_lo,u_hi,v_hi"]
    for t in ("00", "01", "03"):
        rows.append(f"2020-01-01T{t}:00Z,0,0,1,1,2,2")
    path = tmp_path / "wind.csv"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(FormatError):
        load_wind_field(path)


def test_netcdf3_round_trip(tmp_path):
    f = field_24h()
    path = tmp_path / "wind.nc"
    write_wind_field_netcdf(f, path)
    assert load_wind_field(path).equals(f)


def _write_hdf5_netcdf(path, f, *, descending_lat=True, units="km/h", scale=0.01):
    """NetCDF4-style file: ERA5-like names, descending latitude, packed int16 components."""
    lats = f.grid.lats[::-1] if descending_lat else f.grid.lats
    with h5py.File(path, "w") as h:
        dims = {
            "valid_time": np.arange(f.n_time, dtype=float),
            "height": np.array([f.levels.h_hi, f.levels.h_lo]),
            "latitude": lats,
            "longitude": f.grid.lons,
        }
        for name, data in dims.items():
            h[name] = data
            h[name].make_scale(name)
        h["valid_time"].attrs["units"] = b"hours since 2020-03-01 00:00:00"
        for var, arr in (("u", f.u), ("v", f.v)):
            data = arr[:, ::-1]
            if descending_lat:
                data = data[:, :, ::-1]
            data = data * 3.6 if units == "km/h" else data
            packed = np.round(data / scale).astype(np.int16)
            # order: time, lat, lon, level
            h[var] = np.transpose(packed, (0, 2, 3, 1))
            h[var].attrs["scale_factor"] = scale
            h[var].attrs["add_offset"] = 0.0
            h[var].attrs["units"] = units.encode()
            for k, name in enumerate(("valid_time", "latitude", "longitude", "height")):
                h[var].dims[k].attach_scale(h[name])


def test_netcdf4_hdf5_aliases_packing_and_units(tmp_path):
    f = field_24h()
    path = tmp_path / "era5.nc"
    _write_hdf5_netcdf(path, f)
    got = load_wind_field(path)
    assert got.grid.n_lat == 4 and np.allclose(got.grid.lats, f.grid.lats)
    assert got.levels == f.levels
    np.testing.assert_array_equal(got.timestamps, f.timestamps)
    # packing step 0.01 km/h
    np.testing.assert_allclose(got.u, f.u, atol=0.01 / 3.6)


def test_netcdf_missing_variable(tmp_path):
    path = tmp_path / "bad.nc"
    with h5py.File(path, "w") as h:
        h["u"] = np.zeros((1, 2, 1, 1))
    with pytest.raises(FormatError, match="'v'"):
        load_wind_field(path)


def test_unknown_format(tmp_path):
    p = tmp_path / "wind.grib"
    p.write_text("x")
    with pytest.raises(FormatError):
        load_wind_field(p)
