"""Run configuration: YAML (or JSON) file -> validated, hashable ``RunConfig``.

Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

DATASET_TAGS = ("era5", "merra2", "fixture")
CORRECTION_TAGS = ("none", "gwa2", "gwa3")


@dataclass(frozen=True)
class Thresholds:
    zero_run_hours: float = 180.0
    constant_run_hours: float = 24.0
    min_years: float = 2.0
    sp_floor: float = 100.0
    notch_constant: float = 1.57


@dataclass(frozen=True)
class RunConfig:
    datasets: dict
    fleet: str
    output_dir: str
    observed_dir: str | None = None
    exclusions: str | None = None
    # correction tag -> {height_m: raster path}; "none" maps to None
    corrections: dict = field(default_factory=lambda: {"none": None})
    time_range: tuple | None = None
    bbox: tuple | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    seed: int = 0
    base_dir: str = "."

    def path(self, rel: str | None) -> Path | None:
        if rel is None:
            return None
        p = Path(rel)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self) -> Path:
        return self.path(self.output_dir)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def raster_path(self, correction: str, height: float) -> Path | None:
        layers = self.corrections.get(correction)
        if layers is None:
            return None
        key = _height_key(height)
        if key not in layers:
            raise ConfigError(f"correction {correction!r} has no {height:g} m layer")
        return self.path(layers[key])


def _height_key(h) -> str:
    return f"{float(h):g}"


def _positive(name, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"threshold {name} must be a number") from None
    if not v > 0:
        raise ConfigError(f"threshold {name} must be positive")
    return v


def from_dict(raw: dict, base_dir=".", check_paths: bool = True) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {
        "datasets", "fleet", "output_dir", "observed_dir", "exclusions", "corrections",
        "time_range", "bbox", "thresholds", "seed",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("datasets", "fleet", "output_dir"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    datasets = raw["datasets"]
    if not isinstance(datasets, dict) or not datasets:
        raise ConfigError("datasets must map a dataset tag to a wind field path")
    for tag, p in datasets.items():
        if tag not in DATASET_TAGS:
            raise ConfigError(f"unknown dataset tag {tag!r}; expected one of {DATASET_TAGS}")
        if not p:
            raise ConfigError(f"dataset {tag!r} has no wind field path")

    corrections_raw = raw.get("corrections", {"none": None}) or {"none": None}
    corrections = {}
    for tag, layers in corrections_raw.items():
        if tag not in CORRECTION_TAGS:
            raise ConfigError(f"unknown correction tag {tag!r}; expected one of {CORRECTION_TAGS}")
        if tag == "none":
            if layers:
                raise ConfigError("correction 'none' takes no raster")
            corrections[tag] = None
            continue
        if not layers:
            raise ConfigError(f"correction {tag!r} needs a raster path")
        if isinstance(layers, str):
            raise ConfigError(f"correction {tag!r} must map raster height (50/100) to a path")
        corrections[tag] = {_height_key(h): str(p) for h, p in layers.items()}
        for h, p in corrections[tag].items():
            if h not in ("50", "100"):
                raise ConfigError(f"correction {tag!r}: raster height must be 50 or 100, got {h}")
            if not p:
                raise ConfigError(f"correction {tag!r}: empty raster path for {h} m")

    th_raw = raw.get("thresholds") or {}
    unknown_th = set(th_raw) - set(Thresholds.__dataclass_fields__)
    if unknown_th:
        raise ConfigError(f"unknown thresholds: {sorted(unknown_th)}")
    thresholds = Thresholds(**{k: _positive(k, v) for k, v in th_raw.items()})

    time_range = raw.get("time_range")
    if time_range is not None:
        if len(time_range) != 2:
            raise ConfigError("time_range must be [start, end]")
        time_range = tuple(str(t) for t in time_range)
    bbox = raw.get("bbox")
    if bbox is not None:
        if len(bbox) != 4:
            raise ConfigError("bbox must be [lat_min, lat_max, lon_min, lon_max]")
        bbox = tuple(float(b) for b in bbox)

    try:
        seed = int(raw.get("seed", 0))
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None

    cfg = RunConfig(
        datasets={k: str(v) for k, v in datasets.items()},
        fleet=str(raw["fleet"]),
        output_dir=str(raw["output_dir"]),
        observed_dir=None if raw.get("observed_dir") is None else str(raw["observed_dir"]),
        exclusions=None if raw.get("exclusions") is None else str(raw["exclusions"]),
        corrections=corrections,
        time_range=time_range,
        bbox=bbox,
        thresholds=thresholds,
        seed=seed,
        base_dir=str(base_dir),
    )
    if check_paths:
        validate_paths(cfg)
    return cfg


def validate_paths(cfg: RunConfig) -> None:
    required = [("fleet", cfg.fleet)] + [(f"datasets.{k}", v) for k, v in cfg.datasets.items()]
    for tag, layers in cfg.corrections.items():
        for h, p in (layers or {}).items():
            required.append((f"corrections.{tag}.{h}", p))
    if cfg.exclusions:
        required.append(("exclusions", cfg.exclusions))
    if cfg.observed_dir:
        required.append(("observed_dir", cfg.observed_dir))
    for name, rel in required:
        if not cfg.path(rel).exists():
            raise ConfigError(f"{name}: path does not exist: {cfg.path(rel)}")


def load_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path.name}: {exc}") from None
    return from_dict(raw, base_dir=path.parent, check_paths=check_paths)
