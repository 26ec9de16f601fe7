"""Declarative run configuration: one YAML file drives every subcommand.

Unknown keys are rejected so a typo cannot silently change an experiment.
Command-line flags only select the config path and override the seed and
the output directory. Relative paths resolve against the config file's
directory.
"""

import os
from dataclasses import dataclass, field

import yaml

from .baselines import AnnConfig, ForestParams
from .errors import ConfigError
from .ionosim import EpsteinParams, IonosphereModel
from .training import TrainConfig

MODEL_KINDS = ("deeponet", "ann", "forest")
PARTITIONS = ("train", "validation", "test", "all")

# default file names under out_dir
DEFAULT_FILES = {
    "rays": "rays.csv",
    "catalog": "stations.csv",
    "dataset_rays": "dataset_rays.csv",
    "dataset_catalog": "dataset_stations.csv",
    "checkpoint": "checkpoint.json",
    "train_log": "train_log.csv",
    "predictions": "predictions.csv",
    "report_csv": "report.csv",
    "report_txt": "report.txt",
}


def _check_keys(name, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section '{name}'")


def _require(name, mapping, key):
    if key not in mapping:
        raise ConfigError(f"section '{name}' is missing required key '{key}'")
    return mapping[key]


@dataclass(frozen=True)
class GridSpec:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    n_lat: int
    n_lon: int
    alt_km: float = 0.0

    def __post_init__(self):
        if self.lat_max <= self.lat_min or self.lon_max <= self.lon_min:
            raise ConfigError("station grid bounds are inverted")
        if self.n_lat < 1 or self.n_lon < 1:
            raise ConfigError("station grid counts must be >= 1")


@dataclass(frozen=True)
class StationsConfig:
    grid: GridSpec | None = None
    catalog: str | None = None
    n_test: int = 0
    n_validation: int = 0


@dataclass(frozen=True)
class TimeConfig:
    year: int
    doy_start: int
    n_days: int
    cadence_s: int

    def __post_init__(self):
        if not 1 <= self.doy_start <= 366:
            raise ConfigError("doy_start out of range")
        if self.n_days < 1:
            raise ConfigError("n_days must be >= 1")
        if self.cadence_s < 1 or 86400 % self.cadence_s != 0:
            raise ConfigError("cadence_s must divide 86400")


@dataclass(frozen=True)
class IonosphereConfig:
    model: IonosphereModel
    n_quad: int = 256


@dataclass(frozen=True)
class DownsampleConfig:
    cell_deg: float
    bounds: tuple  # (lat_min, lat_max, lon_min, lon_max)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/out"
    base_dir: str = "."
    stations: StationsConfig | None = None
    n_satellites: int | None = None
    time: TimeConfig | None = None
    cutoff_deg: float = 15.0
    ionosphere: IonosphereConfig | None = None
    train_days: tuple | None = None
    test_days: tuple | None = None
    downsample: DownsampleConfig | None = None
    model_kind: str = "deeponet"
    train: TrainConfig | None = None
    ann: AnnConfig | None = None
    forest: ForestParams | None = None
    predict_partition: str = "test"
    paths: dict = field(default_factory=dict)

    def resolve(self, key: str) -> str:
        """Absolute path for a pipeline file (explicit or out_dir default)."""
        if key in self.paths:
            p = self.paths[key]
        elif key in DEFAULT_FILES:
            p = os.path.join(self.out_dir, DEFAULT_FILES[key])
        else:
            raise ConfigError(f"no path known for '{key}'")
        if not os.path.isabs(p):
            p = os.path.join(self.base_dir, p)
        return os.path.normpath(p)

    def require(self, attr: str, what: str):
        value = getattr(self, attr)
        if value is None:
            raise ConfigError(f"config section '{what}' is required here")
        return value


def _parse_day_pair(name, raw):
    try:
        (y0, d0), (y1, d1) = raw
        pair = ((int(y0), int(d0)), (int(y1), int(d1)))
    except (TypeError, ValueError):
        raise ConfigError(
            f"'{name}' must be [[year, doy], [year, doy]], got {raw!r}")
    if pair[1] < pair[0]:
        raise ConfigError(f"'{name}' range is inverted")
    return pair


def _parse_stations(raw) -> StationsConfig:
    _check_keys("stations", raw, ("grid", "catalog", "n_test",
                                  "n_validation"))
    grid = None
    if "grid" in raw:
        _check_keys("stations.grid", raw["grid"],
                    ("lat_min", "lat_max", "lon_min", "lon_max", "n_lat",
                     "n_lon", "alt_km"))
        grid = GridSpec(**raw["grid"])
    return StationsConfig(grid=grid, catalog=raw.get("catalog"),
                          n_test=int(raw.get("n_test", 0)),
                          n_validation=int(raw.get("n_validation", 0)))


def _parse_ionosphere(raw) -> IonosphereConfig:
    allowed = ("n_max", "h_max_km", "b_thick_km", "diurnal_amp",
               "equator_amp", "local_noon_sod", "drift_per_day", "top_km",
               "n_quad")
    _check_keys("ionosphere", raw, allowed)
    try:
        base = EpsteinParams(float(_require("ionosphere", raw, "n_max")),
                             float(_require("ionosphere", raw, "h_max_km")),
                             float(_require("ionosphere", raw, "b_thick_km")))
        model = IonosphereModel(
            base,
            diurnal_amp=float(raw.get("diurnal_amp", 0.0)),
            equator_amp=float(raw.get("equator_amp", 0.0)),
            local_noon_sod=float(raw.get("local_noon_sod", 43200.0)),
            drift_per_day=float(raw.get("drift_per_day", 0.0)),
            top_km=float(raw.get("top_km", 2000.0)))
    except ValueError as exc:
        raise ConfigError(f"ionosphere: {exc}") from exc
    return IonosphereConfig(model, int(raw.get("n_quad", 256)))


def _parse_model_section(name, raw, cls, seed):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    kwargs = dict(raw)
    kwargs.setdefault("seed", seed)
    for key in ("branch_hidden", "trunk_hidden"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section '{name}': {exc}") from exc


def load_config(path, seed_override=None, out_override=None) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    top_allowed = ("seed", "out_dir", "stations", "satellites", "time",
                   "geometry", "ionosphere", "split", "downsample", "model",
                   "train", "ann", "forest", "predict", "paths")
    _check_keys("<top>", raw, top_allowed)

    base_dir = os.path.dirname(os.path.abspath(path))
    seed = int(raw.get("seed", 0))
    if seed_override is not None:
        seed = int(seed_override)
    out_dir = raw.get("out_dir", "runs/out")
    if out_override is not None:
        out_dir = out_override
        base_for_out = os.getcwd()
    else:
        base_for_out = base_dir
    if not os.path.isabs(out_dir):
        out_dir = os.path.normpath(os.path.join(base_for_out, out_dir))

    stations = _parse_stations(raw["stations"]) if "stations" in raw else None

    n_satellites = None
    if "satellites" in raw:
        _check_keys("satellites", raw["satellites"], ("count",))
        n_satellites = int(_require("satellites", raw["satellites"], "count"))
        if n_satellites < 1:
            raise ConfigError("satellites.count must be >= 1")

    time_cfg = None
    if "time" in raw:
        _check_keys("time", raw["time"],
                    ("year", "doy_start", "n_days", "cadence_s"))
        time_cfg = TimeConfig(
            int(_require("time", raw["time"], "year")),
            int(_require("time", raw["time"], "doy_start")),
            int(_require("time", raw["time"], "n_days")),
            int(_require("time", raw["time"], "cadence_s")))

    cutoff_deg = 15.0
    if "geometry" in raw:
        _check_keys("geometry", raw["geometry"], ("cutoff_deg",))
        cutoff_deg = float(raw["geometry"].get("cutoff_deg", 15.0))

    ionosphere = (_parse_ionosphere(raw["ionosphere"])
                  if "ionosphere" in raw else None)

    train_days = test_days = None
    if "split" in raw:
        _check_keys("split", raw["split"], ("train_days", "test_days"))
        train_days = _parse_day_pair(
            "train_days", _require("split", raw["split"], "train_days"))
        test_days = _parse_day_pair(
            "test_days", _require("split", raw["split"], "test_days"))

    downsample = None
    if "downsample" in raw:
        _check_keys("downsample", raw["downsample"], ("cell_deg", "bounds"))
        bounds = tuple(float(v) for v in
                       _require("downsample", raw["downsample"], "bounds"))
        if len(bounds) != 4:
            raise ConfigError("downsample.bounds must have 4 entries")
        downsample = DownsampleConfig(
            float(_require("downsample", raw["downsample"], "cell_deg")),
            bounds)

    model_kind = "deeponet"
    if "model" in raw:
        _check_keys("model", raw["model"], ("kind",))
        model_kind = raw["model"].get("kind", "deeponet")
        if model_kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")

    train = _parse_model_section("train", raw.get("train", {}), TrainConfig,
                                 seed)
    ann = _parse_model_section("ann", raw.get("ann", {}), AnnConfig, seed)
    forest = _parse_model_section("forest", raw.get("forest", {}),
                                  ForestParams, seed)

    predict_partition = "test"
    if "predict" in raw:
        _check_keys("predict", raw["predict"], ("partition",))
        predict_partition = raw["predict"].get("partition", "test")
        if predict_partition not in PARTITIONS:
            raise ConfigError(
                f"predict.partition must be one of {PARTITIONS}")

    paths = {}
    if "paths" in raw:
        _check_keys("paths", raw["paths"],
                    tuple(DEFAULT_FILES) + ("predict_input",))
        paths = {k: str(v) for k, v in raw["paths"].items()}

    return RunConfig(seed=seed, out_dir=out_dir, base_dir=base_dir,
                     stations=stations, n_satellites=n_satellites,
                     time=time_cfg, cutoff_deg=cutoff_deg,
                     ionosphere=ionosphere, train_days=train_days,
                     test_days=test_days, downsample=downsample,
                     model_kind=model_kind, train=train, ann=ann,
                     forest=forest, predict_partition=predict_partition,
                     paths=paths)
