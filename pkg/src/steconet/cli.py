"""Command-line pipeline: simulate, build-dataset, train, predict,
evaluate, plotdata.

    stec <subcommand> --config <path> [--seed N] [--out DIR]

Exit codes: 0 success, 1 usage, 2 validation, 3 runtime failure. All
outputs are written atomically, and every command is deterministic given
the same config and seed.
"""

import argparse
import csv
import math
import os
import sys
import time as _time

import numpy as np

from . import dataset as ds
from . import ionosim, metrics
from .baselines import ann_train, forest_train
from .config import RunConfig, load_config
from .errors import ConfigError, DataError
from .geometry import EcefPos, GeodeticPos, geodetic_to_ecef, synth_orbit
from .ioutil import atomic_write
from .training import load_checkpoint, predict_any, save_checkpoint, train

PREDICTION_HEADER = ["station_id", "sat_id", "year", "doy", "sod",
                     "pred_tecu", "extrapolated"]
PLOT_KINDS = ("timeseries", "scatter", "residual-hist")
RESIDUAL_BIN_TECU = 0.25


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _check_doy_span(time_cfg):
    if time_cfg.doy_start + time_cfg.n_days - 1 > 366:
        raise ConfigError("time window crosses the year boundary")


def _grid_stations(grid):
    lats = np.linspace(grid.lat_min, grid.lat_max, grid.n_lat)
    lons = np.linspace(grid.lon_min, grid.lon_max, grid.n_lon)
    stations = []
    idx = 0
    for lat in lats:
        for lon in lons:
            stations.append((f"ST{idx:03d}",
                             GeodeticPos(float(lat), float(lon),
                                         grid.alt_km)))
            idx += 1
    return stations


def _assign_roles(station_ids, n_test, n_validation, rng):
    ids = sorted(station_ids)
    if n_test + n_validation >= len(ids):
        raise ConfigError("n_test + n_validation must leave train stations")
    held = rng.choice(len(ids), size=n_test + n_validation, replace=False)
    test = {ids[i] for i in held[:n_test]}
    val = {ids[i] for i in held[n_test:]}
    roles = {}
    for sid in ids:
        roles[sid] = ("test" if sid in test
                      else "validation" if sid in val else "train")
    return roles


def _load_stations(cfg: RunConfig):
    stations_cfg = cfg.require("stations", "stations")
    if stations_cfg.grid is not None:
        stations = _grid_stations(stations_cfg.grid)
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
        roles = _assign_roles([s[0] for s in stations],
                              stations_cfg.n_test,
                              stations_cfg.n_validation, rng)
        return [(sid, pos, roles[sid]) for sid, pos in stations]
    if stations_cfg.catalog is not None:
        path = stations_cfg.catalog
        if not os.path.isabs(path):
            path = os.path.join(cfg.base_dir, path)
        return ds.load_catalog(path)
    raise ConfigError("stations section needs either 'grid' or 'catalog'")


def cmd_simulate(cfg: RunConfig) -> int:
    time_cfg = cfg.require("time", "time")
    _check_doy_span(time_cfg)
    iono = cfg.require("ionosphere", "ionosphere")
    n_sats = cfg.require("n_satellites", "satellites")
    catalog = _load_stations(cfg)

    rx_ecef = np.array([geodetic_to_ecef(pos).as_array()
                        for _, pos, _ in catalog])
    up = rx_ecef / np.linalg.norm(rx_ecef, axis=1, keepdims=True)
    sat_ids = [f"G{k + 1:02d}" for k in range(n_sats)]

    st_idx_parts, sat_idx_parts, satpos_parts = [], [], []
    doy_parts, sod_parts = [], []
    epochs_per_day = 86400 // time_cfg.cadence_s
    for day_off in range(time_cfg.n_days):
        doy = time_cfg.doy_start + day_off
        for e in range(epochs_per_day):
            sod = e * time_cfg.cadence_s
            t = (doy - 1) * 86400.0 + sod
            satpos = np.array([synth_orbit(k, t).as_array()
                               for k in range(n_sats)])
            d = satpos[None, :, :] - rx_ecef[:, None, :]
            dist = np.linalg.norm(d, axis=2)
            sin_el = np.einsum("skc,sc->sk", d, up) / dist
            el = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
            si, ki = np.nonzero(el >= cfg.cutoff_deg)
            if si.size == 0:
                continue
            st_idx_parts.append(si)
            sat_idx_parts.append(ki)
            satpos_parts.append(satpos[ki])
            doy_parts.append(np.full(si.size, doy, dtype=np.int64))
            sod_parts.append(np.full(si.size, sod, dtype=np.int64))

    if not st_idx_parts:
        raise DataError("no visible rays; check cutoff and satellite count")
    st_idx = np.concatenate(st_idx_parts)
    sat_idx = np.concatenate(sat_idx_parts)
    satpos_all = np.concatenate(satpos_parts)
    doy_all = np.concatenate(doy_parts)
    sod_all = np.concatenate(sod_parts)
    t_all = (doy_all - 1) * 86400.0 + sod_all

    stec = ionosim.stec_batch(rx_ecef[st_idx], satpos_all, t_all,
                              iono.model, iono.n_quad)

    records = []
    for i in range(st_idx.size):
        sid, pos, _ = catalog[st_idx[i]]
        records.append(ds.RayRecord(
            station_id=sid, sat_id=sat_ids[sat_idx[i]], rx=pos,
            sat=EcefPos(float(satpos_all[i, 0]), float(satpos_all[i, 1]),
                        float(satpos_all[i, 2])),
            year=time_cfg.year, doy=int(doy_all[i]), sod=int(sod_all[i]),
            stec_tecu=float(stec[i])))

    ds.save_csv(records, cfg.resolve("rays"))
    ds.save_catalog(catalog, cfg.resolve("catalog"))
    print(f"simulate: {len(records)} rays, {len(catalog)} stations "
          f"-> {cfg.resolve('rays')}")
    return 0


def cmd_build_dataset(cfg: RunConfig) -> int:
    rays_path = cfg.resolve("rays")
    catalog_path = cfg.resolve("catalog")
    _require_exists(rays_path, catalog_path)
    catalog = ds.load_catalog(catalog_path)
    records = ds.load_csv(rays_path)

    if cfg.downsample is not None:
        kept = ds.grid_downsample(
            [(sid, pos) for sid, pos, _ in catalog],
            cfg.downsample.cell_deg, cfg.downsample.bounds)
        kept_ids = {sid for sid, _ in kept}
        catalog = [row for row in catalog if row[0] in kept_ids]

    stations_cfg = cfg.stations
    if stations_cfg is not None and (stations_cfg.n_test
                                     or stations_cfg.n_validation):
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
        roles = _assign_roles([row[0] for row in catalog],
                              stations_cfg.n_test,
                              stations_cfg.n_validation, rng)
        catalog = [(sid, pos, roles[sid]) for sid, pos, _ in catalog]

    ids = {row[0] for row in catalog}
    records = [r for r in records if r.station_id in ids]
    ds.save_csv(records, cfg.resolve("dataset_rays"))
    ds.save_catalog(catalog, cfg.resolve("dataset_catalog"))
    print(f"build-dataset: kept {len(catalog)} stations, "
          f"{len(records)} rays")
    return 0


def _split_of(cfg: RunConfig, catalog):
    if cfg.train_days is None or cfg.test_days is None:
        raise ConfigError("config section 'split' is required here")
    return ds.split_from_catalog(catalog, cfg.train_days, cfg.test_days)


def _require_exists(*paths):
    for p in paths:
        if not os.path.exists(p):
            raise ConfigError(f"required input does not exist: {p}")


def cmd_train(cfg: RunConfig) -> int:
    rays_path = cfg.resolve("rays")
    catalog_path = cfg.resolve("catalog")
    _require_exists(rays_path, catalog_path)
    records = ds.load_csv(rays_path)
    catalog = ds.load_catalog(catalog_path)
    split = _split_of(cfg, catalog)

    epoch_log = []

    def hook(epoch, train_loss, val_loss, seconds):
        epoch_log.append((epoch, train_loss, val_loss, seconds))

    kind = cfg.model_kind
    if kind == "deeponet":
        model = train(records, split, cfg.train, epoch_hook=hook)
        history = model.history
    elif kind == "ann":
        model = ann_train(records, split, cfg.ann, epoch_hook=hook)
        history = model.history
    else:
        model = forest_train(records, split, cfg.forest)
        history = {}

    ckpt_path = cfg.resolve("checkpoint")
    save_checkpoint(model, ckpt_path)
    if epoch_log:
        with atomic_write(cfg.resolve("train_log"), newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for row in epoch_log:
                writer.writerow([row[0], f"{row[1]:.9g}", f"{row[2]:.9g}",
                                 f"{row[3]:.3f}"])
    best = history.get("best_epoch")
    print(f"train[{kind}]: checkpoint -> {ckpt_path}"
          + (f" (best epoch {best})" if best is not None else ""))
    return 0


def _partition_for_predict(cfg: RunConfig, records, catalog):
    part = cfg.predict_partition
    if part == "all":
        return records
    split = _split_of(cfg, catalog)
    train_recs, val_recs, test_recs = ds.partition_records(records, split)
    return {"train": train_recs, "validation": val_recs,
            "test": test_recs}[part]


def cmd_predict(cfg: RunConfig) -> int:
    ckpt_path = cfg.resolve("checkpoint")
    rays_path = (cfg.resolve("predict_input") if "predict_input" in cfg.paths
                 else cfg.resolve("rays"))
    catalog_path = cfg.resolve("catalog")
    _require_exists(ckpt_path, rays_path, catalog_path)
    model = load_checkpoint(ckpt_path)
    records = ds.load_csv(rays_path)
    catalog = ds.load_catalog(catalog_path)
    records = _partition_for_predict(cfg, records, catalog)
    if not records:
        raise DataError("prediction partition is empty")
    pred, flags = predict_any(model, records, return_flags=True)
    out_path = cfg.resolve("predictions")
    with atomic_write(out_path, newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_HEADER)
        for r, p, f in zip(records, pred, flags):
            writer.writerow([r.station_id, r.sat_id, r.year, r.doy, r.sod,
                             f"{p:.9g}", int(f)])
    print(f"predict: {len(records)} rays -> {out_path}")
    return 0


def _load_predictions(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTION_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for row in reader:
            rows.append(((row[0], row[1], int(row[2]), int(row[3]),
                          int(row[4])), float(row[5])))
    if not rows:
        raise DataError(f"{path}: no prediction rows")
    return rows


def _align(pred_rows, truth_records):
    truth = {(r.station_id, r.sat_id, r.year, r.doy, r.sod): r.stec_tecu
             for r in truth_records}
    keys, pred, obs = [], [], []
    for key, value in pred_rows:
        if key not in truth:
            raise DataError(
                f"prediction key {key} has no matching truth row")
        keys.append(key)
        pred.append(value)
        obs.append(truth[key])
    return keys, np.array(pred), np.array(obs)


def cmd_evaluate(cfg: RunConfig) -> int:
    pred_path = cfg.resolve("predictions")
    truth_path = cfg.resolve("rays")
    _require_exists(pred_path, truth_path)
    keys, pred, obs = _align(_load_predictions(pred_path),
                             ds.load_csv(truth_path))
    station_ids = [k[0] for k in keys]
    report = metrics.evaluate(station_ids, pred, obs)
    metrics.report_to_csv(report, cfg.resolve("report_csv"))
    text = metrics.report_to_text(report)
    with atomic_write(cfg.resolve("report_txt")) as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_plotdata(cfg: RunConfig, kind: str) -> int:
    if kind not in PLOT_KINDS:
        raise ConfigError(f"plot kind must be one of {PLOT_KINDS}")
    pred_path = cfg.resolve("predictions")
    truth_path = cfg.resolve("rays")
    _require_exists(pred_path, truth_path)
    keys, pred, obs = _align(_load_predictions(pred_path),
                             ds.load_csv(truth_path))
    out_path = os.path.join(cfg.out_dir, f"plot_{kind}.csv")

    with atomic_write(out_path, newline="") as fh:
        writer = csv.writer(fh)
        if kind == "timeseries":
            writer.writerow(["epoch", "station", "sat", "observed",
                             "predicted"])
            order = sorted(range(len(keys)),
                           key=lambda i: (keys[i][0], keys[i][1], keys[i][2],
                                          keys[i][3], keys[i][4]))
            for i in order:
                sid, sat, _, doy, sod = keys[i]
                epoch = (doy - 1) * 86400 + sod
                writer.writerow([epoch, sid, sat, f"{obs[i]:.9g}",
                                 f"{pred[i]:.9g}"])
        elif kind == "scatter":
            writer.writerow(["observed", "predicted", "count"])
            cells = {}
            for o, p in zip(obs, pred):
                key = (math.floor(o), math.floor(p))
                cells[key] = cells.get(key, 0) + 1
            for (o, p) in sorted(cells):
                writer.writerow([o, p, cells[(o, p)]])
        else:
            writer.writerow(["bin_lo", "bin_hi", "count"])
            residuals = pred - obs
            w = RESIDUAL_BIN_TECU
            lo_edge = math.floor(residuals.min() / w)
            hi_edge = math.floor(residuals.max() / w)
            counts = {}
            for r in residuals:
                b = math.floor(r / w)
                counts[b] = counts.get(b, 0) + 1
            for b in range(lo_edge, hi_edge + 1):
                if b in counts:
                    writer.writerow([f"{b * w:.9g}", f"{(b + 1) * w:.9g}",
                                     counts[b]])
    print(f"plotdata[{kind}]: {len(keys)} pairs -> {out_path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="stec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "build-dataset", "train", "predict",
                 "evaluate", "plotdata"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if name == "plotdata":
            p.add_argument("--kind", choices=PLOT_KINDS,
                           default="timeseries")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config, args.seed, args.out)
        started = _time.perf_counter()
        if args.command == "simulate":
            code = cmd_simulate(cfg)
        elif args.command == "build-dataset":
            code = cmd_build_dataset(cfg)
        elif args.command == "train":
            code = cmd_train(cfg)
        elif args.command == "predict":
            code = cmd_predict(cfg)
        elif args.command == "evaluate":
            code = cmd_evaluate(cfg)
        else:
            code = cmd_plotdata(cfg, args.kind)
        print(f"done in {_time.perf_counter() - started:.1f}s",
              file=sys.stderr)
        return code
    except (ConfigError, DataError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
