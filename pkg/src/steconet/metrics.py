"""Evaluation metrics (RMSE, R2, QA, MAPE) and per-station reports."""

import csv
from dataclasses import dataclass

import numpy as np

from .ioutil import atomic_write

# |truth| below this is excluded from MAPE (division by near-zero TEC)
MAPE_MIN_TRUTH_TECU = 0.1

REPORT_HEADER = ["station_id", "n", "rmse_tecu", "r2", "mape_pct",
                 "qa03_pct", "qa10_pct"]


def _as_pair(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(
            f"length mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, truth


def rmse(pred, truth) -> float:
    pred, truth = _as_pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def r2(pred, truth) -> float:
    pred, truth = _as_pair(pred, truth)
    ss_tot = float(np.sum((truth - np.mean(truth)) ** 2))
    if ss_tot <= 0.0:
        raise ValueError("R^2 undefined: truth has zero variance")
    ss_res = float(np.sum((truth - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def qa(pred, truth, theta: float) -> float:
    """Percentage of absolute errors strictly below theta TECU."""
    pred, truth = _as_pair(pred, truth)
    if theta <= 0.0:
        raise ValueError("theta must be positive")
    return 100.0 * float(np.count_nonzero(np.abs(pred - truth) < theta)) \
        / pred.size


def mape(pred, truth) -> float:
    """Mean absolute percentage error against the true values.

    Samples with |truth| < 0.1 TECU are excluded from the mean; at least
    one sample must remain.
    """
    pct, _ = mape_with_excluded(pred, truth)
    return pct


def mape_with_excluded(pred, truth) -> tuple[float, int]:
    pred, truth = _as_pair(pred, truth)
    keep = np.abs(truth) >= MAPE_MIN_TRUTH_TECU
    n_excluded = int(pred.size - np.count_nonzero(keep))
    if not np.any(keep):
        raise ValueError(
            f"no samples with |truth| >= {MAPE_MIN_TRUTH_TECU} TECU")
    pct = 100.0 * float(np.mean(np.abs(pred[keep] - truth[keep])
                                / np.abs(truth[keep])))
    return pct, n_excluded


@dataclass(frozen=True)
class StationScore:
    station_id: str
    n_samples: int
    rmse_tecu: float
    r2: float
    mape_pct: float
    qa03_pct: float
    qa10_pct: float
    mape_excluded: int = 0


@dataclass(frozen=True)
class EvalReport:
    stations: tuple
    aggregate: StationScore


def _score(station_id, pred, truth) -> StationScore:
    mape_pct, excluded = mape_with_excluded(pred, truth)
    return StationScore(
        station_id=station_id,
        n_samples=int(len(pred)),
        rmse_tecu=rmse(pred, truth),
        r2=r2(pred, truth),
        mape_pct=mape_pct,
        qa03_pct=qa(pred, truth, 0.3),
        qa10_pct=qa(pred, truth, 1.0),
        mape_excluded=excluded,
    )


def evaluate(station_ids, pred, truth) -> EvalReport:
    """Per-station scores plus a pooled aggregate row."""
    pred, truth = _as_pair(pred, truth)
    station_ids = np.asarray(station_ids)
    if station_ids.shape[0] != pred.shape[0]:
        raise ValueError("one station id per sample required")
    rows = []
    for sid in sorted(set(station_ids.tolist())):
        mask = station_ids == sid
        rows.append(_score(sid, pred[mask], truth[mask]))
    return EvalReport(tuple(rows), _score("ALL", pred, truth))


def report_to_csv(report: EvalReport, path):
    with atomic_write(path, newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for row in report.stations + (report.aggregate,):
            writer.writerow([
                row.station_id, row.n_samples, f"{row.rmse_tecu:.9g}",
                f"{row.r2:.9g}", f"{row.mape_pct:.9g}",
                f"{row.qa03_pct:.9g}", f"{row.qa10_pct:.9g}"])


def report_to_text(report: EvalReport) -> str:
    lines = ["station      n     rmse[TECU]      r2   mape[%]  qa03[%]  "
             "qa10[%]  mape_excl"]
    for row in report.stations + (report.aggregate,):
        lines.append(
            f"{row.station_id:<10} {row.n_samples:>6} {row.rmse_tecu:>12.4f} "
            f"{row.r2:>7.4f} {row.mape_pct:>8.2f} {row.qa03_pct:>8.2f} "
            f"{row.qa10_pct:>8.2f} {row.mape_excluded:>9}")
    return "\n".join(lines) + "\n"


def load_report_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != REPORT_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            rows.append(StationScore(row[0], int(row[1]), float(row[2]),
                                     float(row[3]), float(row[4]),
                                     float(row[5]), float(row[6])))
    if not rows or rows[-1].station_id != "ALL":
        raise ValueError(f"{path}: missing aggregate row")
    return EvalReport(tuple(rows[:-1]), rows[-1])
