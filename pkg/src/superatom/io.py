"""Dataset, scan and fit-point file formats (see FORMATS.md)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .burst import Branch, BurstParams, Dataset, photon_histogram
from .fitting import DataPoint
from .qubit import MeasurementBasis, QubitState

DATASET_COLUMNS = ("trial_index", "branch", "total", "repeat_index", "timestamp_ns")


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def write_dataset_csv(ds: Dataset, path: str | Path) -> None:
    """One row per click; trials without clicks get one row with empty click fields."""
    starts = np.searchsorted(ds.click_trial, np.arange(ds.n_trials + 1))
    stamps = np.floor(ds.click_time_ns).astype(np.int64)
    names = [b.name for b in Branch]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for i in range(ds.n_trials):
            branch = names[ds.branches[i]]
            total = int(ds.totals[i])
            lo, hi = starts[i], starts[i + 1]
            if lo == hi:
                w.writerow((i, branch, total, "", ""))
            for j in range(lo, hi):
                w.writerow((i, branch, total, int(ds.click_repeat[j]), int(stamps[j])))


def dataset_summary(ds: Dataset) -> dict:
    hist = photon_histogram(ds)
    st = ds.prepared_state
    return {
        "params": ds.params.to_dict(),
        "seed": ds.seed,
        "stream": ds.stream,
        "n_trials": ds.n_trials,
        "prepared_state": [[st.a_r1.real, st.a_r1.imag], [st.a_r2.real, st.a_r2.imag]],
        "basis": ds.basis.label,
        "x_basis_phase": ds.basis.x_phase,
        "statistics": {
            "mean_photons": float(ds.totals.mean()),
            "prob_zero": float(hist[0] / ds.n_trials),
            "prob_geq1": float(1 - hist[0] / ds.n_trials),
            "photon_histogram": hist.tolist(),
            "branch_counts": {b.name: int(np.count_nonzero(ds.branches == b)) for b in Branch},
        },
    }


def write_dataset(ds: Dataset, csv_path: str | Path, json_path: str | Path) -> None:
    write_dataset_csv(ds, csv_path)
    Path(json_path).write_text(json.dumps(dataset_summary(ds), indent=2) + "\n")


def read_dataset(csv_path: str | Path, json_path: str | Path) -> Dataset:
    """Load a dataset written by :func:`write_dataset`; timestamps come back as whole ns."""
    meta = json.loads(Path(json_path).read_text())
    n = int(meta["n_trials"])
    totals = np.zeros(n, dtype=np.int64)
    branches = np.zeros(n, dtype=np.int8)
    trial, rep, time = [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != DATASET_COLUMNS:
            raise FormatError(f"{csv_path}:1: expected header {','.join(DATASET_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                i, branch, total, r, t = row
                i = int(i)
                totals[i] = int(total)
                branches[i] = Branch[branch]
                if r != "":
                    trial.append(i)
                    rep.append(int(r))
                    time.append(float(t))
            except (ValueError, KeyError, IndexError) as exc:
                raise FormatError(f"{csv_path}:{lineno}: malformed row {row!r} ({exc})") from exc
    (a1r, a1i), (a2r, a2i) = meta["prepared_state"]
    return Dataset(
        totals=totals,
        branches=branches,
        click_trial=np.array(trial, dtype=np.int64),
        click_repeat=np.array(rep, dtype=np.int64),
        click_time_ns=np.array(time, dtype=float),
        prepared_state=QubitState.normalized(complex(a1r, a1i), complex(a2r, a2i)),
        basis=MeasurementBasis(meta["basis"], meta.get("x_basis_phase", MeasurementBasis("Z").x_phase)),
        params=BurstParams(**meta["params"]),
        seed=int(meta["seed"]),
        stream=int(meta.get("stream", 0)),
    )


def write_columns(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_points(path: str | Path) -> list[DataPoint]:
    """Read ``x,y[,sigma]`` rows; a non-numeric first row is treated as a header."""
    points = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
                continue
            if lineno == 1 and not _is_number(cells[0]):
                continue
            try:
                if len(cells) not in (2, 3):
                    raise ValueError(f"expected 2 or 3 columns, got {len(cells)}")
                sigma = float(cells[2]) if len(cells) == 3 and cells[2] != "" else None
                points.append(DataPoint(float(cells[0]), float(cells[1]), sigma))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not points:
        raise FormatError(f"{path}: no data points")
    return points


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True
