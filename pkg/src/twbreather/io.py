"""CSV series and JSON run manifests.

Every CSV starts with a version line ``# twbreather <name> v1`` followed by
the header row. Numbers are written with 17 significant digits so a read
back reproduces each double exactly.
"""

from __future__ import annotations

import csv
import json
import os
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import ObservableSeries, RunPlan

SCHEMA_VERSION = 1
SCHEMAS = {
    "density_map": ("t", "z", "n", "n_err"),
    "center_density": ("t", "n0", "n0_err", "n0_meanfield"),
    "mu": ("t", "mu", "mu_err"),
    "eigenvalues": ("t", "rank", "fraction"),
    "invariants": ("t", "Nbar_drift", "Pbar_drift", "Hbar_drift"),
    "com": ("t", "var_X", "var_X_err"),
}


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _rows(series: ObservableSeries, name: str):
    t = series.times
    if name == "density_map":
        for s in range(len(t)):
            for j, z in enumerate(series.z):
                yield t[s], z, series.density[s, j], series.density_err[s, j]
    elif name == "center_density":
        mf = series.n0_meanfield if series.n0_meanfield is not None else np.full(len(t), np.nan)
        yield from zip(t, series.n0, series.n0_err, mf)
    elif name == "mu":
        yield from zip(t, series.mu, series.mu_err)
    elif name == "eigenvalues":
        for g, tg in enumerate(series.eig_times):
            for rank, frac in enumerate(series.eig_fractions[g], start=1):
                yield tg, rank, frac
    elif name == "invariants":
        for s in range(min(len(t), len(series.drift))):
            yield (t[s], *series.drift[s])
    elif name == "com":
        yield from zip(t, series.com_var, series.com_var_err)


def write_series(series: ObservableSeries, directory, outputs=tuple(SCHEMAS)) -> list:
    """Write the requested CSV files into ``directory``; returns their paths."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc.strerror}") from exc
    paths = []
    for name in outputs:
        path = directory / f"{name}.csv"
        try:
            with open(path, "w", newline="") as fh:
                fh.write(f"# twbreather {name} v{SCHEMA_VERSION}\n")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(SCHEMAS[name])
                for row in _rows(series, name):
                    writer.writerow([fmt(x) for x in row])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        paths.append(path)
    return paths


def read_csv(path) -> tuple:
    """Return ``(header, float array)`` of a series file."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = tuple(next(reader))
    data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    return header, data.reshape(-1, len(header))


def manifest(plan: RunPlan, series: ObservableSeries | None = None, command: str = "run",
             extra: dict | None = None) -> dict:
    from .config import plan_values

    out = {
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "command": command,
        "config": plan_values(plan),
        "master_seed": plan.master_seed,
    }
    if series is not None:
        meta = series.meta
        out.update(trajectories_completed=meta.get("completed"),
                   trajectories_aborted=meta.get("aborted", 0),
                   aborted_ids=[int(i) for i in meta.get("aborted_ids", [])],
                   wall_time_s=meta.get("wall_time"), workers=meta.get("workers", 1),
                   ordering=meta.get("ordering"))
    if extra:
        out.update(extra)
    out["config"]["outputs"] = list(out["config"]["outputs"])
    return out


def write_manifest(data: dict, directory) -> Path:
    path = Path(directory) / "manifest.json"
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def plan_from_manifest(data: dict) -> RunPlan:
    from .config import plan_from_values

    return plan_from_values(data["config"])
