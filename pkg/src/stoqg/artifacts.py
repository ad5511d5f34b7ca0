"""Artifact persistence: CSV time series, JSON reports, run manifests.

Files are written atomically (temp file in the target directory, then
rename). Floats are serialized with Python's shortest round-trip repr, so a
rerun that produces bit-identical doubles produces byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import EnstrophyTrace
from .config import config_sha256
from .dynamics import PathTrajectory


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def atomic_write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def write_trace(out_dir: Path, trace: EnstrophyTrace, formats: list[str]) -> None:
    """Persist the enstrophy trace as trace.csv and/or trace.json."""
    wa = trace.wa_half_analytic
    wa_var = 2.0 * wa if wa is not None else np.full_like(trace.times, np.nan)
    if "csv" in formats:
        rows = zip(trace.times, trace.ens_mean, trace.ens_se, wa_var)
        write_csv(out_dir / "trace.csv", ["time", "ens_mean", "ens_se", "wa_var_analytic"], rows)
    if "json" in formats:
        payload = {
            "times": trace.times,
            "ens_mean": trace.ens_mean,
            "ens_se": trace.ens_se,
            "wa_var_analytic": wa_var,
            "n_paths": trace.n_paths,
        }
        if trace.wa_half_empirical is not None:
            payload["wa_var_empirical"] = 2.0 * trace.wa_half_empirical
        if trace.resid_mean is not None:
            payload["residual_mean"] = trace.resid_mean
        write_json(out_dir / "trace.json", payload)


def write_trajectories(out_dir: Path, trajectories: list[PathTrajectory]) -> None:
    """One record per (path, time) with coefficients in rank order."""
    first = next((t for t in trajectories if t.fields is not None), None)
    if first is None:
        raise ValueError("trajectory dump requires a run with store_fields enabled")
    n_modes = first.fields.shape[1]
    header = ["path", "time"] + [f"c_{k}" for k in range(1, n_modes + 1)]

    def rows():
        for traj in trajectories:
            for i, t in enumerate(traj.times):
                yield [traj.path_index, t, *traj.fields[i]]

    write_csv(out_dir / "trajectories.csv", header, rows())


def write_manifest(out_dir: Path, document: dict, wall_time_s: float, extra: dict | None = None) -> None:
    payload = {
        "config_sha256": config_sha256(document),
        "master_seed": document["sim"]["master_seed"],
        "code_version": __version__,
        "wall_time_s": wall_time_s,
        "config": document,
    }
    if extra:
        payload.update(extra)
    write_json(out_dir / "manifest.json", payload)


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False
