"""Plain-text serialisation: CSV for paths, fields, traces and probes; JSON reports.

Every float is written with 17 significant digits, so reading a file back
reproduces the stored doubles exactly.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .modpath import ModulationPath
from .spectral import TorusField

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    return FLOAT_FMT % float(x)


def _clean(obj):
    """JSON-ready copy: numpy scalars/arrays to python, floats round-trip safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, obj) -> None:
    # json writes floats with repr(), which is already round-trip exact
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- paths


def write_path(path: ModulationPath, dest) -> None:
    with open(dest, "w", newline="") as fh:
        fh.write(f"# horizon={fmt(path.horizon)} kind={path.kind}\n")
        fh.write("t,w\n")
        for t, w in zip(path.times, path.samples):
            fh.write(f"{fmt(t)},{fmt(w)}\n")


def read_path(src) -> ModulationPath:
    horizon = None
    kind = "custom"
    rows = []
    with open(src) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    if key == "horizon":
                        horizon = float(val)
                    elif key == "kind":
                        kind = val
                continue
            if line.startswith("t,"):
                continue
            t, w = line.split(",")
            rows.append((float(t), float(w)))
    arr = np.array(rows)
    if horizon is None:
        horizon = float(arr[-1, 0])
    return ModulationPath(horizon, arr[:, 1], kind)


# ---------------------------------------------------------------- fields


def write_field(f: TorusField, dest) -> None:
    with open(dest, "w", newline="") as fh:
        fh.write(f"# lambda={fmt(f.lam)} K={f.K} real={int(f.real)}\n")
        fh.write("j,re,im\n")
        for j, c in zip(f.j, f.coeffs):
            fh.write(f"{j},{fmt(c.real)},{fmt(c.imag)}\n")


def read_field(src) -> TorusField:
    meta = {}
    coeffs = {}
    with open(src) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    meta[key] = val
                continue
            if line.startswith("j,"):
                continue
            j, re, im = line.split(",")
            coeffs[int(j)] = complex(float(re), float(im))
    K = int(meta["K"])
    c = np.zeros(2 * K + 1, dtype=complex)
    for j, v in coeffs.items():
        c[j + K] = v
    return TorusField(float(meta["lambda"]), K, c, meta.get("real", "0") == "1")


# ---------------------------------------------------------------- tables


def write_rows(rows: list[dict], dest, columns: list[str]) -> None:
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([fmt(r[c]) if isinstance(r[c], (float, np.floating)) else r[c]
                             for c in columns])


def write_trace(trace, dest, snapshot_times=(), snapshot_dir=None) -> list[str]:
    """``t,l2,drift,remainder,iters`` rows plus field snapshots.

    Snapshots go to ``snapshot_dir/field_t<i>.csv`` for the trace times
    nearest to each requested time. Returns the snapshot file names.
    """
    l2 = trace.l2
    drift = np.abs(l2**2 - l2[0] ** 2)
    iters = trace.step_iterations()
    rows = [{"t": float(t), "l2": float(a), "drift": float(d), "remainder": float(r), "iters": int(i)}
            for t, a, d, r, i in zip(trace.times, l2, drift, trace.remainders, iters)]
    write_rows(rows, dest, ["t", "l2", "drift", "remainder", "iters"])
    names = []
    if snapshot_times:
        snapshot_dir = Path(snapshot_dir if snapshot_dir is not None else Path(dest).parent)
        os.makedirs(snapshot_dir, exist_ok=True)
        for k, t in enumerate(snapshot_times):
            i = int(np.argmin(np.abs(trace.times - t)))
            name = f"field_t{k}.csv"
            write_field(trace.states[i], snapshot_dir / name)
            names.append(name)
    return names
