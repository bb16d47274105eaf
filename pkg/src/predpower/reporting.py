"""Atomic file outputs: CSV/JSON artifacts and the binary dataset format.

All writers go through a temp-file-plus-rename so interrupted runs never
leave partially written artifacts.  Floats are printed with 17 significant
digits so CSV outputs replay bit-exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

FLOAT_FORMAT = "%.17g"


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(cell) for cell in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: str, doc: dict) -> None:
    _atomic_write(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Binary instance datasets: row-major float64 payload + JSON sidecar
# ---------------------------------------------------------------------------

def save_dataset(prefix: str, dataset) -> tuple[str, str]:
    """Persist an InstanceDataset as <prefix>.bin / <prefix>.json.

    The payload is the W block (count*T*n float64, row-major) followed by
    the V block (count*T*d); the sidecar records shapes, seed and ids.
    """
    bin_path = prefix + ".bin"
    meta_path = prefix + ".json"
    directory = os.path.dirname(os.path.abspath(bin_path))
    os.makedirs(directory, exist_ok=True)
    payload = np.concatenate([
        np.ascontiguousarray(dataset.W, dtype="<f8").ravel(),
        np.ascontiguousarray(dataset.V, dtype="<f8").ravel(),
    ])
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload.tobytes())
        os.replace(tmp, bin_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    write_json(meta_path, {
        "count": dataset.W.shape[0],
        "T": dataset.W.shape[1],
        "n": dataset.W.shape[2],
        "d": dataset.V.shape[2],
        "seed": dataset.master_seed,
        "predictor_id": dataset.predictor_id,
        "dtype": "<f8",
        "layout": "W row-major then V row-major",
    })
    return bin_path, meta_path


def load_dataset(prefix: str):
    from .predictors import InstanceDataset

    with open(prefix + ".json") as fh:
        meta = json.load(fh)
    raw = np.fromfile(prefix + ".bin", dtype="<f8")
    count, T, n, d = meta["count"], meta["T"], meta["n"], meta["d"]
    w_size = count * T * n
    if raw.size != w_size + count * T * d:
        raise ValueError(f"payload size {raw.size} does not match sidecar shapes")
    W = raw[:w_size].reshape(count, T, n)
    V = raw[w_size:].reshape(count, T, d)
    return InstanceDataset(W=W, V=V, predictor_id=meta["predictor_id"],
                           master_seed=meta["seed"])


def riccati_csv_rows(riccati, system) -> tuple[list[str], list[list]]:
    """One row per t with flattened P_t and K_t (the terminal P_T row keeps
    empty K cells)."""
    n, m = system.n, system.m
    header = (["t"] + [f"P_{i}_{j}" for i in range(n) for j in range(n)]
              + [f"K_{i}_{j}" for i in range(m) for j in range(n)])
    rows = []
    for t in range(system.T):
        rows.append([t] + list(riccati.P[t].ravel()) + list(riccati.K[t].ravel()))
    rows.append([system.T] + list(riccati.P[system.T].ravel()) + [""] * (m * n))
    return header, rows
