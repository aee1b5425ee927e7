"""File formats: raw series CSV, analysis tables, JSON records, manifests.

Every output file carries the format version, config hash and master seed in
`#`-prefixed header lines.  Floats are written with repr() so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

SERIES_FORMAT = 1
TABLE_FORMAT = 1


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns: list[str], rows, meta: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        for k in sorted(meta):
            fh.write(f"# {k}={meta[k]}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_table(path):
    meta = {}
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v
            line = fh.readline()
        columns = line.strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return meta, columns, rows


SERIES_COLUMNS = ["sample", "t_index", "T", "chi0", "chik", "energy", "n_snap",
                  "equil_sweeps", "equil_passed", "exch_acc_min"]


def write_series(path, results, meta: dict) -> None:
    """One row per (sample, temperature) with thermal means."""
    meta = dict(meta, series_format=SERIES_FORMAT)
    rows = []
    for r in results:
        for i, t in enumerate(r.temperatures):
            rows.append((r.sample, i, float(t), r.chi0[i], r.chik[i], r.energy[i],
                         r.n_snap, r.equil_sweeps, r.equil_passed, r.exch_acc_min))
    write_table(path, SERIES_COLUMNS, rows, meta)


def read_series(path):
    """Returns (meta, dict of column arrays)."""
    meta, columns, rows = read_table(path)
    if columns != SERIES_COLUMNS:
        raise ValueError(f"{path}: unexpected series columns {columns}")
    arr = np.array(rows)
    out = {
        "sample": arr[:, 0].astype(int),
        "t_index": arr[:, 1].astype(int),
        "T": arr[:, 2].astype(float),
        "chi0": arr[:, 3].astype(float),
        "chik": arr[:, 4].astype(float),
        "energy": arr[:, 5].astype(float),
        "n_snap": arr[:, 6].astype(int),
        "equil_sweeps": arr[:, 7].astype(int),
        "equil_passed": arr[:, 8].astype(int).astype(bool),
        "exch_acc_min": arr[:, 9].astype(float),
    }
    return meta, out


def write_json_record(path, record: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json_record(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
