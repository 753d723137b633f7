"""CSV loading against the simulator's fixed output schemas.

Unknown columns are ignored; missing required columns are rejected.  Nothing
here recomputes physics: the plot scripts draw columns as-is.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    pass


def load_columns(path, required, numeric=True) -> dict:
    p = Path(path)
    if not p.is_file():
        raise SchemaError(f"input CSV not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{p}: empty file")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{p}: missing required columns {missing}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{p}: no data rows")
    out = {}
    for col in required:
        vals = [r[col] for r in rows]
        out[col] = np.array([float(v) for v in vals]) if numeric else vals
    return out


TRAJECTORY_COLUMNS = ("t", "fz_double", "var_fz_double", "fz_single",
                      "var_fz_single", "purity_double", "purity_single")
SWEEP_COLUMNS = ("F", "deltaB", "deltaB_err", "shotnoise_ref",
                 "heisenberg_ref", "twobody_ref")
SAMPLES_COLUMNS = ("stream_index", "conditional_qfi")
