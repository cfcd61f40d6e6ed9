"""Per-COF descriptor table with a thermal-conductivity target."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DESCRIPTORS = ("density", "lpd", "void_fraction", "gsa", "dmr")
TARGET = "kappa"
UNIT_INTERVAL = ("void_fraction", "dmr")

# accepted header spellings -> canonical column
_ALIASES = {
    "density": "density",
    "density_g_cm3": "density",
    "lpd": "lpd",
    "largest_pore_diameter": "lpd",
    "pore_size": "lpd",
    "void_fraction": "void_fraction",
    "vf": "void_fraction",
    "gsa": "gsa",
    "surface_area": "gsa",
    "dmr": "dmr",
    "kappa": "kappa",
    "kappa_mean": "kappa",
    "k": "kappa",
}


@dataclass(frozen=True, eq=False)
class FeatureTable:
    names: tuple[str, ...]
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        n = len(self.names)
        cols = {}
        for key, vals in self.columns.items():
            arr = np.asarray(vals, dtype=float).ravel()
            if arr.size != n:
                raise ValueError(f"column {key!r} has {arr.size} values for {n} rows")
            cols[key] = arr
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "columns", cols)

    def __len__(self):
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.names)

    def has(self, col: str) -> bool:
        return col in self.columns

    def matrix(self, features=None, target: str = TARGET) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
        """Design matrix and target after checking the modeled columns."""
        features = tuple(features) if features is not None else tuple(c for c in DESCRIPTORS if c in self.columns)
        missing = [c for c in features + (target,) if c not in self.columns]
        if missing:
            raise KeyError(f"table lacks columns {missing}")
        for c in features + (target,):
            v = self.columns[c]
            if not np.all(np.isfinite(v)):
                bad = int(np.nonzero(~np.isfinite(v))[0][0])
                raise ValueError(f"missing value in column {c!r} (row {self.names[bad]!r})")
            if c in UNIT_INTERVAL and (v.min() < 0 or v.max() > 1):
                raise ValueError(f"column {c!r} must lie in [0, 1]")
        X = np.column_stack([self.columns[c] for c in features]) if features else np.zeros((self.n_rows, 0))
        return X, self.columns[target].copy(), features

    def to_csv(self, path=None) -> str:
        keys = list(self.columns)
        rows = [",".join(["name"] + keys)]
        for i, name in enumerate(self.names):
            vals = []
            for k in keys:
                v = float(self.columns[k][i])
                vals.append("" if math.isnan(v) else repr(v))
            rows.append(",".join([name] + vals))
        text = "\n".join(rows) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def read_feature_table(path) -> FeatureTable:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty feature table")
        header = [h.strip() for h in header]
        if header[0].lower() != "name":
            raise ValueError(f"{path}: first column must be 'name'")
        keys = [_ALIASES.get(h.lower(), h.lower()) for h in header[1:]]
        names, data = [], {k: [] for k in keys}
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            names.append(row[0].strip())
            for k, cell in zip(keys, row[1:]):
                cell = cell.strip()
                try:
                    data[k].append(float(cell) if cell else math.nan)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric value {cell!r} in column {k!r}") from None
    return FeatureTable(tuple(names), {k: np.array(v) for k, v in data.items()})
