"""Column datasets and 2-D grids emitted by sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Dataset:
    """Named, equally long columns; ``units`` maps column name to a unit string."""

    columns: dict
    units: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"ragged dataset columns: {sorted(lengths)}")
        self.columns = {k: np.asarray(v) for k, v in self.columns.items()}
        missing = set(self.columns) - set(self.units)
        if missing:
            raise ValueError(f"columns without units: {sorted(missing)}")

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def header(self) -> list:
        return [f"{k} [{self.units[k]}]" for k in self.columns]


@dataclass
class Grid:
    """Values on a rectangular grid; ``values[i, j]`` sits at ``(rows[i], cols[j])``."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    row_name: str
    col_name: str
    value_name: str
    units: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.cols = np.asarray(self.cols, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.shape != (len(self.rows), len(self.cols)):
            raise ValueError("grid values do not match the axes")
