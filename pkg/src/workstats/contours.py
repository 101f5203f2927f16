"""Re chi grids, equipotential curves ``Re chi(u_c, lambda0) = c`` and their slopes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import brentq

from .dataset import Dataset, Grid
from .errors import LevelNotCrossed, RootBracketFailure
from .tfim import ModeSet, chi_product


def chi_grid(modes: ModeSet, beta: float, lambda0s, us, dlam: float) -> Grid:
    """``Re chi(u; lambda0 -> lambda0 + dlam)`` with rows over ``u`` and columns over ``lambda0``."""
    lambda0s = np.asarray(lambda0s, dtype=float)
    us = np.asarray(us, dtype=float)
    vals = np.empty((len(us), len(lambda0s)))
    for j, l0 in enumerate(lambda0s):
        vals[:, j] = chi_product(modes, l0, l0 + dlam, beta, us).real
    meta = {"engine": "tfim", "n_sites": modes.n_sites, "beta": beta, "dlam": dlam}
    return Grid(us, lambda0s, vals, "u", "lambda0", "Re chi",
                {"u": "1/J", "lambda0": "dimensionless", "Re chi": "dimensionless"}, meta)


def _first_crossing(f_vals, c):
    """Index ``i`` of the first sign change of ``f - c`` between nodes ``i`` and ``i+1``."""
    g = np.asarray(f_vals) - c
    hit = np.flatnonzero(g[:-1] * g[1:] <= 0)
    return int(hit[0]) if hit.size else None


def level_root(column: Callable[[float], float], c: float, u_max: float, n_scan: int = 400,
               xtol: float = 1e-13) -> float:
    """Smallest positive ``u`` with ``column(u) = c``, bracketed on a scan then refined.

    Raises
    ------
    LevelNotCrossed
        If ``column - c`` keeps its sign on ``(0, u_max]``.
    RootBracketFailure
        If the refinement cannot bracket the root.
    """
    if c >= 1.0:
        return 0.0
    us = np.linspace(0.0, u_max, n_scan + 1)
    fv = np.array([column(u) for u in us])
    i = _first_crossing(fv, c)
    if i is None:
        raise LevelNotCrossed(f"level {c!r} not reached for u <= {u_max!r}")
    if fv[i] == c:
        return float(us[i])
    try:
        return float(brentq(lambda u: column(u) - c, us[i], us[i + 1], xtol=xtol))
    except ValueError as exc:
        raise RootBracketFailure(str(exc)) from exc


@dataclass
class LevelCurve:
    """``u_c`` per ``lambda0``; NaN marks columns where the level is not crossed."""

    lambda0: np.ndarray
    u: np.ndarray
    c: float

    @property
    def gaps(self) -> np.ndarray:
        return np.isnan(self.u)

    def to_dataset(self, meta=None) -> Dataset:
        return Dataset({"lambda0": self.lambda0, "u_c": self.u},
                       {"lambda0": "dimensionless", "u_c": "1/J"}, dict(meta or {}, c=self.c))


def level_set(source: Union[Grid, Callable[[float, float], float]], c: float,
              lambda0s=None, u_max: Optional[float] = None, n_scan: int = 400) -> LevelCurve:
    """Equipotential curve of ``Re chi``.

    ``source`` is either a :class:`Grid` from :func:`chi_grid` (roots found by
    linear interpolation between the bracketing rows) or a callable
    ``f(u, lambda0)`` (roots refined by Brent's method on a scan of
    ``n_scan`` steps over ``[0, u_max]``).  Only the smallest positive root is
    kept per column.
    """
    if isinstance(source, Grid):
        us, l0 = source.rows, source.cols
        if us[0] != 0.0 or np.any(np.diff(us) <= 0):
            raise ValueError("grid rows must start at u = 0 and increase")
        out = np.full(len(l0), np.nan)
        for j in range(len(l0)):
            if c >= 1.0:
                out[j] = 0.0
                continue
            col = source.values[:, j]
            i = _first_crossing(col, c)
            if i is None:
                continue
            g0, g1 = col[i] - c, col[i + 1] - c
            t = 0.0 if g0 == g1 else g0 / (g0 - g1)
            out[j] = us[i] + t * (us[i + 1] - us[i])
        return LevelCurve(np.asarray(l0, dtype=float), out, c)
    if lambda0s is None or u_max is None:
        raise ValueError("a callable source needs lambda0s and u_max")
    lambda0s = np.asarray(lambda0s, dtype=float)
    out = np.full(len(lambda0s), np.nan)
    for j, l0 in enumerate(lambda0s):
        try:
            out[j] = level_root(lambda u: source(u, l0), c, u_max, n_scan)
        except LevelNotCrossed:
            pass
    return LevelCurve(lambda0s, out, c)


def chi_level_function(modes: ModeSet, beta: float, dlam: float):
    """Callable ``(u, lambda0) -> Re chi`` suitable for :func:`level_set`."""
    return lambda u, l0: float(np.real(chi_product(modes, l0, l0 + dlam, beta, u)))


def level_set_derivative(curve: LevelCurve) -> Dataset:
    """``du_c/dlambda0`` by central differences along the curve (one-sided at the ends).

    Differences touching a gap are NaN.
    """
    x, y = curve.lambda0, curve.u
    d = np.full(len(x), np.nan)
    if len(x) >= 2:
        d[0] = (y[1] - y[0]) / (x[1] - x[0])
        d[-1] = (y[-1] - y[-2]) / (x[-1] - x[-2])
        d[1:-1] = (y[2:] - y[:-2]) / (x[2:] - x[:-2])
    return Dataset({"lambda0": x, "u_c": y, "du_c/dlambda0": d},
                   {"lambda0": "dimensionless", "u_c": "1/J", "du_c/dlambda0": "1/J"},
                   {"c": curve.c})


@dataclass
class ScalingReport:
    """Two Re chi grids at equal ``N * dlam`` and their pointwise difference."""

    first: Grid
    second: Grid
    difference: np.ndarray
    sup_norm: float
    params: dict

    def summary(self) -> str:
        p = self.params
        return (f"N1={p['n1']} dlam1={p['dlam1']!r}  N2={p['n2']} dlam2={p['dlam2']!r}  "
                f"beta={p['beta']!r}  sup|dRe chi|={self.sup_norm:.6e}")


def scaling_conjecture_report(n1: int, dlam1: float, n2: int, dlam2: float, beta: float,
                              lambda0s, us, rtol: float = 1e-9) -> ScalingReport:
    """Compare Re chi grids of two systems related by ``N -> N/a``, ``dlam -> a dlam``."""
    if not np.isclose(n1 * dlam1, n2 * dlam2, rtol=rtol, atol=0.0):
        raise ValueError("the two systems must share N * dlam")
    g1 = chi_grid(ModeSet.from_sites(n1), beta, lambda0s, us, dlam1)
    g2 = chi_grid(ModeSet.from_sites(n2), beta, lambda0s, us, dlam2)
    diff = g1.values - g2.values
    params = {"n1": n1, "dlam1": dlam1, "n2": n2, "dlam2": dlam2, "beta": beta}
    return ScalingReport(g1, g2, diff, float(np.max(np.abs(diff))), params)
