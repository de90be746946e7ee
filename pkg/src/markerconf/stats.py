"""Numeric kernel: CV, correlations, Fisher-averaged correlation, Gaussian KDE
and pooled standard deviation.

All functions take plain sequences of finite floats and return Python floats
(or numpy arrays for the KDE).
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InsufficientDataError, UndefinedStatisticError

logger = logging.getLogger(__name__)

FISHER_EPS = 1e-6
KDE_GRID_POINTS = 256
KDE_FALLBACK_BANDWIDTH = 0.05
FLAT_TOLERANCE = 1e-12


def _as_array(values: Iterable[float], name: str = "values") -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def cv(values: Sequence[float]) -> float:
    """Coefficient of variation: population std over mean."""
    arr = _as_array(values)
    if arr.size < 2:
        raise InsufficientDataError(f"cv needs at least 2 values, got {arr.size}")
    mean = arr.mean()
    if mean == 0:
        raise UndefinedStatisticError("cv is undefined for zero mean")
    return float(arr.std(ddof=0) / mean)


def _flat(arr: np.ndarray, centered: np.ndarray) -> bool:
    """True when the spread is zero or within floating-point noise, e.g. two
    MICs that are equal in exact arithmetic but differ in the last bit."""
    return float(np.max(np.abs(centered))) <= FLAT_TOLERANCE * max(1.0, float(np.max(np.abs(arr))))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    xa, ya = _as_array(x, "x"), _as_array(y, "y")
    if xa.size != ya.size:
        raise ValueError("x and y must have equal length")
    if xa.size < 3:
        raise InsufficientDataError(f"correlation needs at least 3 points, got {xa.size}")
    dx, dy = xa - xa.mean(), ya - ya.mean()
    if _flat(xa, dx) or _flat(ya, dy):
        raise UndefinedStatisticError("correlation is undefined for a zero-variance series")
    sxx, syy = float(dx @ dx), float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks (ties share their mean rank)."""
    xa, ya = _as_array(x, "x"), _as_array(y, "y")
    if xa.size != ya.size:
        raise ValueError("x and y must have equal length")
    if xa.size < 3:
        raise InsufficientDataError(f"correlation needs at least 3 points, got {xa.size}")
    return pearson(rankdata(xa), rankdata(ya))


def fisher_mean(correlations: Sequence[float], eps: float = FISHER_EPS) -> float:
    """Average correlations in atanh space; values are clamped to +-(1 - eps)
    first so that perfect correlations stay finite."""
    arr = _as_array(correlations, "correlations")
    if arr.size == 0:
        raise InsufficientDataError("fisher_mean needs at least one correlation")
    if np.any(np.abs(arr) > 1):
        raise ValueError("correlations must lie in [-1, 1]")
    z = np.arctanh(np.clip(arr, -1 + eps, 1 - eps))
    return float(np.tanh(z.mean()))


def silverman_bandwidth(values: Sequence[float]) -> float:
    """``1.06 * std * n**(-1/5)`` (sample std); falls back to
    ``KDE_FALLBACK_BANDWIDTH`` when the data have no spread."""
    arr = _as_array(values)
    if arr.size == 0:
        raise InsufficientDataError("bandwidth needs at least one value")
    sigma = arr.std(ddof=1) if arr.size > 1 else 0.0
    if sigma == 0:
        return KDE_FALLBACK_BANDWIDTH
    return float(1.06 * sigma * arr.size ** (-0.2))


def kde_grid(lo: float = 0.0, hi: float = 1.0, points: int = KDE_GRID_POINTS) -> np.ndarray:
    return np.linspace(lo, hi, points)


def kde(
    values: Sequence[float],
    grid: np.ndarray | None = None,
    bandwidth: float | None = None,
) -> np.ndarray:
    """Gaussian kernel density of ``values`` evaluated on ``grid``
    (default: 256 points on [0, 1]). An automatic bandwidth is never
    smaller than the grid spacing.

    The density is rescaled to unit trapezoid mass over the grid, so kernel
    mass falling outside the grid is not lost."""
    arr = _as_array(values)
    if arr.size == 0:
        raise InsufficientDataError("kde needs at least one value")
    grid = kde_grid() if grid is None else np.asarray(grid, dtype=float)
    if bandwidth is None:
        # A kernel narrower than the grid spacing would fall between grid points.
        spacing = float(np.min(np.diff(grid))) if grid.size > 1 else 0.0
        h = max(silverman_bandwidth(arr), spacing)
    else:
        h = float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    u = (grid[:, None] - arr[None, :]) / h
    density = np.exp(-0.5 * u * u).sum(axis=1) / (arr.size * h * math.sqrt(2 * math.pi))
    mass = float(np.trapezoid(density, grid)) if grid.size > 1 else 0.0
    return density / mass if mass > 0 else density


def pooled_std(groups: Iterable[tuple[int, float]]) -> float:
    """``sqrt(sum((n-1) s^2) / sum(n-1))`` over groups with n >= 2."""
    num = den = 0.0
    skipped = 0
    for n, s in groups:
        if n < 2:
            skipped += 1
            continue
        num += (n - 1) * s * s
        den += n - 1
    if skipped:
        logger.warning("pooled_std: excluded %d group(s) with fewer than 2 observations", skipped)
    if den == 0:
        raise InsufficientDataError("pooled_std needs at least one group with n >= 2")
    return math.sqrt(num / den)


def local_maxima(density: Sequence[float]) -> list[int]:
    """Indices of strict interior local maxima (plateaus count once)."""
    d = np.asarray(density, dtype=float)
    out = []
    i = 1
    while i < d.size - 1:
        if d[i] > d[i - 1]:
            j = i
            while j + 1 < d.size and d[j + 1] == d[i]:
                j += 1
            if j + 1 < d.size and d[j + 1] < d[i]:
                out.append(i)
            i = j + 1
        else:
            i += 1
    return out
