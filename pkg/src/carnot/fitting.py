"""Least-squares line fits used for convergence orders and fitted constants."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float


def fit_exponent(points: Iterable[tuple[float, float]], log_log: bool = True) -> LineFit:
    """Fit y = a x + b, or log y = a log x + b when ``log_log`` is set."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if log_log:
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-log fit needs positive values")
        x, y = np.log(x), np.log(y)
    if np.ptp(x) == 0:
        raise ValueError("degenerate abscissae")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return LineFit(float(slope), float(intercept), r2)


def observed_orders(hs, errors) -> list[float]:
    """Pairwise orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return [
        float(np.log(errors[i] / errors[i + 1]) / np.log(hs[i] / hs[i + 1]))
        for i in range(len(hs) - 1)
    ]


def spread(values) -> float:
    """max/min of positive values; inf if any is zero."""
    v = np.abs(np.asarray(values, dtype=float))
    if v.min() == 0:
        return float("inf") if v.max() > 0 else 1.0
    return float(v.max() / v.min())
