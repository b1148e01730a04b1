"""Nelder-Mead downhill simplex minimizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool
    # best objective after every iteration; non-increasing by construction
    history: list = field(default_factory=list, repr=False)


def _safe(f, x):
    try:
        v = float(f(x))
    except (FloatingPointError, OverflowError, ValueError):
        return np.inf
    return v if np.isfinite(v) else np.inf


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    step=0.1,
    *,
    alpha: float = 1.0,
    gamma: float = 2.0,
    rho: float = 0.5,
    sigma: float = 0.5,
    ftol: float = 1e-12,
    xtol: float = 0.0,
    max_fev: int = 20000,
    record_history: bool = False,
) -> SimplexResult:
    """
    Minimize ``f`` starting from ``x0``.

    ``step`` sets the initial simplex edge along each coordinate (scalar or
    per-coordinate). The search stops when the spread of objective values
    across the simplex falls below ``ftol`` (and its diameter below
    ``xtol``), or after ``max_fev`` evaluations. Non-finite objective values
    are treated as +inf, so the simplex retreats from them.
    """
    if min(alpha, gamma, rho, sigma) <= 0:
        raise ValueError("simplex coefficients must be positive")
    x0 = np.asarray(x0, dtype=float).ravel()
    d = x0.size
    steps = np.broadcast_to(np.asarray(step, dtype=float), (d,))

    pts = np.tile(x0, (d + 1, 1))
    pts[1:] += np.diag(steps)
    vals = np.array([_safe(f, p) for p in pts])
    nfev = d + 1
    if not np.isfinite(vals[0]):
        raise ValueError("objective is not finite at the starting point")

    history = []
    nit = 0
    converged = False
    while True:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        if record_history:
            history.append(vals[0])
        spread = vals[-1] - vals[0]
        if spread <= ftol and np.max(np.abs(pts[1:] - pts[0])) <= xtol:
            converged = True
            break
        if nfev >= max_fev:
            break
        nit += 1

        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = _safe(f, xr)
        nfev += 1
        if fr < vals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = _safe(f, xe)
            nfev += 1
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + rho * (xr - centroid)
            fc = _safe(f, xc)
            nfev += 1
            if fc <= fr:
                pts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = centroid + rho * (worst - centroid)
            fc = _safe(f, xc)
            nfev += 1
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
                continue
        pts[1:] = pts[0] + sigma * (pts[1:] - pts[0])
        vals[1:] = [_safe(f, p) for p in pts[1:]]
        nfev += d

    return SimplexResult(pts[0].copy(), float(vals[0]), nfev, nit, converged, history)
