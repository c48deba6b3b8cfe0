"""Penalized-least-squares initializer with the SCAD penalty.

Plain coordinate descent on (1/(2n)) ||y - X theta||^2 + sum_j P(|theta_j|).
It ignores endogeneity by design: its only job is to hand the sampler a
reasonable starting pattern and coefficient vector.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import NonConvergenceWarning
from .model import DesignData


def scad_penalty(t, lam: float, a: float = 3.7):
    """SCAD penalty value at |t| (vectorized)."""
    t = np.abs(np.asarray(t, dtype=float))
    inner = lam * t
    middle = (2.0 * a * lam * t - t**2 - lam**2) / (2.0 * (a - 1.0))
    outer = (a + 1.0) * lam**2 / 2.0
    return np.where(t <= lam, inner, np.where(t <= a * lam, middle, outer))


def scad_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray,
                   lam: float, a: float = 3.7) -> float:
    """Penalized least-squares objective minimized by scad_initializer."""
    r = y - X @ theta
    n = y.shape[0]
    return 0.5 * float(r @ r) / n + float(np.sum(scad_penalty(theta, lam, a)))


def scad_univariate(z: float, c: float, lam: float, a: float = 3.7) -> float:
    """Exact minimizer of (c/2) t^2 - z t + P(|t|) over t.

    Piecewise-quadratic problem; the minimum sits at a clipped stationary
    point of one of the three penalty segments, so all candidates are
    evaluated and the best kept. Handles the nonconvex middle segment for
    any c > 0.
    """
    if c <= 0.0:
        return 0.0
    az = abs(z)
    candidates = [min(max((az - lam) / c, 0.0), lam)]
    denom = c - 1.0 / (a - 1.0)
    if denom > 0.0:
        candidates.append(min(max((az - a * lam / (a - 1.0)) / denom, lam), a * lam))
    else:
        candidates.extend((lam, a * lam))
    candidates.append(max(az / c, a * lam))

    best_t, best_val = 0.0, math.inf
    for t in candidates:
        val = 0.5 * c * t * t - az * t + float(scad_penalty(t, lam, a))
        if val < best_val:
            best_t, best_val = t, val
    return math.copysign(best_t, z) if best_t != 0.0 else 0.0


def scad_initializer(data: DesignData, lambda_scad: float = 1.0, a: float = 3.7,
                     tol: float = 1e-6, max_passes: int = 1000) -> np.ndarray:
    """Coordinate-descent SCAD estimate of the regression coefficients.

    Parameters
    ----------
    data : DesignData
        Uses only y and X; instruments are ignored.
    lambda_scad : float
        Penalty level.
    a : float
        SCAD concavity parameter, must exceed 2.
    tol : float
        Relative coefficient-change tolerance for convergence.
    max_passes : int
        Pass limit; hitting it emits NonConvergenceWarning and returns the
        last iterate.
    """
    if lambda_scad <= 0:
        raise ValueError("lambda_scad must be positive")
    if a <= 2:
        raise ValueError("SCAD parameter a must exceed 2")
    X, y = data.X, data.y
    n, p = X.shape
    col_sq = np.einsum("ij,ij->j", X, X) / n
    theta = np.zeros(p)
    r = y.copy()

    for _ in range(max_passes):
        max_step = 0.0
        for j in range(p):
            cj = col_sq[j]
            if cj == 0.0:
                continue
            old = theta[j]
            zj = float(X[:, j] @ r) / n + cj * old
            new = scad_univariate(zj, cj, lambda_scad, a)
            if new != old:
                r -= X[:, j] * (new - old)
                theta[j] = new
                max_step = max(max_step, abs(new - old))
        scale = max(1.0, float(np.max(np.abs(theta))) if p else 1.0)
        if max_step <= tol * scale:
            return theta
    warnings.warn("SCAD coordinate descent hit the pass limit before reaching "
                  f"tolerance {tol}", NonConvergenceWarning)
    return theta
