"""Accuracy metrics, the finite-sample error bound and convergence-rate fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import Trajectory
from .errors import InvalidArgumentError, SingularSampleError

EDGE_THRESHOLD_REL = 1e-3


@dataclass(frozen=True)
class MetricReport:
    nmse: float
    eier: float
    f_score: float
    spectral_error: float
    frobenius_error: float


@dataclass(frozen=True)
class RateFit:
    """Log-log fit ``log err = intercept + slope log T``; ``floor`` is 0 for a plain fit."""

    slope: float
    intercept: float
    r_squared: float
    horizons: tuple
    errors: tuple
    floor: float = 0.0


def _pair(w_hat, w):
    a, b = np.asarray(w_hat, dtype=float), np.asarray(w, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected two square matrices of equal shape, got {a.shape}, {b.shape}")
    return a, b


def nmse(w_hat, w) -> float:
    """``||W_hat - W||_F / ||W||_F``."""
    a, b = _pair(w_hat, w)
    denom = np.linalg.norm(b)
    if denom == 0:
        raise InvalidArgumentError("reference matrix is zero")
    return float(np.linalg.norm(a - b) / denom)


def support(w, edge_threshold: Optional[float] = None) -> np.ndarray:
    """Boolean off-diagonal support of ``w``.

    The default threshold is ``1e-3`` times the largest off-diagonal magnitude.
    """
    m = np.abs(np.asarray(w, dtype=float))
    off = ~np.eye(m.shape[0], dtype=bool)
    if edge_threshold is None:
        top = m[off].max(initial=0.0)
        edge_threshold = EDGE_THRESHOLD_REL * top
        if top == 0:
            return np.zeros_like(off)
    return (m > edge_threshold) & off


def eier(w_hat, w, edge_threshold: Optional[float] = None) -> float:
    """Fraction of off-diagonal entries whose edge/no-edge label differs."""
    a, b = _pair(w_hat, w)
    n = a.shape[0]
    if n < 2:
        raise InvalidArgumentError("need n >= 2")
    mismatches = np.sum(support(a, edge_threshold) != support(b, edge_threshold))
    return float(mismatches / (n * (n - 1)))


def f_score(a_hat, a) -> float:
    """``2tp / (2tp + fn + fp)`` over off-diagonal entries; 1 when neither has edges."""
    x, y = _pair(a_hat, a)
    off = ~np.eye(x.shape[0], dtype=bool)
    x, y = (x != 0) & off, (y != 0) & off
    tp = int(np.sum(x & y))
    fp = int(np.sum(x & ~y))
    fn = int(np.sum(~x & y))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fn + fp)


def metric_report(w_hat, w, edge_threshold: Optional[float] = None) -> MetricReport:
    a, b = _pair(w_hat, w)
    return MetricReport(
        nmse=nmse(a, b),
        eier=eier(a, b, edge_threshold),
        f_score=f_score(support(a, edge_threshold), support(b, edge_threshold)),
        spectral_error=float(np.linalg.norm(a - b, 2)),
        frobenius_error=float(np.linalg.norm(a - b)),
    )


@dataclass(frozen=True)
class BoundTerms:
    """Ingredients of the finite-sample least-squares bound."""

    n: int
    horizon: int
    lam_min: float
    trace: float
    sigma_upsilon: float
    delta: float

    @property
    def log_term(self) -> float:
        return (np.log(5.0) + 0.5 * np.log(self.trace / self.lam_min + 1.0)
                - np.log(self.delta) / self.n)

    @property
    def noise_term(self) -> float:
        return 12.0 * np.sqrt(self.n * self.log_term)

    @property
    def bias_term(self) -> float:
        return 5.0 * self.horizon * self.sigma_upsilon / (4.0 * np.sqrt(self.lam_min))

    @property
    def value(self) -> float:
        return float((self.noise_term + self.bias_term) / np.sqrt(self.lam_min))


def bound_terms(traj: Trajectory, sigma_upsilon_sq, delta: float) -> BoundTerms:
    """Evaluate the bound ingredients with ``V_dn = lambda_min(S) I`` and ``V_up = tr(S) I``.

    ``S = Y^- (Y^-)^T`` is the unnormalised regressor Gram matrix.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    s_up = np.asarray(sigma_upsilon_sq, dtype=float)
    if np.any(s_up < 0):
        raise InvalidArgumentError("sigma_upsilon_sq must be non-negative")
    y_minus = traj.y[:, :-1]
    gram = y_minus @ y_minus.T
    lam_min = float(np.linalg.eigvalsh(gram)[0])
    if lam_min <= 0:
        raise SingularSampleError(f"regressor Gram matrix is singular (lambda_min {lam_min:.3e})",
                                  smallest_singular_value=max(lam_min, 0.0))
    return BoundTerms(traj.n, traj.horizon, lam_min, float(np.trace(gram)),
                      float(np.sqrt(np.max(s_up))), float(delta))


def ols_error_bound(traj: Trajectory, sigma_upsilon_sq, delta: float) -> float:
    """High-probability upper bound on ``||W_ols - W||_2`` for one trajectory.

    ``(12 sqrt(n L) + 5 T sigma_upsilon / (4 sqrt(lambda))) / sqrt(lambda)`` with
    ``L = log 5 + 0.5 log(tr/lambda + 1) - log(delta)/n``. For per-node noise
    the largest standard deviation is used.
    """
    return bound_terms(traj, sigma_upsilon_sq, delta).value


def _ols_line(x: np.ndarray, y: np.ndarray):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def fit_rate(horizons: Sequence[float], errors: Sequence[float], floor: bool = False,
             plateau_points: int = 2) -> RateFit:
    """Fit ``error ~ c T^slope`` (optionally ``+ floor``) on log-log axes.

    With ``floor=True`` the floor is the mean of the last ``plateau_points``
    errors and the power law is fitted to ``error - floor`` over the earlier
    points where that difference stays positive.
    """
    h = np.asarray(horizons, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.ndim != 1 or h.shape != e.shape or h.size < 2:
        raise InvalidArgumentError("horizons and errors must be equal-length 1-D sequences")
    if np.any(np.diff(h) <= 0) or np.any(h <= 0):
        raise InvalidArgumentError("horizons must be positive and strictly increasing")
    if np.any(~(e > 0)):
        raise InvalidArgumentError("errors must be positive")
    if not floor:
        slope, intercept, r2 = _ols_line(np.log(h), np.log(e))
        return RateFit(slope, intercept, r2, tuple(h), tuple(e))
    if not 1 <= plateau_points < h.size - 1:
        raise InvalidArgumentError("plateau_points must leave at least two points to fit")
    level = float(np.mean(e[-plateau_points:]))
    excess = e[:-plateau_points] - level
    keep = excess > 0
    if keep.sum() < 2:
        return RateFit(0.0, float(np.log(level)), 1.0, tuple(h), tuple(e), level)
    slope, intercept, r2 = _ols_line(np.log(h[:-plateau_points][keep]), np.log(excess[keep]))
    return RateFit(slope, intercept, r2, tuple(h), tuple(e), level)
