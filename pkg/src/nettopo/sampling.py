"""Sample covariance pairs and analytic autocorrelations."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import NoiseConfig, Trajectory
from .errors import DegenerateSignalError, InvalidArgumentError
from .topology import as_matrix


class SampleKind(enum.Enum):
    RAW = "raw"
    CORRELATION_NORMALIZED = "correlation_normalized"


@dataclass(frozen=True)
class SamplePair:
    sigma0: np.ndarray
    sigma1: np.ndarray
    horizon: int
    kind: SampleKind


@dataclass(frozen=True)
class AnalyticAutocorr:
    """``r0 = E[x_t x_t^T]`` and ``r1 = E[x_t x_{t-1}^T]``; ``r1`` is NaN at ``t = 0``."""

    r0: np.ndarray
    r1: np.ndarray
    t: int


def _split(traj: Trajectory):
    if traj.horizon < 1:
        raise InvalidArgumentError("trajectory needs at least two observations")
    return traj.y[:, :-1], traj.y[:, 1:]


def sample_pair_raw(traj: Trajectory) -> SamplePair:
    """``Sigma0 = Y^- Y^-^T / T`` and ``Sigma1 = Y^+ Y^-^T / T``."""
    y_minus, y_plus = _split(traj)
    t = traj.horizon
    return SamplePair(y_minus @ y_minus.T / t, y_plus @ y_minus.T / t, t, SampleKind.RAW)


def degenerate_threshold(window: np.ndarray) -> np.ndarray:
    """Per-node spread floor ``1e-12 sqrt(T) (max|y| + 1)``."""
    t = window.shape[1]
    return 1e-12 * np.sqrt(t) * (np.max(np.abs(window), axis=1) + 1.0)


def normalize_window(window: np.ndarray) -> np.ndarray:
    """Centre each row and scale it to unit Euclidean norm.

    Raises DegenerateSignalError naming the first node whose spread is below
    :func:`degenerate_threshold`.
    """
    centred = window - window.mean(axis=1, keepdims=True)
    spread = np.sqrt(np.sum(centred * centred, axis=1))
    bad = np.flatnonzero(~(spread > degenerate_threshold(window)))
    if bad.size:
        raise DegenerateSignalError(f"node {int(bad[0])} has a degenerate observation window",
                                    node=int(bad[0]))
    return centred / spread[:, None]


def sample_pair_correlation(traj: Trajectory) -> SamplePair:
    """Correlation-normalised pair ``S0``, ``S1``.

    The minus window ``y_0..y_{T-1}`` and plus window ``y_1..y_T`` are each
    centred by their own mean and divided by their own root sum of squares.
    """
    y_minus, y_plus = _split(traj)
    t = traj.horizon
    yt_minus = normalize_window(y_minus)
    yt_plus = normalize_window(y_plus)
    return SamplePair(yt_minus @ yt_minus.T / t, yt_plus @ yt_minus.T / t, t,
                      SampleKind.CORRELATION_NORMALIZED)


def _power_and_gram(w: np.ndarray, t: int):
    """Return ``(W^t, sum_{m<t} W^m W^m^T)`` by binary splitting.

    Uses ``S_{a+b} = S_a + W^a S_b (W^a)^T`` so the cost is logarithmic in t.
    """
    n = w.shape[0]
    power, gram = np.eye(n), np.zeros((n, n))
    base_power, base_gram = w.copy(), np.eye(n)
    while t:
        if t & 1:
            gram = gram + power @ base_gram @ power.T
            power = power @ base_power
        t >>= 1
        if t:
            base_gram = base_gram + base_power @ base_gram @ base_power.T
            base_power = base_power @ base_power
    return power, gram


def analytic_r0(w, x0, t: int, sigma_theta_sq: float) -> np.ndarray:
    w = as_matrix(w)
    x0 = np.asarray(x0, dtype=float)
    power, gram = _power_and_gram(w, t)
    mean = power @ x0
    return np.outer(mean, mean) + sigma_theta_sq * gram


def analytic_autocorr(w, x0, t: int, sigma_theta_sq: float) -> AnalyticAutocorr:
    """Ensemble autocorrelations of the state process at time ``t``."""
    if t < 0:
        raise InvalidArgumentError(f"t must be non-negative, got {t}")
    w = as_matrix(w)
    r0 = analytic_r0(w, x0, t, sigma_theta_sq)
    if t == 0:
        r1 = np.full_like(r0, np.nan)
    else:
        r1 = w @ analytic_r0(w, x0, t - 1, sigma_theta_sq)
    return AnalyticAutocorr(r0, r1, t)


def noise_shift(sigma_upsilon_sq, n: int) -> np.ndarray:
    """``sigma^2 I`` or ``diag(sigma_i^2)`` as a dense matrix."""
    s = np.asarray(sigma_upsilon_sq, dtype=float)
    if s.ndim == 0:
        return float(s) * np.eye(n)
    if s.shape != (n,):
        raise InvalidArgumentError(f"per-node noise variance has shape {s.shape}, expected ({n},)")
    return np.diag(s)


def deviation_norm(traj: Trajectory, w, x0, sigma_cfg: Optional[NoiseConfig] = None,
                   ord=2) -> float:
    """``|| Sigma0(T) - R0(T) - sigma_upsilon^2 I ||`` (spectral by default).

    ``sigma_cfg`` defaults to the trajectory's own noise configuration. Pass
    ``ord="fro"`` for the Frobenius norm.
    """
    cfg = sigma_cfg if sigma_cfg is not None else traj.noise
    if cfg is None:
        raise InvalidArgumentError("noise configuration unknown for this trajectory")
    pair = sample_pair_raw(traj)
    r0 = analytic_r0(w, x0, pair.horizon, cfg.sigma_theta_sq)
    diff = pair.sigma0 - r0 - noise_shift(cfg.sigma_upsilon_sq, traj.n)
    return float(np.linalg.norm(diff, ord=ord))


def noise_state_cross(traj: Trajectory) -> float:
    """Spectral norm of ``Theta_T (X_T^-)^T / T`` from the stored process noise."""
    if traj.theta is None:
        raise InvalidArgumentError("trajectory does not carry its process noise")
    t = traj.horizon
    return float(np.linalg.norm(traj.theta @ traj.x[:, :-1].T / t, ord=2))
