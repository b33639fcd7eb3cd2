"""Structure inference for nonlinear networks by windowed local regression.

Each window of ``n + 1`` consecutive normalised observations gives an
``n``-pair least-squares fit; its off-diagonal magnitudes are split into two
clusters, and every entry's final label is decided by majority vote across
windows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSignalError, InsufficientSignalError, InvalidArgumentError
from .sampling import degenerate_threshold, normalize_window

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-9


@dataclass(frozen=True)
class WindowEstimate:
    l: int
    w_tilde: np.ndarray
    a_tilde: np.ndarray | None = None


@dataclass(frozen=True)
class VoteTally:
    counts_one: np.ndarray
    counts_zero: np.ndarray
    a_hat: np.ndarray
    skipped: list = field(default_factory=list)

    @property
    def n_windows(self) -> int:
        """Number of windows that contributed a vote."""
        return int(self.counts_one[0, 0] + self.counts_zero[0, 0])


def normalize_observations(y: np.ndarray) -> np.ndarray:
    """Centre every node's series and scale it to unit Euclidean norm."""
    return normalize_window(np.asarray(y, dtype=float))


def _window_matrices(y_norm: np.ndarray, l: int, n: int, per_window: bool):
    block = y_norm[:, l : l + n + 1]
    if per_window:
        block = normalize_window(block)
    return block[:, :-1], block[:, 1:]


def window_regress(y_norm: np.ndarray, l: int, per_window: bool = False) -> WindowEstimate:
    """Minimum-norm least-squares map over observations ``l .. l+n``.

    ``y_norm`` holds already normalised observations (``n x (T+1)``). With
    ``per_window=True`` the window is re-normalised on its own first. Raises
    DegenerateSignalError for a window with no spread or non-finite data.
    """
    n, cols = y_norm.shape
    if not 0 <= l <= cols - 1 - n:
        raise InvalidArgumentError(f"window start {l} outside 0..{cols - 1 - n}")
    y_minus, y_plus = _window_matrices(y_norm, l, n, per_window)
    spread = np.ptp(y_minus, axis=1)
    if np.all(spread <= degenerate_threshold(y_minus)):
        raise DegenerateSignalError(f"window {l} has no variation", node=0)
    return WindowEstimate(l, y_plus @ np.linalg.pinv(y_minus))


def _kmeans_1d(values: np.ndarray):
    lo, hi = float(values.min()), float(values.max())
    centres = np.array([lo, hi])
    labels = np.zeros(values.shape, dtype=bool)
    for _ in range(KMEANS_MAX_ITER):
        labels = np.abs(values - centres[1]) < np.abs(values - centres[0])
        new = np.array([
            values[~labels].mean() if np.any(~labels) else centres[0],
            values[labels].mean() if np.any(labels) else centres[1],
        ])
        shift = np.max(np.abs(new - centres))
        centres = new
        if shift <= KMEANS_TOL:
            break
    return labels, centres


def binarize_kmeans(w_tilde, rng_seed: int | None = None) -> np.ndarray:
    """Two-cluster split of off-diagonal magnitudes; the larger cluster is 1.

    Centroids start at the minimum and maximum magnitude, which makes the
    result deterministic (``rng_seed`` is accepted for interface symmetry and
    ignored). When every magnitude is equal the result is all zeros.
    """
    w = np.abs(np.asarray(w_tilde, dtype=float))
    n = w.shape[0]
    mask = ~np.eye(n, dtype=bool)
    values = w[mask]
    out = np.zeros((n, n), dtype=np.int8)
    if values.size == 0 or values.max() == values.min():
        return out
    labels, _ = _kmeans_1d(values)
    out[mask] = labels.astype(np.int8)
    return out


def infer_nonlinear(observations, rng_seed: int | None = None, per_window: bool = False,
                    keep_windows: bool = False):
    """Majority-vote adjacency from all windows of ``n + 1`` observations.

    Windows start at ``l = 0 .. T-n``, giving ``T - n + 1`` votes per entry.
    Degenerate windows are skipped and excluded from the tallies; ties count as
    absent. Returns the tally, plus the per-window estimates when
    ``keep_windows`` is set.
    """
    y = np.asarray(observations, dtype=float)
    if y.ndim != 2:
        raise InvalidArgumentError(f"observations must be n x (T+1), got shape {y.shape}")
    n, cols = y.shape
    horizon = cols - 1
    if n < 2:
        raise InvalidArgumentError("need at least two nodes")
    if horizon < n + 1:
        raise InvalidArgumentError(f"need T >= n+1 = {n + 1} steps, got {horizon}")

    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(y), axis=1))[0])
        raise DegenerateSignalError(f"node {bad} has non-finite observations", node=bad)
    y_norm = y if per_window else normalize_observations(y)

    ones = np.zeros((n, n), dtype=np.int64)
    total = 0
    skipped, windows = [], []
    for l in range(horizon - n + 1):
        try:
            est = window_regress(y_norm, l, per_window)
        except (DegenerateSignalError, np.linalg.LinAlgError):
            skipped.append(l)
            continue
        a_tilde = binarize_kmeans(est.w_tilde)
        ones += a_tilde
        total += 1
        if keep_windows:
            windows.append(WindowEstimate(l, est.w_tilde, a_tilde))
    if total == 0:
        raise InsufficientSignalError(f"all {horizon - n + 1} windows were degenerate")
    zeros = total - ones
    a_hat = (ones > zeros).astype(np.int8)
    tally = VoteTally(ones, zeros, a_hat, skipped)
    return (tally, windows) if keep_windows else tally
