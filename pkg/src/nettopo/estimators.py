"""Batch topology estimators and the consecutive-estimate change detector.

Every solve is gated by a conditioning floor of ``1e-10 * ||M||_2``; the
raised error carries the offending smallest singular value (or eigenvalue).
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import Trajectory, TrajectoryBundle
from .errors import (IllConditionedError, InvalidArgumentError, SingularSampleError,
                     UpdateDegenerateError)
from .sampling import noise_shift, sample_pair_correlation, sample_pair_raw

COND_FLOOR = 1e-10


class Method(enum.Enum):
    GRANGER = "granger"
    OLS = "ols"
    CAUSALITY = "causality"
    CORRELATION_MODIFIED = "corr"
    TLS_ROW = "tls"


@dataclass(frozen=True)
class EstimatorResult:
    """Estimated topology matrix plus the smallest singular value of the inverted matrix."""

    w_hat: np.ndarray
    method: Method
    horizon: int
    conditioning: float


@dataclass(frozen=True)
class TLSRow:
    row: np.ndarray
    rho_min_sq: float
    conditioning: float


def _right_solve(lhs: np.ndarray, m: np.ndarray, error_cls, what: str):
    """Return ``(lhs @ inv(m), sigma_min(m))`` after the conditioning gate."""
    sv = np.linalg.svd(m, compute_uv=False)
    smallest = float(sv[-1])
    if not np.all(np.isfinite(sv)) or smallest <= COND_FLOOR * sv[0]:
        if error_cls is IllConditionedError:
            eig = float(np.min(np.abs(np.linalg.eigvals(m)))) if np.all(np.isfinite(m)) else np.nan
            raise IllConditionedError(f"{what} is ill-conditioned (min |eigenvalue| {eig:.3e})",
                                      smallest_eigenvalue=eig)
        raise SingularSampleError(f"{what} is singular (sigma_min {smallest:.3e})",
                                  smallest_singular_value=smallest)
    return np.linalg.solve(m.T, lhs.T).T, smallest


def granger_estimate(bundle: TrajectoryBundle, t: int, observed: bool = False) -> EstimatorResult:
    """Ensemble estimator ``R1(t) R0(t-1)^{-1}`` from independent restarts.

    Uses the states by default; ``observed=True`` uses the noisy observations
    instead, which biases the estimate by the observation noise variance.
    """
    n = bundle.n
    if len(bundle) < n + 1:
        raise InvalidArgumentError(f"need at least n+1 = {n + 1} trajectories, got {len(bundle)}")
    if not 1 <= t <= bundle.horizon:
        raise InvalidArgumentError(f"t must lie in 1..{bundle.horizon}, got {t}")
    now = bundle.states_at(t, observed)
    prev = bundle.states_at(t - 1, observed)
    count = len(bundle)
    r1 = now @ prev.T / count
    r0 = prev @ prev.T / count
    w_hat, cond = _right_solve(r1, r0, SingularSampleError, "ensemble autocorrelation R0")
    return EstimatorResult(w_hat, Method.GRANGER, t, cond)


def ols_estimate(traj: Trajectory) -> EstimatorResult:
    """Least-squares fit of ``y_t ~ W y_{t-1}``, i.e. ``Sigma1 Sigma0^{-1}``."""
    if traj.horizon < traj.n:
        raise SingularSampleError(
            f"horizon {traj.horizon} < n = {traj.n}: the sample covariance is rank deficient",
            smallest_singular_value=0.0,
        )
    pair = sample_pair_raw(traj)
    w_hat, cond = _right_solve(pair.sigma1, pair.sigma0, SingularSampleError, "sample covariance")
    return EstimatorResult(w_hat, Method.OLS, pair.horizon, cond)


def causality_estimate(traj: Trajectory, sigma_upsilon_sq) -> EstimatorResult:
    """``Sigma1 (Sigma0 - sigma_upsilon^2 I)^{-1}``.

    ``sigma_upsilon_sq`` may be a per-node vector, in which case the shift is
    ``diag(sigma_i^2)``. The shifted matrix need not be positive definite.
    """
    pair = sample_pair_raw(traj)
    shifted = pair.sigma0 - noise_shift(sigma_upsilon_sq, traj.n)
    w_hat, cond = _right_solve(pair.sigma1, shifted, IllConditionedError,
                               "noise-shifted sample covariance")
    return EstimatorResult(w_hat, Method.CAUSALITY, pair.horizon, cond)


def correlation_modified_estimate(traj: Trajectory) -> EstimatorResult:
    """``S1 S0^{-1}`` on centred, unit-norm observation windows."""
    pair = sample_pair_correlation(traj)
    w_hat, cond = _right_solve(pair.sigma1, pair.sigma0, SingularSampleError,
                               "normalised sample covariance")
    return EstimatorResult(w_hat, Method.CORRELATION_MODIFIED, pair.horizon, cond)


def tls_row_estimate(traj: Trajectory, i: int) -> TLSRow:
    """Closed-form total least squares for row ``i``.

    With ``Z = (Y^-)^T / sqrt(T)`` and ``b = (y_1^i..y_T^i) / sqrt(T)`` the row
    is ``(Z^T Z - rho_min^2 I)^{-1} Z^T b`` where ``rho_min`` is the smallest
    singular value of ``[Z, b]``.
    """
    n, t = traj.n, traj.horizon
    if not 0 <= i < n:
        raise InvalidArgumentError(f"row index {i} outside 0..{n - 1}")
    z = traj.y[:, :-1].T / np.sqrt(t)
    b = traj.y[i, 1:] / np.sqrt(t)
    sv = np.linalg.svd(np.column_stack([z, b]), compute_uv=False)
    # fewer rows than columns: the augmented matrix is rank deficient
    rho_min = 0.0 if t < n + 1 else float(sv[-1])
    rho_sq = rho_min * rho_min
    shifted = z.T @ z - rho_sq * np.eye(n)
    row, cond = _right_solve((z.T @ b)[None, :], shifted, IllConditionedError,
                             "TLS-shifted normal matrix")
    return TLSRow(row[0], rho_sq, cond)


def tls_estimate(traj: Trajectory) -> EstimatorResult:
    """Stack :func:`tls_row_estimate` over every row."""
    rows = [tls_row_estimate(traj, i) for i in range(traj.n)]
    w_hat = np.vstack([r.row for r in rows])
    return EstimatorResult(w_hat, Method.TLS_ROW, traj.horizon, min(r.conditioning for r in rows))


def _matrix(est) -> np.ndarray:
    return est.w_hat if isinstance(est, EstimatorResult) else np.asarray(est, dtype=float)


def change_detect(prev, curr, threshold: float) -> bool:
    """True when ``||W(t) - W(t-1)||_F`` exceeds ``threshold``."""
    a, b = _matrix(prev), _matrix(curr)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"estimates disagree on shape: {a.shape} vs {b.shape}")
    return bool(np.linalg.norm(b - a) > threshold)


class ChangeDetector:
    """Flags steps whose consecutive deviation exceeds a threshold.

    With ``threshold=None`` the threshold is ``factor`` times the median of the
    last ``window`` deviations; no flag is raised until ``burn_in`` deviations
    have been seen.
    """

    def __init__(self, threshold: Optional[float] = None, factor: float = 5.0,
                 window: int = 50, burn_in: int = 0):
        self.threshold = threshold
        self.factor = factor
        self.burn_in = burn_in
        self._recent = deque(maxlen=window)
        self._seen = 0

    def current_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        if not self._recent:
            return np.inf
        return self.factor * float(np.median(self._recent))

    def update(self, deviation: float) -> bool:
        threshold = self.current_threshold()
        self._seen += 1
        flagged = self._seen > self.burn_in and deviation > threshold
        self._recent.append(deviation)
        return bool(flagged)


@dataclass
class RecursiveState:
    """Online estimator state for one observation stream.

    ``w_hat_rows`` holds the current estimate with row ``i`` equal to the
    estimate of ``W_i``. Every row regresses on the same ``z_t = y_{t-1}``, so a
    single ``p_mat`` serves all rows, including the per-node noise case where
    the de-regularisation shift is ``diag(sigma_i^2)``.
    """

    w_hat_rows: np.ndarray
    p_mat: np.ndarray
    t: int
    sigma_upsilon_sq: object

    @property
    def n(self) -> int:
        return self.w_hat_rows.shape[0]

    @property
    def p_mats(self) -> list:
        """One P per row; all rows share the same matrix."""
        return [self.p_mat] * self.n

    def copy(self) -> "RecursiveState":
        s = self.sigma_upsilon_sq
        return RecursiveState(self.w_hat_rows.copy(), self.p_mat.copy(), self.t,
                              s.copy() if isinstance(s, np.ndarray) else s)


def _as_noise(sigma_upsilon_sq, n: int):
    s = np.asarray(sigma_upsilon_sq, dtype=float)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise InvalidArgumentError("sigma_upsilon_sq must be finite and non-negative")
    if s.ndim == 0:
        return float(s)
    if s.shape != (n,):
        raise InvalidArgumentError(f"per-node noise variance has shape {s.shape}, expected ({n},)")
    return s.copy()


def recursive_init(n: int, sigma_upsilon_sq, k0: float) -> RecursiveState:
    """Zero estimate with ``P_0 = k0 I``."""
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    if not k0 > 0:
        raise InvalidArgumentError(f"k0 must be positive, got {k0}")
    return RecursiveState(np.zeros((n, n)), float(k0) * np.eye(n), 0, _as_noise(sigma_upsilon_sq, n))


def _householder_basis(z: np.ndarray, norm: float) -> np.ndarray:
    """Orthogonal matrix whose first column is ``z / norm``."""
    n = z.shape[0]
    u = z / norm
    v = u.copy()
    v[0] += 1.0 if u[0] >= 0 else -1.0
    h = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    # H e_1 = -sign(u_0) u; flip the first column so it equals u exactly in sign
    h[:, 0] = u
    return h


def _update_eigs(z: np.ndarray, sigma_sq):
    """Eigen-pairs of ``z z^T - diag(sigma^2)``.

    Scalar noise uses the closed form: ``||z||^2 - sigma^2`` along ``z`` and
    ``-sigma^2`` on its orthogonal complement.
    """
    n = z.shape[0]
    if isinstance(sigma_sq, np.ndarray):
        lam, u = np.linalg.eigh(np.outer(z, z) - np.diag(sigma_sq))
        scale = max(float(z @ z), float(np.max(sigma_sq)))
        return lam, u, scale
    zz = float(z @ z)
    lam = np.full(n, -sigma_sq)
    if zz == 0.0:
        return lam, np.eye(n), sigma_sq
    lam[0] = zz - sigma_sq
    return lam, _householder_basis(z, np.sqrt(zz)), max(zz, sigma_sq)


def recursive_step(state: RecursiveState, z_t, b_t) -> RecursiveState:
    """Fold one observation pair into the estimate and return the new state.

    ``z_t`` is the previous observation ``y_{t-1}`` and ``b_t`` the current one.
    With zero observation noise the update is plain rank-one recursive least
    squares; otherwise ``P`` is updated with the Woodbury identity applied to
    ``z z^T - sigma^2 I`` and each row follows
    ``w <- (I + sigma^2 P) w + P z (b_i - z^T w)``.
    The input state is left untouched.
    """
    z = np.asarray(z_t, dtype=float)
    b = np.asarray(b_t, dtype=float)
    n = state.n
    if z.shape != (n,) or b.shape != (n,):
        raise InvalidArgumentError(f"inputs must be length-{n} vectors, got {z.shape} and {b.shape}")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(b))):
        raise InvalidArgumentError("inputs must be finite")
    p, w = state.p_mat, state.w_hat_rows
    sigma_sq = state.sigma_upsilon_sq

    if not isinstance(sigma_sq, np.ndarray) and sigma_sq == 0.0:
        pz = p @ z
        p_new = p - np.outer(pz, pz) / (1.0 + z @ pz)
        p_new = 0.5 * (p_new + p_new.T)
        w_new = w + np.outer(b - w @ z, p_new @ z)
        return RecursiveState(w_new, p_new, state.t + 1, sigma_sq)

    lam, u, scale = _update_eigs(z, sigma_sq)
    if np.min(np.abs(lam)) < COND_FLOOR * scale:
        raise UpdateDegenerateError(
            f"update has a zero eigenvalue (|lambda|={np.min(np.abs(lam)):.3e}) at step {state.t + 1}"
        )
    pu = p @ u
    core = np.diag(1.0 / lam) + u.T @ pu
    core_sv = np.linalg.svd(core, compute_uv=False)
    if not core_sv[-1] > COND_FLOOR * core_sv[0]:
        raise UpdateDegenerateError(f"Woodbury core is singular at step {state.t + 1}")
    p_new = p - pu @ np.linalg.solve(core, pu.T)
    p_new = 0.5 * (p_new + p_new.T)
    shift = p_new * sigma_sq if isinstance(sigma_sq, np.ndarray) else sigma_sq * p_new
    # rows: W (I + P D)^T with D = diag(sigma^2); P symmetric
    w_new = w + w @ shift.T + np.outer(b - w @ z, p_new @ z)
    return RecursiveState(w_new, p_new, state.t + 1,
                          sigma_sq.copy() if isinstance(sigma_sq, np.ndarray) else sigma_sq)


def recursive_run(state: RecursiveState, traj: Trajectory, start: int = 1, stop: Optional[int] = None):
    """Yield the state after each step ``t = start..stop`` of a trajectory."""
    stop = traj.horizon if stop is None else stop
    for t in range(start, stop + 1):
        state = recursive_step(state, traj.y[:, t - 1], traj.y[:, t])
        yield state
