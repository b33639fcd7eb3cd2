"""Trajectory simulation for the linear and nonlinear network models.

Noise is drawn once and stored on the trajectory so diagnostics that need the
realised noises (e.g. the noise/state cross term) can be evaluated exactly.
State arrays are ``n x (T+1)`` views over time-major buffers, so each column
``x[:, t]`` is contiguous.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InvalidArgumentError
from .topology import DirectedGraph, as_matrix

SeedLike = Union[int, Sequence[int]]


@dataclass(frozen=True)
class NoiseConfig:
    """Process and observation noise variances.

    ``sigma_upsilon_sq`` may be a per-node vector (independent but
    non-identical observation noise).
    """

    sigma_theta_sq: float
    sigma_upsilon_sq: Union[float, np.ndarray] = 0.0

    def __post_init__(self):
        s_up = np.asarray(self.sigma_upsilon_sq, dtype=float)
        if self.sigma_theta_sq < 0 or np.any(s_up < 0):
            raise InvalidArgumentError("noise variances must be non-negative")
        if np.max(s_up) > self.sigma_theta_sq:
            raise InvalidArgumentError(
                "process noise variance must dominate observation noise variance "
                f"(got {self.sigma_theta_sq} < {np.max(s_up)})"
            )
        if s_up.ndim == 1:
            object.__setattr__(self, "sigma_upsilon_sq", s_up)

    def upsilon_std(self, n: int) -> np.ndarray:
        return np.broadcast_to(np.sqrt(np.asarray(self.sigma_upsilon_sq, dtype=float)), (n,))

    @property
    def is_homogeneous(self) -> bool:
        return np.ndim(self.sigma_upsilon_sq) == 0


@dataclass(frozen=True)
class Trajectory:
    """One realisation: states ``x`` and observations ``y`` are ``n x (T+1)``.

    ``theta`` (``n x T``) is ``None`` for trajectories loaded from disk, where
    the process noise is not recoverable without the generating matrix.
    """

    x: np.ndarray
    y: np.ndarray
    theta: Optional[np.ndarray]
    upsilon: np.ndarray
    seed: Optional[int] = None
    noise: Optional[NoiseConfig] = None
    stream: Optional[int] = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def horizon(self) -> int:
        return self.x.shape[1] - 1

    def truncate(self, t_horizon: int) -> "Trajectory":
        """Prefix covering ``x_0 .. x_T`` for a shorter horizon ``T``."""
        if not 1 <= t_horizon <= self.horizon:
            raise InvalidArgumentError(f"horizon {t_horizon} outside 1..{self.horizon}")
        theta = None if self.theta is None else self.theta[:, :t_horizon]
        return Trajectory(
            self.x[:, : t_horizon + 1],
            self.y[:, : t_horizon + 1],
            theta,
            self.upsilon[:, : t_horizon + 1],
            self.seed,
            self.noise,
            self.stream,
        )


@dataclass(frozen=True)
class TrajectoryBundle:
    """Independent restarts of the same system.

    ``simulate_bundle`` guarantees a shared initial state; the constructor only
    checks that shapes agree so callers can assemble perturbed bundles.
    """

    trajectories: list = field(default_factory=list)

    def __post_init__(self):
        if not self.trajectories:
            raise InvalidArgumentError("bundle is empty")
        shapes = {tr.x.shape for tr in self.trajectories}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"bundle members disagree on shape: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def n(self) -> int:
        return self.trajectories[0].n

    @property
    def horizon(self) -> int:
        return self.trajectories[0].horizon

    def states_at(self, t: int, observed: bool = False) -> np.ndarray:
        """``n x N`` matrix of every member's state (or observation) at time ``t``."""
        if observed:
            return np.stack([tr.y[:, t] for tr in self.trajectories], axis=1)
        return np.stack([tr.x[:, t] for tr in self.trajectories], axis=1)


def _check_linear_inputs(w, x0, t_horizon):
    w = as_matrix(w)
    x0 = np.asarray(x0, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidArgumentError(f"topology matrix must be square, got {w.shape}")
    if x0.shape != (w.shape[0],):
        raise InvalidArgumentError(f"x0 has shape {x0.shape}, expected ({w.shape[0]},)")
    if int(t_horizon) != t_horizon or t_horizon < 1:
        raise InvalidArgumentError(f"horizon must be a positive integer, got {t_horizon}")
    return w, x0, int(t_horizon)


def _simulate(w, x0, t_horizon, noise: NoiseConfig, rng, seed, stream) -> Trajectory:
    n = x0.shape[0]
    theta = np.sqrt(noise.sigma_theta_sq) * rng.standard_normal((t_horizon, n))
    upsilon = noise.upsilon_std(n) * rng.standard_normal((t_horizon + 1, n))
    xs = np.empty((t_horizon + 1, n))
    xs[0] = x0
    for t in range(1, t_horizon + 1):
        xs[t] = w @ xs[t - 1] + theta[t - 1]
    ys = xs + upsilon
    return Trajectory(xs.T, ys.T, theta.T, upsilon.T, seed, noise, stream)


def simulate_linear(w, x0, t_horizon: int, noise: NoiseConfig, rng_seed: int) -> Trajectory:
    """Run ``x_t = W x_{t-1} + theta_{t-1}``, ``y_t = x_t + upsilon_t`` for ``T`` steps."""
    w, x0, t_horizon = _check_linear_inputs(w, x0, t_horizon)
    return _simulate(w, x0, t_horizon, noise, np.random.default_rng(rng_seed), rng_seed, None)


def member_rng(rng_seed: int, index: int) -> np.random.Generator:
    """Stream for bundle member ``index``; distinct for every (seed, index) pair."""
    return np.random.default_rng([int(rng_seed), int(index)])


def simulate_bundle(
    w, x0, t_horizon: int, noise: NoiseConfig, n_trajectories: int, rng_seed: int
) -> TrajectoryBundle:
    """Independent restarts from the same ``x0`` with per-member noise streams."""
    w, x0, t_horizon = _check_linear_inputs(w, x0, t_horizon)
    if n_trajectories < 2:
        raise InvalidArgumentError(f"a bundle needs at least 2 trajectories, got {n_trajectories}")
    members = [
        _simulate(w, x0, t_horizon, noise, member_rng(rng_seed, k), rng_seed, k)
        for k in range(n_trajectories)
    ]
    return TrajectoryBundle(members)


class NonlinearCase(enum.Enum):
    CASE1 = "case1"
    CASE2 = "case2"
    CUSTOM = "custom"


def _case1_drift(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = x[None, :] - x[:, None]  # z[i, j] = x_j - x_i
    num = adj * np.abs(z) * z
    denom = 1.0 + np.sum(adj * z * z, axis=1)
    return num.sum(axis=1) / denom


def _case2_drift(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = x[None, :] - x[:, None]
    return np.sum(adj * z * (2.0 / (1.0 + np.exp(-z)) - 1.0), axis=1)


def coupling_drift(adj: np.ndarray, x: np.ndarray, case: NonlinearCase,
                   phi: Optional[Callable] = None) -> np.ndarray:
    """``sum_j phi_ij(x_j - x_i)`` for every node."""
    if case is NonlinearCase.CASE1:
        return _case1_drift(adj, x)
    if case is NonlinearCase.CASE2:
        return _case2_drift(adj, x)
    z = x[None, :] - x[:, None]
    return np.sum(np.where(adj > 0, phi(z), 0.0), axis=1)


def simulate_nonlinear(
    g: DirectedGraph,
    case: Union[NonlinearCase, str],
    x0,
    t_horizon: int,
    sigma_theta_sq: float,
    rng_seed: int,
    phi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Trajectory:
    """Run ``x_{t+1}^i = x_t^i + sum_j phi_ij(x_t^j - x_t^i) + theta_t^i``.

    Observations equal states here; add observation noise with
    :func:`add_observation_noise`. A custom ``phi`` is applied elementwise to
    the matrix of differences ``x_j - x_i`` and masked by the adjacency.
    """
    case = NonlinearCase(case)
    adj = g.off_diagonal().astype(float)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (g.n,):
        raise InvalidArgumentError(f"x0 has shape {x0.shape}, expected ({g.n},)")
    if int(t_horizon) != t_horizon or t_horizon < 1:
        raise InvalidArgumentError(f"horizon must be a positive integer, got {t_horizon}")
    if sigma_theta_sq < 0:
        raise InvalidArgumentError("sigma_theta_sq must be non-negative")
    if case is NonlinearCase.CUSTOM:
        if phi is None:
            raise InvalidArgumentError("custom case needs a phi callable")
        probe = np.asarray(phi(np.zeros((g.n, g.n))), dtype=float)
        if probe.shape != (g.n, g.n) or np.any(probe != 0.0):
            raise InvalidArgumentError("custom phi must satisfy phi(0) = 0 elementwise")

    t_horizon = int(t_horizon)
    rng = np.random.default_rng(rng_seed)
    theta = np.sqrt(sigma_theta_sq) * rng.standard_normal((t_horizon, g.n))
    xs = np.empty((t_horizon + 1, g.n))
    xs[0] = x0
    with np.errstate(over="ignore"):
        for t in range(1, t_horizon + 1):
            xs[t] = xs[t - 1] + coupling_drift(adj, xs[t - 1], case, phi) + theta[t - 1]
    noise = NoiseConfig(sigma_theta_sq, 0.0)
    return Trajectory(xs.T, xs.T.copy(), theta.T, np.zeros((g.n, t_horizon + 1)), rng_seed, noise)


def add_observation_noise(traj: Trajectory, sigma_upsilon_sq, rng_seed: int) -> Trajectory:
    """Return a copy with ``y = x + upsilon`` for fresh observation noise."""
    s_up = np.broadcast_to(np.sqrt(np.asarray(sigma_upsilon_sq, dtype=float)), (traj.n,))
    rng = np.random.default_rng(rng_seed)
    upsilon = (s_up * rng.standard_normal((traj.horizon + 1, traj.n))).T
    s_theta = traj.noise.sigma_theta_sq if traj.noise is not None else float(np.max(s_up**2))
    noise = NoiseConfig(s_theta, sigma_upsilon_sq)
    return Trajectory(traj.x, traj.x + upsilon, traj.theta, upsilon, traj.seed, noise, traj.stream)
