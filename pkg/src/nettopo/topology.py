"""Directed graphs, weight rules and stability classification."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_STABILITY_TOL = 1e-9


class Stability(enum.Enum):
    ASYMPTOTICALLY_STABLE = "asymptotically_stable"
    MARGINALLY_STABLE = "marginally_stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph on nodes ``0..n-1``.

    ``adjacency[i, j] == 1`` means node ``i`` uses information from node ``j``,
    i.e. ``j`` is an in-neighbour of ``i``.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidArgumentError(f"adjacency must be square, got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise InvalidArgumentError("adjacency entries must be 0 or 1")
        a = a.astype(np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @classmethod
    def from_edges(cls, n: int, edges) -> "DirectedGraph":
        a = np.zeros((n, n), dtype=np.int8)
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidArgumentError(f"edge ({i}, {j}) outside 0..{n - 1}")
            a[i, j] = 1
        return cls(a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> frozenset:
        return frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency)))

    def in_degrees(self) -> np.ndarray:
        """In-degree of each node, self-loops excluded."""
        off = self.adjacency.astype(np.int64).copy()
        np.fill_diagonal(off, 0)
        return off.sum(axis=1)

    def off_diagonal(self) -> np.ndarray:
        off = self.adjacency.copy()
        np.fill_diagonal(off, 0)
        return off


@dataclass(frozen=True)
class TopologyMatrix:
    w: np.ndarray
    stability: Stability

    @classmethod
    def from_array(cls, w, tol: float = DEFAULT_STABILITY_TOL) -> "TopologyMatrix":
        w = np.array(w, dtype=float)
        return cls(w, classify_stability(w, tol))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.w))))


def as_matrix(w) -> np.ndarray:
    """Accept a TopologyMatrix or anything array-like."""
    if isinstance(w, TopologyMatrix):
        return w.w
    return np.asarray(w, dtype=float)


def random_digraph(n: int, density: float, rng_seed: int) -> DirectedGraph:
    """Erdos-Renyi style digraph where every node has at least one in-neighbour.

    Each off-diagonal pair is present independently with probability
    ``density``; a node whose row comes out empty has its row redrawn.
    """
    if n < 2:
        raise InvalidArgumentError(f"need n >= 2, got {n}")
    if not 0.0 < density <= 1.0:
        raise InvalidArgumentError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(rng_seed)
    a = (rng.random((n, n)) < density).astype(np.int8)
    np.fill_diagonal(a, 0)
    for i in range(n):
        while not a[i].any():
            row = (rng.random(n) < density).astype(np.int8)
            row[i] = 0
            a[i] = row
    return DirectedGraph(a)


def _with_self_weights(w: np.ndarray) -> np.ndarray:
    np.fill_diagonal(w, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def _require_edges(g: DirectedGraph) -> np.ndarray:
    deg = g.in_degrees()
    if deg.max(initial=0) == 0:
        raise InvalidArgumentError("graph has no edges")
    return deg


def weights_laplacian(g: DirectedGraph, gamma: float = 1.0) -> TopologyMatrix:
    """``w_ij = gamma * a_ij / max_i d_i`` off the diagonal, rows summing to one."""
    if not 0.0 < gamma <= 1.0:
        raise InvalidArgumentError(f"gamma must lie in (0, 1], got {gamma}")
    deg = _require_edges(g)
    w = gamma * g.off_diagonal().astype(float) / deg.max()
    return TopologyMatrix.from_array(_with_self_weights(w))


def weights_metropolis(g: DirectedGraph) -> TopologyMatrix:
    """``w_ij = a_ij / max(d_i, d_j)`` off the diagonal, rows summing to one."""
    deg = _require_edges(g).astype(float)
    denom = np.maximum.outer(deg, deg)
    off = g.off_diagonal().astype(float)
    w = np.divide(off, denom, out=np.zeros_like(off), where=off > 0)
    return TopologyMatrix.from_array(_with_self_weights(w))


def scale_to_asymptotic(w: TopologyMatrix, alpha: float) -> TopologyMatrix:
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if w.stability is not Stability.MARGINALLY_STABLE:
        raise InvalidArgumentError(f"expected a marginally stable matrix, got {w.stability.value}")
    return TopologyMatrix.from_array(alpha * w.w)


def classify_stability(w, tol: float = DEFAULT_STABILITY_TOL) -> Stability:
    """Classify ``w`` as asymptotically stable, marginally stable or unstable.

    Marginal stability requires spectral radius one (within ``tol``) and the
    eigenvalue one to have geometric multiplicity exactly one, computed as
    ``n - rank(W - I)`` with singular values below ``tol * sigma_max`` treated
    as zero.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError("matrix has non-finite entries")
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive")
    rho = float(np.max(np.abs(np.linalg.eigvals(w))))
    if rho < 1.0 - tol:
        return Stability.ASYMPTOTICALLY_STABLE
    if rho <= 1.0 + tol:
        sv = np.linalg.svd(w - np.eye(w.shape[0]), compute_uv=False)
        cutoff = tol * max(1.0, rho, sv[0])
        multiplicity = int(np.sum(sv <= cutoff))
        if multiplicity == 1:
            return Stability.MARGINALLY_STABLE
    return Stability.UNSTABLE
