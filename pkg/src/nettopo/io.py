"""Plain-text persistence for matrices, graphs, trajectories and estimator state.

All formats are CSV with a one-line ``#`` header. Floats are written with
``repr`` so every value round-trips bit-exactly.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import NoiseConfig, Trajectory
from .errors import InvalidArgumentError, PersistenceError
from .estimators import EstimatorResult, Method, RecursiveState
from .topology import DirectedGraph

MATRIX_TAG = "nettopo-matrix v1"
GRAPH_TAG = "nettopo-graph v1"
TRAJ_TAG = "nettopo-traj v1"
STATE_TAG = "nettopo-recursive v1"


def _fmt(v) -> str:
    return repr(float(v))


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def _read_lines(path) -> list:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc


def _parse_header(line: str, tag: str, path) -> dict:
    if not line.startswith("#"):
        raise PersistenceError(f"{path}: missing '# {tag}' header")
    parts = [p.strip() for p in line[1:].split(",")]
    if parts[0] != tag:
        raise PersistenceError(f"{path}: expected header '{tag}', found '{parts[0]}'")
    fields = {}
    for part in parts[1:]:
        key, sep, value = part.partition("=")
        if not sep:
            raise PersistenceError(f"{path}: malformed header field '{part}'")
        fields[key.strip()] = value.strip()
    return fields


def _rows_to_array(lines, path, ncols: Optional[int] = None) -> np.ndarray:
    try:
        rows = [[float(v) for v in row] for row in csv.reader(lines) if row]
    except ValueError as exc:
        raise PersistenceError(f"{path}: non-numeric entry ({exc})") from exc
    if ncols is not None and any(len(r) != ncols for r in rows):
        raise PersistenceError(f"{path}: expected {ncols} columns per row")
    return np.array(rows, dtype=float).reshape(len(rows), ncols if ncols is not None else -1)


def matrix_to_text(m) -> str:
    m = np.asarray(m, dtype=float)
    lines = [f"# {MATRIX_TAG}, n={m.shape[0]}"]
    lines += [",".join(_fmt(v) for v in row) for row in m]
    return "\n".join(lines) + "\n"


def save_matrix(path, m) -> None:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got {m.shape}")
    _write_text(path, matrix_to_text(m))


def load_matrix(path) -> np.ndarray:
    lines = _read_lines(path)
    if not lines:
        raise PersistenceError(f"{path}: empty file")
    hdr = _parse_header(lines[0], MATRIX_TAG, path)
    try:
        n = int(hdr["n"])
    except (KeyError, ValueError) as exc:
        raise PersistenceError(f"{path}: header lacks a valid n") from exc
    m = _rows_to_array(lines[1:], path, n)
    if m.shape != (n, n):
        raise PersistenceError(f"{path}: expected {n} rows, found {m.shape[0]}")
    return m


def save_graph(path, g: DirectedGraph) -> None:
    lines = [f"# {GRAPH_TAG}, n={g.n}"]
    lines += [f"{i},{j}" for i, j in sorted(g.edges)]
    _write_text(path, "\n".join(lines) + "\n")


def load_graph(path) -> DirectedGraph:
    lines = _read_lines(path)
    if not lines:
        raise PersistenceError(f"{path}: empty file")
    hdr = _parse_header(lines[0], GRAPH_TAG, path)
    try:
        n = int(hdr["n"])
        edges = [(int(r[0]), int(r[1])) for r in csv.reader(lines[1:]) if r]
    except (KeyError, ValueError, IndexError) as exc:
        raise PersistenceError(f"{path}: malformed graph file") from exc
    return DirectedGraph.from_edges(n, edges)


def _noise_field(value) -> str:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return _fmt(arr)
    return "[" + ";".join(_fmt(v) for v in arr) + "]"


def _parse_noise_field(text: str):
    if text.startswith("["):
        return np.array([float(v) for v in text.strip("[]").split(";")])
    return float(text)


def save_trajectory(path, traj: Trajectory) -> None:
    """Write columns ``t, x_1..x_n, y_1..y_n``; the header records seed and noise."""
    n, horizon = traj.n, traj.horizon
    noise = traj.noise if traj.noise is not None else NoiseConfig(0.0, 0.0)
    seed = "none" if traj.seed is None else str(int(traj.seed))
    out = _io.StringIO()
    out.write(f"# {TRAJ_TAG}, n={n}, T={horizon}, seed={seed}, "
              f"sθ2={_noise_field(noise.sigma_theta_sq)}, sυ2={_noise_field(noise.sigma_upsilon_sq)}\n")
    out.write(",".join(["t"] + [f"x_{i + 1}" for i in range(n)] + [f"y_{i + 1}" for i in range(n)]) + "\n")
    for t in range(horizon + 1):
        vals = [str(t)] + [_fmt(v) for v in traj.x[:, t]] + [_fmt(v) for v in traj.y[:, t]]
        out.write(",".join(vals) + "\n")
    _write_text(path, out.getvalue())


def load_trajectory(path) -> Trajectory:
    """Read a trajectory; process noise is not stored so ``theta`` is None."""
    lines = _read_lines(path)
    if len(lines) < 3:
        raise PersistenceError(f"{path}: trajectory file is truncated")
    hdr = _parse_header(lines[0], TRAJ_TAG, path)
    try:
        n, horizon = int(hdr["n"]), int(hdr["T"])
        seed = None if hdr["seed"] == "none" else int(hdr["seed"])
        noise = NoiseConfig(_parse_noise_field(hdr["sθ2"]), _parse_noise_field(hdr["sυ2"]))
    except (KeyError, ValueError, InvalidArgumentError) as exc:
        raise PersistenceError(f"{path}: malformed trajectory header ({exc})") from exc
    data = _rows_to_array(lines[2:], path, 2 * n + 1)
    if data.shape[0] != horizon + 1:
        raise PersistenceError(f"{path}: expected {horizon + 1} rows, found {data.shape[0]}")
    if not np.array_equal(data[:, 0], np.arange(horizon + 1)):
        raise PersistenceError(f"{path}: time column is not 0..T")
    x = np.ascontiguousarray(data[:, 1 : n + 1]).T
    y = np.ascontiguousarray(data[:, n + 1 :]).T
    return Trajectory(x, y, None, y - x, seed, noise)


def observations_from_csv(path) -> np.ndarray:
    """Observation matrix ``n x (T+1)`` from a trajectory file or a plain matrix of rows."""
    lines = _read_lines(path)
    if lines and lines[0].startswith(f"# {TRAJ_TAG}"):
        return load_trajectory(path).y
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    return _rows_to_array(body, path)


def save_estimate(path, result: EstimatorResult) -> Path:
    """Matrix CSV plus a ``.json`` sidecar; returns the sidecar path."""
    save_matrix(path, result.w_hat)
    sidecar = Path(str(path) + ".json")
    meta = {"method": result.method.value, "T": int(result.horizon),
            "conditioning": float(result.conditioning)}
    _write_text(sidecar, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_estimate(path) -> EstimatorResult:
    w_hat = load_matrix(path)
    try:
        meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
        return EstimatorResult(w_hat, Method(meta["method"]), int(meta["T"]), float(meta["conditioning"]))
    except OSError as exc:
        raise PersistenceError(f"cannot read sidecar for {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise PersistenceError(f"{path}: malformed sidecar ({exc})") from exc


def save_recursive_state(path, state: RecursiveState) -> None:
    """JSON header line followed by the estimate rows and the ``P`` matrix as CSV blocks."""
    s = state.sigma_upsilon_sq
    header = {"format": STATE_TAG, "n": state.n, "t": state.t,
              "sigma_upsilon_sq": [_fmt(v) for v in s] if isinstance(s, np.ndarray) else _fmt(s)}
    out = [json.dumps(header, sort_keys=True), "[w_hat_rows]"]
    out += [",".join(_fmt(v) for v in row) for row in state.w_hat_rows]
    out.append("[p_mat]")
    out += [",".join(_fmt(v) for v in row) for row in state.p_mat]
    _write_text(path, "\n".join(out) + "\n")


def load_recursive_state(path) -> RecursiveState:
    lines = _read_lines(path)
    try:
        header = json.loads(lines[0])
        if header.get("format") != STATE_TAG:
            raise PersistenceError(f"{path}: not a recursive-state checkpoint")
        n, t = int(header["n"]), int(header["t"])
        raw = header["sigma_upsilon_sq"]
        sigma = np.array([float(v) for v in raw]) if isinstance(raw, list) else float(raw)
        i_w, i_p = lines.index("[w_hat_rows]"), lines.index("[p_mat]")
    except (IndexError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"{path}: malformed checkpoint ({exc})") from exc
    w = _rows_to_array(lines[i_w + 1 : i_p], path, n)
    p = _rows_to_array(lines[i_p + 1 :], path, n)
    if w.shape != (n, n) or p.shape != (n, n):
        raise PersistenceError(f"{path}: checkpoint blocks do not match n={n}")
    return RecursiveState(w, p, t, sigma)
