"""Experiment configuration, seeded sweeps and plot-data emission."""
from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io as _io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import estimators as est
from .dynamics import (NoiseConfig, NonlinearCase, add_observation_noise, simulate_linear,
                       simulate_nonlinear)
from .errors import InvalidArgumentError, NetTopoError, PersistenceError
from .metrics import eier, f_score, metric_report, ols_error_bound
from .nonlinear import infer_nonlinear
from .sampling import deviation_norm
from .topology import (DirectedGraph, Stability, random_digraph, scale_to_asymptotic,
                       weights_laplacian, weights_metropolis)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on older interpreters
    import tomli as tomllib


class Experiment(enum.Enum):
    DEVIATION = "deviation"
    SELF_ERROR = "self_error"
    CONVERGENCE = "convergence"
    COMPARISON = "comparison"
    NONLINEAR = "nonlinear"
    ONLINE = "online"


DEFAULT_HORIZONS = tuple(int(round(10 ** e)) for e in np.arange(2.0, 5.01, 0.5))
STABILITY_NAMES = {"asymptotic": Stability.ASYMPTOTICALLY_STABLE,
                   "marginal": Stability.MARGINALLY_STABLE}

EXPERIMENT_METHODS = {
    Experiment.SELF_ERROR: ("ols", "causality", "corr"),
    Experiment.CONVERGENCE: ("ols", "causality"),
    Experiment.COMPARISON: ("ols", "causality", "corr", "tls"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one experiment; field names double as config-file keys."""

    experiment: Experiment = Experiment.CONVERGENCE
    n: int = 20
    density: float = 0.3
    gamma: float = 1.0
    alpha: Optional[float] = 0.9
    x0_range: tuple = (400.0, 600.0)
    sigma_theta_sq: float = 1.0
    sigma_upsilon_sq: object = 1.0
    horizons: tuple = DEFAULT_HORIZONS
    n_seeds: int = 20
    output_dir: str = "results"
    seed: int = 0
    weight_rule: str = "laplacian"
    stabilities: tuple = ("asymptotic", "marginal")
    delta: float = 0.1
    nonlinear_cases: tuple = ("case1", "case2")
    nonlinear_sigma_upsilon: tuple = (0.1, 0.4, 0.7, 1.0)
    switch_time: int = 500
    online_horizon: int = 1000
    flip_fraction: float = 0.2
    k0: float = 100.0
    detector_threshold: Optional[float] = None
    detector_factor: float = 5.0
    detector_window: int = 50
    burn_in: Optional[int] = None

    def __post_init__(self):
        exp = Experiment(self.experiment)
        object.__setattr__(self, "experiment", exp)
        horizons = tuple(int(h) for h in self.horizons)
        if not horizons or any(b <= a for a, b in zip(horizons, horizons[1:])) or horizons[0] < 1:
            raise InvalidArgumentError("horizons must be a non-empty increasing list of positive integers")
        object.__setattr__(self, "horizons", horizons)
        if self.n_seeds < 1:
            raise InvalidArgumentError("n_seeds must be at least 1")
        if self.n < 2:
            raise InvalidArgumentError("n must be at least 2")
        lo, hi = (float(v) for v in self.x0_range)
        if hi < lo:
            raise InvalidArgumentError("x0_range must be [lo, hi] with lo <= hi")
        object.__setattr__(self, "x0_range", (lo, hi))
        s_up = self.sigma_upsilon_sq
        if isinstance(s_up, (list, tuple, np.ndarray)):
            s_up = tuple(float(v) for v in s_up)
            if len(s_up) != self.n:
                raise InvalidArgumentError(f"per-node sigma_upsilon_sq needs {self.n} entries")
        else:
            s_up = float(s_up)
        object.__setattr__(self, "sigma_upsilon_sq", s_up)
        NoiseConfig(self.sigma_theta_sq, np.asarray(s_up))  # validates the noise ordering
        bad = [s for s in self.stabilities if s not in STABILITY_NAMES]
        if bad:
            raise InvalidArgumentError(f"unknown stabilities {bad}; use {sorted(STABILITY_NAMES)}")
        object.__setattr__(self, "stabilities", tuple(self.stabilities))
        if self.weight_rule not in ("laplacian", "metropolis"):
            raise InvalidArgumentError(f"weight_rule must be laplacian or metropolis, got {self.weight_rule}")
        if "asymptotic" in self.stabilities and not (self.alpha and 0 < self.alpha < 1):
            raise InvalidArgumentError("asymptotically stable runs need alpha in (0, 1)")
        for case in self.nonlinear_cases:
            NonlinearCase(case)
        object.__setattr__(self, "nonlinear_cases", tuple(self.nonlinear_cases))
        object.__setattr__(self, "nonlinear_sigma_upsilon",
                           tuple(float(v) for v in self.nonlinear_sigma_upsilon))
        if not 0 < self.switch_time < self.online_horizon:
            raise InvalidArgumentError("switch_time must lie strictly inside the online horizon")

    @property
    def noise(self) -> NoiseConfig:
        s = self.sigma_upsilon_sq
        return NoiseConfig(self.sigma_theta_sq, np.asarray(s) if isinstance(s, tuple) else s)

    @property
    def effective_burn_in(self) -> int:
        return 5 * self.n if self.burn_in is None else int(self.burn_in)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["experiment"] = self.experiment.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


PRESETS = {
    Experiment.COMPARISON: dict(sigma_theta_sq=0.2, sigma_upsilon_sq=0.1, x0_range=(-10.0, 10.0),
                                stabilities=("marginal",)),
    Experiment.NONLINEAR: dict(sigma_theta_sq=1.0, sigma_upsilon_sq=0.0, x0_range=(-10.0, 10.0),
                               horizons=(200, 1000, 3000), n_seeds=10),
    Experiment.ONLINE: dict(x0_range=(-10.0, 10.0), stabilities=("asymptotic",), n_seeds=10),
}


def preset(experiment, **overrides) -> ExperimentConfig:
    """Default configuration for an experiment with its published settings applied."""
    exp = Experiment(experiment)
    values = dict(PRESETS.get(exp, {}))
    values.update(overrides)
    return ExperimentConfig(experiment=exp, **values)


def load_config(path) -> ExperimentConfig:
    """Read a TOML config; unknown keys are rejected, missing ones take preset defaults."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise PersistenceError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidArgumentError(f"config {path} is not valid TOML: {exc}") from exc
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {unknown}")
    if "experiment" not in raw:
        raise InvalidArgumentError("config must name an experiment")
    try:
        return preset(raw.pop("experiment"), **raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NetTopoError):
            raise
        raise InvalidArgumentError(f"invalid config value: {exc}") from exc


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for a (master, key...) tuple."""
    state = np.random.SeedSequence([int(master), *[int(k) for k in keys]]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass
class RunRecord:
    """All rows produced for one seed index of a sweep."""

    config_hash: str
    seed_index: int
    seed: int
    rows: list = field(default_factory=list)
    timing: float = 0.0
    streams: dict = field(default_factory=dict)


def build_topology(cfg: ExperimentConfig, seed_index: int, stability: str):
    g = random_digraph(cfg.n, cfg.density, derive_seed(cfg.seed, seed_index, 0))
    w = weights_laplacian(g, cfg.gamma) if cfg.weight_rule == "laplacian" else weights_metropolis(g)
    if STABILITY_NAMES[stability] is Stability.ASYMPTOTICALLY_STABLE:
        w = scale_to_asymptotic(w, cfg.alpha)
    return g, w


def initial_state(cfg: ExperimentConfig, seed_index: int) -> np.ndarray:
    lo, hi = cfg.x0_range
    return np.random.default_rng(derive_seed(cfg.seed, seed_index, 1)).uniform(lo, hi, cfg.n)


def _estimate(method: str, traj, sigma_upsilon_sq):
    if method == "ols":
        return est.ols_estimate(traj)
    if method == "causality":
        return est.causality_estimate(traj, sigma_upsilon_sq)
    if method == "corr":
        return est.correlation_modified_estimate(traj)
    if method == "tls":
        return est.tls_estimate(traj)
    raise InvalidArgumentError(f"unknown method {method}")


def _row(seed_index, stability, horizon, method, metric, value, status="ok", sigma=None):
    return {"seed": seed_index, "stability": stability, "sigma_upsilon_sq": sigma, "T": horizon,
            "method": method, "metric": metric, "value": value, "status": status}


def _linear_rows(cfg: ExperimentConfig, seed_index: int, record: RunRecord) -> None:
    x0 = initial_state(cfg, seed_index)
    s_up = cfg.noise.sigma_upsilon_sq
    for stability in cfg.stabilities:
        _, w = build_topology(cfg, seed_index, stability)
        for h_index, horizon in enumerate(cfg.horizons):
            stream = derive_seed(cfg.seed, seed_index, 2, h_index)
            record.streams[f"{stability}/T={horizon}"] = stream
            traj = simulate_linear(w, x0, horizon, cfg.noise, stream)
            if cfg.experiment is Experiment.DEVIATION:
                try:
                    value = deviation_norm(traj, w, x0)
                    record.rows.append(_row(seed_index, stability, horizon, "sample", "deviation", value))
                except NetTopoError as exc:
                    record.rows.append(_row(seed_index, stability, horizon, "sample", "deviation",
                                            float("nan"), type(exc).__name__))
                continue
            for method in EXPERIMENT_METHODS[cfg.experiment]:
                try:
                    result = _estimate(method, traj, s_up)
                    rep = metric_report(result.w_hat, w.w)
                    metrics = {"nmse": rep.nmse, "eier": rep.eier, "fscore": rep.f_score,
                               "spectral_error": rep.spectral_error}
                    if cfg.experiment is Experiment.CONVERGENCE and method == "ols":
                        metrics["bound"] = ols_error_bound(traj, s_up, cfg.delta)
                except NetTopoError as exc:
                    record.rows.append(_row(seed_index, stability, horizon, method, "error",
                                            float("nan"), type(exc).__name__))
                    continue
                for name, value in metrics.items():
                    record.rows.append(_row(seed_index, stability, horizon, method, name, value))


def _nonlinear_rows(cfg: ExperimentConfig, seed_index: int, record: RunRecord) -> None:
    g = random_digraph(cfg.n, cfg.density, derive_seed(cfg.seed, seed_index, 0))
    truth = g.off_diagonal()
    x0 = initial_state(cfg, seed_index)
    for c_index, case in enumerate(cfg.nonlinear_cases):
        for h_index, horizon in enumerate(cfg.horizons):
            stream = derive_seed(cfg.seed, seed_index, 3, c_index, h_index)
            record.streams[f"{case}/T={horizon}"] = stream
            states = simulate_nonlinear(g, case, x0, horizon, cfg.sigma_theta_sq, stream)
            for s_index, sigma in enumerate(cfg.nonlinear_sigma_upsilon):
                obs_seed = derive_seed(cfg.seed, seed_index, 4, c_index, h_index, s_index)
                traj = add_observation_noise(states, sigma**2, obs_seed)
                try:
                    with np.errstate(invalid="ignore", over="ignore"):
                        tally = infer_nonlinear(traj.y)
                except NetTopoError as exc:
                    record.rows.append(_row(seed_index, "nonlinear", horizon, case, "error",
                                            float("nan"), type(exc).__name__, sigma**2))
                    continue
                for name, value in (("eier", eier(tally.a_hat, truth)),
                                    ("fscore", f_score(tally.a_hat, truth))):
                    record.rows.append(_row(seed_index, "nonlinear", horizon, case, name, value,
                                            sigma=sigma**2))


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run every seed of a sweep; estimator failures become error-tagged rows."""
    if cfg.experiment is Experiment.ONLINE:
        raise InvalidArgumentError("use run_online_demo for the online experiment")
    records = []
    for seed_index in range(cfg.n_seeds):
        start = time.perf_counter()
        record = RunRecord(cfg.config_hash(), seed_index, derive_seed(cfg.seed, seed_index))
        if cfg.experiment is Experiment.NONLINEAR:
            _nonlinear_rows(cfg, seed_index, record)
        else:
            _linear_rows(cfg, seed_index, record)
        record.timing = time.perf_counter() - start
        records.append(record)
    return records


TIDY_COLUMNS = ("experiment", "seed", "stability", "sigma_upsilon_sq", "T", "method", "metric",
                "value", "status")
SUMMARY_COLUMNS = ("experiment", "stability", "sigma_upsilon_sq", "T", "method", "metric",
                   "median", "q25", "q75", "count")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in header])
    return buf.getvalue()


def _sort_key(row):
    sigma = row["sigma_upsilon_sq"]
    return (row["stability"], -1.0 if sigma is None else sigma, row["seed"], row["T"],
            row["method"], row["metric"])


def summarize(rows: list, experiment: str) -> list:
    groups = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = (row["stability"], row["sigma_upsilon_sq"], row["T"], row["method"], row["metric"])
        groups.setdefault(key, []).append(row["value"])
    out = []
    for key in sorted(groups, key=lambda k: (k[0], -1.0 if k[1] is None else k[1], k[2], k[3], k[4])):
        vals = np.asarray(groups[key], dtype=float)
        q25, med, q75 = np.percentile(vals, [25, 50, 75])
        out.append({"experiment": experiment, "stability": key[0], "sigma_upsilon_sq": key[1],
                    "T": key[2], "method": key[3], "metric": key[4], "median": float(med),
                    "q25": float(q25), "q75": float(q75), "count": int(vals.size)})
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def emit_plotdata(records: list, experiment, output_dir) -> dict:
    """Write ``tidy.csv``, ``summary.csv`` and a ``timing.json`` sidecar.

    Tidy rows are ordered by (stability, noise, seed, T, method, metric) so the
    file is byte-identical across runs of the same config.
    """
    if not records:
        raise InvalidArgumentError("no records to emit")
    exp = Experiment(experiment).value
    rows = []
    for rec in records:
        rows.extend(dict(r, experiment=exp) for r in rec.rows)
    rows.sort(key=_sort_key)
    out = Path(output_dir)
    paths = {"tidy": out / "tidy.csv", "summary": out / "summary.csv", "timing": out / "timing.json"}
    _write(paths["tidy"], _csv_text(TIDY_COLUMNS, rows))
    _write(paths["summary"], _csv_text(SUMMARY_COLUMNS, summarize(rows, exp)))
    timing = {"config_hash": records[0].config_hash,
              "seconds": {str(r.seed_index): r.timing for r in records}}
    _write(paths["timing"], json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return paths


def write_manifest(cfg: ExperimentConfig, records: list, output_dir) -> Path:
    """Config, its hash and every derived stream seed, for exact reruns."""
    manifest = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(),
                "records": [{"seed_index": r.seed_index, "seed": r.seed, "streams": r.streams}
                            for r in records]}
    path = Path(output_dir) / "manifest.json"
    _write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def run_sweep(cfg: ExperimentConfig, output_dir=None) -> dict:
    """Run an experiment and write all of its artefacts."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    if cfg.experiment is Experiment.ONLINE:
        return run_online_demo(cfg, out)
    records = run_experiment(cfg)
    paths = emit_plotdata(records, cfg.experiment, out)
    paths["manifest"] = write_manifest(cfg, records, out)
    return paths


# ---------------------------------------------------------------- online demo


def flip_edges(g: DirectedGraph, fraction: float, rng_seed: int) -> DirectedGraph:
    """Toggle ``fraction`` of the off-diagonal pairs, then repair empty rows."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgumentError(f"flip fraction must lie in (0, 1], got {fraction}")
    n = g.n
    rng = np.random.default_rng(rng_seed)
    a = g.off_diagonal().astype(np.int8)
    pairs = np.argwhere(~np.eye(n, dtype=bool))
    chosen = pairs[rng.choice(len(pairs), int(np.ceil(fraction * len(pairs))), replace=False)]
    a[chosen[:, 0], chosen[:, 1]] ^= 1
    for i in range(n):
        if not a[i].any():
            a[i, (i + 1) % n] = 1
    return DirectedGraph(a)


def simulate_switched(w1, w2, x0, horizon: int, switch_time: int, noise: NoiseConfig,
                      rng_seed: int) -> np.ndarray:
    """Observations ``n x (T+1)`` with ``W1`` driving steps up to ``switch_time`` and ``W2`` after."""
    a, b = np.asarray(w1, dtype=float), np.asarray(w2, dtype=float)
    n = a.shape[0]
    rng = np.random.default_rng(rng_seed)
    theta = np.sqrt(noise.sigma_theta_sq) * rng.standard_normal((horizon, n))
    upsilon = noise.upsilon_std(n) * rng.standard_normal((horizon + 1, n))
    xs = np.empty((horizon + 1, n))
    xs[0] = x0
    for t in range(1, horizon + 1):
        xs[t] = (a if t <= switch_time else b) @ xs[t - 1] + theta[t - 1]
    return (xs + upsilon).T


@dataclass(frozen=True)
class OnlineOutcome:
    seed_index: int
    first_flag_after_switch: Optional[int]
    false_flags_before_switch: int
    flags: tuple


def online_stream(cfg: ExperimentConfig, y: np.ndarray, switch_time: Optional[int] = None):
    """Run the recursive estimator and detector over ``y``; return log rows and an outcome."""
    state = est.recursive_init(cfg.n, cfg.noise.sigma_upsilon_sq, cfg.k0)
    detector = est.ChangeDetector(cfg.detector_threshold, cfg.detector_factor,
                                  cfg.detector_window, cfg.effective_burn_in)
    rows, flags = [], []
    prev = state.w_hat_rows
    for t in range(1, y.shape[1]):
        state = est.recursive_step(state, y[:, t - 1], y[:, t])
        deviation = float(np.linalg.norm(state.w_hat_rows - prev))
        prev = state.w_hat_rows
        threshold = detector.current_threshold()
        flagged = detector.update(deviation)
        if flagged:
            flags.append(t)
        rows.append((t, deviation, threshold, int(flagged)))
    switch = cfg.switch_time if switch_time is None else switch_time
    after = [t for t in flags if t > switch]
    before = [t for t in flags if t <= switch]
    return rows, after[0] if after else None, len(before), tuple(flags)


def run_online_demo(cfg: ExperimentConfig, output_dir=None, switch: bool = True) -> dict:
    """Stream switched-topology observations through the recursive estimator.

    Writes one ``stream_seed<k>.csv`` log per seed (t, deviation, threshold,
    flag) and ``online_summary.csv`` with the first post-switch flag and the
    count of pre-switch false flags. ``switch=False`` keeps the first topology
    throughout, for false-alarm checks.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    stability = cfg.stabilities[0]
    outcomes, paths = [], {}
    for seed_index in range(cfg.n_seeds):
        g1, w1 = build_topology(cfg, seed_index, stability)
        g2 = flip_edges(g1, cfg.flip_fraction, derive_seed(cfg.seed, seed_index, 5))
        w2 = weights_laplacian(g2, cfg.gamma) if cfg.weight_rule == "laplacian" else weights_metropolis(g2)
        if STABILITY_NAMES[stability] is Stability.ASYMPTOTICALLY_STABLE:
            w2 = scale_to_asymptotic(w2, cfg.alpha)
        x0 = initial_state(cfg, seed_index)
        y = simulate_switched(w1.w, (w2 if switch else w1).w, x0, cfg.online_horizon,
                              cfg.switch_time, cfg.noise, derive_seed(cfg.seed, seed_index, 6))
        rows, first, false_flags, flags = online_stream(cfg, y)
        outcomes.append(OnlineOutcome(seed_index, first, false_flags, flags))
        text = _io.StringIO()
        writer = csv.writer(text, lineterminator="\n")
        writer.writerow(("t", "deviation", "threshold", "flag"))
        writer.writerows((t, repr(d), repr(th), f) for t, d, th, f in rows)
        path = out / f"stream_seed{seed_index}.csv"
        _write(path, text.getvalue())
        paths[f"stream_{seed_index}"] = path
    summary = _io.StringIO()
    writer = csv.writer(summary, lineterminator="\n")
    writer.writerow(("seed", "switch_time", "first_flag_after_switch", "delay", "false_flags_before_switch"))
    for o in outcomes:
        delay = "" if o.first_flag_after_switch is None else o.first_flag_after_switch - cfg.switch_time
        writer.writerow((o.seed_index, cfg.switch_time,
                         "" if o.first_flag_after_switch is None else o.first_flag_after_switch,
                         delay, o.false_flags_before_switch))
    paths["summary"] = out / "online_summary.csv"
    _write(paths["summary"], summary.getvalue())
    paths["outcomes"] = outcomes
    return paths
