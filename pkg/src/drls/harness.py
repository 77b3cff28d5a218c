"""
Monte Carlo experiment harness: configs, ensembles, and theory comparison.

An experiment is described by a flat ``key = value`` config file (dotted
keys, ``#`` comments). One config pins the topology, the signal scenario,
the algorithm and its parameters, and the ensemble size; everything a run
consumes is derived deterministically from ``master_seed``, so the same
config byte-reproduces the same CSV outputs, including across worker
counts (per-run streams are seeded independently and reduced in run
order).

Recognized keys (defaults in parentheses):

topology.kind      geometric | edgelist (geometric)
topology.j         sensor count for geometric (10)
topology.radius    connectivity radius for geometric (0.45)
topology.seed      placement seed (master_seed)
topology.path      edge-list file for edgelist
scenario.kind      iid | ar (iid)
scenario.p         regressor length, iid only; ar is fixed at 4 (2)
scenario.seed      spatial-profile seed (master_seed)
scenario.sigma2_eta link-noise variance at every receiver (0.1)
scenario.rh_scale  scales the identity regressor covariance, iid only (1.0)
scenario.eps_scale multiplies the drawn observation-noise profile (1.0)
algorithm          drls_ama | drls_admom | local_rls | centralized (drls_ama)
lambda             forgetting factor in (0, 1] (0.95)
c                  consensus step size (0.1)
delta              inverse-data-matrix init scale (100.0)
T                  samples per run (2000)
runs               Monte Carlo runs (100)
burn_in            steps discarded by tail statistics (T - max(1, T // 10))
link_noise         on | off (on)
master_seed        root seed (0)
threads            worker processes (1)
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .analysis import (
    build_averaged_system,
    mean_stability_bound,
    noise_covariances,
    steady_state_solve,
    to_db,
)
from .errors import ConfigError, RunFailure
from .estimators import AdmomState, CentralizedRls, DrlsState, LocalRls
from .signals import SensorEnsembleModel, SnapshotStream, ar_scenario, iid_scenario
from .topology import random_geometric, read_edge_list

ALGORITHMS = {
    "drls_ama": DrlsState,
    "drls_admom": AdmomState,
    "local_rls": LocalRls,
    "centralized": CentralizedRls,
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    topology_kind: str = "geometric"
    topology_j: int = 10
    topology_radius: float = 0.45
    topology_seed: int | None = None
    topology_path: str | None = None
    scenario_kind: str = "iid"
    scenario_p: int | None = None
    scenario_seed: int | None = None
    scenario_sigma2_eta: float = 0.1
    scenario_rh_scale: float = 1.0
    scenario_eps_scale: float = 1.0
    algorithm: str = "drls_ama"
    lam: float = 0.95
    c: float = 0.1
    delta: float = 100.0
    t_samples: int = 2000
    runs: int = 100
    burn_in: int | None = None
    link_noise: bool = True
    master_seed: int = 0
    threads: int = 1

    @property
    def resolved_burn_in(self):
        """Steps the tail statistics skip; defaults to all but the last 10%."""
        if self.burn_in is not None:
            return self.burn_in
        return self.t_samples - max(1, self.t_samples // 10)

    def validate(self):
        if self.topology_kind not in ("geometric", "edgelist"):
            raise ConfigError(f"topology.kind must be geometric or edgelist, got {self.topology_kind!r}")
        if self.topology_kind == "edgelist" and not self.topology_path:
            raise ConfigError("topology.kind = edgelist requires topology.path")
        if self.scenario_kind not in ("iid", "ar"):
            raise ConfigError(f"scenario.kind must be iid or ar, got {self.scenario_kind!r}")
        if self.scenario_kind == "ar":
            if self.scenario_p is not None and self.scenario_p != 4:
                raise ConfigError("the ar scenario has a fixed regressor length of 4")
            if self.scenario_rh_scale != 1.0:
                raise ConfigError("scenario.rh_scale applies to the iid scenario only")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.c < 0:
            raise ConfigError(f"c must be >= 0, got {self.c}")
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.t_samples < 1:
            raise ConfigError(f"T must be >= 1, got {self.t_samples}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if not 0 <= self.resolved_burn_in < self.t_samples:
            raise ConfigError(
                f"burn_in must lie in [0, T), got {self.resolved_burn_in} with T = {self.t_samples}"
            )
        return self


def _as_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {value!r}")


def _as_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {value!r}")


def _as_switch(key, value):
    if value == "on":
        return True
    if value == "off":
        return False
    raise ConfigError(f"{key} expects on or off, got {value!r}")


_KEY_TABLE = {
    "topology.kind": ("topology_kind", lambda k, v: v),
    "topology.j": ("topology_j", _as_int),
    "topology.radius": ("topology_radius", _as_float),
    "topology.seed": ("topology_seed", _as_int),
    "topology.path": ("topology_path", lambda k, v: v),
    "scenario.kind": ("scenario_kind", lambda k, v: v),
    "scenario.p": ("scenario_p", _as_int),
    "scenario.seed": ("scenario_seed", _as_int),
    "scenario.sigma2_eta": ("scenario_sigma2_eta", _as_float),
    "scenario.rh_scale": ("scenario_rh_scale", _as_float),
    "scenario.eps_scale": ("scenario_eps_scale", _as_float),
    "algorithm": ("algorithm", lambda k, v: v),
    "lambda": ("lam", _as_float),
    "c": ("c", _as_float),
    "delta": ("delta", _as_float),
    "T": ("t_samples", _as_int),
    "runs": ("runs", _as_int),
    "burn_in": ("burn_in", _as_int),
    "link_noise": ("link_noise", _as_switch),
    "master_seed": ("master_seed", _as_int),
    "threads": ("threads", _as_int),
}


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines into a validated ExperimentConfig."""
    fields = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_TABLE:
            raise ConfigError(f"{source}:{ln}: unknown key {key!r}")
        attr, conv = _KEY_TABLE[key]
        if attr in fields:
            raise ConfigError(f"{source}:{ln}: duplicate key {key!r}")
        fields[attr] = conv(key, value)
    return ExperimentConfig(**fields).validate()


def load_config(path, **overrides):
    """Read a config file; keyword overrides win over file values."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        config = parse_config_text(fh.read(), source=path)
    if overrides:
        config = replace(config, **overrides).validate()
    return config


def build_topology(config):
    if config.topology_kind == "edgelist":
        return read_edge_list(config.topology_path)
    seed = config.topology_seed if config.topology_seed is not None else config.master_seed
    return random_geometric(config.topology_j, config.topology_radius, seed)


def build_model(config, topology):
    seed = config.scenario_seed if config.scenario_seed is not None else config.master_seed
    if config.scenario_kind == "iid":
        p = config.scenario_p if config.scenario_p is not None else 2
        model = iid_scenario(
            topology.J, p, seed, sigma2_eta=config.scenario_sigma2_eta,
            rh=config.scenario_rh_scale,
        )
    else:
        model = ar_scenario(topology.J, seed, sigma2_eta=config.scenario_sigma2_eta)
    if config.scenario_eps_scale != 1.0:
        model = SensorEnsembleModel(
            p=model.p, s0=model.s0, rh=model.rh,
            sigma2_eps=config.scenario_eps_scale * model.sigma2_eps,
            r_eta=model.r_eta, regressor_kind=model.regressor_kind,
            ar_rho=model.ar_rho, ar_beta=model.ar_beta,
            ar_sigma2_omega=model.ar_sigma2_omega,
        )
    return model.with_link_noise(config.link_noise)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSeries:
    """Ensemble-mean learning curves, one row per time step."""

    msd: np.ndarray    # (T, J) E||s_j(t) - s0||^2
    emse: np.ndarray   # (T, J) a-priori excess error power
    mse: np.ndarray    # (T, J) a-priori residual power
    runs: int

    @property
    def msd_global(self):
        return self.msd.mean(axis=1)

    @property
    def emse_global(self):
        return self.emse.mean(axis=1)

    @property
    def mse_global(self):
        return self.mse.mean(axis=1)


@dataclass(frozen=True)
class EnsembleResult:
    series: MetricSeries
    final_estimate_mean: np.ndarray       # (J, p) ensemble mean of s(T)
    network_deviation: np.ndarray | None  # (runs, T) per-run sum_j ||s_j - s0||^2
    flops_per_run: int


def _single_run(topology, model, config, collect_deviation, run_idx):
    """One Monte Carlo run; returns per-step metric samples."""
    stream = SnapshotStream(model, topology, [config.master_seed, run_idx])
    state = ALGORITHMS[config.algorithm](
        topology, model.p, config.lam, config.c, config.delta
    )
    t_total = config.t_samples
    j = topology.J
    msd = np.empty((t_total, j))
    emse = np.empty((t_total, j))
    mse = np.empty((t_total, j))
    deviation = np.empty(t_total) if collect_deviation else None
    s0 = model.s0
    # divergence is detected by the explicit finiteness check below, so the
    # overflow warnings numpy would emit on the way there are just noise
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(t_total):
            eta = stream.estimate_noise(i)
            eta_bar = stream.multiplier_noise(i)
            h, x = stream.snapshot(i + 1)
            prior = state.s - s0
            prior_proj = np.einsum("ja,ja->j", h, prior)
            emse[i] = prior_proj ** 2
            mse[i] = (x - np.einsum("ja,ja->j", h, state.s)) ** 2
            state.step(h, x, eta=eta, eta_bar=eta_bar)
            if not np.isfinite(state.s).all():
                raise RunFailure(
                    f"run {run_idx} produced non-finite estimates at step {i + 1}"
                )
            post = state.s - s0
            msd[i] = np.einsum("ja,ja->j", post, post)
            if collect_deviation:
                deviation[i] = msd[i].sum()
    return msd, emse, mse, np.array(state.s), deviation, state.flops


def run_ensemble(config, topology=None, model=None, collect_deviation=False,
                 threads=None):
    """Average `config.runs` independent runs into learning curves.

    Runs are seeded from (master_seed, run index) and reduced in run
    order, so results do not depend on the worker count. Any run that
    loses finiteness aborts the ensemble with RunFailure.
    """
    config.validate()
    if topology is None:
        topology = build_topology(config)
    if model is None:
        model = build_model(config, topology)
    threads = config.threads if threads is None else threads

    t_total, j = config.t_samples, topology.J
    msd_sum = np.zeros((t_total, j))
    emse_sum = np.zeros((t_total, j))
    mse_sum = np.zeros((t_total, j))
    final_sum = np.zeros((j, model.p))
    deviation = np.empty((config.runs, t_total)) if collect_deviation else None
    flops = 0

    worker = partial(_single_run, topology, model, config, collect_deviation)
    run_ids = range(config.runs)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = pool.map(worker, run_ids)
            for r, (msd, emse, mse, s_final, dev, fl) in enumerate(outputs):
                msd_sum += msd
                emse_sum += emse
                mse_sum += mse
                final_sum += s_final
                flops = fl
                if collect_deviation:
                    deviation[r] = dev
    else:
        for r in run_ids:
            msd, emse, mse, s_final, dev, fl = worker(r)
            msd_sum += msd
            emse_sum += emse
            mse_sum += mse
            final_sum += s_final
            flops = fl
            if collect_deviation:
                deviation[r] = dev

    n = float(config.runs)
    series = MetricSeries(
        msd=msd_sum / n, emse=emse_sum / n, mse=mse_sum / n, runs=config.runs
    )
    return EnsembleResult(
        series=series, final_estimate_mean=final_sum / n,
        network_deviation=deviation, flops_per_run=flops,
    )


@dataclass(frozen=True)
class TailStats:
    mean: float
    std: float     # flatness diagnostic over the tail window
    window: int


def steady_state_empirical(values, window):
    """Mean and spread of the last `window` entries of a learning curve."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D series, got shape {values.shape}")
    if not 1 <= window <= values.shape[0]:
        raise ValueError(
            f"tail window must lie in [1, {values.shape[0]}], got {window}"
        )
    tail = values[-window:]
    return TailStats(mean=float(tail.mean()), std=float(tail.std()), window=window)


# ---------------------------------------------------------------------------
# theory-versus-simulation comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    metric: str      # msd | emse | mse
    scope: str       # "global" or a sensor id
    predicted_db: float
    empirical_db: float

    @property
    def delta_db(self):
        return self.empirical_db - self.predicted_db


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple
    tol_db: float
    warnings: tuple
    prediction: object      # SteadyStateReport
    ensemble: EnsembleResult

    def row_pass(self, row):
        return abs(row.delta_db) <= self.tol_db

    @property
    def global_rows(self):
        return tuple(r for r in self.rows if r.scope == "global")

    @property
    def passed(self):
        """Every network-level metric within tolerance."""
        return all(self.row_pass(r) for r in self.global_rows)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("metric,scope,predicted_db,empirical_db,delta_db,pass\n")
            for r in self.rows:
                fh.write(
                    f"{r.metric},{r.scope},{r.predicted_db:.6f},"
                    f"{r.empirical_db:.6f},{r.delta_db:.6f},"
                    f"{str(self.row_pass(r)).lower()}\n"
                )


def compare_theory(config, tol_db=1.0, topology=None, model=None,
                   ensemble=None, method="auto"):
    """Predict steady-state metrics and measure them from an ensemble.

    Only the single-time-scale AMA recursion has a matching analytical
    model, so other algorithms are refused. Prediction instabilities
    raise StabilityError before any simulation runs; a consensus step at
    or above the mean-stability bound is reported as a warning.
    """
    config.validate()
    if config.algorithm != "drls_ama":
        raise ConfigError(
            f"theory comparison covers algorithm drls_ama only, got {config.algorithm!r}"
        )
    if topology is None:
        topology = build_topology(config)
    if model is None:
        model = build_model(config, topology)

    system = build_averaged_system(topology, model, config.lam, config.c)
    warnings = []
    bound = mean_stability_bound(topology, model, config.lam)
    if config.c >= bound:
        warnings.append(
            f"consensus step c = {config.c} is at or above the mean-stability "
            f"bound {bound:.6g}; the mean recursion may diverge"
        )
    noise = noise_covariances(system, model)
    prediction = steady_state_solve(system, noise, method=method)

    if ensemble is None:
        ensemble = run_ensemble(config, topology=topology, model=model)
    series = ensemble.series
    window = config.t_samples - config.resolved_burn_in

    rows = []
    for metric in ("msd", "emse", "mse"):
        pred_sensor = getattr(prediction, metric)
        emp_series = getattr(series, metric)
        emp_tail = emp_series[-window:, :].mean(axis=0)
        rows.append(ComparisonRow(
            metric=metric, scope="global",
            predicted_db=float(to_db(pred_sensor.mean())),
            empirical_db=float(to_db(emp_tail.mean())),
        ))
        for k in range(topology.J):
            rows.append(ComparisonRow(
                metric=metric, scope=str(k),
                predicted_db=float(to_db(pred_sensor[k])),
                empirical_db=float(to_db(emp_tail[k])),
            ))
    return ComparisonReport(
        rows=tuple(rows), tol_db=tol_db, warnings=tuple(warnings),
        prediction=prediction, ensemble=ensemble,
    )


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

_SERIES_HEADER = "msd_lin,msd_db,emse_lin,emse_db,mse_lin,mse_db"


def _series_cells(msd, emse, mse):
    return (
        f"{msd:.12e},{to_db(msd):.6f},{emse:.12e},{to_db(emse):.6f},"
        f"{mse:.12e},{to_db(mse):.6f}"
    )


def write_global_csv(series, path):
    """Network-mean learning curves, one row per time step."""
    msd, emse, mse = series.msd_global, series.emse_global, series.mse_global
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"t,{_SERIES_HEADER}\n")
        for i in range(msd.shape[0]):
            fh.write(f"{i + 1},{_series_cells(msd[i], emse[i], mse[i])}\n")


def write_per_sensor_csv(series, path):
    """Per-sensor learning curves, one row per (time step, sensor)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"t,sensor_id,{_SERIES_HEADER}\n")
        t_total, j = series.msd.shape
        for i in range(t_total):
            for k in range(j):
                fh.write(
                    f"{i + 1},{k},"
                    f"{_series_cells(series.msd[i, k], series.emse[i, k], series.mse[i, k])}\n"
                )
