"""Experiment drivers behind the CLI subcommands.

Every driver follows the same shape: derive the model and observations from
the config seed, fit (or load) transport maps, run seeded sampling streams,
write CSV/JSON outputs, and finish with a manifest. All randomness flows
through stream_rng(seed, tag, ...) with fixed tags, so a rerun with the same
config and seed reproduces every CSV byte for byte. Wall times live only in
the manifest; cost columns count Euler-step units by the level bookkeeping.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_hash, functional_from_config
from .discretization import CostMeter, pair_cost, path_cost
from .errors import ConfigError
from .kalman import LinearGaussianParams, filter_sequence, quantile_coupling_proxy
from .mlpf import run_mlpf, run_pf
from .models import make_model, simulate_truth
from .multilevel import allocate, n1_from_pilot, rate_fit, telescoped_estimate
from .reporting import emit_plots, write_csv
from .sampling import eval_functional, sample_coupled, sample_single
from .transport import build_level_maps, level_tolerance, load_maps, save_maps
from .validation import stream_rng

__all__ = [
    "RunManifest",
    "run_estimate",
    "run_fit_maps",
    "run_ml_vs_highest",
    "run_mlpf_compare",
    "run_mlpf_filter",
    "run_oracle",
    "run_rates",
    "run_sample",
]

# stream tags; tag 0 (bare seed) is reserved for the observation draw
_RATES, _PILOT, _ML_REP, _HL_REP = 11, 12, 13, 14
_SAMPLE, _ESTIMATE, _MLPF, _REFERENCE, _COMPARE = 15, 16, 17, 18, 19


@dataclass
class RunManifest:
    """Reproducibility record written alongside every run's outputs."""

    config_hash: str
    command: str
    seeds: list
    phases: dict = field(default_factory=dict)
    cost_units: int = 0
    outputs: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def time_phase(self, name: str):
        manifest = self

        class _Timer:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                elapsed = time.perf_counter() - self.start
                manifest.phases[name] = manifest.phases.get(name, 0.0) + elapsed
                return False

        return _Timer()

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        doc = {
            "config_hash": self.config_hash,
            "command": self.command,
            "seeds": self.seeds,
            "phases": self.phases,
            "cost_units": self.cost_units,
            "outputs": self.outputs,
            "info": self.info,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        return path


def _new_manifest(config: ExperimentConfig, command: str) -> RunManifest:
    return RunManifest(config_hash(config), command, [config.seed])


def _prepare(config: ExperimentConfig):
    model, obs_model = make_model(config.model)
    _, record = simulate_truth(model, obs_model, config.seed)
    return model, obs_model, record


def _level_tol(config: ExperimentConfig, level: int) -> float:
    return level_tolerance(level) if config.tol is None else config.tol


def _build_maps(config, model, obs_model, record, levels, manifest):
    maps = {}
    fit_seconds = {}
    with manifest.time_phase("fit_maps"):
        for level in levels:
            started = time.perf_counter()
            maps[level] = build_level_maps(
                model, obs_model, record, level, order=config.order,
                quad_order=config.quad_order, tol=_level_tol(config, level),
                max_iter=config.max_iter)
            fit_seconds[level] = time.perf_counter() - started
    manifest.info["map_fit_seconds"] = {str(l): fit_seconds[l] for l in levels}
    return maps


def _load_or_build_maps(config, model, obs_model, record, levels, manifest,
                        maps_dir=None):
    if maps_dir is None:
        return _build_maps(config, model, obs_model, record, levels, manifest)
    maps = {}
    for level in levels:
        path = Path(maps_dir) / f"maps_l{level}.json"
        if not path.exists():
            raise ConfigError(f"missing map file {path}")
        maps[level] = load_maps(path)
    manifest.info["maps_dir"] = str(maps_dir)
    return maps


def _out_dir(config: ExperimentConfig, out_dir) -> Path:
    path = Path(out_dir if out_dir is not None else config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _coupled_n1(config, maps, phi, record, manifest) -> int:
    if config.n1 is not None:
        manifest.info["n1"] = config.n1
        return config.n1
    n_obs = len(record) - 1
    rng = stream_rng(config.seed, _PILOT)
    pair = sample_coupled(maps[1], maps[0], config.pilot_size, rng)
    inc = eval_functional(phi, pair.fine) - eval_functional(phi, pair.coarse)
    base, _ = sample_single(maps[0], config.pilot_size, rng)
    base_phi = eval_functional(phi, base)
    n1 = n1_from_pilot(config.n0, float(np.var(base_phi, ddof=1)),
                       float(np.var(inc, ddof=1)),
                       cost0=path_cost(0, n_obs), cost1=pair_cost(1, n_obs))
    manifest.info["n1"] = n1
    manifest.info["pilot_size"] = config.pilot_size
    return n1


def run_oracle(config: ExperimentConfig, out_dir=None) -> Path:
    """Closed-form filter moments and coupling proxies per level and time."""
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "oracle")
    model, obs_model, record = _prepare(config)
    params = LinearGaussianParams.from_models(model)
    rows = []
    with manifest.time_phase("oracle"):
        for level in range(config.levels + 1):
            states = filter_sequence(params, record, level)
            for k, state in enumerate(states):
                proxy = (float(quantile_coupling_proxy(params, record, k,
                                                       [level])[0])
                         if level >= 1 else float("nan"))
                rows.append((level, k, state.pred_mean, state.pred_std,
                             state.upd_mean, state.upd_std, proxy))
    csv_path = out / "oracle.csv"
    write_csv(csv_path, ["level", "k", "pred_mean", "pred_std", "upd_mean",
                         "upd_std", "proxy"], rows)
    manifest.add_output(csv_path)
    manifest.write(out)
    return csv_path


def run_fit_maps(config: ExperimentConfig, out_dir=None) -> list[Path]:
    """Fit map chains for levels 0..L and write one file per level."""
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "fit-maps")
    model, obs_model, record = _prepare(config)
    maps = _build_maps(config, model, obs_model, record,
                       range(config.levels + 1), manifest)
    paths = []
    for level, composition in maps.items():
        path = out / f"maps_l{level}.json"
        save_maps(composition, path)
        manifest.add_output(path)
        paths.append(path)
    manifest.write(out)
    return paths


def run_sample(config: ExperimentConfig, out_dir=None, maps_dir=None) -> Path:
    """Emit one batch of functional values: singles at level 0, pairs above."""
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "sample")
    model, obs_model, record = _prepare(config)
    phi = functional_from_config(config)
    levels = range(config.levels + 1)
    maps = _load_or_build_maps(config, model, obs_model, record, levels,
                               manifest, maps_dir)
    n_obs = len(record) - 1
    n = config.batch_size
    rows = []
    cost = 0
    with manifest.time_phase("sampling"):
        singles, _ = sample_single(maps[0], n, stream_rng(config.seed,
                                                          _SAMPLE, 0))
        for i, value in enumerate(eval_functional(phi, singles)):
            rows.append((i, 0, float(value), float("nan")))
        cost += n * path_cost(0, n_obs)
        for level in range(1, config.levels + 1):
            pair = sample_coupled(maps[level], maps[level - 1], n,
                                  stream_rng(config.seed, _SAMPLE, level))
            phi_fine = eval_functional(phi, pair.fine)
            phi_coarse = eval_functional(phi, pair.coarse)
            for i in range(n):
                rows.append((i, level, float(phi_fine[i]),
                             float(phi_coarse[i])))
            cost += n * pair_cost(level, n_obs)
    csv_path = out / "samples.csv"
    write_csv(csv_path, ["pair_id", "level", "phi_fine", "phi_coarse"], rows)
    manifest.cost_units = cost
    manifest.add_output(csv_path)
    manifest.write(out)
    return csv_path


def run_estimate(config: ExperimentConfig, out_dir=None, maps_dir=None) -> Path:
    """Full multilevel estimate; writes estimate.json."""
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "estimate")
    model, obs_model, record = _prepare(config)
    phi = functional_from_config(config)
    levels = range(config.levels + 1)
    maps = _load_or_build_maps(config, model, obs_model, record, levels,
                               manifest, maps_dir)
    n_obs = len(record) - 1
    with manifest.time_phase("sampling"):
        n1 = _coupled_n1(config, maps, phi, record, manifest)
        counts = allocate(n1, config.beta, config.zeta, config.levels)
        rng = stream_rng(config.seed, _ESTIMATE)
        base, _ = sample_single(maps[0], config.n0, rng)
        level0 = eval_functional(phi, base)
        increments = []
        costs = [config.n0 * path_cost(0, n_obs)]
        for level in range(1, config.levels + 1):
            n = counts[level - 1]
            pair = sample_coupled(maps[level], maps[level - 1], n, rng)
            increments.append(eval_functional(phi, pair.fine)
                              - eval_functional(phi, pair.coarse))
            costs.append(n * pair_cost(level, n_obs))
        estimate = telescoped_estimate(level0, increments, costs)
    doc = {
        "value": estimate.value,
        "per_level": [
            {"level": s.level, "N": s.n_samples, "var": s.variance_estimate,
             "cost": s.cost_units}
            for s in estimate.per_level
        ],
        "total_variance": estimate.total_variance,
        "total_cost": estimate.total_cost,
    }
    json_path = out / "estimate.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    manifest.cost_units = estimate.total_cost
    manifest.add_output(json_path)
    manifest.write(out)
    return json_path


def run_rates(config: ExperimentConfig, out_dir=None) -> Path:
    """Per-level coupled increment variance and per-sample cost, plus fits."""
    if config.levels < 1:
        raise ConfigError("rates need levels >= 1")
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "rates")
    model, obs_model, record = _prepare(config)
    phi = functional_from_config(config)
    maps = _build_maps(config, model, obs_model, record,
                       range(config.levels + 1), manifest)
    n_obs = len(record) - 1
    rows = []
    total_cost = 0
    with manifest.time_phase("sampling"):
        for level in range(1, config.levels + 1):
            rng = stream_rng(config.seed, _RATES, level)
            pair = sample_coupled(maps[level], maps[level - 1],
                                  config.rate_pairs, rng)
            inc = (eval_functional(phi, pair.fine)
                   - eval_functional(phi, pair.coarse))
            cost = pair_cost(level, n_obs)
            rows.append((level, 2.0**-level, float(np.var(inc, ddof=1)),
                         cost))
            total_cost += config.rate_pairs * cost
    csv_path = out / "rates.csv"
    write_csv(csv_path, ["level", "h", "variance", "cost_units"], rows)
    manifest.add_output(csv_path)
    h = np.array([row[1] for row in rows])
    if h.size >= 3:
        v_slope, v_icept, v_r2 = rate_fit(h, [row[2] for row in rows])
        c_slope, c_icept, c_r2 = rate_fit(h, [row[3] for row in rows])
        fits_path = out / "rates_fits.csv"
        write_csv(fits_path,
                  ["slope_variance", "intercept_variance", "r2_variance",
                   "slope_cost", "intercept_cost", "r2_cost"],
                  [(v_slope, v_icept, v_r2, c_slope, c_icept, c_r2)])
        manifest.add_output(fits_path)
    manifest.cost_units = total_cost
    manifest.write(out)
    return csv_path


def _reference_value(config, model, obs_model, record, phi, manifest):
    """Oracle for squared errors: Kalman when closed-form, else a
    high-sample single-level transport estimate at reference_level."""
    if config.model == "linear_gaussian" and config.functional == "terminal_state":
        params = LinearGaussianParams.from_models(model)
        states = filter_sequence(params, record, config.reference_level)
        value = states[-1].upd_mean
        manifest.info["reference"] = {"kind": "kalman",
                                      "level": config.reference_level,
                                      "value": value}
        return value
    maps = build_level_maps(model, obs_model, record, config.reference_level,
                            order=config.order, quad_order=config.quad_order,
                            tol=_level_tol(config, config.reference_level),
                            max_iter=config.max_iter)
    samples, (value,) = sample_single(
        maps, config.reference_samples,
        stream_rng(config.seed, _REFERENCE), functionals=[phi])
    manifest.info["reference"] = {"kind": "transport",
                                  "level": config.reference_level,
                                  "samples": config.reference_samples,
                                  "value": value}
    return value


def _batch_sizes(total: int, batch: int) -> list[int]:
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def run_ml_vs_highest(config: ExperimentConfig, out_dir=None) -> Path:
    """MSE against cumulative cost for the telescoped and single-level runs.

    Both strategies replay config.replicates times with independent streams;
    squared errors against the reference average across replicates per batch
    boundary. The single-level run consumes at least the multilevel budget
    (it stops on the first batch crossing it), so the matched comparison
    never shortchanges the baseline.
    """
    if config.levels < 1:
        raise ConfigError("the comparison needs levels >= 1")
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "ml-vs-highest")
    model, obs_model, record = _prepare(config)
    phi = functional_from_config(config)
    L = config.levels
    maps = _build_maps(config, model, obs_model, record, range(L + 1),
                       manifest)
    n_obs = len(record) - 1

    # one global batch schedule: level 0 first, then each coupled level
    n1 = _coupled_n1(config, maps, phi, record, manifest)
    counts = allocate(n1, config.beta, config.zeta, L)
    schedule = [(0, size) for size in _batch_sizes(config.n0,
                                                   config.batch_size)]
    for level in range(1, L + 1):
        schedule += [(level, size)
                     for size in _batch_sizes(counts[level - 1],
                                              config.batch_size)]
    if config.max_batches is not None:
        schedule = schedule[: config.max_batches]
    manifest.info["allocation"] = {"n0": config.n0, "counts": counts}

    csv_path = out / "ml_vs_highest.csv"
    if not schedule:
        write_csv(csv_path, ["cumulative_cost", "mse_ml", "mse_highest"], [])
        manifest.add_output(csv_path)
        manifest.write(out)
        return csv_path

    oracle = _reference_value(config, model, obs_model, record, phi, manifest)
    unit_cost = {0: path_cost(0, n_obs)}
    unit_cost.update({l: pair_cost(l, n_obs) for l in range(1, L + 1)})
    ml_costs = np.cumsum([n * unit_cost[level] for level, n in schedule])

    with manifest.time_phase("multilevel_sweep"):
        ml_sq_errors = np.zeros((config.replicates, len(schedule)))
        for r in range(config.replicates):
            rng = stream_rng(config.seed, _ML_REP, r)
            sums = np.zeros(L + 1)
            counts_seen = np.zeros(L + 1)
            for b, (level, n) in enumerate(schedule):
                if level == 0:
                    batch, _ = sample_single(maps[0], n, rng)
                    values = eval_functional(phi, batch)
                else:
                    pair = sample_coupled(maps[level], maps[level - 1], n,
                                          rng)
                    values = (eval_functional(phi, pair.fine)
                              - eval_functional(phi, pair.coarse))
                sums[level] += values.sum()
                counts_seen[level] += n
                seen = counts_seen > 0
                estimate = float(np.sum(sums[seen] / counts_seen[seen]))
                ml_sq_errors[r, b] = (estimate - oracle) ** 2
    mse_ml = ml_sq_errors.mean(axis=0)

    total_budget = int(ml_costs[-1])
    hl_batch = config.batch_size
    hl_unit = path_cost(L, n_obs)
    n_hl_batches = max(1, math.ceil(total_budget / (hl_batch * hl_unit)))
    with manifest.time_phase("highest_level"):
        hl_sq_errors = np.zeros((config.replicates, n_hl_batches))
        for r in range(config.replicates):
            rng = stream_rng(config.seed, _HL_REP, r)
            total, seen = 0.0, 0
            for b in range(n_hl_batches):
                batch, _ = sample_single(maps[L], hl_batch, rng)
                total += eval_functional(phi, batch).sum()
                seen += hl_batch
                hl_sq_errors[r, b] = (total / seen - oracle) ** 2
    mse_hl = hl_sq_errors.mean(axis=0)
    hl_costs = (np.arange(1, n_hl_batches + 1)) * hl_batch * hl_unit

    # per multilevel boundary, charge the baseline the first batch whose
    # cumulative cost reaches that budget
    rows = []
    for b, cost in enumerate(ml_costs):
        j = int(np.searchsorted(hl_costs, cost, side="left"))
        j = min(j, n_hl_batches - 1)
        rows.append((int(cost), float(mse_ml[b]), float(mse_hl[j])))
    write_csv(csv_path, ["cumulative_cost", "mse_ml", "mse_highest"], rows)
    manifest.cost_units = int(ml_costs[-1] + hl_costs[-1]) * config.replicates
    manifest.add_output(csv_path)
    manifest.info["final_budget"] = {
        "cost": int(ml_costs[-1]),
        "mse_ml": float(mse_ml[-1]),
        "mse_highest": float(mse_hl[-1]),
    }
    manifest.write(out)
    return csv_path


def run_mlpf_filter(config: ExperimentConfig, out_dir=None) -> Path:
    """One multilevel particle filter run; per-level diagnostics per time."""
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "mlpf")
    model, obs_model, record = _prepare(config)
    n1 = config.n1 if config.n1 is not None else config.pilot_size
    sizes = {0: n1}
    if config.levels >= 1:
        for level, n in enumerate(allocate(n1, config.beta, config.zeta,
                                           config.levels), start=1):
            sizes[level] = max(n, 2)
    meter = CostMeter()
    with manifest.time_phase("mlpf"):
        result = run_mlpf(model, obs_model, record, range(config.levels + 1),
                          sizes, phi=lambda x: x,
                          rng=stream_rng(config.seed, _MLPF), meter=meter)
    rows = []
    for trace in result.traces:
        for k in range(trace.increments.size):
            rows.append((trace.level, k, trace.increments[k],
                         trace.ess_fine[k], trace.ess_coarse[k],
                         trace.rho[k]))
    csv_path = out / "mlpf.csv"
    write_csv(csv_path, ["level", "k", "increment_estimate", "ess_fine",
                         "ess_coarse", "rho"], rows)
    manifest.cost_units = meter.euler_steps
    manifest.info["estimate"] = result.estimate
    manifest.info["sizes"] = {str(k): v for k, v in sizes.items()}
    manifest.add_output(csv_path)
    manifest.write(out)
    return csv_path


def run_mlpf_compare(config: ExperimentConfig, out_dir=None) -> Path:
    """Transport vs particle-filter increment variance at matched sizes.

    The particle filter's per-sample variance is the replicate variance of
    its increment estimate scaled by N_l. With levels = 0 the comparison
    degenerates to the two single-level estimators at level 0.
    """
    out = _out_dir(config, out_dir)
    manifest = _new_manifest(config, "mlpf-compare")
    model, obs_model, record = _prepare(config)
    phi = functional_from_config(config)
    maps = _build_maps(config, model, obs_model, record,
                       range(config.levels + 1), manifest)
    n1 = config.n1 if config.n1 is not None else config.pilot_size
    meter = CostMeter()
    rows = []

    if config.levels == 0:
        n = max(2, n1)
        samples, _ = sample_single(maps[0], n,
                                   stream_rng(config.seed, _COMPARE, 0))
        transport_var = float(np.var(eval_functional(phi, samples), ddof=1))
        finals = [run_pf(model, obs_model, record, 0, n, lambda x: x,
                         stream_rng(config.seed, _MLPF, r),
                         meter=meter).increments[-1]
                  for r in range(config.replicates)]
        rows.append((0, n, transport_var,
                     float(n * np.var(finals, ddof=1))))
    else:
        sizes = {0: n1}
        for level, n in enumerate(allocate(n1, config.beta, config.zeta,
                                           config.levels), start=1):
            sizes[level] = max(n, 2)
        with manifest.time_phase("transport"):
            for level in range(1, config.levels + 1):
                pair = sample_coupled(maps[level], maps[level - 1],
                                      sizes[level],
                                      stream_rng(config.seed, _COMPARE,
                                                 level))
                inc = (eval_functional(phi, pair.fine)
                       - eval_functional(phi, pair.coarse))
                rows.append([level, sizes[level],
                             float(np.var(inc, ddof=1)), 0.0])
        with manifest.time_phase("mlpf"):
            increments = np.zeros((config.replicates, config.levels))
            for r in range(config.replicates):
                result = run_mlpf(model, obs_model, record,
                                  range(config.levels + 1), sizes,
                                  phi=lambda x: x,
                                  rng=stream_rng(config.seed, _MLPF, r),
                                  meter=meter)
                for level in range(1, config.levels + 1):
                    increments[r, level - 1] = \
                        result.traces[level].increments[-1]
            for level in range(1, config.levels + 1):
                rows[level - 1][3] = float(
                    sizes[level] * np.var(increments[:, level - 1], ddof=1))
        rows = [tuple(row) for row in rows]

    csv_path = out / "mlpf_compare.csv"
    write_csv(csv_path, ["level", "n", "transport_variance",
                         "mlpf_variance"], rows)
    manifest.cost_units = meter.euler_steps
    manifest.add_output(csv_path)
    manifest.write(out)
    return csv_path
