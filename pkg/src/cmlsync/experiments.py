"""Experiment orchestration: sweeps, report generation, figure-data emission.

Every run is driven by an `ExperimentConfig` and a master seed; grid points
draw their randomness from per-point derived streams, so results do not
depend on execution order and a saved manifest replays byte-for-byte.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import density as density_mod
from . import evt, observables, theory
from .errors import CmlSyncError, ConfigError, DomainError
from .lattice import LocalMap, MapSpec, NoiseSpec, simulate_ensemble

_LAMBDA_WARN_GAMMA = 2.0 / 3.0

EI_SWEEP_COLUMNS = [
    "n", "gamma", "epsilon", "realization",
    "theta_suveges", "theta_qk", "theta_theory", "theta_asymptotic",
    "xi_gpd", "flag",
]


@dataclass
class ExperimentConfig:
    """Declarative sweep description (flat, JSON-serializable)."""

    slope: int = 3
    n_values: tuple[int, ...] = (2,)
    gamma_values: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    epsilons: tuple[float, ...] = (0.0,)
    length: int = 10_000
    quantile: float = 0.98
    observable: str = "global_sync"
    realizations: int = 10
    seed: int = 0
    burn_in: int = 1000
    threads: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.slope < 2:
            raise ConfigError("slope must be an integer >= 2")
        if not self.n_values or not self.gamma_values or not self.epsilons:
            raise ConfigError("n_values, gamma_values and epsilons must be nonempty")
        if any(n < 2 for n in self.n_values):
            raise ConfigError("lattice sizes must be >= 2")
        if any(not 0.0 <= g < 1.0 for g in self.gamma_values):
            raise ConfigError("gamma values must lie in [0, 1)")
        if any(e < 0.0 for e in self.epsilons):
            raise ConfigError("noise levels must be >= 0")
        if self.length < 2 or self.realizations < 1:
            raise ConfigError("length must be >= 2 and realizations >= 1")
        if not 0.0 < self.quantile < 1.0:
            raise ConfigError("quantile must lie in (0, 1)")
        if self.observable not in ("global_sync", "local_sync", "pair_sync",
                                   "localization"):
            raise ConfigError(f"unknown observable {self.observable!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def local_map(self) -> LocalMap:
        return LocalMap.affine_mod1(self.slope)

    @property
    def lam(self) -> float:
        return 1.0 / self.slope

    def warnings(self) -> list[str]:
        out = []
        bad = [g for g in self.gamma_values if g > _LAMBDA_WARN_GAMMA]
        if bad:
            out.append(
                f"gamma values {bad} exceed the uniform-hyperbolicity "
                f"reference bound {_LAMBDA_WARN_GAMMA:.4g}"
            )
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        for key in ("n_values", "gamma_values", "epsilons"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("n_values", "gamma_values", "epsilons"):
            d[key] = list(d[key])
        return d


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)


def _point_seed(master: int, *indices: int) -> int:
    """Stable per-grid-point seed independent of execution order."""
    ss = np.random.SeedSequence([int(master), *map(int, indices)])
    return int(ss.generate_state(1, np.uint64)[0])


def _gamma_key(gamma: float) -> int:
    return int(round(gamma * 10_000))


def _eps_key(epsilon: float) -> int:
    return int(round(epsilon * 10**8))


def _grid(config: ExperimentConfig):
    for n in config.n_values:
        for gamma in config.gamma_values:
            for eps in config.epsilons:
                yield n, gamma, eps


def _run_points(config: ExperimentConfig, worker):
    points = list(_grid(config))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(worker, points))
    else:
        results = [worker(p) for p in points]
    return points, results


def _ei_point(config: ExperimentConfig, point) -> list[dict]:
    n, gamma, eps = point
    spec = MapSpec(config.local_map, n, gamma)
    seed = _point_seed(config.seed, n, _gamma_key(gamma), _eps_key(eps))
    ensemble = simulate_ensemble(
        spec, config.realizations, config.length, seed,
        noise=NoiseSpec(eps), burn_in=config.burn_in,
    )
    try:
        theta_theory = theory.ei_sync_formula(
            theory.TheoryInputs(n=n, gamma=gamma, lam=config.lam),
            config.local_map,
        )
        theta_asym = theory.ei_sync_flat_asymptotic(n, gamma, config.lam)
    except CmlSyncError:
        theta_theory = theta_asym = None
    rows = []
    for r in range(config.realizations):
        traj = ensemble[:, r, :]
        row = {
            "n": n, "gamma": gamma, "epsilon": eps, "realization": r,
            "theta_suveges": None, "theta_qk": None,
            "theta_theory": theta_theory, "theta_asymptotic": theta_asym,
            "xi_gpd": None, "flag": "",
        }
        flags = []
        try:
            series = observables.evaluate_series(traj, config.observable)
            u = observables.threshold_from_quantile(series, config.quantile)
            ind = observables.exceedance_indicator(series, u)
            row["theta_suveges"] = evt.suveges_ei(ind, config.quantile).theta
        except CmlSyncError as exc:
            flags.append(f"suveges:{type(exc).__name__}")
            series = None
        if series is not None:
            try:
                accuracy = observables.sync_accuracy_from_threshold(u)
                row["theta_qk"] = evt.qk_return_estimator(traj, accuracy)[1].theta
            except CmlSyncError as exc:
                flags.append(f"qk:{type(exc).__name__}")
            try:
                row["xi_gpd"] = evt.fit_gpd_mle(series[series > u], threshold=u).xi
            except CmlSyncError as exc:
                flags.append(f"gpd:{type(exc).__name__}")
        row["flag"] = ";".join(flags)
        rows.append(row)
    return rows


def _aggregate(rows: list[dict]) -> list[dict]:
    """Mean and sd rows per grid point, skipping flagged-missing entries."""
    keys = sorted({(r["n"], r["gamma"], r["epsilon"]) for r in rows})
    stat_cols = ["theta_suveges", "theta_qk", "theta_theory",
                 "theta_asymptotic", "xi_gpd"]
    out = []
    for n, gamma, eps in keys:
        group = [r for r in rows
                 if (r["n"], r["gamma"], r["epsilon"]) == (n, gamma, eps)]
        for label, fn in (("mean", np.mean), ("sd", lambda v: np.std(v, ddof=1))):
            agg = {"n": n, "gamma": gamma, "epsilon": eps,
                   "realization": label, "flag": ""}
            for col in stat_cols:
                vals = [r[col] for r in group if r[col] is not None]
                agg[col] = float(fn(vals)) if len(vals) > (label == "sd") else None
            out.append(agg)
    return out


def run_ei_sweep(config: ExperimentConfig) -> SweepResult:
    """Extremal-index estimates over the (n, gamma, epsilon) grid.

    One row per grid point per realization, plus mean/sd aggregate rows;
    estimator failures flag the row instead of aborting the sweep.
    """
    _, results = _run_points(config, lambda p: _ei_point(config, p))
    rows = [row for chunk in results for row in chunk]
    return SweepResult(config=config, rows=rows, aggregates=_aggregate(rows))


def export_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EI_SWEEP_COLUMNS)
        writer.writeheader()
        for row in result.rows + result.aggregates:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


# ---------------------------------------------------------------------------
# GEV block-maxima sweep
# ---------------------------------------------------------------------------

def run_gev_sweep(config: ExperimentConfig, block_size: int = 100) -> SweepResult:
    """GEV fits to block maxima of the observable, per grid point.

    Maxima over infinite observable values (exact diagonal hits) are dropped
    before fitting, with the count reported.
    """
    if config.length // block_size < 30:
        raise ConfigError("length must give at least 30 blocks")

    def worker(point):
        n, gamma, eps = point
        spec = MapSpec(config.local_map, n, gamma)
        seed = _point_seed(config.seed, n, _gamma_key(gamma), _eps_key(eps), 1)
        ensemble = simulate_ensemble(
            spec, config.realizations, config.length, seed,
            noise=NoiseSpec(eps), burn_in=config.burn_in,
        )
        rows = []
        for r in range(config.realizations):
            series = observables.evaluate_series(ensemble[:, r, :], config.observable)
            usable = config.length - config.length % block_size
            maxima = series[:usable].reshape(-1, block_size).max(axis=1)
            dropped = int(np.sum(~np.isfinite(maxima)))
            row = {"n": n, "gamma": gamma, "epsilon": eps, "realization": r,
                   "xi": None, "mu": None, "sigma": None,
                   "dropped_blocks": dropped, "flag": ""}
            try:
                fit = evt.fit_gev_mle(maxima[np.isfinite(maxima)])
                row.update(xi=fit.xi, mu=fit.mu, sigma=fit.sigma)
            except CmlSyncError as exc:
                row["flag"] = f"gev:{type(exc).__name__}"
            rows.append(row)
        return rows

    _, results = _run_points(config, worker)
    rows = [row for chunk in results for row in chunk]
    return SweepResult(config=config, rows=rows)


def export_gev_csv(result: SweepResult, path) -> None:
    cols = ["n", "gamma", "epsilon", "realization", "xi", "mu", "sigma",
            "dropped_blocks", "flag"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in result.rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


# ---------------------------------------------------------------------------
# Waiting-time reports
# ---------------------------------------------------------------------------

def run_waiting_time_report(config: ExperimentConfig, out_dir: str) -> list[dict]:
    """Per grid point: observable series, exceedance marks, waiting-time EPDF.

    Emits `series_<tag>.csv` (step, value, exceeds) and `epdf_<tag>.csv`
    (waiting_time, probability, log-scale ready); returns summary records.
    """
    os.makedirs(out_dir, exist_ok=True)
    summaries = []
    for n, gamma, eps in _grid(config):
        spec = MapSpec(config.local_map, n, gamma)
        seed = _point_seed(config.seed, n, _gamma_key(gamma), _eps_key(eps), 2)
        ensemble = simulate_ensemble(
            spec, 1, config.length, seed,
            noise=NoiseSpec(eps), burn_in=config.burn_in,
        )
        series = observables.evaluate_series(ensemble[:, 0, :], config.observable)
        u = observables.threshold_from_quantile(series, config.quantile)
        ind = observables.exceedance_indicator(series, u)
        stats = evt.extract_clusters(ind)
        epdf = evt.waiting_time_epdf(stats)
        tag = f"n{n}_g{_gamma_key(gamma)}_e{_eps_key(eps)}"
        series_path = os.path.join(out_dir, f"series_{tag}.csv")
        with open(series_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "value", "exceeds"])
            for k, (v, e) in enumerate(zip(series, ind)):
                writer.writerow([k, _fmt(float(v)), int(e)])
        epdf_path = os.path.join(out_dir, f"epdf_{tag}.csv")
        evt.export_epdf_csv(epdf, epdf_path)
        mass_at_1 = epdf.get(1, 0.0)
        summaries.append({
            "n": n, "gamma": gamma, "epsilon": eps, "threshold": u,
            "exceedances": int(stats.exceedance_count),
            "clusters": int(stats.cluster_count),
            "epdf_mass_at_1": mass_at_1,
            "series_csv": os.path.basename(series_path),
            "epdf_csv": os.path.basename(epdf_path),
        })
    return summaries


# ---------------------------------------------------------------------------
# Compound-Poisson visit-count check
# ---------------------------------------------------------------------------

def _tv_distance(empirical: np.ndarray, pmf) -> float:
    """Total variation between an empirical count histogram and a pmf.

    The model's tail mass beyond the histogram support is charged in full.
    """
    probs = np.array([pmf(k) for k in range(empirical.size)])
    tail = max(0.0, 1.0 - float(probs.sum()))
    return 0.5 * (float(np.abs(empirical - probs).sum()) + tail)


def run_compound_poisson_check(
    config: ExperimentConfig,
    accuracy: float = 5e-3,
    t: float = 1.0,
    ensemble_size: int = 400,
) -> list[dict]:
    """Visit-count distribution vs compound-Poisson and Poisson models.

    For each (n, gamma): estimate the strip measure and theta from one long
    trajectory, then count strip visits over `ensemble_size` independent
    windows of rescaled length t and compare against compound_poisson_pmf
    with p = 1 - theta_hat and against poisson_pmf.
    """
    if ensemble_size < 50:
        raise ConfigError("ensemble_size must be >= 50")
    reports = []
    for n, gamma, eps in _grid(config):
        if eps != 0.0:
            raise ConfigError("compound-Poisson check is a deterministic protocol")
        spec = MapSpec(config.local_map, n, gamma)
        seed = _point_seed(config.seed, n, _gamma_key(gamma), 3)
        ensemble = simulate_ensemble(
            spec, 1, config.length, seed, burn_in=config.burn_in,
        )
        traj = ensemble[:, 0, :]
        ind = evt.strip_indicator(traj, accuracy)
        mu_strip = float(np.mean(ind))
        if mu_strip == 0.0:
            raise DomainError(
                f"no strip visits at accuracy {accuracy}; lengthen the run"
            )
        theta_hat = evt.suveges_ei(ind, 1.0 - mu_strip).theta
        horizon = int(t / mu_strip)
        window_seed = _point_seed(config.seed, n, _gamma_key(gamma), 4)
        windows = simulate_ensemble(
            spec, ensemble_size, horizon + 1, window_seed,
            burn_in=config.burn_in,
        )
        gaps = np.max(windows, axis=-1) - np.min(windows, axis=-1)
        counts = np.sum(gaps[1:, :] <= accuracy, axis=0)
        hist = np.bincount(counts) / counts.size
        p_hat = 1.0 - theta_hat
        tv_compound = _tv_distance(
            hist, lambda k: evt.compound_poisson_pmf(t, p_hat, k)
        )
        tv_poisson = _tv_distance(hist, lambda k: evt.poisson_pmf(t, k))
        reports.append({
            "n": n, "gamma": gamma, "t": t, "accuracy": accuracy,
            "mu_strip": mu_strip, "theta_hat": theta_hat,
            "horizon": horizon, "ensemble_size": ensemble_size,
            "empirical_pmf": [float(h) for h in hist],
            "tv_compound_poisson": tv_compound,
            "tv_poisson": tv_poisson,
        })
    return reports


# ---------------------------------------------------------------------------
# Density figures
# ---------------------------------------------------------------------------

def run_density_figures(
    config: ExperimentConfig,
    out_dir: str,
    bins: int | None = None,
    density_realizations: int = 300,
    iterations_each: int = 10_000,
) -> list[dict]:
    """Invariant-density histograms and diagonal traces per (n, gamma)."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for n, gamma, eps in _grid(config):
        if n > 3:
            raise ConfigError("density figures support n in {2, 3} only")
        b = bins if bins is not None else (300 if n == 2 else 60)
        spec = MapSpec(config.local_map, n, gamma)
        seed = _point_seed(config.seed, n, _gamma_key(gamma), _eps_key(eps), 5)
        hist = density_mod.estimate_density(
            spec, density_realizations, iterations_each, b, seed,
            noise=NoiseSpec(eps), burn_in=config.burn_in,
        )
        trace = density_mod.diagonal_trace(hist)
        tag = f"n{n}_g{_gamma_key(gamma)}_e{_eps_key(eps)}"
        density_path = os.path.join(out_dir, f"density_{tag}.csv")
        trace_path = os.path.join(out_dir, f"trace_{tag}.csv")
        density_mod.export_density_csv(hist, density_path)
        density_mod.export_trace_csv(trace, trace_path)
        # rough per-cell error bar: relative sd of a multinomial cell count
        mean_count = hist.total_samples / b**n
        records.append({
            "n": n, "gamma": gamma, "epsilon": eps, "bins": b,
            "samples": int(hist.total_samples),
            "relative_cell_error": 1.0 / math.sqrt(mean_count),
            "density_csv": os.path.basename(density_path),
            "trace_csv": os.path.basename(trace_path),
        })
    return records


# ---------------------------------------------------------------------------
# Figure reproduction with manifests
# ---------------------------------------------------------------------------

FIGURE_IDS = ("dens1", "dens", "d32", "CLM_t", "CLM", "CLM_csi",
              "global_Poisson", "local_Poisson")


def _figure_config(figure_id: str, seed: int, threads: int) -> ExperimentConfig:
    gammas = tuple(round(0.1 * i, 1) for i in range(7))
    base = dict(seed=seed, threads=threads)
    if figure_id == "d32":
        return ExperimentConfig(n_values=(2, 3), gamma_values=gammas, **base)
    if figure_id == "CLM_t":
        return ExperimentConfig(
            n_values=tuple(range(3, 24)), gamma_values=gammas,
            realizations=3, **base,
        )
    if figure_id == "CLM":
        return ExperimentConfig(
            n_values=tuple(range(3, 24, 2)), gamma_values=gammas,
            epsilons=(0.0, 1e-4, 1e-2), observable="pair_sync",
            realizations=3, **base,
        )
    if figure_id == "CLM_csi":
        return ExperimentConfig(
            n_values=(3, 5, 7, 10), gamma_values=(0.0, 0.2, 0.4),
            realizations=5, **base,
        )
    if figure_id == "global_Poisson":
        return ExperimentConfig(
            n_values=(4,), gamma_values=(0.3,), epsilons=(0.0, 1e-2), **base,
        )
    if figure_id == "local_Poisson":
        return ExperimentConfig(
            n_values=(6,), gamma_values=(0.3,), epsilons=(0.0, 1e-2),
            observable="pair_sync", **base,
        )
    if figure_id == "dens1":
        return ExperimentConfig(
            n_values=(2,), gamma_values=(0.3, 0.5, 0.6), **base,
        )
    if figure_id == "dens":
        return ExperimentConfig(
            n_values=(3,), gamma_values=(0.3, 0.5), **base,
        )
    raise ConfigError(f"unknown figure id {figure_id!r}; "
                      f"expected one of {FIGURE_IDS}")


def reproduce(figure_id: str, out_dir: str, seed: int = 0,
              threads: int = 1) -> dict:
    """Emit the plot-ready data files for one figure, plus a manifest.

    Re-running with the manifest's figure id and seed regenerates every file
    byte-for-byte.
    """
    config = _figure_config(figure_id, seed, threads)
    os.makedirs(out_dir, exist_ok=True)
    outputs: list[str] = []
    extra: dict = {}
    if figure_id in ("d32", "CLM_t", "CLM"):
        result = run_ei_sweep(config)
        if figure_id == "d32":
            for n in config.n_values:
                sub = SweepResult(
                    config,
                    [r for r in result.rows if r["n"] == n],
                    [a for a in result.aggregates if a["n"] == n],
                )
                name = f"d32_n{n}.csv"
                export_sweep_csv(sub, os.path.join(out_dir, name))
                outputs.append(name)
        else:
            name = f"{figure_id}_grid.csv"
            export_sweep_csv(result, os.path.join(out_dir, name))
            outputs.append(name)
        if figure_id == "CLM_t":
            name = "CLM_t_asymptotic.csv"
            rows = [
                (n, g,
                 theory.ei_sync_formula(
                     theory.TheoryInputs(n=n, gamma=g, lam=config.lam),
                     config.local_map),
                 theory.ei_sync_flat_asymptotic(n, g, config.lam),
                 theory.ei_upper_bound_q0(n, g, config.lam, 1.0, 1.0)[0])
                for n in config.n_values for g in config.gamma_values
            ]
            theory.export_theory_sweep_csv(rows, os.path.join(out_dir, name))
            outputs.append(name)
    elif figure_id == "CLM_csi":
        result = run_gev_sweep(config)
        name = "CLM_csi.csv"
        export_gev_csv(result, os.path.join(out_dir, name))
        outputs.append(name)
    elif figure_id in ("global_Poisson", "local_Poisson"):
        summaries = run_waiting_time_report(config, out_dir)
        for s in summaries:
            outputs.extend([s["series_csv"], s["epdf_csv"]])
        extra["summaries"] = summaries
    else:  # dens1 / dens
        records = run_density_figures(config, out_dir)
        for rec in records:
            outputs.extend([rec["density_csv"], rec["trace_csv"]])
        extra["records"] = records
    manifest = {
        "figure_id": figure_id,
        "seed": seed,
        "config": config.to_dict(),
        "outputs": sorted(outputs),
        **extra,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def reproduce_from_manifest(manifest_path: str, out_dir: str) -> dict:
    """Replay a saved manifest; output files are byte-identical."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    try:
        figure_id = manifest["figure_id"]
        seed = manifest["seed"]
        threads = manifest["config"].get("threads", 1)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest: missing {exc}") from exc
    return reproduce(figure_id, out_dir, seed=seed, threads=threads)
