"""Command-line pipeline: returns, paths, fits, tests, tails, kurtosis, simulation and reports.

Every command writes CSV/JSON artifacts (and plot-data CSVs) into ``--out``.
Artifacts contain no timestamps and floats are written with ``repr``, so a
re-run with the same inputs and seed gives byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import rng
from .dy_model import (DEFAULT_FIT_LAGS, DyParams, Feller, FitReport, TabulatedDensity, dy_cdf, fit_dy,
                       params_from_dict, return_density)
from .gaussian import fit_gaussian, gaussian_cdf, gaussian_pdf, gaussian_sample
from .heston_sim import SimConfig, simulate_returns
from .market_data import (DataError, PathSet, PriceSeries, ReturnSeries, TrimBounds, build_histogram, choose_bin_count,
                          load_price_csv, overlapping_returns, path_shape_variation, split_paths, trim_returns,
                          write_price_csv)
from .nn_density import N_PARAMS, LEGACY_NN_PARAMS, MlpParams, mlp_density, train_mlp, training_span
from .stats_tests import (ROUNDED_TAIL_MASSES, TestResult, chi2_equal_freq, fisher_kurtosis, generated_kurtosis,
                          jarque_bera, kruskal_wallis, ks_pvalue, ks_test, lilliefors, lilliefors_null,
                          normal_prob_plot_data, p_interval, skewness, tail_counts)

SPEC_VERSION = "1.0"
DEFAULT_LAGS = (1, 5, 20, 40, 80, 100, 200, 250)
TESTS = ("jb", "lillie", "ks", "chi2", "kw")
MODELS = ("gaussian", "dy", "mlp")


class CliError(Exception):
    """Error reported as a JSON record on stderr with a nonzero exit status."""

    def __init__(self, kind: str, message: str, status: int = 2):
        super().__init__(message)
        self.kind = kind
        self.status = status


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...]
    lags: tuple[int, ...] = DEFAULT_LAGS
    reuse_data: bool = False
    trim: bool = False
    replication_df: bool = False
    alpha: float = 0.05
    seed: int = rng.DEFAULT_SEED
    out: str = "."
    explicit_lags: bool = field(default=False, compare=False)

    def __post_init__(self):
        lags = tuple(sorted(set(int(t) for t in self.lags)))
        if not lags or lags[0] < 1:
            raise CliError("bad_config", "lags must be positive integers")
        object.__setattr__(self, "lags", lags)
        if not 0 < self.alpha < 1:
            raise CliError("bad_config", f"alpha must lie in (0, 1), got {self.alpha}")

    def to_dict(self) -> dict:
        return {"inputs": list(self.inputs), "lags": list(self.lags), "reuse_data": self.reuse_data,
                "trim": self.trim, "replication_df": self.replication_df, "alpha": self.alpha, "seed": self.seed}


# -- output helpers -------------------------------------------------------------

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


class Writer:
    """Collects artifact paths; writes are sequential so file contents never interleave."""

    def __init__(self, out: str):
        self.out = out
        self.files: list[str] = []
        os.makedirs(out, exist_ok=True)

    def _path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def csv(self, name: str, header: Sequence[str], rows):
        with open(self._path(name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_num(v) for v in row])

    def json(self, name: str, obj):
        with open(self._path(name), "w", encoding="utf-8") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")

    def table(self, name: str, records: list[dict]):
        """CSV from a list of dicts; the header is the union of keys in first-seen order."""
        header: list[str] = []
        for r in records:
            header += [k for k in r if k not in header]
        self.csv(name, header, ([r.get(k) for k in header] for r in records))


# -- data preparation ---------------------------------------------------------------

def load_prices(cfg: RunConfig) -> PriceSeries:
    if not cfg.inputs:
        raise CliError("missing_input", "--input is required for this command")
    path = cfg.inputs[0]
    if not os.path.exists(path):
        raise CliError("missing_input", f"input file not found: {path}")
    try:
        return load_price_csv(path)
    except DataError as exc:
        raise CliError("bad_input", str(exc), status=1) from None


def check_trim(cfg: RunConfig, bounds: TrimBounds) -> None:
    if cfg.trim:
        missing = [t for t in cfg.lags if t not in bounds.bounds]
        if missing:
            raise CliError("incompatible_flags", f"--trim has no boundary table for lags {missing}")


def lag_series(prices: PriceSeries, tau: int, cfg: RunConfig, bounds: TrimBounds) -> list[ReturnSeries]:
    """Series analysed at lag ``tau``: one overlapping series with ``--reuse-data``, else the paths."""
    series = [overlapping_returns(prices, tau)] if cfg.reuse_data else list(split_paths(prices, tau).paths)
    if cfg.trim:
        series = [trim_returns(s, bounds) for s in series]
    return series


def pooled(series: list[ReturnSeries]) -> ReturnSeries:
    vals = np.concatenate([s.values for s in series])
    return ReturnSeries(series[0].tau, vals, 0, False, sum(s.n_trimmed for s in series))


class Context:
    """Per-run cache of loaded data and fitted models."""

    def __init__(self, cfg: RunConfig, writer: Writer):
        self.cfg = cfg
        self.w = writer
        self.bounds = TrimBounds()
        check_trim(cfg, self.bounds)
        self.prices = load_prices(cfg)
        self.errors: list[dict] = []
        self._series: dict[int, list[ReturnSeries]] = {}
        self._hist: dict = {}
        self.dy: DyParams | None = None
        self.dy_report: FitReport | None = None
        self._dy_dens: dict[int, TabulatedDensity] = {}
        self._mlp: dict[int, tuple[MlpParams, TabulatedDensity]] = {}

    def lag_error(self, tau, stage, exc):
        self.errors.append({"lag": tau, "stage": stage, "error": type(exc).__name__, "message": str(exc)})

    def error_summary(self) -> list[dict]:
        """Per-lag errors with identical (lag, stage, message) merged; path ids collected."""
        merged: dict = {}
        for e in self.errors:
            stage, _, path = e["stage"].partition(":path")
            key = (e["lag"], stage, e["error"], e["message"])
            rec = merged.setdefault(key, {"lag": e["lag"], "stage": stage, "error": e["error"],
                                          "message": e["message"], "count": 0, "paths": []})
            rec["count"] += 1
            if path:
                rec["paths"].append(int(path))
        return list(merged.values())

    def lags(self, stage: str) -> list[int]:
        """Lags whose data can be built; others are logged as per-lag errors."""
        ok = []
        for tau in self.cfg.lags:
            try:
                self.series(tau)
                ok.append(tau)
            except (ValueError, KeyError) as exc:
                self.lag_error(tau, stage, exc)
        return ok

    def series(self, tau):
        if tau not in self._series:
            self._series[tau] = lag_series(self.prices, tau, self.cfg, self.bounds)
        return self._series[tau]

    def histogram(self, tau):
        if tau not in self._hist:
            data = pooled(self.series(tau))
            self._hist[tau] = build_histogram(data, choose_bin_count(data))
        return self._hist[tau]

    def dy_density(self, tau) -> TabulatedDensity:
        if tau not in self._dy_dens:
            self._dy_dens[tau] = return_density(self.dy, tau)
        return self._dy_dens[tau]

    def mlp(self, tau):
        if tau not in self._mlp:
            h = self.histogram(tau)
            p = train_mlp(h, seed=rng.derive_seed(self.cfg.seed, tau))
            dens = mlp_density(p, training_span(h), tau)
            shift = h.center_shift
            dens = TabulatedDensity(tau, dens.x_grid + shift, dens.density, dens.cdf, dens.meta)
            p = MlpParams(p.w1, p.b1, p.w2, p.b2, dens.meta["log_norm"], p.rmse)
            self._mlp[tau] = (p, dens)
        return self._mlp[tau]


# -- model plumbing ------------------------------------------------------------------

def model_cdf(ctx: Context, model: str, tau: int, values) -> Callable:
    if model == "gaussian":
        g = fit_gaussian(values)
        return lambda x: gaussian_cdf(g, x)
    if model == "dy":
        dens = ctx.dy_density(tau)
        return lambda x: dy_cdf(dens, x)
    if model == "mlp":
        dens = ctx.mlp(tau)[1]
        return lambda x: dy_cdf(dens, x)
    raise CliError("bad_config", f"unknown model {model!r}")


def model_pdf(ctx: Context, model: str, tau: int, values, x):
    if model == "gaussian":
        return gaussian_pdf(fit_gaussian(values), x)
    dens = ctx.dy_density(tau) if model == "dy" else ctx.mlp(tau)[1]
    return np.interp(x, dens.x_grid, dens.density, left=0.0, right=0.0)


def model_dof(ctx: Context, model: str) -> int:
    if model == "gaussian":
        return 2
    if model == "dy":
        return 4 if ctx.dy is None or ctx.dy.rho == 0 else 5
    return LEGACY_NN_PARAMS if ctx.cfg.replication_df else N_PARAMS


def ensure_dy(ctx: Context, params_path: str | None, single_start: bool = False) -> None:
    if ctx.dy is not None:
        return
    if params_path:
        if not os.path.exists(params_path):
            raise CliError("missing_input", f"parameter file not found: {params_path}")
        with open(params_path, encoding="utf-8") as fh:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", Feller)
                ctx.dy = params_from_dict(json.load(fh))
        return
    fit_lags = [t for t in ctx.cfg.lags if t in DEFAULT_FIT_LAGS] if not ctx.cfg.explicit_lags else list(ctx.cfg.lags)
    fit_lags = fit_lags or list(ctx.cfg.lags)
    hists = []
    for tau in fit_lags:
        try:
            hists.append(ctx.histogram(tau))
        except (ValueError, KeyError) as exc:
            ctx.lag_error(tau, "fit_dy", exc)
    if not hists:
        raise CliError("insufficient_data", "no lag has enough data to fit the model", status=1)
    ctx.dy, ctx.dy_report = fit_dy(hists, multistart=not single_start)


# -- commands --------------------------------------------------------------------------

def cmd_returns(ctx: Context, args) -> dict:
    rows = []
    for tau in ctx.lags("returns"):
        series = ctx.series(tau)
        data = pooled(series)
        ctx.w.csv(f"returns_lag{tau}.csv", ["offset", "value"],
                  ((s.offset, v) for s in series for v in s.values))
        try:
            h = ctx.histogram(tau)
            ctx.w.csv(f"histogram_lag{tau}.csv", ["bin_center", "count", "density"],
                      zip(h.bin_centers, h.counts, h.densities))
            n_bins, kept = h.bin_edges.shape[0] - 2, h.kept_fraction
        except (ValueError, KeyError) as exc:
            ctx.lag_error(tau, "histogram", exc)
            n_bins, kept = None, None
        rows.append({"lag": tau, "n_series": len(series), "n_returns": len(data), "n_trimmed": data.n_trimmed,
                     "mean": float(data.values.mean()), "std": float(data.values.std(ddof=1)),
                     "n_bins": n_bins, "kept_fraction": kept})
    ctx.w.table("returns_summary.csv", rows)
    return {"returns_summary": rows}


def _five_numbers(v):
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return [float(x) for x in q]


def cmd_paths(ctx: Context, args) -> dict:
    per_path, per_lag = [], []
    for tau in ctx.lags("paths"):
        paths = list(split_paths(ctx.prices, tau).paths)
        if ctx.cfg.trim:
            paths = [trim_returns(p, ctx.bounds) for p in paths]
        box = []
        for p in paths:
            row = {"lag": tau, "offset": p.offset, "n": len(p)}
            try:
                g = fit_gaussian(p)
                row.update(mean=g.mu, std=g.sigma, kurtosis=fisher_kurtosis(p))
                box.append([p.offset, *_five_numbers(p.values)])
            except ValueError as exc:
                ctx.lag_error(tau, f"path{p.offset}", exc)
            per_path.append(row)
        ctx.w.csv(f"boxplot_lag{tau}.csv", ["offset", "min", "q1", "median", "q3", "max"], box)
        row = {"lag": tau, "n_paths": len(paths)}
        try:
            mu_var, sigma_var = path_shape_variation(PathSet(tau, tuple(paths)))
            row.update(mu_variation_pct=mu_var, sigma_variation_pct=sigma_var)
        except (ValueError, ZeroDivisionError) as exc:
            ctx.lag_error(tau, "path_variation", exc)
        if len(paths) >= 2:
            try:
                kw = kruskal_wallis(paths, ctx.cfg.alpha)
                row.update(kw_statistic=kw.statistic, kw_df=kw.df, kw_p=kw.p_value, kw_reject=kw.reject)
            except ValueError as exc:
                ctx.lag_error(tau, "kruskal_wallis", exc)
        per_lag.append(row)
    ctx.w.table("paths_summary.csv", per_path)
    ctx.w.table("path_variation.csv", per_lag)
    return {"paths": per_path, "path_variation": per_lag}


def _plot_pairs(ctx: Context, model: str, tau: int):
    """Semi-log density pairs at the bin centres and CDF pairs at the sorted data."""
    data = pooled(ctx.series(tau))
    h = ctx.histogram(tau)
    x = h.bin_centers + h.center_shift
    mp = model_pdf(ctx, model, tau, data, x)
    ctx.w.csv(f"density_{model}_lag{tau}.csv", ["x", "empirical_density", "model_density"], zip(x, h.densities, mp))
    xs = np.sort(data.values)
    n = xs.shape[0]
    # thin long series to at most ~2000 points for plotting
    idx = np.unique(np.linspace(0, n - 1, min(n, 2000)).astype(np.int64))
    mc = np.asarray(model_cdf(ctx, model, tau, data)(xs[idx]))
    ctx.w.csv(f"cdf_{model}_lag{tau}.csv", ["x", "empirical_cdf", "model_cdf"], zip(xs[idx], (idx + 1) / n, mc))


def cmd_fit(ctx: Context, args) -> dict:
    model = args.model
    out: dict = {}
    if model == "dy":
        ensure_dy(ctx, args.params, args.single_start)
        rec = ctx.dy_report.to_dict() if ctx.dy_report else {**ctx.dy.to_dict(), "feller_ratio": ctx.dy.feller_ratio}
        ctx.w.json("fit_dy.json", rec)
        out["dy"] = rec
    for tau in ctx.lags(f"fit_{model}"):
        try:
            data = pooled(ctx.series(tau))
            if model == "gaussian":
                out[str(tau)] = fit_gaussian(data).to_dict()
                pp = normal_prob_plot_data(data)
                ctx.w.csv(f"probplot_lag{tau}.csv", ["normal_median", "ordered_value"],
                          zip(pp.normal_medians, pp.ordered))
            elif model == "mlp":
                out[str(tau)] = ctx.mlp(tau)[0].to_dict()
            _plot_pairs(ctx, model, tau)
        except (ValueError, KeyError, ArithmeticError) as exc:
            ctx.lag_error(tau, f"fit_{model}", exc)
    if model != "dy":
        ctx.w.json(f"fit_{model}.json", out)
    return {f"fit_{model}": out}


def _run_test(ctx: Context, name: str, model: str, tau: int, values, mc_reps: int) -> TestResult:
    alpha = ctx.cfg.alpha
    if name == "jb":
        return jarque_bera(values, alpha)
    if name == "lillie":
        return lilliefors(values, alpha, mc_reps, ctx.cfg.seed)
    cdf = model_cdf(ctx, model, tau, values)
    if name == "ks":
        return ks_test(values, cdf, alpha)
    return chi2_equal_freq(values, cdf, model_dof(ctx, model), alpha)


def _pvalue_fn(name: str, n: int, df, mc_reps: int, seed: int):
    if name in ("jb", "chi2", "kw"):
        return lambda s: float(stats.chi2.sf(s, df))
    if name == "ks":
        return lambda s: ks_pvalue(s, n)
    null = lilliefors_null(n, mc_reps, seed)
    return lambda s: float((null.shape[0] - np.searchsorted(null, s, side="right")) / null.shape[0])


def test_table(ctx: Context, name: str, model: str, mc_reps: int = 10_000):
    """Per-path records and per-lag summary rows (mean +/- std plus p-value interval)."""
    per_path, per_lag = [], []
    for tau in ctx.lags(f"test_{name}"):
        series = ctx.series(tau)
        if name == "kw":
            if len(series) < 2:
                ctx.lag_error(tau, "test_kw", ValueError("Kruskal-Wallis needs at least 2 paths"))
                continue
            try:
                r = kruskal_wallis(series, ctx.cfg.alpha)
            except ValueError as exc:
                ctx.lag_error(tau, "test_kw", exc)
                continue
            per_lag.append({"lag": tau, "kw_statistic": r.statistic, "df": r.df, "p_value": r.p_value,
                            "reject": r.reject})
            continue
        results = []
        for s in series:
            try:
                r = _run_test(ctx, name, model, tau, s.values, mc_reps)
            except (ValueError, KeyError, ArithmeticError) as exc:
                ctx.lag_error(tau, f"test_{name}:path{s.offset}", exc)
                continue
            results.append(r)
            per_path.append({"lag": tau, "offset": s.offset, "n": len(s), "statistic": r.statistic, "df": r.df,
                             "p_value": r.p_value, "reject": r.reject})
        if not results:
            continue
        st = np.array([r.statistic for r in results])
        mean, std = float(st.mean()), float(st.std(ddof=1)) if st.shape[0] > 1 else 0.0
        dfs = [r.df for r in results if r.df is not None]
        df = int(round(float(np.mean(dfs)))) if dfs else None
        n_typ = int(round(float(np.mean([len(s) for s in series]))))
        p_lo, p_mid, p_hi = p_interval(mean, std, _pvalue_fn(name, n_typ, df, mc_reps, ctx.cfg.seed))
        per_lag.append({"lag": tau, f"{name}_mean": mean, f"{name}_std": std, "df": df,
                        "p_lo": p_lo, "p_mid": p_mid, "p_hi": p_hi,
                        "reject_fraction": sum(r.reject for r in results) / len(results),
                        "n_run": len(results), "n_failed": len(series) - len(results)})
    return per_path, per_lag


def cmd_test(ctx: Context, args) -> dict:
    name, model = args.test, args.model
    if name in ("ks", "chi2") and model == "dy":
        ensure_dy(ctx, args.params, args.single_start)
    per_path, per_lag = test_table(ctx, name, model, args.mc_reps)
    suffix = f"_{model}" if name in ("ks", "chi2") else ""
    if per_path:
        ctx.w.table(f"test_{name}{suffix}_paths.csv", per_path)
    ctx.w.table(f"test_{name}{suffix}.csv", per_lag)
    return {f"test_{name}{suffix}": per_lag}


def tails_table(ctx: Context, rounded_masses: bool):
    rows = []
    for tau in ctx.lags("tails"):
        counts = []
        for s in ctx.series(tau):
            try:
                counts.append(tail_counts(s, masses=ROUNDED_TAIL_MASSES if rounded_masses else None))
            except ValueError as exc:
                ctx.lag_error(tau, f"tails:path{s.offset}", exc)
        if not counts:
            continue
        for j, z in enumerate((2, 3, 4)):
            exp = np.array([c[j].expected for c in counts])
            obs = np.array([c[j].observed for c in counts], dtype=np.float64)
            rows.append({"lag": tau, "z": z, "expected_mean": float(exp.mean()),
                         "observed_mean": float(obs.mean()),
                         "observed_std": float(obs.std(ddof=1)) if obs.shape[0] > 1 else 0.0,
                         "n_paths": len(counts)})
    return rows


def cmd_tails(ctx: Context, args) -> dict:
    rows = tails_table(ctx, args.rounded_masses)
    ctx.w.table("tails.csv", rows)
    return {"tails": rows}


def kurtosis_table(ctx: Context):
    rows = []
    for tau in ctx.lags("kurtosis"):
        ks = []
        for s in ctx.series(tau):
            try:
                ks.append(fisher_kurtosis(s))
            except ValueError as exc:
                ctx.lag_error(tau, f"kurtosis:path{s.offset}", exc)
        if ks:
            a = np.array(ks)
            rows.append({"lag": tau, "kurtosis_mean": float(a.mean()),
                         "kurtosis_std": float(a.std(ddof=1)) if a.shape[0] > 1 else 0.0,
                         "skewness_mean": float(np.mean([skewness(s) for s in ctx.series(tau)])),
                         "n_paths": len(ks)})
    return rows


def generated_table(ctx: Context, model: str, n_sets: int):
    rows = []
    for tau in ctx.lags(f"generated_{model}"):
        data = pooled(ctx.series(tau))
        try:
            if model == "gaussian":
                g = fit_gaussian(data)
                source = lambda n, gen, g=g: gaussian_sample(g, n, gen)
            elif model == "dy":
                source = ctx.dy_density(tau)
            else:
                source = ctx.mlp(tau)[1]
            summ = generated_kurtosis(source, len(data), n_sets, rng.derive_seed(ctx.cfg.seed, tau))
        except (ValueError, KeyError, ArithmeticError) as exc:
            ctx.lag_error(tau, f"generated_{model}", exc)
            continue
        rows.append({"lag": tau, "model": model, "kurtosis_mean": summ.mean, "kurtosis_std": summ.std,
                     "n_sets": n_sets, "n_per_set": len(data)})
    return rows


def cmd_kurtosis(ctx: Context, args) -> dict:
    rows = kurtosis_table(ctx)
    ctx.w.table("kurtosis.csv", rows)
    out = {"kurtosis": rows}
    if args.model:
        if args.model == "dy":
            ensure_dy(ctx, args.params, args.single_start)
        gen = generated_table(ctx, args.model, args.n_sets)
        ctx.w.table(f"generated_kurtosis_{args.model}.csv", gen)
        out[f"generated_kurtosis_{args.model}"] = gen
    return out


def cmd_simulate(args, cfg: RunConfig) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", Feller)
        try:
            params = DyParams(args.gamma, args.theta, args.k, args.mu, args.rho)
            sim = SimConfig(params, args.days, 1, args.substeps, args.v0, cfg.seed, args.burn_in)
        except ValueError as exc:
            raise CliError("bad_config", str(exc)) from None
    res = simulate_returns(sim)
    w = Writer(cfg.out)
    with open(w._path("prices.csv"), "w", newline="", encoding="utf-8") as fh:
        write_price_csv(res.prices(100.0), fh)
    w.json("simulation.json", {"spec_version": SPEC_VERSION, "params": params.to_dict(),
                               "feller_ratio": params.feller_ratio, "days": args.days, "substeps": args.substeps,
                               "v0": sim.initial_variance, "burn_in_days": args.burn_in, "seed": cfg.seed,
                               "s0": 100.0})
    return 0


def cmd_report(ctx: Context, args) -> dict:
    report: dict = {}
    report.update(cmd_returns(ctx, args))
    report["kurtosis"] = kurtosis_table(ctx)
    ctx.w.table("kurtosis.csv", report["kurtosis"])
    if not ctx.cfg.reuse_data:
        report.update(cmd_paths(ctx, args))
    ensure_dy(ctx, args.params, args.single_start)
    fits = {"dy": ctx.dy_report.to_dict() if ctx.dy_report else ctx.dy.to_dict()}
    ctx.w.json("fit_dy.json", fits["dy"])
    models = ["gaussian", "dy"] + (["mlp"] if args.with_mlp else [])
    for model in models:
        for tau in ctx.lags("plots"):
            try:
                _plot_pairs(ctx, model, tau)
            except (ValueError, KeyError, ArithmeticError) as exc:
                ctx.lag_error(tau, f"plot_{model}", exc)
    if args.with_mlp:
        fits["mlp"] = {}
        for tau in ctx.lags("fit_mlp"):
            try:
                fits["mlp"][str(tau)] = ctx.mlp(tau)[0].to_dict()
            except (ValueError, ArithmeticError) as exc:
                ctx.lag_error(tau, "fit_mlp", exc)
    report["fits"] = fits
    tables = {}
    for name in ("jb", "lillie"):
        tables[name] = test_table(ctx, name, "gaussian", args.mc_reps)[1]
    for name in ("ks", "chi2"):
        for model in models:
            tables[f"{name}_{model}"] = test_table(ctx, name, model, args.mc_reps)[1]
    if not ctx.cfg.reuse_data:
        tables["kw"] = test_table(ctx, "kw", "gaussian")[1]
    for key, rows in tables.items():
        ctx.w.table(f"table_{key}.csv", rows)
    report["tests"] = tables
    report["tails"] = tails_table(ctx, args.rounded_masses)
    ctx.w.table("tails.csv", report["tails"])
    gen = []
    for model in models:
        gen += generated_table(ctx, model, args.n_sets)
    ctx.w.table("generated_kurtosis.csv", gen)
    report["generated_kurtosis"] = gen
    return report


# -- argument parsing ------------------------------------------------------------------------

def _lags(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"lags must be comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("lags must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", action="append", default=[], help="price CSV with Date,Close columns")
    common.add_argument("--lags", type=_lags, default=None, help="comma-separated lags in trading days")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--seed", type=int, default=None, help=f"default from ${rng.SEED_ENV} or {rng.DEFAULT_SEED}")
    common.add_argument("--reuse-data", action="store_true", help="analyse the overlapping series instead of paths")
    common.add_argument("--trim", action="store_true", help="apply the DJIA 1982-2001 trimming boundaries")
    common.add_argument("--replication-df", action="store_true",
                        help="use 11 instead of 16 network parameters in chi-square degrees of freedom")
    common.add_argument("--out", default=".", help="output directory")
    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("--params", default=None, help="fitted stochastic-volatility parameters (JSON)")
    model_opts.add_argument("--single-start", action="store_true", help="fit from the automatic start only")

    p = argparse.ArgumentParser(prog="dyvol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("returns", parents=[common], help="log returns, histograms and summary per lag")
    sub.add_parser("paths", parents=[common], help="per-path moments, box plots and ergodicity checks")
    f = sub.add_parser("fit", parents=[common, model_opts], help="fit a model")
    f.add_argument("model", choices=MODELS)
    t = sub.add_parser("test", parents=[common, model_opts], help="run a test per path and lag")
    t.add_argument("test", choices=TESTS)
    t.add_argument("--model", choices=MODELS, default="gaussian")
    t.add_argument("--mc-reps", type=int, default=10_000)
    tl = sub.add_parser("tails", parents=[common], help="observed vs normal-expected tail counts")
    tl.add_argument("--rounded-masses", action="store_true", help="use the rounded normal tail masses")
    k = sub.add_parser("kurtosis", parents=[common, model_opts], help="kurtosis per lag, optionally of model data")
    k.add_argument("--model", choices=MODELS, default=None)
    k.add_argument("--n-sets", type=int, default=100)
    s = sub.add_parser("simulate", parents=[common], help="write a synthetic price series")
    s.add_argument("--days", type=int, default=5050)
    s.add_argument("--gamma", type=float, default=5.0)
    s.add_argument("--theta", type=float, default=1e-4)
    s.add_argument("--k", type=float, default=0.02)
    s.add_argument("--mu", type=float, default=5e-4)
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--substeps", type=int, default=100)
    s.add_argument("--v0", type=float, default=None)
    s.add_argument("--burn-in", type=int, default=250)
    r = sub.add_parser("report", parents=[common, model_opts], help="full pipeline and aggregated tables")
    r.add_argument("--mc-reps", type=int, default=10_000)
    r.add_argument("--n-sets", type=int, default=100)
    r.add_argument("--with-mlp", action="store_true")
    r.add_argument("--rounded-masses", action="store_true")
    return p


COMMANDS = {"returns": cmd_returns, "paths": cmd_paths, "fit": cmd_fit, "test": cmd_test,
            "tails": cmd_tails, "kurtosis": cmd_kurtosis, "report": cmd_report}


def _error(kind: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "status": status}, sort_keys=True) + "\n")
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(
            inputs=tuple(args.input),
            lags=args.lags or DEFAULT_LAGS,
            reuse_data=args.reuse_data,
            trim=args.trim,
            replication_df=args.replication_df,
            alpha=args.alpha,
            seed=rng.default_seed() if args.seed is None else args.seed,
            out=args.out,
            explicit_lags=args.lags is not None,
        )
        if args.command == "simulate":
            return cmd_simulate(args, cfg)
        writer = Writer(cfg.out)
        ctx = Context(cfg, writer)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", Feller)
            with np.errstate(over="ignore", under="ignore"):
                result = COMMANDS[args.command](ctx, args)
        if args.command == "report":
            writer.json("report.json", {"spec_version": SPEC_VERSION, "config": cfg.to_dict(), **result,
                                        "lag_errors": ctx.error_summary()})
        tag = "_".join([args.command] + [getattr(args, a) for a in ("test", "model") if getattr(args, a, None)])
        writer.json(f"{tag}_errors.json", {"spec_version": SPEC_VERSION, "lag_errors": ctx.error_summary()})
        return 0
    except CliError as exc:
        return _error(exc.kind, str(exc), exc.status)
    except (DataError, ValueError) as exc:
        return _error("bad_input", str(exc), 1)
    except RuntimeError as exc:
        return _error("runtime_error", str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
