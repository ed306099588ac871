"""Acceptance suite: each criterion at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py`` (or ``python3 tests/test_acceptance.py``);
the terminal summary ends with one PASS/FAIL/SKIP line per criterion.
Criterion 8 needs real index data: point ``DYVOL_DJIA_CSV`` at a Date,Close
file of DJIA daily closes covering 1982-2001.
"""

import csv
import filecmp
import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from dyvol import rng
from dyvol.dy_model import DyParams, Feller, NormalizationError, char_exponent, dy_cdf, dy_pdf, fit_dy, return_density
from dyvol.gaussian import standard_normal_cdf
from dyvol.heston_sim import SimConfig, simulate_returns
from dyvol.market_data import ReturnSeries, build_histogram, choose_bin_count
from dyvol.stats_tests import (ROUNDED_TAIL_MASSES, chi2_equal_freq, jarque_bera, ks_pvalue, ks_test, lilliefors,
                               tail_counts)

LAGS = (1, 5, 20, 40, 250)
TRUTH = DyParams(5.0, 1e-4, 0.02, mu=5e-4)
N_SIM = 100_000
N_REPLICATES = 10
SIM_SEED = 7000


def random_sets(n=100, seed=2024):
    """Valid parameter sets spanning slow to fast reversion, Feller ratios 0.5-10 and any correlation."""
    g = rng.stream(seed, 0)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", Feller)
        for _ in range(n):
            gamma = math.exp(g.uniform(math.log(0.01), math.log(20.0)))
            theta = math.exp(g.uniform(math.log(1e-5), math.log(1e-3)))
            feller = math.exp(g.uniform(math.log(0.5), math.log(10.0)))
            out.append(DyParams(gamma, theta, math.sqrt(2 * gamma * theta / feller), rho=g.uniform(-0.9, 0.9)))
    return out


def within_budget(acceptance, cid, elapsed, budget):
    return acceptance.check(cid, elapsed < budget, f"{elapsed:.2f} s (budget {budget:g} s)")


@pytest.fixture(scope="module")
def sets():
    return random_sets()


@pytest.fixture(scope="module")
def replicates():
    t0 = time.perf_counter()
    sims = [simulate_returns(SimConfig(TRUTH, N_SIM, seed=SIM_SEED + i)) for i in range(N_REPLICATES)]
    return sims, time.perf_counter() - t0


def test_c1_char_exponent_at_zero(acceptance, sets):
    t0 = time.perf_counter()
    worst = max(abs(char_exponent(p, t, 0.0)) for p in sets for t in LAGS)
    elapsed = time.perf_counter() - t0
    ok = acceptance.check(1, worst < 1e-12, f"max |F(0)| = {worst:.1e} over {len(sets)}x{len(LAGS)} (< 1e-12)")
    ok &= within_budget(acceptance, 1, elapsed, 1.0)
    assert ok


def test_c2_normalisation(acceptance, sets):
    t0 = time.perf_counter()
    worst, failures = 0.0, 0
    for p in sets:
        for t in LAGS:
            try:
                worst = max(worst, abs(dy_pdf(p, t).mass - 1.0))
            except NormalizationError:
                failures += 1
    elapsed = time.perf_counter() - t0
    ok = acceptance.check(2, worst <= 1e-4 and failures == 0,
                          f"max |mass - 1| = {worst:.1e} (<= 1e-4), {failures} grids rejected")
    ok &= within_budget(acceptance, 2, elapsed, 60.0)
    assert ok


def test_c3_gaussian_limit(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for gamma in (0.05, 1.0, 5.0):
        for theta in (1e-4, 4e-4):
            p = DyParams(gamma, theta, 1e-3 * gamma * math.sqrt(theta))
            for t in (1, 20):
                d = dy_pdf(p, t)
                m, v = -0.5 * theta * t, theta * t
                ref = np.exp(-(d.x_grid - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
                worst = max(worst, float(np.max(np.abs(d.density - ref))))
    elapsed = time.perf_counter() - t0
    ok = acceptance.check(3, worst < 1e-3, f"sup |dy_pdf - normal| = {worst:.1e} (< 1e-3)")
    ok &= within_budget(acceptance, 3, elapsed, 10.0)
    assert ok


def test_c4_simulator_matches_density(acceptance, replicates):
    sims, sim_time = replicates
    t0 = time.perf_counter()
    dens = return_density(TRUTH, 1)
    ps = [chi2_equal_freq(s.returns.values, lambda x: dy_cdf(dens, x), 4).p_value for s in sims]
    elapsed = sim_time + time.perf_counter() - t0
    n_pass = sum(p > 0.01 for p in ps)
    ok = acceptance.check(4, n_pass >= 9, f"{n_pass}/{len(ps)} replicates with p > 0.01 (min p {min(ps):.3f})")
    ok &= within_budget(acceptance, 4, elapsed, 300.0)
    assert ok


def test_c5_fit_recovery(acceptance, replicates):
    daily = replicates[0][0].daily_log_returns
    t0 = time.perf_counter()
    hists = []
    for tau in (1, 5, 20, 40):
        v = daily[:daily.shape[0] // tau * tau].reshape(-1, tau).sum(axis=1)
        s = ReturnSeries(tau, v, offset=1)
        hists.append(build_histogram(s, choose_bin_count(s), tau))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", Feller)
        fit, _ = fit_dy(hists)
    elapsed = time.perf_counter() - t0
    errs = {name: abs(getattr(fit, name) / getattr(TRUTH, name) - 1.0) for name in ("theta", "gamma", "k")}
    ok = acceptance.check(5, errs["theta"] <= 0.10, f"theta {fit.theta:.3g} ({errs['theta']:.1%}, <= 10%)")
    for name in ("gamma", "k"):
        ok &= acceptance.check(5, errs[name] <= 0.30,
                               f"{name} {getattr(fit, name):.3g} vs {getattr(TRUTH, name):g} ({errs[name]:.0%}, <= 30%)")
    ok &= within_budget(acceptance, 5, elapsed, 600.0)
    assert ok


def test_c6_type_one_rates(acceptance):
    n, reps = 1000, 1000
    t0 = time.perf_counter()
    rejects = {"jb": 0, "lilliefors": 0, "ks": 0, "chi2": 0}
    for i in range(reps):
        x = rng.stream(rng.DEFAULT_SEED, i).standard_normal(n)
        rejects["jb"] += jarque_bera(x, 0.05).reject
        rejects["lilliefors"] += lilliefors(x, 0.05).reject
        rejects["ks"] += ks_test(x, standard_normal_cdf, 0.05).reject
        rejects["chi2"] += chi2_equal_freq(x, standard_normal_cdf, 0, 0.05).reject
    elapsed = time.perf_counter() - t0
    ok = True
    for name, r in rejects.items():
        rate = r / reps
        ok &= acceptance.check(6, abs(rate - 0.05) <= 0.015, f"{name} {rate:.3f}")
    ok &= within_budget(acceptance, 6, elapsed, 600.0)
    assert ok


def test_c7_ks_pvalue(acceptance):
    t0 = time.perf_counter()
    p = ks_pvalue(0.131, 5049)
    ratio = p / 2.9e-75
    ok = acceptance.check(7, 0.5 <= ratio <= 2.0, f"KS p(D=0.131, n=5049) = {p:.3g} vs 2.9e-75 (x{ratio:.2f}, within x2)")
    ok &= within_budget(acceptance, 7, time.perf_counter() - t0, 1.0)
    assert ok


def test_c7_tail_expected_counts(acceptance):
    t0 = time.perf_counter()
    x = np.linspace(-1.0, 1.0, 5049)
    got = [c.expected for c in tail_counts(x, masses=ROUNDED_TAIL_MASSES)]
    want = [229.72, 13.63, 0.3181]
    rel = [abs(g / w - 1.0) for g, w in zip(got, want)]
    ok = acceptance.check(7, max(rel) <= 0.005,
                          "tail counts " + ", ".join(f"{g:.4g}" for g in got) + f" (max dev {max(rel):.2%}, <= 0.5%)")
    ok &= within_budget(acceptance, 7, time.perf_counter() - t0, 1.0)
    assert ok


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_c8_djia_statistics(acceptance, tmp_path):
    from dyvol.cli import main

    src = os.environ.get("DYVOL_DJIA_CSV")
    if not src:
        acceptance.skip(8, "set DYVOL_DJIA_CSV to a DJIA 1982-2001 Date,Close file")
        pytest.skip("DJIA closes not supplied")
    common = ["--input", src, "--reuse-data", "--out", str(tmp_path)]
    assert main(["kurtosis", *common, "--lags", "1"]) == 0
    assert main(["test", "chi2", "--model", "gaussian", *common, "--lags", "1"]) == 0
    assert main(["fit", "dy", *common]) == 0
    assert main(["test", "chi2", "--model", "dy", "--params", str(tmp_path / "fit_dy.json"), *common, "--lags", "1"]) == 0
    assert main(["paths", "--input", src, "--out", str(tmp_path), "--lags", "5"]) == 0

    kurt = float(_read_rows(tmp_path / "kurtosis.csv")[0]["kurtosis_mean"])
    ok = acceptance.check(8, abs(kurt - 69.27) <= 0.5, f"kurtosis {kurt:.2f} (69.27 +/- 0.5)")
    for model, ref, ref_df in (("gaussian", 1790.0, 1010), ("dy", 1420.0, 1000)):
        row = _read_rows(tmp_path / f"test_chi2_{model}.csv")[0]
        chi2 = float(row["chi2_mean"])
        ok &= acceptance.check(8, abs(chi2 / ref - 1.0) <= 0.05,
                               f"{model} chi2 {chi2:.0f} at df {row['df']} ({ref:g} at df {ref_df}, within 5%)")
    kw_p = float(_read_rows(tmp_path / "path_variation.csv")[0]["kw_p"])
    ok &= acceptance.check(8, abs(kw_p - 0.9875) <= 0.01, f"Kruskal-Wallis lag 5 p {kw_p:.4f} (0.9875 +/- 0.01)")
    assert ok


DETERMINISM_DRIVER = """
import sys
from dyvol.cli import main
out = "."
prices = "prices.csv"
runs = [
    ["simulate", "--days", "1500", "--seed", "9", "--out", out],
    ["returns", "--input", prices, "--lags", "1,5,20", "--out", out],
    ["paths", "--input", prices, "--lags", "1,5,20", "--out", out],
    ["fit", "gaussian", "--input", prices, "--lags", "1,5", "--out", out],
    ["fit", "dy", "--input", prices, "--lags", "1,5,20", "--out", out],
    ["fit", "mlp", "--input", prices, "--lags", "1", "--seed", "9", "--out", out],
    ["test", "lillie", "--input", prices, "--lags", "5", "--mc-reps", "500", "--seed", "9", "--out", out],
    ["test", "chi2", "--model", "mlp", "--input", prices, "--lags", "1", "--seed", "9", "--out", out],
    ["tails", "--input", prices, "--lags", "1,5", "--out", out],
    ["kurtosis", "--model", "dy", "--input", prices, "--lags", "1,5", "--n-sets", "10", "--seed", "9", "--out", out],
    ["report", "--input", prices, "--lags", "1,5,20", "--seed", "9", "--mc-reps", "500", "--n-sets", "10",
     "--with-mlp", "--single-start", "--out", "report"],
]
for argv in runs:
    code = main(argv)
    if code:
        sys.exit(f"{argv[0]} exited with {code}")
"""


def test_c9_determinism(acceptance, tmp_path):
    t0 = time.perf_counter()
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    env = {k: v for k, v in os.environ.items() if k != rng.SEED_ENV}
    for d in dirs:
        d.mkdir()
        # identical command lines, each run in its own working directory
        subprocess.run([sys.executable, "-c", DETERMINISM_DRIVER], check=True, env=env, cwd=d,
                       capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    files = sorted(str(p.relative_to(dirs[0])) for p in dirs[0].rglob("*") if p.is_file())
    other = sorted(str(p.relative_to(dirs[1])) for p in dirs[1].rglob("*") if p.is_file())
    _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
    ok = acceptance.check(9, files == other and not mismatch and not errors and len(files) > 40,
                          f"{len(files)} artifacts, {len(mismatch) + len(errors)} differ")
    ok &= within_budget(acceptance, 9, elapsed, 60.0)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
