"""Stochastic-volatility model of log returns with a Gaussian baseline, a small
neural-network benchmark and a goodness-of-fit test battery."""

from .dy_model import (DyParams, FitReport, TabulatedDensity, char_exponent, dy_cdf, dy_pdf, fit_dy,
                       log_deviation_error, return_density)
from .gaussian import GaussianParams, fit_gaussian, gaussian_cdf, gaussian_pdf
from .heston_sim import SimConfig, SimResult, sample_from_density, simulate_returns
from .kernels import BACKEND
from .market_data import (Histogram, PathSet, PriceSeries, ReturnSeries, TrimBounds, build_histogram,
                          choose_bin_count, load_price_csv, overlapping_returns, path_shape_variation, split_paths,
                          trim_returns)
from .nn_density import MlpParams, mlp_density, mlp_eval, train_mlp
from .stats_tests import (TestResult, chi2_equal_freq, fisher_kurtosis, generated_kurtosis, jarque_bera,
                          kruskal_wallis, ks_test, lilliefors, normal_prob_plot_data, rejection_proportion,
                          tail_counts)

__version__ = "0.1.0"
