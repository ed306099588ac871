"""Price ingestion, log returns, paths, trimming and binned empirical densities."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

#: Per-lag trimming boundaries for DJIA 1982-2001 daily closes.
DJIA1982_TRIM_BOUNDS: dict[int, tuple[float, float]] = {
    1: (-0.04, 0.04),
    5: (-0.08, 0.08),
    20: (-0.13, 0.15),
    40: (-0.17, 0.20),
    80: (-0.18, 0.25),
    100: (-0.20, 0.28),
    200: (-0.22, 0.38),
    250: (-0.22, 0.44),
}

BIN_COUNT_GRID = (10, 20, 50, 100, 200, 500, 1000)
MIN_OCCUPATION = 5


class DataError(ValueError):
    """Malformed or insufficient input data."""


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[dt.date, ...]
    closes: np.ndarray

    def __post_init__(self):
        closes = np.asarray(self.closes, dtype=np.float64)
        closes.setflags(write=False)
        object.__setattr__(self, "closes", closes)
        if len(self.dates) != closes.shape[0]:
            raise DataError("dates and closes differ in length")
        if closes.shape[0] < 2:
            raise DataError("a price series needs at least 2 rows")
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise DataError("every close must be a finite positive number")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"dates must be strictly ascending ({a} then {b})")

    def __len__(self):
        return self.closes.shape[0]

    @classmethod
    def from_closes(cls, closes: Sequence[float], start: dt.date = dt.date(2000, 1, 3)) -> PriceSeries:
        """Wrap bare closes, stamping consecutive weekdays from ``start``."""
        dates = []
        d = start
        for _ in range(len(closes)):
            while d.weekday() >= 5:
                d += dt.timedelta(days=1)
            dates.append(d)
            d += dt.timedelta(days=1)
        return cls(tuple(dates), np.asarray(closes, dtype=np.float64))


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns at lag ``tau``; ``offset`` 0 is the overlapping series, 1..tau a path."""

    tau: int
    values: np.ndarray
    offset: int = 0
    centered: bool = False
    n_trimmed: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.tau < 1:
            raise ValueError("tau must be >= 1")

    def __len__(self):
        return self.values.shape[0]

    def centered_copy(self) -> ReturnSeries:
        return ReturnSeries(self.tau, self.values - self.values.mean(), self.offset, True, self.n_trimmed)


@dataclass(frozen=True)
class PathSet:
    tau: int
    paths: tuple[ReturnSeries, ...]

    def pooled(self) -> np.ndarray:
        return np.concatenate([p.values for p in self.paths])

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


@dataclass(frozen=True)
class TrimBounds:
    bounds: Mapping[int, tuple[float, float]] = field(default_factory=lambda: dict(DJIA1982_TRIM_BOUNDS))

    def __post_init__(self):
        for tau, (lo, hi) in self.bounds.items():
            if not lo < 0 < hi:
                raise ValueError(f"trim bounds for tau={tau} must satisfy lo < 0 < hi")

    def for_lag(self, tau: int) -> tuple[float, float]:
        try:
            return self.bounds[tau]
        except KeyError:
            raise KeyError(f"no trimming bounds defined for tau={tau}") from None


@dataclass(frozen=True)
class Histogram:
    """Binned empirical density with sparse bins removed.

    ``bin_edges`` has one more entry than ``counts``; the kept bins are not
    necessarily contiguous, so ``bin_centers`` is the thing to evaluate models at.
    Edges and centers are on the centred axis (``center_shift`` subtracted).
    """

    tau: int
    bin_edges: np.ndarray
    kept: np.ndarray
    counts: np.ndarray
    densities: np.ndarray
    width: float
    n_total: int
    n_kept: int
    center_shift: float

    @property
    def bin_centers(self) -> np.ndarray:
        left = self.bin_edges[:-1][self.kept]
        return left + 0.5 * self.width

    @property
    def kept_fraction(self) -> float:
        return self.n_kept / self.n_total

    def to_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_center", "count", "density"])
        for c, n, d in zip(self.bin_centers, self.counts, self.densities):
            w.writerow([repr(float(c)), int(n), repr(float(d))])


def _parse_date(text: str, date_format: str | None) -> dt.date:
    text = text.strip()
    if date_format:
        return dt.datetime.strptime(text, date_format).date()
    return dt.date.fromisoformat(text[:10])


def _parse_close(text: str) -> float:
    text = text.strip()
    if "," in text or "_" in text or " " in text:
        raise ValueError(f"thousands separators are not accepted: {text!r}")
    return float(text)


def load_price_csv(source: IO[bytes] | IO[str] | str | bytes, date_column: str = "Date",
                   close_column: str = "Close", date_format: str | None = None,
                   delimiter: str = ",") -> PriceSeries:
    """Read a dated close-price CSV into an ascending ``PriceSeries``.

    ``source`` may be a path, raw bytes or an open (binary or text) stream.
    Any invalid row aborts the load with its line number; rows may come in
    either date order.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8-sig")
    elif isinstance(source, str):
        with open(source, "rb") as fh:
            text = fh.read().decode("utf-8-sig")
    else:
        raw = source.read()
        text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV") from None
    try:
        di = header.index(date_column)
        ci = header.index(close_column)
    except ValueError:
        raise DataError(f"CSV header must contain {date_column!r} and {close_column!r}; got {header}") from None

    rows: dict[dt.date, float] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            date = _parse_date(row[di], date_format)
            close = _parse_close(row[ci])
        except (IndexError, ValueError) as exc:
            raise DataError(f"line {line_no}: malformed row {row!r} ({exc})") from None
        if not math.isfinite(close) or close <= 0:
            raise DataError(f"line {line_no}: close must be positive, got {row[ci].strip()!r}")
        if date in rows:
            raise DataError(f"line {line_no}: duplicate date {date.isoformat()}")
        rows[date] = close
    if len(rows) < 2:
        raise DataError("fewer than 2 valid price rows")
    dates = tuple(sorted(rows))
    return PriceSeries(dates, np.array([rows[d] for d in dates]))


def write_price_csv(prices: PriceSeries, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["Date", "Close"])
    for d, c in zip(prices.dates, prices.closes):
        w.writerow([d.isoformat(), repr(float(c))])


def _closes(prices: PriceSeries | np.ndarray | Sequence[float]) -> np.ndarray:
    if isinstance(prices, PriceSeries):
        return prices.closes
    return np.asarray(prices, dtype=np.float64)


def overlapping_returns(prices: PriceSeries, tau: int) -> ReturnSeries:
    """All ``n - tau`` returns ``log(P[t+tau] / P[t])``, sharing data between neighbours."""
    c = _closes(prices)
    n = c.shape[0]
    if not 1 <= tau < n:
        raise ValueError(f"tau must be in [1, {n - 1}], got {tau}")
    return ReturnSeries(tau, np.log(c[tau:] / c[:-tau]), offset=0)


def split_paths(prices: PriceSeries, tau: int) -> PathSet:
    """Split the returns into ``tau`` disjoint paths.

    Path ``j`` (1-based) uses closes ``j, j+tau, j+2*tau, ...``; when ``tau``
    does not divide ``n`` the path lengths differ by one. The paths together
    hold exactly the overlapping returns.
    """
    c = _closes(prices)
    n = c.shape[0]
    if tau < 1 or n // tau < 2:
        raise ValueError(f"tau={tau} leaves fewer than 2 prices per path (n={n})")
    paths = []
    for j in range(1, tau + 1):
        sub = c[j - 1::tau]
        paths.append(ReturnSeries(tau, np.log(sub[1:] / sub[:-1]), offset=j))
    return PathSet(tau, tuple(paths))


def trim_returns(series: ReturnSeries, bounds: TrimBounds | tuple[float, float]) -> ReturnSeries:
    """Drop returns outside the closed interval for ``series.tau``."""
    lo, hi = bounds.for_lag(series.tau) if isinstance(bounds, TrimBounds) else bounds
    v = series.values
    keep = (v >= lo) & (v <= hi)
    removed = int(v.shape[0] - keep.sum())
    if removed == v.shape[0]:
        log.warning("trimming removed every return at tau=%d", series.tau)
    return ReturnSeries(series.tau, v[keep], series.offset, series.centered, series.n_trimmed + removed)


def build_histogram(series: ReturnSeries | np.ndarray, n_bins: int, tau: int | None = None,
                    min_count: int = MIN_OCCUPATION) -> Histogram:
    """Equal-width histogram of centred returns with sparse bins removed.

    The range ``[min, max]`` is cut into ``n_bins + 1`` bins of width
    ``(max - min) / (n_bins + 1)``; bins with fewer than ``min_count`` returns
    are dropped. Densities are normalised by the width and by the full sample
    size, so the kept mass is ``n_kept / n_total``.
    """
    if isinstance(series, ReturnSeries):
        values, tau = series.values, series.tau
    else:
        values = np.asarray(series, dtype=np.float64)
        tau = tau or 1
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise DataError("cannot bin a constant series")
    n_edges = n_bins + 1
    width = (hi - lo) / n_edges
    edges = lo + width * np.arange(n_edges + 1)
    edges[-1] = hi
    idx = np.minimum(((values - lo) / width).astype(np.int64), n_edges - 1)
    counts = np.bincount(idx, minlength=n_edges)
    kept = counts >= min_count
    if not kept.any():
        raise DataError(f"every bin holds fewer than {min_count} returns")
    n_total = values.shape[0]
    shift = float(values.mean())
    kept_counts = counts[kept]
    return Histogram(
        tau=tau,
        bin_edges=edges - shift,
        kept=kept,
        counts=kept_counts,
        densities=kept_counts / (width * n_total),
        width=width,
        n_total=n_total,
        n_kept=int(kept_counts.sum()),
        center_shift=shift,
    )


def choose_bin_count(series: ReturnSeries | np.ndarray, grid: Iterable[int] = BIN_COUNT_GRID,
                     max_drop: float = 0.01) -> int:
    """Largest bin count on ``grid`` whose sparse-bin filter drops < ``max_drop`` of the data."""
    values = series.values if isinstance(series, ReturnSeries) else np.asarray(series, dtype=np.float64)
    if values.shape[0] < 50:
        raise ValueError("choose_bin_count needs at least 50 returns")
    grid = sorted(grid)
    best = None
    for nb in grid:
        try:
            h = build_histogram(values, nb)
        except DataError:
            continue
        if h.n_total - h.n_kept < max_drop * h.n_total:
            best = nb
    if best is None:
        log.warning("no bin count drops fewer than %.1f%% of returns; using %d", 100 * max_drop, grid[0])
        return grid[0]
    return best


def path_shape_variation(paths: PathSet) -> tuple[float, float]:
    """Dispersion of the per-path mean and std, as ``100 * std / mean`` of each.

    The mean and std across paths use the sample (n-1) convention, like the
    per-path estimates themselves.
    """
    if len(paths) < 2 or any(len(p) < 2 for p in paths):
        raise ValueError("need at least 2 paths with at least 2 returns each")
    mus = np.array([p.values.mean() for p in paths])
    sigmas = np.array([p.values.std(ddof=1) for p in paths])

    def rate(x):
        m = x.mean()
        if m == 0:
            raise ZeroDivisionError("variation rate undefined: parameter mean is 0")
        return float(100.0 * x.std(ddof=1) / abs(m))

    return rate(mus), rate(sigmas)
