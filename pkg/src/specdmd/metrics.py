"""Forecast error summaries and eigenvalue-distribution statistics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ValidationError
from .gridstore import SnapshotMatrix


@dataclass(frozen=True)
class ForecastReport:
    day_index: np.ndarray
    mean_rel_err: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "mean_rel_err", "lo95", "hi95"])
            for row in zip(self.day_index, self.mean_rel_err, self.lo95, self.hi95):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float
    sse: float

    def to_json(self):
        return {"mu": self.mu, "sigma": self.sigma, "sse": self.sse}


def _values(X):
    return X.values if isinstance(X, SnapshotMatrix) else np.asarray(X, dtype=float)


def daily_error_report(X_true, X_hat, samples_per_day: int) -> ForecastReport:
    """Mean per-cell relative error per day with a 2.5-97.5 percentile band.

    Each error ``|x - xhat|`` is divided by the RMS of its true snapshot
    column.  All-zero true columns cannot be normalised and are skipped; a
    day made only of such columns is an error.
    """
    A, Ah = _values(X_true), _values(X_hat)
    if A.shape != Ah.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {Ah.shape}")
    n, m = A.shape
    if m % samples_per_day:
        raise ValidationError(f"{m} snapshots is not a whole number of "
                              f"{samples_per_day}-sample days")
    scale = np.linalg.norm(A, axis=0) / np.sqrt(n)
    days = m // samples_per_day
    mean, lo, hi = np.empty(days), np.empty(days), np.empty(days)
    for d in range(days):
        cols = np.arange(d * samples_per_day, (d + 1) * samples_per_day)
        cols = cols[scale[cols] > 0]
        if cols.size == 0:
            raise ValidationError(f"day {d}: every true snapshot is zero")
        e = (np.abs(A[:, cols] - Ah[:, cols]) / scale[cols]).ravel()
        mean[d] = e.mean()
        lo[d], hi[d] = np.percentile(e, [2.5, 97.5])
    return ForecastReport(np.arange(days), mean, lo, hi)


def trimmed_sample(values, lo_pct: float = 10, hi_pct: float = 90) -> np.ndarray:
    """Values between the ``lo_pct`` and ``hi_pct`` percentiles, inclusive,
    in their original order."""
    v = np.ravel(np.asarray(values, dtype=float))
    if not 0 <= lo_pct < hi_pct <= 100:
        raise ValidationError("need 0 <= lo_pct < hi_pct <= 100")
    if v.size == 0:
        raise ValidationError("nothing to trim")
    p_lo, p_hi = np.percentile(v, [lo_pct, hi_pct])
    kept = v[(v >= p_lo) & (v <= p_hi)]
    if kept.size == 0:
        raise ValidationError("trimming removed every value")
    return kept


def density_histogram(values, nbins: int = 20):
    """Equal-width bins over ``[min, max]`` normalised to unit area."""
    density, edges = np.histogram(values, bins=nbins, density=True)
    return 0.5 * (edges[:-1] + edges[1:]), density


def _normal_pdf(x, mu, sigma):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))


def fit_gaussian_density(centers, density, mu0, sigma0) -> GaussianFit:
    """Least-squares fit of a normal pdf to ``density`` sampled at ``centers``."""
    centers = np.asarray(centers, dtype=float)
    density = np.asarray(density, dtype=float)

    def resid(p):
        return _normal_pdf(centers, p[0], np.exp(p[1])) - density

    def jac(p):
        # sigma = exp(p[1]) keeps it positive; derivatives in (mu, log sigma)
        z = (centers - p[0]) / np.exp(p[1])
        f = _normal_pdf(centers, p[0], np.exp(p[1]))
        return np.column_stack([f * z / np.exp(p[1]), f * (z ** 2 - 1)])

    sol = least_squares(resid, [mu0, np.log(sigma0)], jac=jac, method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000)
    mu, sigma = float(sol.x[0]), float(np.exp(sol.x[1]))
    return GaussianFit(mu, sigma, float(np.sum(resid(sol.x) ** 2)))


def gaussian_fit_histogram(values, nbins: int = 20) -> GaussianFit:
    v = np.ravel(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(v)):
        raise ValidationError("values must be finite")
    if v.size < nbins:
        raise ValidationError(f"{v.size} values for {nbins} bins")
    if v.max() == v.min():
        raise ValidationError("values have zero spread")
    centers, density = density_histogram(v, nbins)
    return fit_gaussian_density(centers, density, v.mean(), v.std())


def write_histogram_csv(rows, path):
    """``rows`` of ``(j, centers, density)``; one CSV with a ``j`` column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "bin_center", "density"])
        for j, centers, density in rows:
            for c, d in zip(centers, density):
                w.writerow([j, repr(float(c)), repr(float(d))])


def write_fit_json(fits, path):
    with open(path, "w") as fh:
        json.dump(fits, fh)
