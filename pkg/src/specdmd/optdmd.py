"""Optimized DMD: fit, reconstruct, forecast and choose a rank."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (DivergentBasisError, InitializationError, RankDeficiencyError,
                     ValidationError)
from .exactdmd import exact_dmd_eigs, fit_exact
from .gridstore import SnapshotMatrix, UNIFORM_RTOL
from .model import DmdModel, evaluate, relative_error
from .varpro import EigConstraint, VarProOptions, solve_varpro

__all__ = ["ErrorCurve", "SelectedRank", "fit_optdmd", "evaluate", "relative_error",
           "rank_scan", "select_rank", "initial_eigs"]

log = logging.getLogger(__name__)

DEFAULT_FLAT_TOL = 0.02
_RANK_RTOL = 1e-10
_MAX_DELAY_ROWS = 2048


def uniform_prefix_length(times) -> int:
    """Number of leading samples that sit on one uniform grid."""
    dt = np.diff(times)
    bad = np.flatnonzero(np.abs(dt - dt[0]) > UNIFORM_RTOL * dt[0])
    return int(bad[0]) + 1 if bad.size else times.size


def _delay_eigs(X: SnapshotMatrix, r: int):
    """Exact-DMD eigenvalues of a time-delay embedding of ``X``.

    Used when the spatial rank of ``X`` is below ``r``: stacking delayed
    copies of the leading temporal coordinates raises the rank without
    changing the eigenvalues of the underlying linear dynamics.  The delay
    window spans about a quarter of the record so that it covers at least
    one period of the slow oscillations.
    """
    U, s, _ = np.linalg.svd(X.values, full_matrices=False)
    k = int(np.sum(s > _RANK_RTOL * s[0]))
    Y = U[:, :k].T @ X.values
    m = Y.shape[1]
    d = max(2, math.ceil((r + 1) / k), min(m // 4, _MAX_DELAY_ROWS // k))
    while m - d >= r + 1:
        H = np.vstack([Y[:, i:m - d + 1 + i] for i in range(d)])
        try:
            lam, _ = exact_dmd_eigs(H[:, :-1], H[:, 1:], r)
        except RankDeficiencyError:
            d *= 2
            continue
        if np.all(lam != 0):
            return np.log(lam.astype(complex)) / X.time.uniform_dt
        d *= 2
    raise RankDeficiencyError(f"data support fewer than {r} exponentials")


def initial_eigs(X: SnapshotMatrix, r: int) -> np.ndarray:
    """Exact-DMD eigenvalues from the longest uniformly sampled prefix."""
    k = uniform_prefix_length(X.times)
    if k < r + 1:
        raise InitializationError(
            f"uniform prefix has {k} samples, rank {r} needs {r + 1}; pass alpha0")
    Xp = X.columns(np.arange(k))
    if r <= min(Xp.n, Xp.m - 1):
        try:
            return fit_exact(Xp, r).eigs
        except RankDeficiencyError:
            pass
    try:
        return _delay_eigs(Xp, r)
    except RankDeficiencyError as exc:
        raise InitializationError(f"{exc}; pass alpha0 explicitly") from exc


def model_from_solution(alpha, B, span, constraint, converged) -> DmdModel:
    """Split ``B`` rows into unit-norm modes and their norms as amplitudes."""
    amps = np.linalg.norm(B, axis=1)
    modes = B.T.copy()
    nz = amps > 0
    modes[:, nz] /= amps[nz]
    modes[:, ~nz] = 0
    modes[0, ~nz] = 1
    return DmdModel(modes, alpha, amps.astype(complex), span,
                    constraint=EigConstraint.parse(constraint).value, converged=converged)


def fit_optdmd(X: SnapshotMatrix, r: int, c=EigConstraint.LEFT_HALF_PLANE,
               opts: VarProOptions | None = None, alpha0=None):
    """Fit a rank-``r`` optimized DMD model.

    Without ``alpha0`` the eigenvalues are seeded by exact DMD on the
    longest uniformly sampled prefix of the data (via a delay embedding
    when the data have fewer than ``r`` spatial degrees of freedom).

    Returns
    -------
    model : DmdModel
    info : SolveInfo
    """
    opts = opts or VarProOptions()
    c = EigConstraint.parse(c)
    if not 1 <= r <= min(X.n, X.m - 1):
        raise ValidationError(f"rank {r} outside [1, {min(X.n, X.m - 1)}]")
    if alpha0 is None:
        alpha0 = initial_eigs(X, r)
    alpha0 = np.ravel(np.asarray(alpha0, dtype=complex))
    if alpha0.size != r:
        raise ValidationError(f"alpha0 has {alpha0.size} entries, rank is {r}")
    alpha, B, info = solve_varpro(X, X.time, alpha0, c, opts)
    model = model_from_solution(alpha, B, X.time.span, c, info.converged)
    return model, info


@dataclass(frozen=True)
class ErrorCurve:
    ranks: np.ndarray
    rel_errors: np.ndarray
    converged_flags: np.ndarray

    def __post_init__(self):
        ranks = np.asarray(self.ranks, dtype=int)
        errs = np.asarray(self.rel_errors, dtype=float)
        flags = np.asarray(self.converged_flags, dtype=bool)
        if not ranks.size == errs.size == flags.size:
            raise ValidationError("ErrorCurve fields must have equal lengths")
        if np.any(np.diff(ranks) <= 0):
            raise ValidationError("ranks must be strictly increasing")
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "rel_errors", errs)
        object.__setattr__(self, "converged_flags", flags)


def _scan_one(args):
    X, r, c, opts = args
    try:
        model, info = fit_optdmd(X, r, c, opts)
        return relative_error(X, evaluate(model, X.time)), info.converged
    except (InitializationError, RankDeficiencyError, DivergentBasisError,
            np.linalg.LinAlgError) as exc:
        log.info("rank %d failed: %s", r, exc)
        return math.inf, False


def rank_scan(X: SnapshotMatrix, ranks, c=EigConstraint.LEFT_HALF_PLANE,
              opts: VarProOptions | None = None, workers: int = 1) -> ErrorCurve:
    """In-sample relative error of an independent fit at each rank.

    Failed fits are recorded with error ``inf`` and ``converged=False``.
    """
    opts = opts or VarProOptions()
    ranks = [int(r) for r in ranks]
    for r in ranks:
        if not 1 <= r <= min(X.n, X.m - 1):
            raise ValidationError(f"rank {r} outside [1, {min(X.n, X.m - 1)}]")
    jobs = [(X, r, EigConstraint.parse(c), opts) for r in ranks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_one, jobs))
    else:
        results = [_scan_one(job) for job in jobs]
    errs, flags = zip(*results)
    return ErrorCurve(ranks, errs, flags)


class SelectedRank(int):
    """An ``int`` rank carrying a ``fallback`` flag.

    ``fallback`` is True when the error curve never flattened and the
    largest converged rank was returned instead.
    """

    def __new__(cls, value, fallback=False):
        obj = super().__new__(cls, value)
        obj.fallback = bool(fallback)
        return obj


def select_rank(curve: ErrorCurve, flat_tol: float = DEFAULT_FLAT_TOL) -> SelectedRank:
    """Elbow of the error curve.

    Picks the smallest converged rank from which every subsequent relative
    improvement ``(e[i] - e[i+1]) / e[i]`` is below ``flat_tol``.
    """
    ok = curve.converged_flags & np.isfinite(curve.rel_errors)
    ranks, errs = curve.ranks[ok], curve.rel_errors[ok]
    if ranks.size < 2:
        raise ValidationError("rank selection needs at least 2 converged entries")
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(errs[:-1] > 0, (errs[:-1] - errs[1:]) / errs[:-1], 0.0)
    flat = gain < flat_tol
    # suffix_flat[i]: every improvement from entry i onward is flat
    suffix_flat = np.append(np.flip(np.cumprod(np.flip(flat))).astype(bool), True)
    i = int(np.argmax(suffix_flat))
    fallback = i == ranks.size - 1
    if fallback:
        log.warning("error curve never flattens below %.3g; using rank %d",
                    flat_tol, ranks[-1])
    return SelectedRank(ranks[i], fallback)
