"""Bagging ensembles of optimized DMD fits (BOP-DMD).

A reference fit on all snapshots seeds ``K`` fits on random column subsets.
Each subset keeps its original timestamps, so every trial is a fit on a
non-uniform grid.  Trial eigenvalues are matched to the reference before
the per-index mean and variance are taken.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DivergentBasisError, ValidationError
from .gridstore import SnapshotMatrix
from .model import DmdModel
from .optdmd import fit_optdmd
from .varpro import EigConstraint, VarProOptions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BagSpec:
    K: int = 100
    p: int = 216
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.p < 1:
            raise ValidationError("K and p must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def validate_for(self, m):
        if self.p >= m:
            raise ValidationError(f"bag size p={self.p} must be smaller than m={m}")


@dataclass(frozen=True)
class Trial:
    indices: np.ndarray
    model: DmdModel | None
    converged: bool


@dataclass(frozen=True)
class Ensemble:
    reference: DmdModel
    trials: tuple

    @property
    def converged_trials(self):
        return [tr for tr in self.trials if tr.converged]


@dataclass(frozen=True)
class EnsembleStats:
    mean_eigs: np.ndarray
    var_eigs: np.ndarray
    mean_amps: np.ndarray
    var_amps: np.ndarray
    mean_modes: np.ndarray
    var_modes: np.ndarray
    n_trials: int

    def to_json(self):
        def pairs(z):
            return [[float(v.real), float(v.imag)] for v in np.ravel(z)]

        return {
            "n_trials": self.n_trials,
            "mean_eigs": pairs(self.mean_eigs),
            "var_eigs": [float(v) for v in self.var_eigs],
            "mean_amps": pairs(self.mean_amps),
            "var_amps": [float(v) for v in self.var_amps],
            "mean_modes": [pairs(row) for row in self.mean_modes],
            "var_modes": [[float(v) for v in row] for row in self.var_modes],
        }


def trial_rng(seed, k):
    """Independent generator for trial ``k``, keyed on (seed, k)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))


def draw_bag(m: int, p: int, rng) -> np.ndarray:
    """``p`` distinct column indices out of ``m``, sorted ascending."""
    if not 0 < p < m:
        raise ValidationError(f"need 0 < p < m, got p={p}, m={m}")
    return np.sort(rng.choice(m, size=p, replace=False))


def align_to_reference(trial_eigs, ref_eigs) -> np.ndarray:
    """Greedy matching of trial eigenvalues onto reference eigenvalues.

    Returns ``perm`` with ``trial_eigs[perm[j]]`` matched to ``ref_eigs[j]``.
    The globally closest unmatched pair is taken first; ties resolve to the
    lowest (trial, reference) index.  Greedy matching can lose to the
    identity ordering, so the identity is returned whenever its total
    distance is strictly smaller.
    """
    trial_eigs = np.ravel(np.asarray(trial_eigs, dtype=complex))
    ref_eigs = np.ravel(np.asarray(ref_eigs, dtype=complex))
    r = ref_eigs.size
    if trial_eigs.size != r:
        raise ValidationError("trial and reference must have the same rank")
    dist = np.abs(trial_eigs[:, None] - ref_eigs[None, :])
    order = np.argsort(dist, axis=None, kind="stable")
    perm = np.full(r, -1)
    trial_used = np.zeros(r, dtype=bool)
    matched = 0
    for flat in order:
        i, j = divmod(int(flat), r)
        if trial_used[i] or perm[j] >= 0:
            continue
        perm[j] = i
        trial_used[i] = True
        matched += 1
        if matched == r:
            break
    ident = np.arange(r)
    if dist[ident, ident].sum() < dist[perm, ident].sum():
        return ident
    return perm


def _run_trial(job):
    X, r, c, opts, ref_eigs, seed, k, p = job
    idx = draw_bag(X.m, p, trial_rng(seed, k))
    try:
        model, info = fit_optdmd(X.columns(idx), r, c, opts, alpha0=ref_eigs)
    except (DivergentBasisError, ValidationError, np.linalg.LinAlgError) as exc:
        log.info("trial %d failed: %s", k, exc)
        return Trial(idx, None, False)
    model = model.permuted(align_to_reference(model.eigs, ref_eigs))
    return Trial(idx, model, info.converged)


def fit_ensemble(X: SnapshotMatrix, r: int, c=EigConstraint.LEFT_HALF_PLANE,
                 spec: BagSpec | None = None, opts: VarProOptions | None = None,
                 reference: DmdModel | None = None, workers: int = 1) -> Ensemble:
    """Reference fit on all of ``X``, then ``spec.K`` bagged trials seeded
    with the reference eigenvalues.

    Trials are independent and reproducible from ``(spec.seed, k)`` alone,
    so the result does not depend on ``workers``.
    """
    spec = spec or BagSpec()
    spec.validate_for(X.m)
    opts = opts or VarProOptions()
    c = EigConstraint.parse(c)
    if reference is None:
        reference, info = fit_optdmd(X, r, c, opts)
        if not info.converged:
            log.warning("reference fit did not converge; seeding trials anyway")
    if reference.rank != r:
        raise ValidationError(f"reference rank {reference.rank} != {r}")
    jobs = [(X, r, c, opts, reference.eigs, spec.seed, k, spec.p) for k in range(spec.K)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = tuple(pool.map(_run_trial, jobs))
    else:
        trials = tuple(_run_trial(job) for job in jobs)
    n_ok = sum(tr.converged for tr in trials)
    if n_ok < 2:
        raise ValidationError(f"only {n_ok} of {spec.K} trials converged; need 2")
    return Ensemble(reference, trials)


def _mean_var(stack):
    # Work with offsets from the first trial: identical trials then give
    # offsets of exactly zero, hence exactly zero variance, which a plain
    # floating-point mean of K equal values does not guarantee.
    offsets = stack - stack[0]
    shift = offsets.mean(axis=0)
    var = np.mean(np.abs(offsets - shift) ** 2, axis=0)
    return stack[0] + shift, var


def ensemble_stats(e: Ensemble) -> EnsembleStats:
    """Per-index mean and population variance ``<|x - <x>|^2>`` over the
    converged trials."""
    models = [tr.model for tr in e.converged_trials]
    if len(models) < 2:
        raise ValidationError("ensemble statistics need at least 2 converged trials")
    me, ve = _mean_var(np.stack([m.eigs for m in models]))
    ma, va = _mean_var(np.stack([m.amps for m in models]))
    mm, vm = _mean_var(np.stack([m.modes for m in models]))
    return EnsembleStats(me, ve, ma, va, mm, vm, len(models))


def write_trial_table(e: Ensemble, path):
    """CSV ``trial,j,re,im,converged``; failed trials get NaN eigenvalues."""
    r = e.reference.rank
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "j", "re", "im", "converged"])
        for k, tr in enumerate(e.trials):
            eigs = tr.model.eigs if tr.model is not None else np.full(r, np.nan + 0j)
            for j, z in enumerate(eigs):
                w.writerow([k, j, repr(float(z.real)), repr(float(z.imag)),
                            int(tr.converged)])


def write_stats(stats: EnsembleStats, path):
    with open(path, "w") as fh:
        json.dump(stats.to_json(), fh)
