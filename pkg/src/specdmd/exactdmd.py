"""Exact DMD: eigendecomposition of the best-fit one-step operator."""
from __future__ import annotations

import logging

import numpy as np

from .errors import RankDeficiencyError, ValidationError
from .gridstore import SnapshotMatrix
from .model import DmdModel, conjugate_closed, eval_basis

log = logging.getLogger(__name__)

RANK_RTOL = 1e-12
NYQUIST_MARGIN = 1e-9


def fit_amplitudes(modes, eigs, values, times):
    """Least-squares ``b`` for ``values[:, k] ~ modes @ (b * exp(eigs t_k))``.

    Uses the normal equations, which factor as a Hadamard product of the
    two Gram matrices, so the ``n*m x r`` design matrix is never built.
    """
    T = eval_basis(eigs, times)
    G = (modes.conj().T @ modes) * (T.conj().T @ T)
    rhs = np.einsum("jk,kj->j", modes.conj().T @ values, T.conj())
    b, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    return b


def _truncated_svd(A, r):
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if r > s.size or s[r - 1] <= RANK_RTOL * s[0]:
        sr = s[r - 1] if r <= s.size else 0.0
        raise RankDeficiencyError(
            f"rank {r} requested but sigma_r/sigma_1 = {sr / s[0]:.3g}")
    return U[:, :r], s[:r], Vh[:r].conj().T


def exact_dmd_eigs(X1, X2, r):
    """Discrete eigenvalues and exact modes of the rank-``r`` operator
    mapping the columns of ``X1`` onto those of ``X2``."""
    U, s, V = _truncated_svd(X1, r)
    X2V = (X2 @ V) / s
    Atilde = U.conj().T @ X2V
    lam, W = np.linalg.eig(Atilde)
    return lam, X2V @ W


def fit_exact(X: SnapshotMatrix, r: int) -> DmdModel:
    """Rank-``r`` exact DMD on a uniformly sampled snapshot matrix.

    Amplitudes are fit by least squares against every snapshot rather than
    taken from the first one.
    """
    dt = X.time.uniform_dt
    if dt is None:
        raise ValidationError("exact DMD needs a uniform TimeGrid; use fit_optdmd "
                              "for arbitrarily sampled data")
    if not 1 <= r <= min(X.n, X.m - 1):
        raise ValidationError(f"rank {r} outside [1, {min(X.n, X.m - 1)}]")
    V = X.values
    lam, modes = exact_dmd_eigs(V[:, :-1], V[:, 1:], r)
    omega = np.log(lam.astype(complex)) / dt
    norms = np.linalg.norm(modes, axis=0)
    # a zero mode carries a zero eigenvalue; keep it representable
    norms[norms == 0] = 1.0
    modes = modes / norms

    warnings = []
    if np.any(np.abs(omega.imag) * dt > np.pi - NYQUIST_MARGIN):
        warnings.append("eigenvalue at the Nyquist limit; frequency is aliased")
    if not np.all(np.isfinite(omega)):
        raise RankDeficiencyError("zero discrete eigenvalue; reduce the rank")
    if not conjugate_closed(omega):
        warnings.append("eigenvalues not closed under conjugation")
    for w in warnings:
        log.warning(w)

    amps = fit_amplitudes(modes, omega, V, X.times)
    return DmdModel(modes, omega, amps, X.time.span, constraint="exact",
                    converged=True, warnings=tuple(warnings))
