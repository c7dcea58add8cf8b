"""Variable projection for sums of complex exponentials.

Fits ``X.T ~ T(alpha) @ B`` where ``T[k, j] = exp(alpha_j t_k)``.  For fixed
``alpha`` the optimal ``B`` is ``pinv(T) @ X.T``; what remains is a
nonlinear least-squares problem in ``alpha`` alone, solved here by
Levenberg-Marquardt on the stacked real and imaginary parts of ``alpha``.

With ``P = I - T pinv(T)``, ``d_j = t * exp(alpha_j t)`` and ``R = P X.T``,
the derivative of the residual along ``Re(alpha_j)`` is

    -(P d_j) B[j]^T - pinv(T)^H e_j (d_j^H R)

and along ``Im(alpha_j)`` it is ``-i`` times the same expression with the
second term negated.  Both terms are rank one, so the Gauss-Newton normal
equations are assembled from ``r x r`` Gram products without ever forming
the ``m*n x 2r`` Jacobian.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentBasisError, ValidationError
from .gridstore import SnapshotMatrix, TimeGrid
from .model import eval_basis

__all__ = ["EigConstraint", "VarProOptions", "SolveInfo", "eval_basis", "project_eigs",
           "solve_varpro", "varpro_residual", "varpro_jacobian"]

log = logging.getLogger(__name__)

PINV_RTOL = 1e-12


class EigConstraint(enum.Enum):
    UNCONSTRAINED = "none"
    LEFT_HALF_PLANE = "lhp"
    IMAGINARY_AXIS = "imag"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"unconstrained": "none", "lefthalfplane": "lhp",
                   "imaginaryaxis": "imag"}
        key = str(value).lower().replace("_", "").replace("-", "")
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class VarProOptions:
    max_outer_iters: int = 200
    lm_lambda0: float = 1.0
    lm_scale_up: float = 2.0
    lm_scale_down: float = 0.5
    residual_tol: float = 1e-8
    step_tol: float = 1e-10
    max_lm_retries: int = 30

    def __post_init__(self):
        bad = [name for name in ("max_outer_iters", "lm_lambda0", "lm_scale_up",
                                 "lm_scale_down", "residual_tol", "step_tol",
                                 "max_lm_retries")
               if not getattr(self, name) > 0]
        if bad:
            raise ValidationError(f"options must be positive: {bad}")
        if not self.lm_scale_up > 1 > self.lm_scale_down:
            raise ValidationError("need lm_scale_up > 1 > lm_scale_down")


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    final_relative_residual: float
    constraint_active_count: int
    residual_history: list = field(default_factory=list)


def project_eigs(alpha, c) -> np.ndarray:
    alpha = np.array(alpha, dtype=complex)
    c = EigConstraint.parse(c)
    if c is EigConstraint.LEFT_HALF_PLANE:
        return np.minimum(alpha.real, 0.0) + 1j * alpha.imag
    if c is EigConstraint.IMAGINARY_AXIS:
        return 0.0 + 1j * alpha.imag
    return alpha


def _times(t):
    return t.times if isinstance(t, TimeGrid) else np.ravel(np.asarray(t, dtype=float))


class _Projection:
    """Everything derived from one value of alpha."""

    def __init__(self, alpha, t, Xt):
        self.alpha = alpha
        T = eval_basis(alpha, t)
        U, s, Vh = np.linalg.svd(T, full_matrices=False)
        k = int(np.sum(s > PINV_RTOL * s[0]))
        U, s, Vh = U[:, :k], s[:k], Vh[:k]
        self.T = T
        self.U = U
        # pinv(T) = V diag(1/s) U^H
        self.Tpinv = (Vh.conj().T / s) @ U.conj().T
        self.B = self.Tpinv @ Xt
        self.R = Xt - T @ self.B
        self.res = float(np.linalg.norm(self.R))
        self.D = t[:, None] * T

    def pieces(self):
        """Left/right factors of the two rank-one terms per eigenvalue."""
        A = self.D - self.U @ (self.U.conj().T @ self.D)
        C = self.Tpinv.conj().T
        E = self.D.conj().T @ self.R
        return A, self.B, C, E


# Coefficients of the two rank-one terms for the Re and Im directions.
def _coefficients(r):
    alpha = np.concatenate([-np.ones(r), -1j * np.ones(r)])
    beta = np.concatenate([-np.ones(r), 1j * np.ones(r)])
    idx = np.concatenate([np.arange(r), np.arange(r)])
    return alpha, beta, idx


def _normal_equations(proj):
    A, B, C, E = proj.pieces()
    r = A.shape[1]
    ca, cb, idx = _coefficients(r)
    AA = A.conj().T @ A
    AC = A.conj().T @ C
    CC = C.conj().T @ C
    BB = B.conj() @ B.T
    BE = B.conj() @ E.T
    EE = E.conj() @ E.T
    M11 = (AA * BB)[np.ix_(idx, idx)]
    M12 = (AC * BE)[np.ix_(idx, idx)]
    M22 = (CC * EE)[np.ix_(idx, idx)]
    G = (np.outer(ca.conj(), ca) * M11 + np.outer(ca.conj(), cb) * M12
         + np.outer(cb.conj(), ca) * M12.conj().T + np.outer(cb.conj(), cb) * M22)
    h1 = np.sum((A.conj().T @ proj.R) * B.conj(), axis=1)[idx]
    h2 = np.sum((C.conj().T @ proj.R) * E.conj(), axis=1)[idx]
    g = ca.conj() * h1 + cb.conj() * h2
    return G.real, g.real


def varpro_residual(alpha, t, X) -> np.ndarray:
    """Projected residual ``(I - T pinv(T)) X.T`` as an ``m x n`` complex array."""
    Xt = _data_t(X)
    return _Projection(np.asarray(alpha, dtype=complex), _times(t), Xt).R


def varpro_jacobian(alpha, t, X) -> np.ndarray:
    """Dense Jacobian of the stacked real residual ``[Re vec R; Im vec R]``.

    Columns are ordered ``Re(alpha_0..r-1)`` then ``Im(alpha_0..r-1)``.
    Intended for checking and small problems; the solver never builds it.
    """
    proj = _Projection(np.asarray(alpha, dtype=complex), _times(t), _data_t(X))
    A, B, C, E = proj.pieces()
    ca, cb, idx = _coefficients(A.shape[1])
    cols = []
    for k, j in enumerate(idx):
        col = ca[k] * np.outer(A[:, j], B[j]) + cb[k] * np.outer(C[:, j], E[j])
        cols.append(np.concatenate([col.real.ravel(), col.imag.ravel()]))
    return np.stack(cols, axis=1)


def _data_t(X):
    if isinstance(X, SnapshotMatrix):
        return X.values.T
    return np.asarray(X).T


def _lm_step(G, g, lam, free):
    Gf = G[np.ix_(free, free)]
    diag = np.diag(Gf).copy()
    diag[diag <= 0] = np.finfo(float).tiny
    H = Gf + lam * np.diag(diag)
    delta = np.zeros_like(g)
    # lstsq: H can be numerically singular when two exponentials coincide
    delta[free] = np.linalg.lstsq(H, -g[free], rcond=None)[0]
    return delta


def _free_mask(alpha, c, r):
    free = np.ones(2 * r, dtype=bool)
    if c is EigConstraint.IMAGINARY_AXIS:
        free[:r] = False
    return free


def _constrained_step(G, g, lam, alpha, c):
    r = alpha.size
    free = _free_mask(alpha, c, r)
    delta = _lm_step(G, g, lam, free)
    if c is EigConstraint.LEFT_HALF_PLANE:
        # freeze real parts sitting on the boundary that the step pushes outward
        for _ in range(r):
            blocked = free[:r] & (alpha.real >= 0) & (delta[:r] > 0)
            if not blocked.any():
                break
            free[:r] &= ~blocked
            delta = _lm_step(G, g, lam, free)
    return delta[:r] + 1j * delta[r:]


def _active_count(alpha, c):
    if c is EigConstraint.IMAGINARY_AXIS:
        return int(alpha.size)
    if c is EigConstraint.LEFT_HALF_PLANE:
        return int(np.sum(alpha.real == 0))
    return 0


def solve_varpro(X, t, alpha0, c=EigConstraint.UNCONSTRAINED, opts=None):
    """Minimise ``||X.T - T(alpha) B||_F`` over ``alpha`` and ``B``.

    Parameters
    ----------
    X : SnapshotMatrix or (n, m) array
        Data, one column per sample time.
    t : TimeGrid or (m,) array
        Sample times, arbitrary spacing.
    alpha0 : (r,) complex array
        Initial eigenvalues; projected onto the constraint set first.
    c : EigConstraint
    opts : VarProOptions

    Returns
    -------
    alpha : (r,) complex array
    B : (r, n) complex array
    info : SolveInfo
        ``converged`` is False when the iteration limit is hit or no
        Levenberg-Marquardt damping produces a decrease; the best iterate
        found so far is returned in that case.
    """
    opts = opts or VarProOptions()
    c = EigConstraint.parse(c)
    Xt = _data_t(X)
    t = _times(t)
    m, n = Xt.shape
    alpha = np.ravel(np.asarray(alpha0, dtype=complex))
    r = alpha.size
    if t.size != m:
        raise ValidationError(f"{t.size} sample times for {m} snapshots")
    if not 1 <= r <= min(n, m):
        raise ValidationError(f"rank {r} outside [1, {min(n, m)}]")
    if not np.all(np.isfinite(alpha)):
        raise ValidationError("alpha0 must be finite")
    xnorm = float(np.linalg.norm(Xt))
    if xnorm == 0:
        raise ValidationError("data are identically zero")

    alpha = project_eigs(alpha, c)
    proj = _Projection(alpha, t, Xt)
    history = [proj.res / xnorm]
    lam = opts.lm_lambda0
    converged = False
    it = 0
    for it in range(1, opts.max_outer_iters + 1):
        G, g = _normal_equations(proj)
        step_floor = opts.step_tol * max(1.0, float(np.linalg.norm(alpha)))
        accepted = None
        stalled = False
        for _ in range(opts.max_lm_retries):
            cand = project_eigs(alpha + _constrained_step(G, g, lam, alpha, c), c)
            step = float(np.linalg.norm(cand - alpha))
            if step <= step_floor:
                stalled = True
                break
            try:
                trial = _Projection(cand, t, Xt)
            except DivergentBasisError:
                lam *= opts.lm_scale_up
                continue
            if trial.res < proj.res:
                accepted = trial
                lam *= opts.lm_scale_down
                break
            lam *= opts.lm_scale_up
        if stalled:
            converged = True
            break
        if accepted is None:
            log.info("varpro: no damping reduced the residual after %d retries",
                     opts.max_lm_retries)
            break
        alpha, proj = accepted.alpha, accepted
        history.append(proj.res / xnorm)
        if history[-2] - history[-1] < opts.residual_tol or step <= step_floor:
            converged = True
            break

    info = SolveInfo(converged=converged, iterations=it,
                     final_relative_residual=history[-1],
                     constraint_active_count=_active_count(alpha, c),
                     residual_history=history)
    return alpha, proj.B, info
