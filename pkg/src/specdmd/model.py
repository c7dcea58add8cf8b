"""The fitted model x(t) = sum_j b_j phi_j exp(omega_j t)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergentBasisError, ValidationError
from .gridstore import SnapshotMatrix, TimeGrid

OVERFLOW_EXPONENT = 700.0


def eval_basis(alpha, t) -> np.ndarray:
    """Matrix of exponentials, entry ``(k, j) = exp(alpha_j * t_k)``."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    t = t.times if isinstance(t, TimeGrid) else np.ravel(np.asarray(t, dtype=float))
    if alpha.size < 1:
        raise ValidationError("need at least one exponent")
    growth = np.outer(t, alpha.real)
    if np.any(growth > OVERFLOW_EXPONENT):
        raise DivergentBasisError(
            f"Re(alpha)*t reaches {growth.max():.3g} > {OVERFLOW_EXPONENT}")
    return np.exp(np.outer(t, alpha))


@dataclass(frozen=True)
class DmdModel:
    """Modes (unit 2-norm columns), continuous-time eigenvalues in 1/day and
    amplitudes, valid over ``train_span`` and extrapolated beyond it."""

    modes: np.ndarray
    eigs: np.ndarray
    amps: np.ndarray
    train_span: tuple
    constraint: str = "none"
    converged: bool = True
    warnings: tuple = field(default=())

    def __post_init__(self):
        modes = np.array(self.modes, dtype=complex, ndmin=2)
        eigs = np.array(self.eigs, dtype=complex).ravel()
        amps = np.array(self.amps, dtype=complex).ravel()
        r = eigs.size
        if r < 1 or amps.size != r or modes.shape[1] != r:
            raise ValidationError(
                f"inconsistent model sizes: modes {modes.shape}, eigs {eigs.size}, amps {amps.size}")
        for a in (modes, eigs, amps):
            a.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "eigs", eigs)
        object.__setattr__(self, "amps", amps)
        object.__setattr__(self, "train_span", (float(self.train_span[0]),
                                                float(self.train_span[1])))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def rank(self):
        return self.eigs.size

    @property
    def n(self):
        return self.modes.shape[0]

    def permuted(self, perm):
        perm = np.asarray(perm)
        return replace(self, modes=self.modes[:, perm], eigs=self.eigs[perm],
                       amps=self.amps[perm])

    def to_json(self):
        return {
            "rank": self.rank,
            "eigs": _pairs(self.eigs),
            "amps": _pairs(self.amps),
            "modes": [_pairs(row) for row in self.modes],
            "train_span": list(self.train_span),
            "constraint": self.constraint,
            "converged": bool(self.converged),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, d):
        model = cls(
            modes=_unpairs(d["modes"]),
            eigs=_unpairs(d["eigs"]),
            amps=_unpairs(d["amps"]),
            train_span=tuple(d["train_span"]),
            constraint=d.get("constraint", "none"),
            converged=bool(d.get("converged", True)),
            warnings=tuple(d.get("warnings", ())),
        )
        if model.rank != int(d["rank"]):
            raise ValidationError(f"rank {d['rank']} disagrees with {model.rank} eigenvalues")
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _pairs(z):
    # json writes floats with repr(), the shortest round-trip decimal
    return [[float(v.real), float(v.imag)] for v in np.ravel(z)]


def _unpairs(p):
    a = np.asarray(p, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def evaluate(model: DmdModel, t) -> SnapshotMatrix:
    """Real part of ``Phi diag(b) exp(Omega t)`` at the requested times.

    Times beyond ``model.train_span`` give the forecast.
    """
    grid = t if isinstance(t, TimeGrid) else TimeGrid(t)
    T = eval_basis(model.eigs, grid)
    values = (model.modes * model.amps) @ T.T
    return SnapshotMatrix(values.real, grid)


def relative_error(X, Xhat) -> float:
    """Frobenius relative error ``||X - Xhat|| / ||X||``."""
    a = X.values if isinstance(X, SnapshotMatrix) else np.asarray(X, dtype=float)
    b = Xhat.values if isinstance(Xhat, SnapshotMatrix) else np.asarray(Xhat, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    denom = np.linalg.norm(a)
    if denom == 0:
        raise ValidationError("relative error undefined for an all-zero reference")
    return float(np.linalg.norm(a - b) / denom)


def conjugate_closed(eigs, tol=1e-9) -> bool:
    """True if every eigenvalue's conjugate is also present (as a multiset)."""
    eigs = np.asarray(eigs, dtype=complex)
    unused = list(np.conj(eigs))
    scale = max(1.0, float(np.max(np.abs(eigs)))) if eigs.size else 1.0
    for z in eigs:
        d = np.abs(np.asarray(unused) - z)
        k = int(np.argmin(d))
        if d[k] > tol * scale:
            return False
        unused.pop(k)
    return True


def multiset_distance(a, b) -> float:
    """min over matchings of sum |a_i - b_pi(i)| (optimal assignment)."""
    from scipy.optimize import linear_sum_assignment

    a = np.ravel(np.asarray(a, dtype=complex))
    b = np.ravel(np.asarray(b, dtype=complex))
    if a.size != b.size:
        raise ValidationError("multisets must have equal size")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())
