"""Synthetic data with known answers.

``gen_exponential_mixture`` draws data from a planted DMD model (plus optional
noise).  ``gen_traveling_daynight`` mimics photolysis-driven chemistry: values
switch on during each cell's local day and drop to zero at night.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gridstore import GridMeta, SnapshotMatrix, SnapshotSet, TimeGrid
from .model import DmdModel, evaluate


@dataclass(frozen=True)
class MixtureSpec:
    n: int
    eigs: tuple
    times: TimeGrid
    mode_seed: int = 0
    amp_seed: int = 1
    noise_seed: int = 2
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not isinstance(self.times, TimeGrid):
            object.__setattr__(self, "times", TimeGrid(self.times))
        object.__setattr__(self, "eigs", tuple(complex(z) for z in np.ravel(self.eigs)))
        if self.n < 1:
            raise ValidationError("n must be positive")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        _conjugate_pairs(np.array(self.eigs))


def _conjugate_pairs(eigs, tol=1e-12):
    """Split indices into real eigenvalues and (upper, lower) conjugate pairs."""
    real, pairs, used = [], [], set()
    for i, z in enumerate(eigs):
        if i in used:
            continue
        if abs(z.imag) <= tol * max(1.0, abs(z)):
            real.append(i)
            used.add(i)
            continue
        partner = next((k for k in range(i + 1, eigs.size) if k not in used
                        and abs(eigs[k] - np.conj(z)) <= tol * max(1.0, abs(z))), None)
        if partner is None:
            raise ValidationError(f"eigenvalue {z} has no conjugate partner")
        pairs.append((i, partner))
        used.update((i, partner))
    return real, pairs


def gen_exponential_mixture(spec: MixtureSpec):
    """Planted-model data ``Re(Phi diag(b) exp(Omega t))`` plus scaled noise.

    Returns the data and the exact generating model (unit-norm modes).
    """
    eigs = np.array(spec.eigs, dtype=complex)
    r = eigs.size
    real, pairs = _conjugate_pairs(eigs)
    mode_rng = np.random.default_rng(spec.mode_seed)
    amp_rng = np.random.default_rng(spec.amp_seed)
    modes = np.zeros((spec.n, r), dtype=complex)
    amps = np.zeros(r, dtype=complex)
    for i in real:
        eigs[i] = eigs[i].real
        v = mode_rng.standard_normal(spec.n)
        modes[:, i] = v / np.linalg.norm(v)
        amps[i] = amp_rng.uniform(0.5, 1.5)
    for i, k in pairs:
        eigs[k] = np.conj(eigs[i])
        v = mode_rng.standard_normal(spec.n) + 1j * mode_rng.standard_normal(spec.n)
        v /= np.linalg.norm(v)
        modes[:, i], modes[:, k] = v, v.conj()
        # each pair contributes 2*Re(b phi e^{wt}); halve so |b| matches real modes
        a = 0.5 * amp_rng.uniform(0.5, 1.5) * np.exp(2j * np.pi * amp_rng.uniform())
        amps[i], amps[k] = a, np.conj(a)
    truth = DmdModel(modes, eigs, amps, spec.times.span, constraint="none")
    clean = evaluate(truth, spec.times).values
    if spec.noise_sigma > 0:
        rms = np.sqrt(np.mean(clean ** 2))
        noise = np.random.default_rng(spec.noise_seed).standard_normal(clean.shape)
        clean = clean + spec.noise_sigma * rms * noise
    return SnapshotMatrix(clean, spec.times), truth


@dataclass(frozen=True)
class DayNightSpec:
    lons: tuple
    samples_per_day: int = 72
    n_days: int = 10
    day_fraction: float = 0.5
    profile: str = "half_sine"
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lons", tuple(float(x) for x in np.ravel(self.lons)))
        if not 0 < self.day_fraction < 1:
            raise ValidationError("day_fraction must lie in (0, 1)")
        if self.day_fraction * self.samples_per_day < 1:
            raise ValidationError("day window shorter than one sample")
        if self.profile not in ("half_sine", "square"):
            raise ValidationError(f"unknown profile {self.profile!r}")
        if self.n_days < 1:
            raise ValidationError("n_days must be positive")


def daynight_profile(local_time, day_fraction, profile, amplitude=1.0):
    """Value at local solar time (fraction of a day, noon = 0.5)."""
    start = 0.5 - 0.5 * day_fraction
    phase = (np.mod(local_time, 1.0) - start) / day_fraction
    on = (phase >= 0) & (phase < 1)
    shape = np.sin(np.pi * phase) if profile == "half_sine" else np.ones_like(phase)
    return np.where(on, amplitude * shape, 0.0)


def gen_traveling_daynight(spec: DayNightSpec) -> SnapshotSet:
    """Day/night signal on one latitude ring.

    Local time at longitude ``L`` runs ``L/360`` day ahead of UTC, so the
    pattern travels westward.  Sample phases are computed in integer
    arithmetic where possible so that whole-sample offsets are exact.
    """
    spd = spec.samples_per_day
    m = spec.n_days * spd
    k = np.arange(m)
    lons = np.array(spec.lons)
    offset = lons / 360.0 * spd
    whole = np.rint(offset)
    exact = np.abs(offset - whole) < 1e-9
    offset = np.where(exact, whole, offset)
    # local time in samples, reduced modulo one day before dividing
    local = np.mod(k[None, :] + offset[:, None], spd) / spd
    values = daynight_profile(local, spec.day_fraction, spec.profile, spec.amplitude)
    meta = GridMeta(lons=lons, lats=[0.0], levs=[0], species="SYNTH", kind="CONC",
                    samples_per_day=spd)
    return SnapshotSet(meta, SnapshotMatrix(values, TimeGrid(k / spd)))
