"""Beta-decay model for the unstable spin-1/2 carrier W.

Units: energies and momenta in keV (c = 1); times in whatever unit the
caller picks for ``mean_lifetime``. The protocol layer uses the binding
period T as its time unit.

Polarized emission density used throughout::

    dP/dOmega = (1 + kappa(p) cos(theta)) / (4 pi),   kappa(p) = alpha * p / E(p)

with the magnitude drawn from the allowed spectrum
``dN/dT ~ p E (Q - T)^2`` or, in monoenergetic mode, fixed at the
endpoint momentum.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .qcore import StateVector

ALLOWED = "allowed"
MONOENERGETIC = "monoenergetic"

NEUTRON_LIFETIME_S = 885.7
MUON_LIFETIME_S = 2.2e-6
CO60_LIFETIME_S = 5.3 * 365.25 * 86400.0


class InvalidEventError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleSpecies:
    name: str = "neutron"
    mean_lifetime: float = NEUTRON_LIFETIME_S
    asymmetry: float = -0.117
    endpoint_kev: float = 782.0
    electron_mass_kev: float = 511.0
    spectrum: str = ALLOWED

    def __post_init__(self):
        if not self.mean_lifetime > 0:
            raise ValueError(f"mean_lifetime must be > 0, got {self.mean_lifetime}")
        if not self.endpoint_kev > 0:
            raise ValueError(f"endpoint_kev must be > 0, got {self.endpoint_kev}")
        if self.electron_mass_kev < 0:
            raise ValueError("electron_mass_kev must be >= 0")
        if abs(self.asymmetry) > 1:
            raise ValueError(f"|asymmetry| must be <= 1, got {self.asymmetry}")
        if self.spectrum not in (ALLOWED, MONOENERGETIC):
            raise ValueError(f"unknown spectrum {self.spectrum!r}")

    @property
    def p_max(self) -> float:
        q, m = self.endpoint_kev, self.electron_mass_kev
        return float(np.sqrt(q * q + 2 * q * m))

    def beta(self, p):
        """Electron speed v/c at momentum ``p``."""
        p = np.asarray(p, dtype=float)
        return p / np.sqrt(p * p + self.electron_mass_kev**2)

    def kappa(self, p):
        return self.asymmetry * self.beta(p)

    def with_lifetime(self, mean_lifetime: float) -> "ParticleSpecies":
        return replace(self, mean_lifetime=float(mean_lifetime))

    def to_dict(self) -> dict:
        return asdict(self)


# Lifetimes in seconds. The asymmetry values are configuration, not data
# from the protocol analysis; see README.
PRESETS: dict[str, ParticleSpecies] = {
    "neutron": ParticleSpecies("neutron", NEUTRON_LIFETIME_S, -0.117, 782.0, 511.0),
    "muon": ParticleSpecies("muon", MUON_LIFETIME_S, -1.0 / 3.0, 52320.0, 511.0),
    "co60": ParticleSpecies("co60", CO60_LIFETIME_S, -1.0, 318.0, 511.0),
}


def load_species_file(path: str | Path) -> dict[str, ParticleSpecies]:
    """Read species presets from a JSON file.

    Format: ``{"species": [{"name": ..., "mean_lifetime": ..., "asymmetry": ...,
    "endpoint_kev": ..., "electron_mass_kev": ..., "spectrum": ...}, ...]}``;
    omitted fields take the neutron defaults.
    """
    data = json.loads(Path(path).read_text())
    out = {}
    for entry in data["species"]:
        sp = ParticleSpecies(**entry)
        out[sp.name] = sp
    return out


class Polarization(enum.Enum):
    PLUS_Z = (0.0, 0.0, 1.0)
    MINUS_Z = (0.0, 0.0, -1.0)
    PLUS_X = (1.0, 0.0, 0.0)
    MINUS_X = (-1.0, 0.0, 0.0)

    @property
    def axis(self) -> np.ndarray:
        return np.array(self.value)

    @classmethod
    def from_preparation(cls, basis: int, bit: int) -> "Polarization":
        """basis 0 = Z, 1 = X; bit 0 = '+', 1 = '-'."""
        return _POL_TABLE[2 * int(basis) + int(bit)]


_POL_TABLE = (Polarization.PLUS_Z, Polarization.MINUS_Z, Polarization.PLUS_X, Polarization.MINUS_X)
POLARIZATION_AXES = np.array([p.value for p in _POL_TABLE])


@dataclass(frozen=True, eq=False)
class DecayEvent:
    index: int
    decay_time: float
    electron_momentum: np.ndarray

    def __post_init__(self):
        p = np.array(self.electron_momentum, dtype=float).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "electron_momentum", p)
        if self.decay_time < 0:
            raise InvalidEventError(f"negative decay time {self.decay_time}")
        if not np.linalg.norm(p) > 0:
            raise InvalidEventError("electron momentum has zero magnitude")


# -- timing ---------------------------------------------------------------


def sample_decay_time(species: ParticleSpecies, rng: np.random.Generator, size=None):
    return rng.exponential(species.mean_lifetime, size=size)


def expected_decay_count(n: float, species: ParticleSpecies, t: float) -> float:
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return float(n * -np.expm1(-t / species.mean_lifetime))


def dilution_factor(species: ParticleSpecies, genuine_window: float, total_window: float) -> float:
    """Fraction of announced events that are genuine for a late switcher."""
    if total_window == 0:
        raise ValueError("total_window must be > 0")
    if not 0 <= genuine_window <= total_window:
        raise ValueError("need 0 <= genuine_window <= total_window")
    tau = species.mean_lifetime
    return float(np.expm1(-genuine_window / tau) / np.expm1(-total_window / tau))


def truncated_decay_times(species: ParticleSpecies, t_max: float, rng, size):
    """Decay times conditioned on t <= t_max (inverse CDF)."""
    u = rng.random(size)
    tau = species.mean_lifetime
    return -tau * np.log1p(u * np.expm1(-t_max / tau))


# -- electron kinematics --------------------------------------------------


def allowed_spectrum_density(species: ParticleSpecies, kinetic):
    """Unnormalized dN/dT_e = p E (Q - T)^2 on (0, Q)."""
    t = np.asarray(kinetic, dtype=float)
    m, q = species.electron_mass_kev, species.endpoint_kev
    p = np.sqrt(np.clip(t * t + 2 * t * m, 0, None))
    dens = p * (t + m) * (q - t) ** 2
    return np.where((t > 0) & (t < q), dens, 0.0)


@lru_cache(maxsize=64)
def _spectrum_peak(endpoint: float, mass: float) -> float:
    sp = ParticleSpecies(endpoint_kev=endpoint, electron_mass_kev=mass)
    res = minimize_scalar(
        lambda t: -float(allowed_spectrum_density(sp, t)),
        bounds=(0.0, endpoint),
        method="bounded",
        options={"xatol": 1e-9 * endpoint},
    )
    return -float(res.fun)


def sample_momentum_magnitude(species: ParticleSpecies, rng: np.random.Generator, size: int) -> np.ndarray:
    if species.spectrum == MONOENERGETIC:
        return np.full(size, species.p_max)
    q, m = species.endpoint_kev, species.electron_mass_kev
    bound = 1.001 * _spectrum_peak(q, m)
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        batch = max(64, int(need * 2.2))
        t = rng.uniform(0.0, q, batch)
        keep = t[rng.uniform(0.0, bound, batch) < allowed_spectrum_density(species, t)]
        take = min(need, keep.size)
        out[filled : filled + take] = keep[:take]
        filled += take
    return np.sqrt(out * out + 2 * out * m)


def _orthonormal_frames(axes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.where(np.abs(axes[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(axes, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(axes, e1)
    return e1, e2


def _directions_from_cos(axes, cos_theta, rng):
    phi = rng.uniform(0.0, 2 * np.pi, cos_theta.size)
    sin_theta = np.sqrt(np.clip(1 - cos_theta**2, 0, None))
    e1, e2 = _orthonormal_frames(axes)
    return (
        cos_theta[:, None] * axes
        + (sin_theta * np.cos(phi))[:, None] * e1
        + (sin_theta * np.sin(phi))[:, None] * e2
    )


def sample_cos_theta(kappa, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw from (1 + kappa c)/2 on [-1, 1]."""
    kappa = np.asarray(kappa, dtype=float)
    u = rng.random(kappa.shape)
    # rationalized root of kappa c^2 + 2c + 2 - kappa - 4u = 0, stable at kappa = 0
    disc = np.clip(1 - kappa * (2 - kappa - 4 * u), 0, None)
    return np.clip((4 * u - 2 + kappa) / (1 + np.sqrt(disc)), -1.0, 1.0)


def sample_electron_momenta(axes, species: ParticleSpecies, rng: np.random.Generator) -> np.ndarray:
    """Vectorized honest sampler: one momentum per row of ``axes`` (unit spin axes)."""
    axes = np.atleast_2d(np.asarray(axes, dtype=float))
    mag = sample_momentum_magnitude(species, rng, axes.shape[0])
    cos_t = sample_cos_theta(species.kappa(mag), rng)
    return mag[:, None] * _directions_from_cos(axes, cos_t, rng)


def sample_electron_momentum(pol: Polarization, species: ParticleSpecies, rng: np.random.Generator, size=None):
    n = 1 if size is None else int(size)
    out = sample_electron_momenta(np.tile(pol.axis, (n, 1)), species, rng)
    return out[0] if size is None else out


def fabricate_isotropic_event(species: ParticleSpecies, rng: np.random.Generator, size=None):
    """Hand-made momenta: honest magnitude spectrum, isotropic direction."""
    n = 1 if size is None else int(size)
    mag = sample_momentum_magnitude(species, rng, n)
    cos_t = rng.uniform(-1.0, 1.0, n)
    dirs = _directions_from_cos(np.tile([0.0, 0.0, 1.0], (n, 1)), cos_t, rng)
    out = mag[:, None] * dirs
    return out[0] if size is None else out


def compute_theta(pol: Polarization | np.ndarray, p) -> float:
    axis = pol.axis if isinstance(pol, Polarization) else np.asarray(pol, dtype=float)
    p = np.asarray(p, dtype=float)
    norm = np.linalg.norm(p)
    if not norm > 0:
        raise InvalidEventError("zero-magnitude momentum")
    return float(np.arccos(np.clip(axis @ p / norm, -1.0, 1.0)))


def compute_thetas(axes: np.ndarray, momenta: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(momenta, axis=1)
    if np.any(norms <= 0):
        raise InvalidEventError("zero-magnitude momentum")
    cos = np.einsum("ij,ij->i", axes, momenta) / norms
    return np.arccos(np.clip(cos, -1.0, 1.0))


def decay_measurement_density(pol_candidate: StateVector, direction, kappa: float) -> float:
    """Likelihood of an emission along ``direction`` for a W in ``pol_candidate``.

    Equals Tr[rho (I + kappa n.sigma)/2] / (2 pi), i.e.
    (1 + kappa <n.sigma>) / (4 pi); integrates to one over the sphere.
    """
    if abs(kappa) > 1:
        raise ValueError("|kappa| must be <= 1")
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    return float((1 + kappa * pol_candidate.bloch_vector() @ n) / (4 * np.pi))
