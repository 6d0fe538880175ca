"""Dense small-dimension linear algebra for purifications and the EPR attack.

A bipartite pure state is stored as its amplitude matrix ``M`` with
``|psi> = sum_ij M[i, j] |i>_A |j>_B``; every operation below is a few
lines of matrix algebra on ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

TOL = 1e-10
RANK_CUTOFF = 1e-10
MAX_DIM = 4096

Side = Literal["A", "B"]


class DimensionError(ValueError):
    pass


class ConcealingViolation(ValueError):
    """Raised when two purifications do not share Bob's reduced state."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    dim: int

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amplitudes))
        object.__setattr__(self, "amplitudes", amps)
        if self.dim < 1 or amps.size != self.dim:
            raise DimensionError(f"dim={self.dim} but {amps.size} amplitudes given")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > TOL:
            raise ValueError(f"state not normalized: |psi|^2 = {norm!r}")

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> "StateVector":
        amps = np.ravel(np.asarray(amplitudes, dtype=complex))
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps, amps.size)

    def bloch_vector(self) -> np.ndarray:
        """(<sx>, <sy>, <sz>) for a qubit."""
        if self.dim != 2:
            raise DimensionError("Bloch vector is defined for qubits only")
        return bloch_vectors(self.amplitudes[None, :])[0]

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class BipartiteState:
    amplitudes: np.ndarray
    dim_a: int
    dim_b: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if self.dim_a < 1 or self.dim_b < 1:
            raise DimensionError("subsystem dimensions must be positive")
        if amps.size != self.dim_a * self.dim_b or (amps.ndim == 2 and amps.shape != (self.dim_a, self.dim_b)):
            raise DimensionError(
                f"amplitude shape {amps.shape} does not match dims ({self.dim_a}, {self.dim_b})"
            )
        amps = _frozen(amps.reshape(self.dim_a, self.dim_b))
        object.__setattr__(self, "amplitudes", amps)
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > TOL:
            raise ValueError(f"state not normalized: Frobenius norm = {norm!r}")

    @classmethod
    def from_matrix(cls, m, normalize: bool = False) -> "BipartiteState":
        m = np.asarray(m, dtype=complex)
        if m.ndim != 2:
            raise DimensionError("amplitude matrix must be 2-D")
        if normalize:
            m = m / np.linalg.norm(m)
        return cls(m, m.shape[0], m.shape[1])

    @classmethod
    def product(cls, a: StateVector, b: StateVector) -> "BipartiteState":
        return cls(np.outer(a.amplitudes, b.amplitudes), a.dim, b.dim)

    @property
    def vector(self) -> np.ndarray:
        """Flat amplitudes in |a>|b> (kron) order."""
        return self.amplitudes.reshape(-1)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray
    dim: int

    def __post_init__(self):
        rho = _frozen(self.entries)
        object.__setattr__(self, "entries", rho)
        if rho.shape != (self.dim, self.dim):
            raise DimensionError(f"density matrix shape {rho.shape} != ({self.dim}, {self.dim})")
        if np.max(np.abs(rho - rho.conj().T)) > TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > TOL:
            raise ValueError(f"density matrix trace {np.trace(rho).real!r} != 1")
        if np.linalg.eigvalsh(rho).min() < -TOL:
            raise ValueError("density matrix has a negative eigenvalue")

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    entries: np.ndarray
    dim: int

    def __post_init__(self):
        u = _frozen(self.entries)
        object.__setattr__(self, "entries", u)
        if u.shape != (self.dim, self.dim):
            raise DimensionError(f"unitary shape {u.shape} != ({self.dim}, {self.dim})")
        if np.max(np.abs(u.conj().T @ u - np.eye(self.dim))) > TOL:
            raise ValueError("matrix is not unitary")

    @classmethod
    def from_matrix(cls, u) -> "UnitaryMatrix":
        u = np.asarray(u, dtype=complex)
        return cls(u, u.shape[0])


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    coefficients: np.ndarray
    basis_a: np.ndarray  # columns are |a_i>
    basis_b: np.ndarray  # columns are |b_i>

    def __post_init__(self):
        for name in ("coefficients", "basis_a", "basis_b"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def rank(self) -> int:
        return self.coefficients.size

    @property
    def weights(self) -> np.ndarray:
        """Squared coefficients (eigenvalues of either reduced state)."""
        return self.coefficients**2

    def reconstruct(self) -> BipartiteState:
        m = (self.basis_a * self.coefficients) @ self.basis_b.T
        return BipartiteState(m, self.basis_a.shape[0], self.basis_b.shape[0])


def bloch_vectors(amps: np.ndarray) -> np.ndarray:
    """Bloch vectors for an (n, 2) array of normalized qubit amplitudes."""
    a0, a1 = amps[:, 0], amps[:, 1]
    cross = np.conj(a0) * a1
    return np.stack(
        [2 * cross.real, 2 * cross.imag, np.abs(a0) ** 2 - np.abs(a1) ** 2], axis=1
    )


def partial_trace(state: BipartiteState, side: Side) -> DensityMatrix:
    """Trace out subsystem ``side`` of ``|psi><psi|``; the other side is kept."""
    m = state.amplitudes
    if m.shape != (state.dim_a, state.dim_b):
        raise DimensionError("declared dims do not match amplitude shape")
    if side == "A":
        rho = m.T @ m.conj()
        dim = state.dim_b
    elif side == "B":
        rho = m @ m.conj().T
        dim = state.dim_a
    else:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, dim)


def _fix_phase(v: np.ndarray) -> complex:
    """Phase that makes the first nonzero component of ``v`` real positive."""
    idx = np.flatnonzero(np.abs(v) > 1e-12)
    if idx.size == 0:
        return 1.0
    c = v[idx[0]]
    return np.conj(c) / abs(c)


def schmidt_decompose(state: BipartiteState) -> SchmidtDecomposition:
    u, s, vh = np.linalg.svd(state.amplitudes, full_matrices=False)
    keep = s > RANK_CUTOFF
    u, s, vh = u[:, keep], s[keep], vh[keep, :]
    basis_b = vh.T.copy()
    for k in range(s.size):
        ph = _fix_phase(u[:, k])
        u[:, k] *= ph
        basis_b[:, k] /= ph
    return SchmidtDecomposition(s, u, basis_b)


def complete_basis(vectors: np.ndarray, dim: int) -> np.ndarray:
    """Extend orthonormal columns to a full basis by Gram-Schmidt on e_0, e_1, ..."""
    basis = [v for v in np.asarray(vectors, dtype=complex).T]
    for k in range(dim):
        if len(basis) == dim:
            break
        e = np.zeros(dim, dtype=complex)
        e[k] = 1.0
        # two passes keep the result orthogonal to working precision
        for _ in range(2):
            for b in basis:
                e = e - np.vdot(b, e) * b
        n = np.linalg.norm(e)
        if n > 1e-8:
            basis.append(e / n)
    return np.stack(basis, axis=1)


def _orthonormalize(cols: np.ndarray) -> np.ndarray:
    out = []
    for v in cols.T:
        for _ in range(2):
            for b in out:
                v = v - np.vdot(b, v) * b
        out.append(v / np.linalg.norm(v))
    return np.stack(out, axis=1)


def construct_cheat_unitary(
    psi0: BipartiteState, psi1: BipartiteState, tol: float = 1e-8
) -> UnitaryMatrix:
    """Local unitary on A taking ``psi0`` to ``psi1``.

    Both states must leave Bob (side B) with the same reduced state. The
    A-side Schmidt vectors of ``psi0`` are mapped onto the vectors that
    pair with the same B-side Schmidt vectors in ``psi1``; degenerate
    Schmidt blocks are handled because the partner vectors are read off
    ``psi1`` directly rather than from a second decomposition.
    """
    if (psi0.dim_a, psi0.dim_b) != (psi1.dim_a, psi1.dim_b):
        raise DimensionError("states live in different spaces")
    rho0 = partial_trace(psi0, "A").entries
    rho1 = partial_trace(psi1, "A").entries
    gap = float(np.max(np.abs(rho0 - rho1)))
    if gap > tol:
        raise ConcealingViolation(f"Bob's reduced states differ by {gap:.3e}")

    sd = schmidt_decompose(psi0)
    e = sd.basis_a
    f = (psi1.amplitudes @ sd.basis_b.conj()) / sd.coefficients
    f = _orthonormalize(f)
    dim = psi0.dim_a
    e_full = complete_basis(e, dim)
    f_full = complete_basis(f, dim)
    return UnitaryMatrix(f_full @ e_full.conj().T, dim)


def apply_local_unitary(u: UnitaryMatrix, state: BipartiteState, side: Side) -> BipartiteState:
    m = state.amplitudes
    if side == "A":
        if u.dim != state.dim_a:
            raise DimensionError(f"unitary dim {u.dim} != dim_a {state.dim_a}")
        out = u.entries @ m
    elif side == "B":
        if u.dim != state.dim_b:
            raise DimensionError(f"unitary dim {u.dim} != dim_b {state.dim_b}")
        out = m @ u.entries.T
    else:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    return BipartiteState(out, state.dim_a, state.dim_b)


def overlap(psi: BipartiteState, phi: BipartiteState) -> float:
    """|<psi|phi>|."""
    return float(abs(np.vdot(psi.amplitudes, phi.amplitudes)))


def trace_distance(rho0: DensityMatrix, rho1: DensityMatrix) -> float:
    if rho0.dim != rho1.dim:
        raise DimensionError(f"dims differ: {rho0.dim} vs {rho1.dim}")
    diff = rho0.entries - rho1.entries
    ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(min(1.0, 0.5 * np.sum(np.abs(ev))))


def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryMatrix:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return UnitaryMatrix(q, dim)


def random_bipartite_state(dim_a: int, dim_b: int, rng: np.random.Generator) -> BipartiteState:
    m = rng.standard_normal((dim_a, dim_b)) + 1j * rng.standard_normal((dim_a, dim_b))
    return BipartiteState.from_matrix(m, normalize=True)
