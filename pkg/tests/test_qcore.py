import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unstable_qbc import qcore
from unstable_qbc.qcore import (
    BipartiteState,
    ConcealingViolation,
    DensityMatrix,
    DimensionError,
    StateVector,
    UnitaryMatrix,
    apply_local_unitary,
    construct_cheat_unitary,
    overlap,
    partial_trace,
    random_bipartite_state,
    random_unitary,
    schmidt_decompose,
    trace_distance,
)

S = 1 / np.sqrt(2)
BELL = BipartiteState.from_matrix([[S, 0], [0, S]])
FLIPPED_BELL = BipartiteState.from_matrix([[0, S], [S, 0]])
BIT_FLIP = UnitaryMatrix.from_matrix([[0, 1], [1, 0]])

dims = st.integers(1, 6)
seeds = st.integers(0, 2**32 - 1)


def brute_partial_trace_a(psi: BipartiteState) -> np.ndarray:
    """rho_B[j, k] = sum_i <i j|psi><psi|i k>, straight from the full projector."""
    da, db = psi.dim_a, psi.dim_b
    full = np.outer(psi.vector, psi.vector.conj())
    rho = np.zeros((db, db), dtype=complex)
    for i in range(da):
        for j in range(db):
            for k in range(db):
                rho[j, k] += full[i * db + j, i * db + k]
    return rho


# -- types -----------------------------------------------------------------


def test_state_vector_rejects_unnormalized():
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, 1.0]), 2)


def test_state_vector_dim_mismatch():
    with pytest.raises(DimensionError):
        StateVector(np.array([1.0, 0.0]), 3)


def test_bipartite_shape_mismatch():
    with pytest.raises(DimensionError):
        BipartiteState(np.eye(2) * S, 2, 3)


def test_density_matrix_invariants_enforced():
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.2, -0.2]), 2)
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.3], [0.1, 0.5]]), 2)


def test_unitary_check():
    with pytest.raises(ValueError):
        UnitaryMatrix.from_matrix([[1, 1], [0, 1]])


# -- partial_trace -------------------------------------------------------------


def test_bell_reduces_to_maximally_mixed():
    assert np.allclose(partial_trace(BELL, "A").entries, np.eye(2) / 2, atol=1e-12)
    assert np.allclose(partial_trace(BELL, "B").entries, np.eye(2) / 2, atol=1e-12)


def test_product_state_reduces_to_pure_projector():
    plus = StateVector(np.array([S, S]), 2)
    zero = StateVector(np.array([1, 0]), 2)
    rho = partial_trace(BipartiteState.product(zero, plus), "A")
    assert np.allclose(rho.entries, plus.projector(), atol=1e-12)


def test_weighted_correlated_state():
    m = np.diag([np.sqrt(0.7), np.sqrt(0.3)])
    rho = partial_trace(BipartiteState.from_matrix(m), "A")
    assert np.allclose(rho.entries, brute_partial_trace_a(BipartiteState.from_matrix(m)))
    assert np.allclose(rho.entries, np.diag([0.7, 0.3]), atol=1e-12)


@given(dims, dims, seeds)
def test_partial_trace_matches_brute_force(da, db, seed):
    psi = random_bipartite_state(da, db, np.random.default_rng(seed))
    rho = partial_trace(psi, "A")
    assert rho.dim == db
    assert np.allclose(rho.entries, brute_partial_trace_a(psi), atol=1e-12)
    assert partial_trace(psi, "B").dim == da


def test_partial_trace_bad_side():
    with pytest.raises(ValueError):
        partial_trace(BELL, "C")


# -- schmidt ---------------------------------------------------------------------


def test_schmidt_product_and_bell():
    prod = BipartiteState.from_matrix(np.outer([1, 0], [S, S]))
    assert np.allclose(schmidt_decompose(prod).coefficients, [1.0])
    assert np.allclose(schmidt_decompose(BELL).coefficients, [S, S])


@given(dims, dims, seeds)
def test_schmidt_invariants(da, db, seed):
    psi = random_bipartite_state(da, db, np.random.default_rng(seed))
    sd = schmidt_decompose(psi)
    assert np.all(np.diff(sd.coefficients) <= 1e-15)
    assert abs(np.sum(sd.weights) - 1) < 1e-10
    for basis in (sd.basis_a, sd.basis_b):
        assert np.allclose(basis.conj().T @ basis, np.eye(sd.rank), atol=1e-10)
    assert np.allclose(sd.reconstruct().amplitudes, psi.amplitudes, atol=1e-8)
    # first nonzero component of each |a_i> is real positive
    for col in sd.basis_a.T:
        c = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
        assert abs(c.imag) < 1e-12 and c.real > 0


@given(dims, dims, seeds)
def test_schmidt_weights_are_reduced_spectrum(da, db, seed):
    psi = random_bipartite_state(da, db, np.random.default_rng(seed))
    w = np.sort(schmidt_decompose(psi).weights)
    for side in ("A", "B"):
        ev = np.sort(np.linalg.eigvalsh(brute_partial_trace_a(psi) if side == "A" else partial_trace(psi, "B").entries))
        ev = ev[ev > 1e-10]
        assert np.allclose(w, ev, atol=1e-8)


def test_schmidt_random_4x4_eigen_oracle(rng):
    psi = random_bipartite_state(4, 4, rng)
    ev = np.sort(np.linalg.eigvalsh(brute_partial_trace_a(psi)))[::-1]
    assert np.allclose(schmidt_decompose(psi).weights, ev, atol=1e-8)


# -- cheat unitary ------------------------------------------------------------------


def test_cheat_unitary_identity_case(rng):
    psi = random_bipartite_state(3, 3, rng)
    u = construct_cheat_unitary(psi, psi)
    out = apply_local_unitary(u, psi, "A")
    assert overlap(out, psi) == pytest.approx(1.0, abs=1e-10)
    sd = schmidt_decompose(psi)
    assert np.allclose(u.entries @ sd.basis_a, sd.basis_a, atol=1e-10)


def test_cheat_unitary_bell_pair():
    u = construct_cheat_unitary(BELL, FLIPPED_BELL)
    assert overlap(apply_local_unitary(u, BELL, "A"), FLIPPED_BELL) == pytest.approx(1.0, abs=1e-12)
    # the bit flip is a valid answer too: check it by direct multiplication
    flipped = np.array([[0, 1], [1, 0]]) @ BELL.amplitudes
    assert np.allclose(flipped, FLIPPED_BELL.amplitudes)


@given(st.integers(1, 8), st.integers(1, 8), seeds)
def test_cheat_unitary_random_pairs(da, db, seed):
    r = np.random.default_rng(seed)
    psi0 = random_bipartite_state(da, db, r)
    psi1 = apply_local_unitary(random_unitary(da, r), psi0, "A")
    u = construct_cheat_unitary(psi0, psi1)
    assert np.max(np.abs(u.entries.conj().T @ u.entries - np.eye(da))) < 1e-10
    out = apply_local_unitary(u, psi0, "A")
    assert overlap(out, psi1) >= 1 - 1e-8
    assert np.allclose(partial_trace(out, "A").entries, partial_trace(psi0, "A").entries, atol=1e-10)


def test_cheat_unitary_degenerate_schmidt(rng):
    # maximally entangled 4x4: every Schmidt coefficient is degenerate
    psi0 = BipartiteState.from_matrix(np.eye(4) / 2)
    psi1 = apply_local_unitary(random_unitary(4, rng), psi0, "A")
    u = construct_cheat_unitary(psi0, psi1)
    assert overlap(apply_local_unitary(u, psi0, "A"), psi1) >= 1 - 1e-10


def test_cheat_unitary_needs_concealing():
    prod0 = BipartiteState.from_matrix(np.outer([1, 0], [1, 0]))
    prod1 = BipartiteState.from_matrix(np.outer([1, 0], [0, 1]))
    with pytest.raises(ConcealingViolation):
        construct_cheat_unitary(prod0, prod1)


def test_complete_basis_is_unitary(rng):
    v = random_unitary(5, rng).entries[:, :2]
    full = qcore.complete_basis(v, 5)
    assert np.allclose(full.conj().T @ full, np.eye(5), atol=1e-12)
    assert np.allclose(full[:, :2], v)


# -- apply_local_unitary ------------------------------------------------------------


def test_apply_identity_and_bit_flip():
    same = apply_local_unitary(UnitaryMatrix(np.eye(2), 2), BELL, "A")
    assert np.allclose(same.amplitudes, BELL.amplitudes)
    out = apply_local_unitary(BIT_FLIP, BELL, "A")
    assert np.allclose(out.amplitudes, FLIPPED_BELL.amplitudes)


@given(dims, dims, seeds)
def test_local_unitary_hides_from_bob(da, db, seed):
    r = np.random.default_rng(seed)
    psi = random_bipartite_state(da, db, r)
    out = apply_local_unitary(random_unitary(da, r), psi, "A")
    assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-10
    assert np.allclose(partial_trace(out, "A").entries, partial_trace(psi, "A").entries, atol=1e-10)


def test_apply_on_b_matches_kron(rng):
    psi = random_bipartite_state(2, 3, rng)
    u = random_unitary(3, rng)
    out = apply_local_unitary(u, psi, "B")
    assert np.allclose(out.vector, np.kron(np.eye(2), u.entries) @ psi.vector)


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_local_unitary(UnitaryMatrix(np.eye(3), 3), BELL, "A")


# -- trace distance ------------------------------------------------------------------


def test_trace_distance_examples():
    a = DensityMatrix(np.diag([1.0, 0.0]), 2)
    b = DensityMatrix(np.diag([0.0, 1.0]), 2)
    c = DensityMatrix(np.diag([0.5, 0.5]), 2)
    assert trace_distance(a, a) == 0
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, c) == pytest.approx(0.5)


def test_trace_distance_dims():
    with pytest.raises(DimensionError):
        trace_distance(DensityMatrix(np.eye(2) / 2, 2), DensityMatrix(np.eye(3) / 3, 3))


def _random_rho(d, r):
    return partial_trace(random_bipartite_state(d, d, r), "B")


@given(st.integers(1, 5), seeds)
def test_trace_distance_metric_properties(d, seed):
    r = np.random.default_rng(seed)
    x, y, z = (_random_rho(d, r) for _ in range(3))
    assert trace_distance(x, y) == pytest.approx(trace_distance(y, x), abs=1e-12)
    assert trace_distance(x, z) <= trace_distance(x, y) + trace_distance(y, z) + 1e-9
    u = random_unitary(d, r).entries
    conj = lambda rho: DensityMatrix(u @ rho.entries @ u.conj().T, d)  # noqa: E731
    assert trace_distance(conj(x), conj(y)) == pytest.approx(trace_distance(x, y), abs=1e-9)
    assert 0 <= trace_distance(x, y) <= 1
