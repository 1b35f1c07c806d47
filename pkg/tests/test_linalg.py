import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehtsvf import linalg as la
from ehtsvf.errors import CapacityError, ShapeError

R = la.SQRT1_2
I2 = np.eye(2)


def close(a, b, tol=1e-12):
    return np.allclose(a, b, atol=tol, rtol=0)


def test_matmul_examples():
    assert close(la.matmul(I2, I2), I2)
    assert close(la.matmul(la.GATES["X"], la.GATES["X"]), I2)
    hz = la.matmul(la.GATES["H"], la.state("z+").reshape(2, 1))
    assert close(hz.ravel(), R * (la.state("z+") + la.state("z-")))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        la.matmul(np.eye(2), np.eye(3))


def test_kron_examples():
    assert close(la.kron(I2, I2), np.eye(4))
    assert close(la.kron(la.proj("z+"), la.proj("z-")), np.diag([0, 1, 0, 0]))
    m = np.arange(4).reshape(2, 2)
    assert close(la.kron([[2 - 1j]], m), (2 - 1j) * m)


def test_kron_capacity():
    with pytest.raises(CapacityError):
        la.kron(np.eye(4), np.eye(4), max_dim=8)


def test_dagger_and_trace(rng):
    assert close(la.dagger(I2), I2)
    assert close(la.dagger(np.diag([1j, 1])), np.diag([-1j, 1]))
    m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    n = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert close(la.dagger(la.dagger(m)), m)
    assert la.trace(np.eye(4)) == 4
    assert abs(la.trace(la.proj("z+")) - 1) < 1e-15
    assert abs(la.trace(m @ n) - la.trace(n @ m)) < 1e-12


def test_trace_requires_square():
    with pytest.raises(ShapeError):
        la.trace(np.ones((2, 3)))


def test_unitary_and_projector_checks(rng):
    assert la.is_unitary(la.GATES["H"], 1e-12)
    assert not la.is_unitary(np.diag([1, 2]))
    paulis = [la.GATES[k] for k in "XYZ"]
    prod = np.eye(2)
    for k in rng.integers(0, 3, size=7):
        prod = prod @ paulis[k]
    assert la.is_unitary(prod, 1e-12)
    assert la.is_projector(0.5 * np.ones((2, 2)))
    assert not la.is_projector(la.GATES["H"])
    assert la.is_projector(I2)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        la.as_matrix([[np.nan, 0], [0, 1]])
    with pytest.raises(ValueError):
        la.as_vector([np.inf, 0])


def test_matrices_are_frozen():
    m = la.as_matrix(np.eye(2))
    with pytest.raises(ValueError):
        m[0, 0] = 3


def test_canonical_phase_and_rank_one():
    v = 1j * la.state("x-")
    c = la.canonical_phase(v)
    assert abs(c[0] - R) < 1e-15 and abs(c[1] + R) < 1e-15
    assert la.rank_one_vector(I2) is None
    assert close(la.rank_one_vector(la.proj("y+")), la.canonical_phase(la.state("y+")))


def test_embed_matches_kron():
    h = la.GATES["H"]
    assert close(la.embed(h, [1], 2), la.kron(I2, h))
    assert close(la.embed(la.GATES["CNOT"], [0, 1], 2), la.GATES["CNOT"])
    flipped = la.embed(la.GATES["CNOT"], [1, 0], 2)
    assert close(flipped @ la.kron(la.state("z+"), la.state("z-")), la.kron(la.state("z-"), la.state("z-")))


def test_split_kron(rng):
    u, v = la.haar_unitary(rng, 2), la.haar_unitary(rng, 3)
    rest, part = la.split_kron(la.kron(u, v), [2, 3], 1)
    assert close(la.kron(rest, part), la.kron(u, v))
    assert la.split_kron(la.GATES["CNOT"], [2, 2], 1) is None


def test_haar_outputs(rng):
    u = la.haar_unitary(rng, 4)
    assert la.is_unitary(u, 1e-12)
    basis = la.random_basis(rng, 3)
    m = np.array(basis)
    assert close(m.conj() @ m.T, np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_hs_inner_is_trace_form(entries):
    a = np.array(entries).reshape(2, 2)
    b = np.array(entries[::-1]).reshape(2, 2)
    assert abs(la.hs_inner(a, b) - np.trace(a.conj().T @ b)) < 1e-9
