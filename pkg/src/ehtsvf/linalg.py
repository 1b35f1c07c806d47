"""Dense complex linear algebra used throughout the package.

Matrices and vectors are plain ``numpy`` arrays of dtype ``complex128``.
Every constructor in this module returns read-only arrays so values can be
shared freely between histories, states and threads.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ShapeError

DEFAULT_TOL = 1e-10
MAX_DIM = 2**14

SQRT1_2 = 1 / math.sqrt(2)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_matrix(a) -> np.ndarray:
    """Validate ``a`` as a finite 2-d complex matrix and return a frozen copy."""
    m = np.array(a, dtype=np.complex128)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return _freeze(m)


def as_vector(v) -> np.ndarray:
    """Validate ``v`` as a finite 1-d complex vector and return a frozen copy."""
    x = np.array(v, dtype=np.complex128)
    if x.ndim == 2 and 1 in x.shape:
        x = x.reshape(-1)
    if x.ndim != 1 or x.size < 1:
        raise ShapeError(f"expected a non-empty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector entries must be finite")
    return _freeze(x)


def matmul(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _freeze(a @ b)


def kron(*ops, max_dim: int = MAX_DIM) -> np.ndarray:
    """Kronecker product of one or more matrices (or vectors)."""
    if not ops:
        raise ShapeError("kron needs at least one operand")
    arrays = [np.asarray(o, dtype=np.complex128) for o in ops]
    ndim = arrays[0].ndim
    if any(a.ndim != ndim for a in arrays):
        raise ShapeError("kron operands must all be vectors or all be matrices")
    shape = np.prod([a.shape for a in arrays], axis=0)
    if np.any(shape > max_dim):
        raise CapacityError(f"kron result {tuple(shape)} exceeds maximum dimension {max_dim}")
    out = arrays[0]
    for a in arrays[1:]:
        out = np.kron(out, a)
    return _freeze(np.array(out))


def dagger(a) -> np.ndarray:
    return _freeze(np.array(np.asarray(a).conj().T))


def trace(a) -> complex:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace of non-square matrix {a.shape}")
    return complex(np.trace(a))


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt product Tr[a^dagger b], without forming the product."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"Hilbert-Schmidt product of {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def is_unitary(a, tol: float = DEFAULT_TOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    eye = np.eye(a.shape[0])
    return bool(np.max(np.abs(a.conj().T @ a - eye)) <= tol)


def is_projector(a, tol: float = DEFAULT_TOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return bool(
        np.max(np.abs(a @ a - a)) <= tol and np.max(np.abs(a.conj().T - a)) <= tol
    )


def projector(v) -> np.ndarray:
    """Rank-1 projector |v><v| onto the normalised direction of ``v``."""
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot project onto the zero vector")
    v = v / n
    return _freeze(np.outer(v, v.conj()))


def outer(u, v) -> np.ndarray:
    """|u><v|."""
    return _freeze(np.outer(np.asarray(u).reshape(-1), np.asarray(v).reshape(-1).conj()))


def basis(dim: int, index: int) -> np.ndarray:
    e = np.zeros(dim, dtype=np.complex128)
    e[index] = 1.0
    return _freeze(e)


def canonical_phase(v) -> np.ndarray:
    """Rotate ``v`` so that its largest-magnitude entry is real and positive.

    Ties are broken towards the lowest index, which keeps the choice stable
    under round-off for the symmetric states used in the examples.
    """
    v = np.array(v, dtype=np.complex128).reshape(-1)
    mags = np.abs(v)
    idx = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    if mags[idx] == 0:
        return _freeze(v)
    return _freeze(v * (abs(v[idx]) / v[idx]))


def rank_one_vector(p, tol: float = DEFAULT_TOL) -> np.ndarray | None:
    """Return the unit vector spanning a rank-1 projector, or None if ``p`` is not one."""
    p = np.asarray(p)
    if not is_projector(p, tol):
        return None
    w, vecs = np.linalg.eigh((p + p.conj().T) / 2)
    if abs(w[-1] - 1) > tol or (len(w) > 1 and abs(w[-2]) > tol):
        return None
    return canonical_phase(vecs[:, -1])


# Named single-qubit states in the computational (z) basis: |z+> = |0>, |z-> = |1>.
STATES = {
    "z+": as_vector([1, 0]),
    "z-": as_vector([0, 1]),
    "x+": as_vector([SQRT1_2, SQRT1_2]),
    "x-": as_vector([SQRT1_2, -SQRT1_2]),
    "y+": as_vector([SQRT1_2, 1j * SQRT1_2]),
    "y-": as_vector([SQRT1_2, -1j * SQRT1_2]),
}

GATES = {
    "I": as_matrix(np.eye(2)),
    "X": as_matrix([[0, 1], [1, 0]]),
    "Y": as_matrix([[0, -1j], [1j, 0]]),
    "Z": as_matrix([[1, 0], [0, -1]]),
    "H": as_matrix(np.array([[1, 1], [1, -1]]) * SQRT1_2),
    # control on the first qubit, flips the second when the control is |z->
    "CNOT": as_matrix([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]),
}


def state(name: str) -> np.ndarray:
    return STATES[name]


def proj(name: str) -> np.ndarray:
    return projector(STATES[name])


def identity(dim: int) -> np.ndarray:
    return as_matrix(np.eye(dim))


def embed(op, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Full 2**n matrix for ``op`` acting on the listed qubits (qubit 0 most significant)."""
    op = np.asarray(op, dtype=np.complex128)
    k = len(targets)
    if op.shape != (2**k, 2**k):
        raise ShapeError(f"operator of shape {op.shape} cannot act on {k} qubits")
    if len(set(targets)) != k or any(t < 0 or t >= n_qubits for t in targets):
        raise ShapeError(f"invalid targets {targets} for {n_qubits} qubits")
    dim = 2**n_qubits
    full = np.eye(dim, dtype=np.complex128).reshape((2,) * (2 * n_qubits))
    t = op.reshape((2,) * (2 * k))
    # contract op's input legs with the output legs of the identity
    full = np.tensordot(t, full, axes=(list(range(k, 2 * k)), list(targets)))
    full = np.moveaxis(full, list(range(k)), list(targets))
    return _freeze(np.ascontiguousarray(full.reshape(dim, dim)))


def split_kron(op, dims: Sequence[int], target: int, tol: float = DEFAULT_TOL):
    """Factor ``op`` as rest (x) target-part across the listed tensor factors.

    Returns ``(rest, part)`` with ``part`` scaled to have the same Frobenius
    norm as ``rest``; ``rest`` acts on the remaining factors in their original
    order. Returns None when the operator-Schmidt rank exceeds one.
    """
    op = np.asarray(op, dtype=np.complex128)
    dims = list(dims)
    n = len(dims)
    d_t = dims[target]
    d_r = int(np.prod(dims)) // d_t
    t = op.reshape(dims + dims)
    order = [i for i in range(n) if i != target]
    t = t.transpose(order + [n + i for i in order] + [target, n + target])
    r = t.reshape(d_r * d_r, d_t * d_t)
    u, s, vh = np.linalg.svd(r, full_matrices=False)
    if s[0] == 0:
        return None
    if len(s) > 1 and s[1] > tol * max(1.0, s[0]):
        return None
    scale = math.sqrt(s[0])
    rest = (u[:, 0] * scale).reshape(d_r, d_r)
    part = (vh[0] * scale).reshape(d_t, d_t)
    return as_matrix(rest), as_matrix(part)


def haar_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return as_matrix(q * (d / np.abs(d)))


def haar_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    return as_vector(haar_unitary(rng, dim)[:, 0])


def random_basis(rng: np.random.Generator, dim: int, canonical: bool = True) -> list[np.ndarray]:
    """Haar-random orthonormal basis, optionally with canonical phases."""
    u = haar_unitary(rng, dim)
    cols = [u[:, i] for i in range(dim)]
    if canonical:
        cols = [canonical_phase(c) for c in cols]
    return [as_vector(c) for c in cols]


def random_phase(rng: np.random.Generator) -> complex:
    return complex(np.exp(2j * np.pi * rng.random()))


def max_abs(a: Iterable) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0
