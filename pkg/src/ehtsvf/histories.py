"""Entangled-history states, chain operators and the two history products.

Slots are stored earliest time first. Rendering flips to the conventional
latest-time-leftmost order, e.g. ``[z+]⊙[x+]`` has ``[x+]`` at the first time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg as la
from .errors import DegeneracyError, IncompatibilityError, ShapeError


@dataclass(frozen=True)
class TimeGrid:
    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.labels:
            raise ValueError("a time grid needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate time labels in {self.labels}")
        if len(self.dims) != len(self.labels):
            raise ValueError("one dimension per time label is required")
        if any(d < 1 for d in self.dims):
            raise ValueError("dimensions must be positive")

    @classmethod
    def uniform(cls, n_or_labels, dim: int) -> "TimeGrid":
        if isinstance(n_or_labels, int):
            labels = tuple(f"t{i}" for i in range(n_or_labels))
        else:
            labels = tuple(n_or_labels)
        return cls(labels, (dim,) * len(labels))

    def __len__(self):
        return len(self.labels)

    def with_dims(self, dims: Sequence[int]) -> "TimeGrid":
        return TimeGrid(self.labels, tuple(dims))


@dataclass(frozen=True, eq=False)
class BridgingSet:
    """Unitaries linking consecutive times; ``steps[i]`` maps time i to time i+1."""

    grid: TimeGrid
    steps: tuple[np.ndarray, ...]
    tol: float = la.DEFAULT_TOL

    def __post_init__(self):
        steps = tuple(la.as_matrix(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        if len(steps) != len(self.grid) - 1:
            raise ShapeError(f"{len(self.grid)} times need {len(self.grid) - 1} bridging steps")
        for i, s in enumerate(steps):
            want = (self.grid.dims[i + 1], self.grid.dims[i])
            if s.shape != want:
                raise ShapeError(f"bridging step {i} has shape {s.shape}, expected {want}")
            if not la.is_unitary(s, self.tol):
                raise ValueError(f"bridging step {i} is not unitary")

    @classmethod
    def identity(cls, grid: TimeGrid) -> "BridgingSet":
        if len(set(grid.dims)) > 1:
            raise ShapeError("identity bridging requires equal dimensions at all times")
        return cls(grid, tuple(la.identity(grid.dims[0]) for _ in range(len(grid) - 1)))

    def composed(self, j: int, i: int) -> np.ndarray:
        """Evolution from time index ``i`` to a later index ``j``."""
        if not 0 <= i <= j < len(self.grid):
            raise IndexError(f"cannot compose from {i} to {j}")
        out = la.identity(self.grid.dims[i])
        for k in range(i, j):
            out = self.steps[k] @ out
        return la.as_matrix(out)

    def same_as(self, other: "BridgingSet", tol: float = 1e-12) -> bool:
        if self is other:
            return True
        return self.grid == other.grid and all(
            np.allclose(a, b, atol=tol, rtol=0) for a, b in zip(self.steps, other.steps)
        )


@dataclass(frozen=True, eq=False)
class HistoryBranch:
    amplitude: complex
    ops: tuple[np.ndarray, ...]
    general: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        ops = tuple(la.as_matrix(o) for o in self.ops)
        object.__setattr__(self, "ops", ops)
        # slots that are not projectors are allowed but flagged
        object.__setattr__(self, "general", not all(la.is_projector(o) for o in ops))

    def scaled(self, factor: complex) -> "HistoryBranch":
        return HistoryBranch(self.amplitude * factor, self.ops)

    def fingerprint(self) -> tuple:
        return tuple(
            tuple(np.round(np.concatenate([o.real.ravel(), o.imag.ravel()]), 12)) for o in self.ops
        )


@dataclass(frozen=True, eq=False)
class HistoryState:
    grid: TimeGrid
    bridging: BridgingSet
    branches: tuple[HistoryBranch, ...]

    def __post_init__(self):
        branches = tuple(self.branches)
        object.__setattr__(self, "branches", branches)
        if not branches:
            raise ValueError("a history needs at least one branch")
        if self.bridging.grid != self.grid:
            raise IncompatibilityError("bridging set is defined on a different grid")
        for b in branches:
            if len(b.ops) != len(self.grid):
                raise ShapeError(f"branch has {len(b.ops)} slots, grid has {len(self.grid)}")
            for op, d in zip(b.ops, self.grid.dims):
                if op.shape != (d, d):
                    raise ShapeError(f"slot operator {op.shape} does not match dimension {d}")

    @classmethod
    def build(cls, branches: Iterable, grid: TimeGrid | None = None,
              bridging: BridgingSet | Sequence | None = None) -> "HistoryState":
        """Build from ``(amplitude, [op_earliest, ..., op_latest])`` pairs."""
        brs = [b if isinstance(b, HistoryBranch) else HistoryBranch(b[0], tuple(b[1]))
               for b in branches]
        if not brs:
            raise ValueError("a history needs at least one branch")
        if grid is None:
            grid = TimeGrid(tuple(f"t{i}" for i in range(len(brs[0].ops))),
                            tuple(o.shape[0] for o in brs[0].ops))
        if bridging is None:
            bridging = BridgingSet.identity(grid)
        elif not isinstance(bridging, BridgingSet):
            bridging = BridgingSet(grid, tuple(bridging))
        return cls(grid, bridging, tuple(brs))

    @property
    def is_projector_chain(self) -> bool:
        return not any(b.general for b in self.branches)

    def with_bridging(self, bridging: BridgingSet | Sequence) -> "HistoryState":
        if not isinstance(bridging, BridgingSet):
            bridging = BridgingSet(self.grid, tuple(bridging))
        return HistoryState(self.grid, bridging, self.branches)

    def scaled(self, factor: complex) -> "HistoryState":
        return HistoryState(self.grid, self.bridging, tuple(b.scaled(factor) for b in self.branches))

    def __mul__(self, factor):
        return self.scaled(factor)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1)

    def __add__(self, other: "HistoryState") -> "HistoryState":
        _require_same(self, other, bridging=True)
        return HistoryState(self.grid, self.bridging, self.branches + other.branches)

    def __sub__(self, other: "HistoryState") -> "HistoryState":
        return self + (-other)

    def merged(self, tol: float = 0.0) -> "HistoryState":
        """Combine branches with identical slot operators; drop those cancelling to zero."""
        acc: dict[tuple, list] = {}
        for b in self.branches:
            key = b.fingerprint()
            if key in acc:
                acc[key][0] += b.amplitude
            else:
                acc[key] = [b.amplitude, b.ops]
        kept = [HistoryBranch(a, ops) for a, ops in acc.values() if abs(a) > tol]
        if not kept:
            kept = [HistoryBranch(0.0, self.branches[0].ops)]
        return HistoryState(self.grid, self.bridging, tuple(kept))

    def canonical(self) -> "HistoryState":
        """Branches sorted by operator fingerprint, giving a stable serial form."""
        order = sorted(self.branches, key=lambda b: (b.fingerprint(), b.amplitude.real, b.amplitude.imag))
        return HistoryState(self.grid, self.bridging, tuple(order))

    def tensor_realization(self) -> np.ndarray:
        """The history as one operator on the Kronecker product of all slots."""
        total = None
        for b in self.branches:
            term = b.amplitude * la.kron(*b.ops)
            total = term if total is None else total + term
        return la.as_matrix(total)

    def render(self, digits: int = 4) -> str:
        return render_history(self, digits)


def _require_same(a: HistoryState, b: HistoryState, bridging: bool) -> None:
    if a.grid != b.grid:
        raise IncompatibilityError(f"histories live on different grids: {a.grid} vs {b.grid}")
    if bridging and not a.bridging.same_as(b.bridging):
        raise IncompatibilityError("histories carry different bridging operators")


def branch_chain(branch: HistoryBranch, bridging: BridgingSet) -> np.ndarray:
    out = branch.ops[0]
    for step, op in zip(bridging.steps, branch.ops[1:]):
        out = op @ (step @ out)
    return out


def chain_operator(h: HistoryState) -> np.ndarray:
    """Sum over branches of amplitude * P_n T P_{n-1} ... T P_0."""
    total = np.zeros((h.grid.dims[-1], h.grid.dims[0]), dtype=np.complex128)
    for b in h.branches:
        total = total + b.amplitude * branch_chain(b, h.bridging)
    return la.as_matrix(total)


def weight(h: HistoryState) -> float:
    k = chain_operator(h)
    return float(np.vdot(k, k).real)


def k_inner(a: HistoryState, b: HistoryState) -> complex:
    """Tr[K(a)^dagger K(b)]; antilinear in ``a``."""
    _require_same(a, b, bridging=True)
    return la.hs_inner(chain_operator(a), chain_operator(b))


def s_inner(a: HistoryState, b: HistoryState) -> complex:
    """Tr[A^dagger B] on the Kronecker realisation of both histories.

    The trace of a product of Kronecker products is the product of per-slot
    traces, so branch pairs are accumulated without building the full
    operator. Bridging operators play no part.
    """
    _require_same(a, b, bridging=False)
    total = 0j
    for p in a.branches:
        for q in b.branches:
            term = np.conj(p.amplitude) * q.amplitude
            for x, y in zip(p.ops, q.ops):
                if term == 0:
                    break
                term *= np.vdot(x, y)
            total += term
    return complex(total)


def normalize_history(h: HistoryState, kind: str = "K", tol: float = la.DEFAULT_TOL) -> HistoryState:
    kind = kind.upper()
    if kind == "K":
        norm2 = weight(h)
    elif kind == "S":
        norm2 = s_inner(h, h).real
    else:
        raise ValueError(f"unknown inner product kind {kind!r}")
    if norm2 <= tol:
        raise DegeneracyError(f"history has vanishing {kind}-norm ({norm2:.3e}); it cannot be realised")
    return h.scaled(1 / np.sqrt(norm2))


@dataclass(frozen=True, eq=False)
class ConsistentFamily:
    members: tuple[HistoryState, ...]
    coefficients: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "coefficients", tuple(complex(c) for c in self.coefficients))
        if len(self.members) != len(self.coefficients):
            raise ValueError("one coefficient per family member is required")
        if not self.members:
            raise ValueError("a family needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            _require_same(first, m, bridging=True)

    @classmethod
    def of(cls, members: Sequence[HistoryState], coefficients: Sequence[complex] | None = None):
        members = tuple(members)
        return cls(members, tuple(coefficients) if coefficients is not None else (1,) * len(members))


@dataclass(frozen=True)
class FamilyReport:
    exhaustiveness_residual: float
    max_offdiagonal: float
    tol: float

    @property
    def exhaustive(self) -> bool:
        return self.exhaustiveness_residual <= self.tol

    @property
    def consistent(self) -> bool:
        return self.max_offdiagonal <= self.tol

    @property
    def verdict(self) -> bool:
        return self.exhaustive and self.consistent


def check_family(f: ConsistentFamily, tol: float = la.DEFAULT_TOL) -> FamilyReport:
    grid = f.members[0].grid
    total = sum(c * m.tensor_realization() for c, m in zip(f.coefficients, f.members))
    eye = np.eye(int(np.prod(grid.dims)))
    residual = la.max_abs(total - eye)
    off = 0.0
    for i, j in itertools.combinations(range(len(f.members)), 2):
        off = max(off, abs(k_inner(f.members[i], f.members[j])))
    return FamilyReport(residual, off, tol)


def product_family(grid: TimeGrid, slot_bases: Sequence[Sequence], bridging: BridgingSet | None = None,
                   coefficient: complex = 1) -> ConsistentFamily:
    """All projector chains built from one orthonormal basis per slot."""
    bridging = bridging or BridgingSet.identity(grid)
    projs = [[la.projector(v) for v in basis] for basis in slot_bases]
    members = [
        HistoryState(grid, bridging, (HistoryBranch(1.0, chain),))
        for chain in itertools.product(*projs)
    ]
    return ConsistentFamily.of(members, [coefficient] * len(members))


def injected_history(pre_states: Sequence, post_states: Sequence, amplitudes: Sequence[complex],
                     injected_op, u1, u2, labels: Sequence[str] = ("t1", "t", "t2")) -> HistoryState:
    """Three-time history sum_i a_i [post_i] ⊙ P ⊙ [pre_i] with bridging u1, u2."""
    if not (len(pre_states) == len(post_states) == len(amplitudes)):
        raise ShapeError("pre states, post states and amplitudes must have equal length")
    u1, u2, p = la.as_matrix(u1), la.as_matrix(u2), la.as_matrix(injected_op)
    d = p.shape[0]
    if p.shape != (d, d) or u1.shape != (d, d) or u2.shape != (d, d):
        raise ShapeError("injected operator and evolutions must be square of equal dimension")
    grid = TimeGrid(tuple(labels), (d, d, d))
    bridging = BridgingSet(grid, (u1, u2))
    branches = []
    for a, psi, phi in zip(amplitudes, pre_states, post_states):
        psi, phi = la.as_vector(psi), la.as_vector(phi)
        if psi.size != d or phi.size != d:
            raise ShapeError("state dimension does not match the injected operator")
        branches.append(HistoryBranch(a, (la.projector(psi), p, la.projector(phi))))
    return HistoryState(grid, bridging, tuple(branches))


def injected_distribution(pre_states, post_states, amplitudes, outcomes, u1, u2) -> list[float]:
    """Weights of the injected histories for each outcome, normalised to sum to one."""
    ws = [weight(injected_history(pre_states, post_states, amplitudes, p, u1, u2)) for p in outcomes]
    total = sum(ws)
    if total <= la.DEFAULT_TOL:
        raise DegeneracyError("every injected history has zero weight")
    return [w / total for w in ws]


def describe_operator(op) -> str:
    op = np.asarray(op)
    if op.shape == (2, 2):
        for name, v in la.STATES.items():
            if np.allclose(op, la.projector(v), atol=1e-12):
                return name
    if np.allclose(op, np.eye(op.shape[0]), atol=1e-12):
        return "I"
    if not np.any(op):
        return "0"
    v = la.rank_one_vector(op)
    if v is not None:
        return "|" + ",".join(_fmt(c, 4) for c in v) + ">"
    return "M"


def _fmt(c: complex, digits: int) -> str:
    c = complex(c)
    re, im = round(c.real, digits) + 0.0, round(c.imag, digits) + 0.0
    if im == 0:
        return f"{re:g}"
    if re == 0:
        return f"{im:g}i"
    return f"{re:g}{im:+g}i"


def render_history(h: HistoryState, digits: int = 4) -> str:
    parts = []
    for b in h.branches:
        slots = "⊙".join(f"[{describe_operator(o)}]" for o in reversed(b.ops))
        parts.append(f"({_fmt(b.amplitude, digits)}) {slots}")
    return " + ".join(parts)
