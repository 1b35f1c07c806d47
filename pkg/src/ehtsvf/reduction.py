"""Tracing a subsystem out of a composite history across all of its times.

The trace contracts the traced factor against an orthonormal consistent
family of histories on that factor. For a family member ``e`` the
contraction ``(e|H)_K`` is the history on the remaining factor whose chain
operator is ``Tr_A[(K(e)^dagger ⊗ I) K(H)]``; summing ``(e|H)(H|e)`` over
the family reproduces the density-level definition. When the family's chain
operators span every operator on the traced factor the total weight is
conserved.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import DegeneracyError, FactorizationError, IncompatibilityError, ShapeError
from .histories import (
    BridgingSet,
    HistoryBranch,
    HistoryState,
    TimeGrid,
    chain_operator,
    weight,
)

DROP_RTOL = 1e-12


@dataclass(frozen=True)
class CompositeGrid:
    grid: TimeGrid
    factors: tuple[tuple[tuple[str, int], ...], ...]

    def __post_init__(self):
        factors = tuple(tuple((str(n), int(d)) for n, d in slot) for slot in self.factors)
        object.__setattr__(self, "factors", factors)
        if len(factors) != len(self.grid):
            raise ShapeError("one factor layout per time slot is required")
        names = [n for n, _ in factors[0]]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate factor labels {names}")
        for slot, dim in zip(factors, self.grid.dims):
            if [n for n, _ in slot] != names:
                raise IncompatibilityError("factor labels must agree across time slots")
            if int(np.prod([d for _, d in slot])) != dim:
                raise ShapeError(f"factor dimensions {slot} do not multiply to {dim}")

    @classmethod
    def uniform(cls, grid: TimeGrid, layout: Sequence[tuple[str, int]]) -> "CompositeGrid":
        return cls(grid, tuple(tuple(layout) for _ in grid.labels))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.factors[0])

    def index(self, target: str) -> int:
        try:
            return self.names.index(target)
        except ValueError:
            raise IncompatibilityError(f"no factor {target!r} in {self.names}") from None

    def slot_dims(self, i: int) -> list[int]:
        return [d for _, d in self.factors[i]]

    def target_grid(self, target: str) -> TimeGrid:
        t = self.index(target)
        return self.grid.with_dims([slot[t][1] for slot in self.factors])

    def remaining_grid(self, target: str) -> TimeGrid:
        t = self.index(target)
        dims = [int(np.prod([d for j, (_, d) in enumerate(slot) if j != t])) for slot in self.factors]
        return self.grid.with_dims(dims)


def _blocks(op: np.ndarray, dims: list[int], t: int) -> dict[tuple[int, int], np.ndarray]:
    """Split ``op`` as sum_ab rest_ab ⊗ |a><b| on factor ``t``; zero blocks omitted."""
    n = len(dims)
    d_t = dims[t]
    d_r = int(np.prod(dims)) // d_t
    x = np.asarray(op).reshape(dims + dims)
    order = [i for i in range(n) if i != t]
    x = x.transpose([t, n + t] + order + [n + i for i in order]).reshape(d_t, d_t, d_r, d_r)
    return {
        (a, b): x[a, b]
        for a in range(d_t)
        for b in range(d_t)
        if np.any(np.abs(x[a, b]) > 0)
    }


def factorize_bridging(cg: CompositeGrid, bridging: BridgingSet, target: str,
                       tol: float = la.DEFAULT_TOL) -> tuple[BridgingSet, BridgingSet]:
    """Split every bridging step as (remaining part) ⊗ (target part), both unitary."""
    if bridging.grid != cg.grid:
        raise IncompatibilityError("bridging is defined on a different grid")
    t = cg.index(target)
    rest_steps, target_steps = [], []
    for i, step in enumerate(bridging.steps):
        dims_in, dims_out = cg.slot_dims(i), cg.slot_dims(i + 1)
        if dims_in != dims_out:
            raise FactorizationError("factor dimensions change between times; cannot split bridging")
        split = la.split_kron(step, dims_in, t, tol)
        if split is None:
            raise FactorizationError(
                f"bridging step {cg.grid.labels[i]}->{cg.grid.labels[i + 1]} "
                f"is not of the form U_rest ⊗ U_{target}"
            )
        rest, part = split
        c = np.sqrt(np.vdot(part, part).real / part.shape[0])
        rest, part = rest * c, part / c
        # fix the phase so the target part has a real positive largest entry
        flat = part.ravel()
        k = int(np.argmax(np.abs(flat)))
        ph = flat[k] / abs(flat[k])
        rest_steps.append(la.as_matrix(rest * ph))
        target_steps.append(la.as_matrix(part / ph))
    return (
        BridgingSet(cg.remaining_grid(target), tuple(rest_steps), tol=1e-8),
        BridgingSet(cg.target_grid(target), tuple(target_steps), tol=1e-8),
    )


def _align(rest: BridgingSet, mine: BridgingSet, theirs: BridgingSet) -> BridgingSet:
    """Move per-step phases so the target part equals ``theirs`` exactly."""
    steps = []
    for r, a, b in zip(rest.steps, mine.steps, theirs.steps):
        ov = np.vdot(b, a) / b.shape[0]
        if abs(abs(ov) - 1) > 1e-8:
            raise IncompatibilityError("family bridging differs from the history's target bridging")
        steps.append(la.as_matrix(r * ov))
    return BridgingSet(rest.grid, tuple(steps), tol=1e-8)


@dataclass(frozen=True, eq=False)
class SubsystemFamily:
    target: str
    times: tuple[str, ...]
    members: tuple[HistoryState, ...]
    bridging: BridgingSet

    @property
    def span_dim(self) -> int:
        """Dimension of the space of chain operators on the traced factor."""
        dims = self.bridging.grid.dims
        return dims[0] * dims[-1]

    @property
    def is_complete(self) -> bool:
        return len(self.members) == self.span_dim

    def gram(self) -> np.ndarray:
        ks = [chain_operator(m) for m in self.members]
        return np.array([[la.hs_inner(a, b) for b in ks] for a in ks])


def build_subsystem_family(cg: CompositeGrid, target: str, bridging: BridgingSet,
                           slot_bases: Sequence[Sequence] | None = None,
                           tol: float = la.DEFAULT_TOL) -> SubsystemFamily:
    """Projector chains on the target factor, Gram-Schmidt orthonormalised under (.|.)_K.

    ``slot_bases`` holds one orthonormal basis per time; the computational
    basis is used when omitted. Chains whose chain operator is linearly
    dependent on earlier ones (including all zero-weight chains) are dropped.
    """
    _, target_bridging = factorize_bridging(cg, bridging, target)
    grid = target_bridging.grid
    if slot_bases is None:
        slot_bases = [[la.basis(d, i) for i in range(d)] for d in grid.dims]
    if len(slot_bases) != len(grid):
        raise ShapeError("one basis per time slot is required")
    for basis, d in zip(slot_bases, grid.dims):
        m = np.array([la.as_vector(v) for v in basis])
        if m.shape != (d, d) or la.max_abs(m.conj() @ m.T - np.eye(d)) > tol:
            raise ValueError("slot bases must be orthonormal and complete")
    projs = [[la.projector(v) for v in basis] for basis in slot_bases]
    members: list[HistoryState] = []
    ks: list[np.ndarray] = []
    for chain in itertools.product(*projs):
        h = HistoryState(grid, target_bridging, (HistoryBranch(1.0, chain),))
        k = chain_operator(h)
        for e, ke in zip(members, ks):
            c = la.hs_inner(ke, k)
            if abs(c) > 0:
                h = h - e * c
                k = k - c * ke
        norm = np.linalg.norm(k)
        if norm > tol:
            members.append(h.merged(tol=1e-14).scaled(1 / norm))
            ks.append(k / norm)
    return SubsystemFamily(target, grid.labels, tuple(members), target_bridging)


@dataclass(frozen=True, eq=False)
class MixedHistory:
    """Weighted components left after a cross-time partial trace."""

    components: tuple[tuple[float, HistoryState], ...]
    source_weight: float

    @property
    def total_weight(self) -> float:
        return float(sum(w for w, _ in self.components))

    def __len__(self):
        return len(self.components)

    def sorted(self) -> "MixedHistory":
        return MixedHistory(tuple(sorted(self.components, key=lambda c: -c[0])), self.source_weight)

    def normalized(self) -> "MixedHistory":
        total = self.total_weight
        if total <= 0:
            raise DegeneracyError("mixed history has zero total weight")
        return MixedHistory(
            tuple((w / total, h.scaled(1 / np.sqrt(total))) for w, h in self.components),
            self.source_weight / total,
        )


def _prepare(h: HistoryState, cg: CompositeGrid, target: str):
    if h.grid != cg.grid:
        raise IncompatibilityError("history grid differs from the composite grid")
    t = cg.index(target)
    rest_b, target_b = factorize_bridging(cg, h.bridging, target)
    terms = []
    for b in h.branches:
        blocks = [_blocks(op, cg.slot_dims(i), t) for i, op in enumerate(b.ops)]
        for combo in itertools.product(*[list(bl.items()) for bl in blocks]):
            idx = [ab for ab, _ in combo]
            terms.append((b.amplitude, idx, tuple(r for _, r in combo)))
    return rest_b, target_b, terms


def _term_factor(idx, steps, ke: np.ndarray) -> complex:
    """Tr[K_e^dagger K_A(term)] for a chain of matrix units |a_i><b_i|."""
    amp = np.conj(ke[idx[-1][0], idx[0][1]])
    for i, step in enumerate(steps):
        if amp == 0:
            return 0j
        amp *= step[idx[i + 1][1], idx[i][0]]
    return complex(amp)


def _contract(rest_b: BridgingSet, terms, e: HistoryState) -> HistoryState | None:
    ke = chain_operator(e)
    branches = []
    for amp, idx, ops in terms:
        f = _term_factor(idx, e.bridging.steps, ke)
        if abs(f) > 0:
            branches.append(HistoryBranch(amp * f, ops))
    if not branches:
        return None
    return HistoryState(rest_b.grid, rest_b, tuple(branches)).merged(tol=1e-15)


def contract(h: HistoryState, cg: CompositeGrid, target: str, e: HistoryState) -> HistoryState | None:
    """The history (e|H)_K on the remaining factor, or None if it vanishes identically."""
    rest_b, target_b, terms = _prepare(h, cg, target)
    if e.grid != target_b.grid:
        raise IncompatibilityError("family history does not live on the traced factor")
    return _contract(_align(rest_b, target_b, e.bridging), terms, e)


def partial_trace_time(h: HistoryState, cg: CompositeGrid, fam: SubsystemFamily) -> MixedHistory:
    if fam.times != cg.grid.labels:
        raise IncompatibilityError("family does not cover every time of the history")
    rest_b, target_b, terms = _prepare(h, cg, fam.target)
    rest_b = _align(rest_b, target_b, fam.bridging)
    source = weight(h)
    out = []
    for e in fam.members:
        r = _contract(rest_b, terms, e)
        if r is None:
            continue
        w = weight(r)
        if w > DROP_RTOL * source and w > 0:
            out.append((w, r))
    return MixedHistory(tuple(out), source)


def naive_spatial_trace(h: HistoryState, cg: CompositeGrid, target: str) -> HistoryState:
    """Slot-by-slot trace of the target factor, ignoring how it evolves between times.

    Only useful as a contrast: it keeps branches that the cross-time trace
    assigns zero weight.
    """
    if h.grid != cg.grid:
        raise IncompatibilityError("history grid differs from the composite grid")
    t = cg.index(target)
    try:
        rest_b, _ = factorize_bridging(cg, h.bridging, target)
    except FactorizationError:
        rest_b = BridgingSet.identity(cg.remaining_grid(target))
    d_t = [cg.factors[i][t][1] for i in range(len(cg.grid))]
    branches = []
    for b in h.branches:
        blocks = [_blocks(op, cg.slot_dims(i), t) for i, op in enumerate(b.ops)]
        for idx in itertools.product(*[range(d) for d in d_t]):
            if all((k, k) in bl for k, bl in zip(idx, blocks)):
                branches.append(HistoryBranch(b.amplitude, tuple(bl[(k, k)] for k, bl in zip(idx, blocks))))
    if not branches:
        zero = tuple(np.zeros((d, d)) for d in rest_b.grid.dims)
        branches = [HistoryBranch(0.0, zero)]
    return HistoryState(rest_b.grid, rest_b, tuple(branches)).merged(tol=1e-15)


def substitute_slot(h: HistoryState, slot: int, op) -> HistoryState:
    """Replace the operator at ``slot`` in every branch; all branches must agree there."""
    first = h.branches[0].ops[slot]
    for b in h.branches[1:]:
        if not np.allclose(b.ops[slot], first, atol=1e-12):
            raise ValueError("branches carry different operators at the outcome slot")
    op = la.as_matrix(op)
    return HistoryState(h.grid, h.bridging, tuple(
        HistoryBranch(b.amplitude, b.ops[:slot] + (op,) + b.ops[slot + 1:]) for b in h.branches
    ))


def reduced_measurement_distribution(reduced: MixedHistory, outcome_slot: int,
                                     outcomes: Sequence | None = None) -> list[float]:
    """Outcome probabilities from the weights of a reduced history.

    Each component's operator at ``outcome_slot`` is swapped for every
    outcome in turn. With ``outcomes`` omitted the pair {P, I - P} built from
    the recorded operator is used, so the first entry is the probability of
    the recorded outcome.
    """
    if not reduced.components:
        raise DegeneracyError("reduced history is empty")
    if outcomes is None:
        p = reduced.components[0][1].branches[0].ops[outcome_slot]
        outcomes = [p, np.eye(p.shape[0]) - p]
    ws = [
        sum(weight(substitute_slot(h, outcome_slot, o)) for _, h in reduced.components)
        for o in outcomes
    ]
    total = sum(ws)
    if total <= la.DEFAULT_TOL * max(1.0, reduced.total_weight):
        raise DegeneracyError("every outcome has zero reduced weight")
    return [w / total for w in ws]


def reduced_density(m: MixedHistory) -> np.ndarray:
    """sum_k |R_k)(R_k| on the Kronecker realisation of the remaining factor."""
    vecs = [h.tensor_realization().ravel() for _, h in m.components]
    if not vecs:
        return np.zeros((1, 1))
    return sum(np.outer(v, v.conj()) for v in vecs)


def family_discrepancy(h: HistoryState, cg: CompositeGrid, fam_a: SubsystemFamily,
                       fam_b: SubsystemFamily) -> dict:
    """How much the cross-time trace depends on the family; reported, never asserted."""
    ra, rb = partial_trace_time(h, cg, fam_a), partial_trace_time(h, cg, fam_b)
    da, db = reduced_density(ra), reduced_density(rb)
    return {
        "weight_a": ra.total_weight,
        "weight_b": rb.total_weight,
        "density_deviation": la.max_abs(da - db) if da.shape == db.shape else float("nan"),
    }
