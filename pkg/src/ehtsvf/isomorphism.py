"""The correspondence between multiple-time states and entangled histories.

A branch ``a <phi_n| ... |phi_0>`` maps to ``a [phi_n] ⊙ ... ⊙ [phi_0]``.
Under this map the multiple-time scalar product equals the s-product of
histories whenever all branches are drawn from one orthonormal basis per
slot; the K-product does not survive the map once bridging is non-trivial.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import RepresentabilityError
from .histories import BridgingSet, HistoryBranch, HistoryState, s_inner
from .tsvf import BWD, FWD, MtsBranch, MultiTimeState, SlotDirection, mts_inner


def mts_to_history(m: MultiTimeState, bridging: BridgingSet | Sequence | None = None) -> HistoryState:
    branches = tuple(
        HistoryBranch(b.amplitude, tuple(la.projector(v) for _, v in b.slots)) for b in m.branches
    )
    if bridging is None:
        bridging = BridgingSet.identity(m.grid) if len(set(m.grid.dims)) == 1 else None
        if bridging is None:
            raise ValueError("explicit bridging is required for slots of unequal dimension")
    elif not isinstance(bridging, BridgingSet):
        bridging = BridgingSet(m.grid, tuple(bridging))
    return HistoryState(m.grid, bridging, branches)


def default_pattern(n: int) -> tuple[SlotDirection, ...]:
    """Latest slot a bra, alternating towards the earliest."""
    return tuple(FWD if (n - 1 - i) % 2 else BWD for i in range(n))


def history_to_mts(h: HistoryState, pattern: Sequence | None = None,
                   tol: float = la.DEFAULT_TOL) -> MultiTimeState:
    """Inverse map; slot vectors get the largest-entry-real-positive phase."""
    pattern = (tuple(SlotDirection.parse(p) for p in pattern) if pattern is not None
               else default_pattern(len(h.grid)))
    if len(pattern) != len(h.grid):
        raise ValueError("direction pattern length does not match the grid")
    branches = []
    for bi, b in enumerate(h.branches):
        slots = []
        for label, op, d in zip(h.grid.labels, b.ops, pattern):
            v = la.rank_one_vector(op, tol)
            if v is None:
                raise RepresentabilityError(
                    f"branch {bi} slot {label} is not a rank-1 projector"
                )
            slots.append((d, v))
        branches.append(MtsBranch(b.amplitude, tuple(slots)))
    return MultiTimeState(h.grid, tuple(branches))


@dataclass(frozen=True)
class IsomorphismReport:
    n_states: int
    additivity: float
    phase_scaling: float
    general_scaling: float
    inner_product: float

    def ok(self, tol: float = 1e-12) -> bool:
        return max(self.additivity, self.phase_scaling, self.inner_product) <= tol


def _s_distance(a: HistoryState, b: HistoryState) -> float:
    # the s-norm is the Frobenius norm of the tensor realization; taking it
    # directly avoids the square root of a rounding-level s_inner
    return float(np.linalg.norm(a.tensor_realization() - b.tensor_realization()))


def verify_isomorphism(sample: Sequence[MultiTimeState], phase: complex | None = None,
                       scale: complex = 1.5 - 0.5j) -> IsomorphismReport:
    """Measure how far the map is from additive, homogeneous and isometric.

    ``phase`` defaults to exp(i*pi/3). ``scale`` is an arbitrary complex factor
    whose deviation is reported separately from the unit-modulus case.
    """
    phase = np.exp(1j * np.pi / 3) if phase is None else phase
    mapped = [mts_to_history(m) for m in sample]
    add = ph = gen = inner = 0.0
    for i, (m, h) in enumerate(zip(sample, mapped)):
        ph = max(ph, _s_distance(mts_to_history(m * phase), h * phase))
        gen = max(gen, _s_distance(mts_to_history(m * scale), h * scale))
        for j in range(i, len(sample)):
            inner = max(inner, abs(mts_inner(m, sample[j]) - s_inner(h, mapped[j])))
            if j > i:
                add = max(add, _s_distance(mts_to_history(m + sample[j]), h + mapped[j]))
    return IsomorphismReport(len(sample), add, ph, gen, inner)


def random_mts_sample(rng: np.random.Generator, n_states: int, n_slots: int = 2, dim: int = 2,
                      bases: Sequence[Sequence] | None = None) -> list[MultiTimeState]:
    """States with random coefficients over one shared orthonormal basis per slot."""
    if bases is None:
        bases = [la.random_basis(rng, dim) for _ in range(n_slots)]
    pattern = default_pattern(n_slots)
    chains = list(itertools.product(*[range(len(b)) for b in bases]))
    out = []
    for _ in range(n_states):
        coeffs = rng.standard_normal(len(chains)) + 1j * rng.standard_normal(len(chains))
        coeffs /= np.linalg.norm(coeffs)
        branches = [
            MtsBranch(c, tuple((d, bases[s][k]) for s, (d, k) in enumerate(zip(pattern, chain))))
            for c, chain in zip(coeffs, chains)
        ]
        out.append(MultiTimeState.build(branches))
    return out
