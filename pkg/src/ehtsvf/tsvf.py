"""Multiple-time states, the ABL rule and the multiple-time scalar product.

Backward (bra) slots store the ket of the bra; conjugation happens only
inside products.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg as la
from .errors import ImpossiblePostselectionError, IncompatibilityError, ShapeError
from .histories import TimeGrid, _fmt


class SlotDirection(enum.Enum):
    FORWARD = "ket"
    BACKWARD = "bra"

    @classmethod
    def parse(cls, value) -> "SlotDirection":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        if v in ("ket", "forward", "f", "fwd"):
            return cls.FORWARD
        if v in ("bra", "backward", "b", "bwd"):
            return cls.BACKWARD
        raise ValueError(f"unknown slot direction {value!r}")


FWD, BWD = SlotDirection.FORWARD, SlotDirection.BACKWARD


@dataclass(frozen=True, eq=False)
class MtsBranch:
    amplitude: complex
    slots: tuple[tuple[SlotDirection, np.ndarray], ...]

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(
            self, "slots", tuple((SlotDirection.parse(d), la.as_vector(v)) for d, v in self.slots)
        )

    @property
    def pattern(self) -> tuple[SlotDirection, ...]:
        return tuple(d for d, _ in self.slots)

    def scaled(self, factor: complex) -> "MtsBranch":
        return MtsBranch(self.amplitude * factor, self.slots)


@dataclass(frozen=True, eq=False)
class MultiTimeState:
    grid: TimeGrid
    branches: tuple[MtsBranch, ...]

    def __post_init__(self):
        branches = tuple(self.branches)
        object.__setattr__(self, "branches", branches)
        if not branches:
            raise ValueError("a multiple-time state needs at least one branch")
        pattern = branches[0].pattern
        for b in branches:
            if len(b.slots) != len(self.grid):
                raise ShapeError(f"branch has {len(b.slots)} slots, grid has {len(self.grid)}")
            if b.pattern != pattern:
                raise IncompatibilityError("all branches must share one direction pattern")

    @classmethod
    def build(cls, branches: Iterable, labels: Sequence[str] | None = None) -> "MultiTimeState":
        """Build from ``(amplitude, [(direction, vector), ...])`` pairs, earliest slot first."""
        brs = [b if isinstance(b, MtsBranch) else MtsBranch(b[0], tuple(b[1])) for b in branches]
        if not brs:
            raise ValueError("a multiple-time state needs at least one branch")
        n = len(brs[0].slots)
        labels = tuple(labels) if labels is not None else tuple(f"t{i}" for i in range(n))
        dims = tuple(v.size for _, v in brs[0].slots)
        return cls(TimeGrid(labels, dims), tuple(brs))

    @property
    def pattern(self) -> tuple[SlotDirection, ...]:
        return self.branches[0].pattern

    def scaled(self, factor: complex) -> "MultiTimeState":
        return MultiTimeState(self.grid, tuple(b.scaled(factor) for b in self.branches))

    def __mul__(self, factor):
        return self.scaled(factor)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1)

    def __add__(self, other: "MultiTimeState") -> "MultiTimeState":
        _require_compatible(self, other)
        return MultiTimeState(self.grid, self.branches + other.branches)

    def __sub__(self, other):
        return self + (-other)

    def render(self, digits: int = 4) -> str:
        return render_mts(self, digits)


def two_time_state(amplitudes: Sequence[complex], post_states: Sequence, pre_states: Sequence,
                   labels: Sequence[str] = ("t1", "t2")) -> MultiTimeState:
    """sum_i a_i <post_i|| |pre_i>, the pre state living at the earlier time."""
    branches = [
        MtsBranch(a, ((FWD, psi), (BWD, phi)))
        for a, phi, psi in zip(amplitudes, post_states, pre_states)
    ]
    return MultiTimeState.build(branches, labels)


def _require_compatible(a: MultiTimeState, b: MultiTimeState) -> None:
    if a.grid != b.grid:
        raise IncompatibilityError("multiple-time states live on different grids")
    if a.pattern != b.pattern:
        raise IncompatibilityError("multiple-time states have different direction patterns")


def _sandwich(post, u1, u2, p, pre) -> complex:
    return complex(np.vdot(post, u2 @ (p @ (u1 @ pre))))


def abl_probability(pre, post, u1, u2, outcomes: Sequence, tol: float = la.DEFAULT_TOL) -> list[float]:
    """p_n = |<post|U2 P_n U1|pre>|^2 / N for a complete set of projectors."""
    pre, post = la.as_vector(pre), la.as_vector(post)
    u1, u2 = la.as_matrix(u1), la.as_matrix(u2)
    outcomes = [la.as_matrix(p) for p in outcomes]
    if not (la.is_unitary(u1, tol) and la.is_unitary(u2, tol)):
        raise ValueError("evolution operators must be unitary")
    if any(not la.is_projector(p, tol) for p in outcomes):
        raise ValueError("outcomes must be projectors")
    if la.max_abs(sum(outcomes) - np.eye(outcomes[0].shape[0])) > tol:
        raise ValueError("outcome projectors must sum to the identity")
    amps = [_sandwich(post, u1, u2, p, pre) for p in outcomes]
    raw = [abs(a) ** 2 for a in amps]
    n = sum(raw)
    if n <= tol:
        raise ImpossiblePostselectionError(
            "post-selected state is unreachable through every outcome (N = 0)"
        )
    return [r / n for r in raw]


def _two_time_parts(mts: MultiTimeState):
    if len(mts.grid) != 2 or mts.pattern != (FWD, BWD):
        raise IncompatibilityError("expected a two-time state <post|| |pre>")
    return [(b.amplitude, b.slots[0][1], b.slots[1][1]) for b in mts.branches]


def two_time_amplitude(mts: MultiTimeState, u1, u2, p) -> complex:
    return complex(sum(a * _sandwich(phi, u1, u2, p, psi) for a, psi, phi in _two_time_parts(mts)))


def two_time_measurement_prob(mts: MultiTimeState, u1, u2, p) -> float:
    """|sum_i a_i <post_i|U2 P U1|pre_i>|^2, without renormalisation."""
    u1, u2, p = la.as_matrix(u1), la.as_matrix(u2), la.as_matrix(p)
    return abs(two_time_amplitude(mts, u1, u2, p)) ** 2


def two_time_distribution(mts: MultiTimeState, u1, u2, outcomes: Sequence,
                          tol: float = la.DEFAULT_TOL) -> list[float]:
    """Coherent outcome probabilities divided by their sum over ``outcomes``."""
    raw = [two_time_measurement_prob(mts, u1, u2, p) for p in outcomes]
    n = sum(raw)
    if n <= tol:
        raise ImpossiblePostselectionError("coherent normalisation vanishes for every outcome")
    return [r / n for r in raw]


def mts_inner(a: MultiTimeState, b: MultiTimeState) -> complex:
    """Scalar product <<a|b>>, antilinear in ``a``.

    Ket slots contribute <a_k|b_k>; bra slots, being dual vectors, contribute
    <b_k|a_k>.
    """
    _require_compatible(a, b)
    total = 0j
    for p in a.branches:
        for q in b.branches:
            term = np.conj(p.amplitude) * q.amplitude
            for (d, x), (_, y) in zip(p.slots, q.slots):
                term *= np.vdot(x, y) if d is FWD else np.vdot(y, x)
            total += term
    return complex(total)


@dataclass(frozen=True)
class MtsReport:
    violations: tuple[str, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_mts(mts: MultiTimeState, tol: float = la.DEFAULT_TOL) -> MtsReport:
    violations: list[str] = []
    warnings: list[str] = []
    pattern = mts.pattern
    n = len(pattern)
    if n == 2:
        if pattern != (FWD, BWD):
            warnings.append(
                f"two-time state with pattern {[d.value for d in pattern]}; expected (ket, bra)"
            )
    else:
        # the two end slots may point either way; interior neighbours must alternate
        for i in range(1, n - 2):
            if pattern[i] is pattern[i + 1]:
                violations.append(
                    f"slots {mts.grid.labels[i]} and {mts.grid.labels[i + 1]} "
                    f"are both {pattern[i].value}s"
                )
    for bi, b in enumerate(mts.branches):
        for (d, v), label, dim in zip(b.slots, mts.grid.labels, mts.grid.dims):
            if v.size != dim:
                violations.append(f"branch {bi} slot {label}: dimension {v.size} != {dim}")
            elif abs(np.linalg.norm(v) - 1) > tol:
                violations.append(f"branch {bi} slot {label}: state not normalised")
    return MtsReport(tuple(violations), tuple(warnings))


def _state_name(v) -> str:
    v = np.asarray(v)
    if v.size == 2:
        for name, s in la.STATES.items():
            if abs(abs(np.vdot(s, v)) - 1) < 1e-12:
                return name
    return ",".join(_fmt(c, 4) for c in la.canonical_phase(v))


def render_mts(m: MultiTimeState, digits: int = 4) -> str:
    parts = []
    for b in m.branches:
        slots = "".join(
            f"<{_state_name(v)}|" if d is BWD else f"|{_state_name(v)}>" for d, v in reversed(b.slots)
        )
        parts.append(f"({_fmt(b.amplitude, digits)}) {slots}")
    return " + ".join(parts)
