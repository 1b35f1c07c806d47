"""State-vector oracle and the two constructive protocols.

The oracle evolves plain state vectors with ``numpy.tensordot`` and shares
no code with the history or multiple-time modules, so agreement between the
two routes is a genuine cross-check.

Qubit 0 is the particle; reference qubits follow in order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import linalg as la
from .errors import ImpossiblePostselectionError, ShapeError
from .histories import BridgingSet, HistoryBranch, HistoryState, TimeGrid, s_inner, weight
from .reduction import CompositeGrid, build_subsystem_family, partial_trace_time
from .tsvf import BWD, FWD, MtsBranch, MultiTimeState, two_time_measurement_prob, two_time_state, validate_mts

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Gate:
    matrix: np.ndarray
    targets: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "matrix", la.as_matrix(self.matrix))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))


@dataclass(frozen=True)
class Marker:
    label: str


Step = Union[Gate, Marker]


@dataclass(frozen=True, eq=False)
class Circuit:
    qubit_count: int
    steps: tuple[Step, ...]
    initial_state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "initial_state", la.as_vector(self.initial_state))
        if self.qubit_count < 1:
            raise ValueError("a circuit needs at least one qubit")
        if self.initial_state.size != 2**self.qubit_count:
            raise ShapeError("initial state does not match the qubit count")
        for s in self.steps:
            if isinstance(s, Gate):
                k = len(s.targets)
                if len(set(s.targets)) != k or any(not 0 <= t < self.qubit_count for t in s.targets):
                    raise ValueError(f"invalid gate targets {s.targets}")
                if s.matrix.shape != (2**k, 2**k):
                    raise ShapeError(f"gate of shape {s.matrix.shape} on {k} qubits")
                if not la.is_unitary(s.matrix):
                    raise ValueError("circuit gates must be unitary")

    @property
    def markers(self) -> list[str]:
        return [s.label for s in self.steps if isinstance(s, Marker)]


def apply(state: np.ndarray, op, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Apply any operator (unitary or not) to the listed qubits of a state vector."""
    k = len(targets)
    psi = np.asarray(state, dtype=np.complex128).reshape((2,) * n_qubits)
    t = np.asarray(op, dtype=np.complex128).reshape((2,) * (2 * k))
    out = np.tensordot(t, psi, axes=(list(range(k, 2 * k)), list(targets)))
    out = np.moveaxis(out, list(range(k)), list(targets))
    return out.reshape(-1)


def simulate(c: Circuit) -> list[np.ndarray]:
    """State at every marker, in order; a circuit without markers yields its final state."""
    psi = np.array(c.initial_state)
    out = []
    for s in c.steps:
        if isinstance(s, Gate):
            psi = apply(psi, s.matrix, s.targets, c.qubit_count)
        else:
            out.append(la.as_vector(psi))
    if not any(isinstance(s, Marker) for s in c.steps):
        out.append(la.as_vector(psi))
    return out


@dataclass(frozen=True, eq=False)
class PostSelection:
    subsystem: tuple[int, ...]
    projector_state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "subsystem", tuple(int(q) for q in self.subsystem))
        v = la.as_vector(self.projector_state)
        if abs(np.linalg.norm(v) - 1) > la.DEFAULT_TOL:
            raise ValueError("post-selection state must be normalised")
        if v.size != 2 ** len(self.subsystem):
            raise ShapeError("post-selection state does not match the subsystem size")
        object.__setattr__(self, "projector_state", v)


def post_select(state, ps: PostSelection, tol: float = NORM_TOL) -> tuple[float, np.ndarray]:
    """Project ``ps.subsystem`` onto ``ps.projector_state``.

    Returns the probability and the normalised state of the other qubits
    (a one-entry vector when nothing remains).
    """
    psi = np.asarray(state, dtype=np.complex128)
    n = int(round(math.log2(psi.size)))
    if 2**n != psi.size:
        raise ShapeError("state length is not a power of two")
    k = len(ps.subsystem)
    t = psi.reshape((2,) * n)
    bra = ps.projector_state.conj().reshape((2,) * k)
    rest = np.tensordot(bra, t, axes=(list(range(k)), list(ps.subsystem))).reshape(-1)
    prob = float(np.vdot(rest, rest).real)
    if prob <= tol:
        raise ImpossiblePostselectionError(
            f"projection of qubits {ps.subsystem} has zero probability"
        )
    return prob, la.as_vector(rest / math.sqrt(prob))


def bits_state(bits: str) -> np.ndarray:
    return la.basis(2 ** len(bits), int(bits, 2))


# ---------------------------------------------------------------------------
# τGHZ protocol

def tau_ghz_circuit() -> Circuit:
    initial = la.kron(la.state("x+"), bits_state("000"))
    cnot = la.GATES["CNOT"]
    steps = [Marker("t0")]
    for k in (1, 2, 3):
        steps += [Gate(cnot, (0, k)), Marker(f"t{k}")]
    return Circuit(4, tuple(steps), initial)


def tau_ghz_states() -> dict[str, np.ndarray]:
    """The composite states printed for each time of the protocol."""
    zp, zm = la.state("z+"), la.state("z-")
    r = la.SQRT1_2
    return {
        "t0": r * la.kron(zp, bits_state("000")) + r * la.kron(zm, bits_state("000")),
        "t1": r * la.kron(zp, bits_state("000")) + r * la.kron(zm, bits_state("100")),
        "t2": r * la.kron(zp, bits_state("000")) + r * la.kron(zm, bits_state("110")),
        "t3": r * la.kron(zp, bits_state("000")) + r * la.kron(zm, bits_state("111")),
    }


def tau_ghz_mts() -> MultiTimeState:
    """(1/√2) Σ± <x-|<z±||z±><z±||x+> over times t0 < t1 < t2 < t3 < tf."""
    xp, xm = la.state("x+"), la.state("x-")
    branches = []
    for z in ("z+", "z-"):
        v = la.state(z)
        branches.append(MtsBranch(la.SQRT1_2, ((FWD, xp), (BWD, v), (FWD, v), (BWD, v), (BWD, xm))))
    return MultiTimeState.build(branches, ("t0", "t1", "t2", "t3", "tf"))


def record_history(final_state, reference_state, n_records: int = 3,
                   labels: Sequence[str] = ("t1", "t2", "t3")) -> tuple[HistoryState, float]:
    """Particle history conditioned on projecting the reference register.

    Each computational record ``b`` means the particle was in ``z(b_k)`` at
    time ``t_k``; its branch amplitude is <reference|b> times the norm of the
    particle state correlated with ``b``, renormalised by the norm of the
    full projection. Returns the history and the projection probability.
    """
    refs = tuple(range(1, n_records + 1))
    prob, _ = post_select(final_state, PostSelection(refs, reference_state))
    psi = np.asarray(final_state).reshape((2,) * (n_records + 1))
    zs = [la.proj("z+"), la.proj("z-")]
    branches = []
    for bits in itertools.product((0, 1), repeat=n_records):
        part = psi[(slice(None),) + bits]
        norm = float(np.linalg.norm(part))
        coeff = np.conj(reference_state[int("".join(map(str, bits)), 2)])
        if norm <= NORM_TOL or abs(coeff) <= NORM_TOL:
            continue
        branches.append(HistoryBranch(coeff * norm / math.sqrt(prob), tuple(zs[b] for b in bits)))
    grid = TimeGrid(tuple(labels), (2,) * n_records)
    return HistoryState(grid, BridgingSet.identity(grid), tuple(branches)), prob


@dataclass
class OracleReport:
    state_deviation: dict[str, float] = field(default_factory=dict)
    norms: dict[str, float] = field(default_factory=dict)
    probabilities: dict[str, float] = field(default_factory=dict)
    residuals: dict[str, list] = field(default_factory=dict)
    computational_total: float = 0.0
    history_s_norm: float = 0.0
    history_weight: float = 0.0
    mts_valid: bool = False

    def max_state_deviation(self) -> float:
        return max(self.state_deviation.values())


def run_tau_ghz() -> tuple[HistoryState, OracleReport]:
    c = tau_ghz_circuit()
    states = dict(zip(c.markers, simulate(c)))
    report = OracleReport()
    for label, expected in tau_ghz_states().items():
        report.state_deviation[label] = la.max_abs(states[label] - expected)
        report.norms[label] = float(np.linalg.norm(states[label]))
    final = states["t3"]
    ghz_minus = la.SQRT1_2 * (bits_state("000") - bits_state("111"))
    for name, ref in (("000", bits_state("000")), ("111", bits_state("111")),
                      ("(000-111)/sqrt2", ghz_minus)):
        p, residual = post_select(final, PostSelection((1, 2, 3), ref))
        report.probabilities[name] = p
        report.residuals[name] = [[z.real, z.imag] for z in residual]
    total = 0.0
    for bits in itertools.product("01", repeat=3):
        try:
            total += post_select(final, PostSelection((1, 2, 3), bits_state("".join(bits))))[0]
        except ImpossiblePostselectionError:
            pass
    report.computational_total = total
    history, _ = record_history(final, ghz_minus)
    report.history_s_norm = s_inner(history, history).real
    report.history_weight = weight(history)
    report.mts_valid = validate_mts(tau_ghz_mts()).valid
    return history, report


# ---------------------------------------------------------------------------
# System + ancilla generation of a two-time entangled state

def composite_states(lambdas, betas, pres, posts):
    """λ0|Ψ0 0> + λ1|Ψ1 1> and β0|Φ0 0> + β1|Φ1 1>."""
    a0, a1 = la.basis(2, 0), la.basis(2, 1)
    psi = lambdas[0] * la.kron(pres[0], a0) + lambdas[1] * la.kron(pres[1], a1)
    phi = betas[0] * la.kron(posts[0], a0) + betas[1] * la.kron(posts[1], a1)
    return la.as_vector(psi), la.as_vector(phi)


def _composite_setup(pre_op, post_op, p_n, u1, u2, labels):
    d = np.asarray(p_n).shape[0]
    eye = np.eye(2)
    grid = TimeGrid(tuple(labels), (2 * d,) * 3)
    bridging = BridgingSet(grid, (la.kron(u1, eye), la.kron(u2, eye)))
    h = HistoryState(grid, bridging, (HistoryBranch(1.0, (pre_op, la.kron(p_n, eye), post_op)),))
    cg = CompositeGrid.uniform(grid, [("S", d), ("A", 2)])
    return h, cg


def generation_history(lambdas, betas, pres, posts, u1, u2, p_n,
                       labels=("t1", "t", "t2")) -> tuple[HistoryState, CompositeGrid]:
    """[Φ]⊙[P_n ⊗ I_A]⊙[Ψ] with bridging U_i ⊗ I_A."""
    psi, phi = composite_states(lambdas, betas, pres, posts)
    return _composite_setup(la.projector(psi), la.projector(phi), p_n, u1, u2, labels)


def h_star_sa(pres, posts, u1, u2, p_n, gamma: float = 1.0,
              labels=("t1", "t", "t2")) -> tuple[HistoryState, CompositeGrid]:
    """Equal-phase expansion: every |Φ_i i><Φ_j j| and |Ψ_k k><Ψ_l l| term with weight one."""
    psi, phi = composite_states((1, 1), (1, 1), pres, posts)
    h, cg = _composite_setup(la.outer(psi, psi), la.outer(phi, phi), p_n, u1, u2, labels)
    return h.scaled(gamma), cg


def h_sa_zero(pres, posts, u1, u2, p_n, labels=("t1", "t", "t2")) -> tuple[HistoryState, CompositeGrid]:
    """[|Φ1 1><Φ1 1|]⊙[P_n ⊗ I_A]⊙[|Ψ0 0><Ψ0 0|], a history that cannot be realised."""
    a0, a1 = la.basis(2, 0), la.basis(2, 1)
    return _composite_setup(la.projector(la.kron(pres[0], a0)), la.projector(la.kron(posts[1], a1)),
                            p_n, u1, u2, labels)


def spanning_bases(n_slots: int, dim: int = 2) -> list[list[np.ndarray]]:
    """Computational and Fourier bases alternating over time.

    Under identity bridging the resulting projector chains reach every
    operator |a><b| between the first and last time, so the family built
    from them is complete.
    """
    comp = [la.basis(dim, i) for i in range(dim)]
    w = np.exp(2j * np.pi / dim)
    fourier = [la.as_vector([w ** (j * k) / math.sqrt(dim) for j in range(dim)]) for k in range(dim)]
    return [comp if i % 2 == 0 else fourier for i in range(n_slots)]


def oracle_generation_probability(lambdas, betas, pres, posts, u1, u2, p_n) -> float:
    """|<Φ_SA| (U2 ⊗ I)(P ⊗ I)(U1 ⊗ I) |Ψ_SA>|^2 by direct state-vector evolution."""
    psi, phi = composite_states(lambdas, betas, pres, posts)
    c = Circuit(2, (Gate(u1, (0,)),), psi)
    state = simulate(c)[0]
    state = apply(state, p_n, (0,), 2)
    state = apply(state, u2, (0,), 2)
    return abs(np.vdot(phi, state)) ** 2


@dataclass(frozen=True)
class GenerationComparison:
    oracle: float
    two_time: float
    reduced: float
    reduced_components: int

    @property
    def max_deviation(self) -> float:
        vals = (self.oracle, self.two_time, self.reduced)
        return max(abs(a - b) for a, b in itertools.combinations(vals, 2))


def run_generation_scheme(lambda0, lambda1, beta0, beta1, psi0, psi1, phi0, phi1, u1, u2, p_n,
                          tol: float = la.DEFAULT_TOL) -> tuple[float, GenerationComparison]:
    lambdas, betas = (complex(lambda0), complex(lambda1)), (complex(beta0), complex(beta1))
    if abs(sum(abs(x) ** 2 for x in lambdas) - 1) > tol or abs(sum(abs(x) ** 2 for x in betas) - 1) > tol:
        raise ValueError("λ and β amplitude pairs must be normalised")
    pres = [la.as_vector(psi0), la.as_vector(psi1)]
    posts = [la.as_vector(phi0), la.as_vector(phi1)]
    if any(abs(np.linalg.norm(v) - 1) > tol for v in pres + posts):
        raise ValueError("system states must be normalised")
    if np.asarray(p_n).shape != (2, 2):
        raise ShapeError("the oracle route supports a qubit system only")
    u1, u2, p_n = la.as_matrix(u1), la.as_matrix(u2), la.as_matrix(p_n)

    oracle = oracle_generation_probability(lambdas, betas, pres, posts, u1, u2, p_n)
    if oracle <= NORM_TOL:
        raise ImpossiblePostselectionError("post-selection on the composite state has zero probability")

    alphas = [np.conj(b) * l for b, l in zip(betas, lambdas)]
    two_time = two_time_measurement_prob(two_time_state(alphas, posts, pres), u1, u2, p_n)

    h, cg = generation_history(lambdas, betas, pres, posts, u1, u2, p_n)
    fam = build_subsystem_family(cg, "A", h.bridging, spanning_bases(3))
    reduced = partial_trace_time(h, cg, fam)
    comp = GenerationComparison(oracle, two_time, reduced.total_weight, len(reduced))
    return oracle, comp


def random_generation_params(rng: np.random.Generator) -> dict:
    """Haar-random states and evolutions with random complex λ, β pairs."""
    def pair():
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        return v / np.linalg.norm(v)

    lam, bet = pair(), pair()
    return dict(
        lambda0=lam[0], lambda1=lam[1], beta0=bet[0], beta1=bet[1],
        psi0=la.haar_state(rng, 2), psi1=la.haar_state(rng, 2),
        phi0=la.haar_state(rng, 2), phi1=la.haar_state(rng, 2),
        u1=la.haar_unitary(rng, 2), u2=la.haar_unitary(rng, 2),
        p_n=la.projector(la.haar_state(rng, 2)),
    )


def symmetric_generation_params() -> dict:
    r = la.SQRT1_2
    return dict(
        lambda0=r, lambda1=r, beta0=r, beta1=r,
        psi0=la.state("z+"), psi1=la.state("z-"), phi0=la.state("z+"), phi1=la.state("z-"),
        u1=la.GATES["I"], u2=la.GATES["I"], p_n=la.proj("x+"),
    )
