import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehtsvf import linalg as la
from ehtsvf.errors import DegeneracyError, IncompatibilityError, ShapeError
from ehtsvf.histories import (
    BridgingSet, ConsistentFamily, HistoryState, TimeGrid, chain_operator, check_family,
    injected_distribution, injected_history, k_inner, normalize_history, product_family, s_inner,
    weight,
)
from ehtsvf.tsvf import two_time_distribution, two_time_measurement_prob, two_time_state

R = la.SQRT1_2
P = la.proj
H = la.GATES["H"]
Z_BASIS = [la.state("z+"), la.state("z-")]


def hist(*slots_latest_first, amp=1.0, bridging=None):
    return HistoryState.build([(amp, list(slots_latest_first)[::-1])], bridging=bridging)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(("a", "a"), (2, 2))
    with pytest.raises(ValueError):
        TimeGrid(("a", "b"), (2, 0))
    with pytest.raises(ValueError):
        TimeGrid(("a", "b"), (2,))


def test_bridging_validation_and_composition(rng):
    grid = TimeGrid.uniform(3, 2)
    with pytest.raises(ValueError):
        BridgingSet(grid, (np.diag([1, 2]), np.eye(2)))
    with pytest.raises(ShapeError):
        BridgingSet(grid, (np.eye(2),))
    u1, u2 = la.haar_unitary(rng, 2), la.haar_unitary(rng, 2)
    b = BridgingSet(grid, (u1, u2))
    assert np.allclose(b.composed(2, 0), u2 @ u1, atol=1e-14)
    assert np.allclose(b.composed(1, 1), np.eye(2))


def test_branch_flags_general_operators():
    h = HistoryState.build([(1, [H, P("z+")])])
    assert h.branches[0].general
    assert not h.is_projector_chain


def test_chain_operator_examples():
    assert np.allclose(chain_operator(hist(P("z+"), P("z+"))), P("z+"))
    k = chain_operator(hist(P("z+"), P("z+"), bridging=[H]))
    assert np.allclose(k, np.diag([R, 0]), atol=1e-15)
    k = chain_operator(hist(P("z-"), P("x+"), P("z+")))
    assert abs(abs(k[1, 0]) - 0.5) < 1e-15 and np.count_nonzero(np.abs(k) > 1e-15) == 1


def test_weight_examples():
    assert abs(weight(hist(P("z+"), P("z+"))) - 1) < 1e-15
    assert weight(hist(P("z-"), P("z+"))) == 0
    assert abs(weight(hist(P("z+"), P("x+"))) - 0.5) < 1e-15


def test_k_inner_examples(rng):
    a, b = hist(P("z+"), P("z+")), hist(P("z-"), P("z-"))
    assert k_inner(a, b) == 0
    ah = hist(P("z+"), P("z+"), bridging=[H])
    assert abs(k_inner(ah, ah) - 0.5) < 1e-12
    for _ in range(10):
        h = hist(la.projector(la.haar_state(rng, 2)), la.projector(la.haar_state(rng, 2)),
                 amp=complex(*rng.standard_normal(2)))
        assert abs(k_inner(h, h) - weight(h)) < 1e-12


def test_s_inner_examples():
    h = hist(P("y+"), P("x-"))
    assert abs(s_inner(h, h) - 1) < 1e-12
    ah = hist(P("z+"), P("z+"), bridging=[H])
    assert abs(s_inner(ah, ah) - 1) < 1e-12
    assert abs(k_inner(ah, ah) - 0.5) < 1e-12


def test_s_inner_coefficient_contraction(rng):
    b2 = la.random_basis(rng, 2)
    b1 = la.random_basis(rng, 2)
    alpha = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    beta = rng.standard_normal(4) + 1j * rng.standard_normal(4)

    def build(c):
        return HistoryState.build([
            (c[2 * i + j], [la.projector(b1[j]), la.projector(b2[i])]) for i in range(2) for j in range(2)
        ])

    # antilinear in the first argument
    expected = np.sum(np.conj(alpha) * beta)
    assert abs(s_inner(build(alpha), build(beta)) - expected) < 1e-12


def test_incompatible_operands():
    a = hist(P("z+"), P("z+"))
    b = hist(P("z+"), P("z+"), bridging=[H])
    with pytest.raises(IncompatibilityError):
        k_inner(a, b)
    c = HistoryState.build([(1, [P("z+"), P("z+"), P("z+")])])
    with pytest.raises(IncompatibilityError):
        s_inner(a, c)


def test_normalize_history():
    h = hist(P("z+"), P("z+"))
    assert np.allclose(normalize_history(h).branches[0].ops[0], h.branches[0].ops[0])
    assert abs(normalize_history(h).branches[0].amplitude - 1) < 1e-12
    injected = injected_history(Z_BASIS, Z_BASIS, [R, R], P("x+"), np.eye(2), np.eye(2))
    n = normalize_history(injected)
    assert abs(weight(n) - 1) < 1e-12
    assert abs(n.branches[0].amplitude - R / np.sqrt(weight(injected))) < 1e-12
    assert abs(s_inner(normalize_history(injected, "S"), normalize_history(injected, "S")) - 1) < 1e-12
    with pytest.raises(DegeneracyError):
        normalize_history(hist(P("z-"), P("z+")))


def test_check_family_examples():
    grid = TimeGrid.uniform(2, 2)
    fam = product_family(grid, [Z_BASIS, Z_BASIS])
    rep = check_family(fam)
    assert rep.verdict and rep.exhaustiveness_residual <= 1e-12 and rep.max_offdiagonal <= 1e-12
    short = ConsistentFamily.of(fam.members[:3])
    assert abs(check_family(short).exhaustiveness_residual - 1) < 1e-12
    assert not check_family(short).verdict
    pair = ConsistentFamily.of([hist(P("z+"), P("z+")), hist(P("z-"), P("z+"))])
    rep = check_family(pair)
    assert rep.consistent and not rep.exhaustive


def test_check_family_detects_inconsistency():
    grid = TimeGrid.uniform(3, 2)
    x_basis = [la.state("x+"), la.state("x-")]
    fam = product_family(grid, [Z_BASIS, x_basis, Z_BASIS])
    rep = check_family(fam)
    assert rep.exhaustive and not rep.consistent


def test_injected_history_examples(rng):
    u1, u2 = la.haar_unitary(rng, 2), la.haar_unitary(rng, 2)
    psi, phi = la.haar_state(rng, 2), la.haar_state(rng, 2)
    h = injected_history([psi], [phi], [1], np.eye(2), u1, u2)
    assert abs(weight(h) - abs(np.vdot(phi, u2 @ u1 @ psi)) ** 2) < 1e-12
    assert weight(injected_history([psi], [phi], [1], np.zeros((2, 2)), u1, u2)) == 0


def test_injected_distribution_symmetric_case_matches_coherent_sum():
    outs = [P("x+"), P("x-")]
    eye = np.eye(2)
    dist = injected_distribution(Z_BASIS, Z_BASIS, [R, R], outs, eye, eye)
    mts = two_time_state([R, R], Z_BASIS, Z_BASIS)
    assert np.allclose(dist, two_time_distribution(mts, eye, eye, outs), atol=1e-12)
    assert abs(two_time_measurement_prob(mts, eye, eye, P("x+")) - 0.5) < 1e-12


def test_arithmetic_and_merge():
    a = hist(P("z+"), P("x+"), amp=0.25)
    b = hist(P("z+"), P("x+"), amp=0.5)
    m = (a + b).merged()
    assert len(m.branches) == 1 and abs(m.branches[0].amplitude - 0.75) < 1e-15
    d = (a - a).merged()
    assert abs(s_inner(d, d)) < 1e-15


def test_render_uses_latest_leftmost():
    h = hist(P("z-"), P("x+"), amp=0.5)
    assert h.render() == "(0.5) [z-]⊙[x+]"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_k_inner_hermitian_and_positive(seed):
    rng = np.random.default_rng(seed)
    grid = TimeGrid.uniform(3, 2)
    br = BridgingSet(grid, (la.haar_unitary(rng, 2), la.haar_unitary(rng, 2)))

    def rand():
        return HistoryState.build([
            (complex(*rng.standard_normal(2)), [la.projector(la.haar_state(rng, 2)) for _ in range(3)])
            for _ in range(2)
        ], grid=grid, bridging=br)

    a, b = rand(), rand()
    assert abs(k_inner(a, b) - np.conj(k_inner(b, a))) < 1e-12
    assert k_inner(a, a).real >= -1e-12
    assert abs(s_inner(a, b) - np.conj(s_inner(b, a))) < 1e-12
