import numpy as np
import pytest

from ehtsvf import linalg as la
from ehtsvf.errors import DegeneracyError, FactorizationError, IncompatibilityError
from ehtsvf.histories import BridgingSet, HistoryBranch, HistoryState, TimeGrid, chain_operator, k_inner, weight
from ehtsvf.protocols import h_sa_zero, h_star_sa, spanning_bases
from ehtsvf.reduction import (
    CompositeGrid, MixedHistory, build_subsystem_family, contract, factorize_bridging,
    family_discrepancy, naive_spatial_trace, partial_trace_time, reduced_measurement_distribution,
)

S, P = la.state, la.proj
I2 = np.eye(2)
A0, A1 = la.basis(2, 0), la.basis(2, 1)


def composite_grid(n=2):
    grid = TimeGrid.uniform(n, 4)
    return grid, CompositeGrid.uniform(grid, [("S", 2), ("A", 2)])


def has_branch(h, ops_earliest_first, amp=None, tol=1e-12):
    for b in h.branches:
        if all(np.allclose(x, y, atol=tol) for x, y in zip(b.ops, ops_earliest_first)):
            if amp is None or abs(b.amplitude - amp) < tol:
                return True
    return False


@pytest.fixture
def hstar_setup(rng):
    pres = [la.haar_state(rng, 2), la.haar_state(rng, 2)]
    posts = [la.haar_state(rng, 2), la.haar_state(rng, 2)]
    pn = la.projector(la.haar_state(rng, 2))
    return pres, posts, pn


def test_composite_grid_validation():
    grid = TimeGrid.uniform(2, 4)
    with pytest.raises(ValueError):
        CompositeGrid.uniform(grid, [("S", 2), ("A", 3)])
    with pytest.raises(ValueError):
        CompositeGrid.uniform(grid, [("S", 2), ("S", 2)])
    _, cg = composite_grid()
    with pytest.raises(IncompatibilityError):
        cg.index("B")


def test_factorize_bridging(rng):
    grid, cg = composite_grid()
    u, v = la.haar_unitary(rng, 2), la.haar_unitary(rng, 2)
    rest, tgt = factorize_bridging(cg, BridgingSet(grid, (la.kron(u, v),)), "A")
    assert np.allclose(la.kron(rest.steps[0], tgt.steps[0]), la.kron(u, v), atol=1e-12)
    with pytest.raises(FactorizationError):
        factorize_bridging(cg, BridgingSet(grid, (la.GATES["CNOT"],)), "A")


def test_naive_trace_of_product_history():
    _, cg = composite_grid()
    phi, psi = S("x+"), S("y-")
    h = HistoryState.build([(1, [la.projector(la.kron(psi, A0)), la.projector(la.kron(phi, A0))])])
    r = naive_spatial_trace(h, cg, "A")
    assert len(r.branches) == 1 and has_branch(r, [la.projector(psi), la.projector(phi)], 1)


def test_naive_trace_keeps_cross_branch(hstar_setup):
    pres, posts, pn = hstar_setup
    h, cg = h_star_sa(pres, posts, I2, I2, pn)
    naive = naive_spatial_trace(h, cg, "A")
    cross = [la.projector(pres[0]), pn, la.projector(posts[1])]
    assert has_branch(naive, cross)


def test_product_history_partial_trace(rng):
    _, cg = composite_grid()
    phi, psi = la.haar_state(rng, 2), la.haar_state(rng, 2)
    h = HistoryState.build([(1, [la.projector(la.kron(psi, A0)), la.projector(la.kron(phi, A0))])])
    fam = build_subsystem_family(cg, "A", h.bridging)
    m = partial_trace_time(h, cg, fam)
    assert len(m) == 1
    assert abs(m.total_weight - weight(h)) < 1e-12
    assert has_branch(m.components[0][1], [la.projector(psi), la.projector(phi)], 1)
    naive = naive_spatial_trace(h, cg, "A")
    assert abs(weight(naive) - m.total_weight) < 1e-12


def test_family_identity_bridging_three_slots():
    grid = TimeGrid.uniform(3, 2)
    cg = CompositeGrid.uniform(grid, [("A", 2)])
    fam = build_subsystem_family(cg, "A", BridgingSet.identity(grid))
    assert len(fam.members) == 2
    for e, k in zip(fam.members, (0, 1)):
        assert np.allclose(chain_operator(e), la.projector(la.basis(2, k)))
    g = fam.gram()
    assert np.allclose(g, np.eye(2), atol=1e-12)


def test_family_hadamard_bridging():
    grid = TimeGrid.uniform(2, 2)
    cg = CompositeGrid.uniform(grid, [("A", 2)])
    fam = build_subsystem_family(cg, "A", BridgingSet(grid, (la.GATES["H"],)))
    assert len(fam.members) == 4 and fam.is_complete
    for e in fam.members:
        assert abs(abs(e.branches[0].amplitude) - np.sqrt(2)) < 1e-12
    assert np.allclose(fam.gram(), np.eye(4), atol=1e-12)


def test_single_slot_family():
    grid = TimeGrid(("t",), (2,))
    cg = CompositeGrid.uniform(grid, [("A", 2)])
    fam = build_subsystem_family(cg, "A", BridgingSet.identity(grid))
    assert [np.allclose(e.branches[0].ops[0], la.projector(la.basis(2, k))) for k, e in
            enumerate(fam.members)] == [True, True]


def test_hstar_computational_family_gives_two_components(hstar_setup):
    pres, posts, pn = hstar_setup
    gamma = 0.8
    h, cg = h_star_sa(pres, posts, I2, I2, pn, gamma=gamma)
    fam = build_subsystem_family(cg, "A", h.bridging)
    m = partial_trace_time(h, cg, fam)
    assert len(m) == 2
    for k, (_, comp) in enumerate(m.components):
        assert has_branch(comp, [la.projector(pres[k]), pn, la.projector(posts[k])], gamma)
        assert not has_branch(comp, [la.projector(pres[k]), pn, la.projector(posts[1 - k])])


def test_hstar_cross_branch_has_zero_weight(hstar_setup):
    pres, posts, pn = hstar_setup
    h0, cg = h_sa_zero(pres, posts, I2, I2, pn)
    assert weight(h0) < 1e-24
    fam = build_subsystem_family(cg, "A", h0.bridging, spanning_bases(3))
    assert len(partial_trace_time(h0, cg, fam)) == 0


def test_complete_family_conserves_weight(hstar_setup, rng):
    pres, posts, pn = hstar_setup
    u1, u2 = la.haar_unitary(rng, 2), la.haar_unitary(rng, 2)
    h, cg = h_star_sa(pres, posts, u1, u2, pn)
    fam = build_subsystem_family(cg, "A", h.bridging, spanning_bases(3))
    assert fam.is_complete
    m = partial_trace_time(h, cg, fam)
    assert abs(m.total_weight - weight(h)) < 1e-10


def test_contract_matches_component(hstar_setup):
    pres, posts, pn = hstar_setup
    h, cg = h_star_sa(pres, posts, I2, I2, pn)
    fam = build_subsystem_family(cg, "A", h.bridging)
    m = partial_trace_time(h, cg, fam)
    r = contract(h, cg, "A", fam.members[0])
    assert abs(k_inner(r, r) - m.components[0][0]) < 1e-12


def test_family_discrepancy_is_reported(hstar_setup):
    pres, posts, pn = hstar_setup
    h, cg = h_star_sa(pres, posts, I2, I2, pn)
    comp = build_subsystem_family(cg, "A", h.bridging)
    span = build_subsystem_family(cg, "A", h.bridging, spanning_bases(3))
    d = family_discrepancy(h, cg, comp, span)
    assert d["weight_b"] >= d["weight_a"] - 1e-12


def test_reduced_distribution_symmetric_case():
    zs = [S("z+"), S("z-")]
    r = la.SQRT1_2
    # two-branch history on S alone, the reduced form of the generation scheme
    grid = TimeGrid(("t1", "t", "t2"), (2, 2, 2))
    h = HistoryState(grid, BridgingSet.identity(grid), tuple(
        HistoryBranch(r, (la.projector(z), P("x+"), la.projector(z))) for z in zs))
    dist = reduced_measurement_distribution(MixedHistory(((weight(h), h),), weight(h)), 1)
    assert np.allclose(dist, [0.5, 0.5], atol=1e-12)


def test_reduced_distribution_identity_outcome():
    h = HistoryState.build([(1, [P("z+"), I2, P("z+")])])
    m = MixedHistory(((1.0, h),), 1.0)
    assert np.allclose(reduced_measurement_distribution(m, 1, [I2]), [1.0])


def test_reduced_distribution_empty():
    with pytest.raises(DegeneracyError):
        reduced_measurement_distribution(MixedHistory((), 0.0), 1)


def test_serialized_mixed_order_descending():
    h = HistoryState.build([(1, [P("z+"), P("z+")])])
    m = MixedHistory(((0.25, h), (0.75, h)), 1.0).sorted()
    assert [w for w, _ in m.components] == [0.75, 0.25]
