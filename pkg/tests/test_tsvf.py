import numpy as np
import pytest

from ehtsvf import linalg as la
from ehtsvf.errors import ImpossiblePostselectionError, IncompatibilityError
from ehtsvf.protocols import tau_ghz_mts
from ehtsvf.tsvf import (
    BWD, FWD, MultiTimeState, SlotDirection, abl_probability, mts_inner, two_time_distribution,
    two_time_measurement_prob, two_time_state, validate_mts,
)

R = la.SQRT1_2
S, P = la.state, la.proj
I2 = np.eye(2)
ZOUT = [P("z+"), P("z-")]


def brute_abl(pre, post, u1, u2, outs):
    amps = [abs(post.conj() @ u2 @ p @ u1 @ pre) ** 2 for p in outs]
    return [a / sum(amps) for a in amps]


@pytest.mark.parametrize("pre,post,expected", [
    ("x+", "z+", (1, 0)),
    ("z+", "z+", (1, 0)),
    ("x+", "x-", (0.5, 0.5)),
])
def test_abl_examples(pre, post, expected):
    probs = abl_probability(S(pre), S(post), I2, I2, ZOUT)
    assert np.allclose(probs, expected, atol=1e-12)
    assert abs(sum(probs) - 1) < 1e-12


def test_abl_matches_brute_force(rng):
    for _ in range(20):
        pre, post = la.haar_state(rng, 3), la.haar_state(rng, 3)
        u1, u2 = la.haar_unitary(rng, 3), la.haar_unitary(rng, 3)
        outs = [la.projector(v) for v in la.random_basis(rng, 3)]
        assert np.allclose(abl_probability(pre, post, u1, u2, outs), brute_abl(pre, post, u1, u2, outs),
                           atol=1e-12)


def test_abl_errors():
    with pytest.raises(ImpossiblePostselectionError):
        abl_probability(S("z+"), S("z-"), I2, I2, ZOUT)
    with pytest.raises(ValueError):
        abl_probability(S("z+"), S("z+"), I2, I2, [P("z+")])
    with pytest.raises(ValueError):
        abl_probability(S("z+"), S("z+"), np.diag([1, 2]), I2, ZOUT)


def test_two_time_examples(rng):
    u1, u2 = la.haar_unitary(rng, 2), la.haar_unitary(rng, 2)
    psi, phi = la.haar_state(rng, 2), la.haar_state(rng, 2)
    single = two_time_state([1], [phi], [psi])
    assert abs(two_time_measurement_prob(single, u1, u2, I2) - abs(np.vdot(phi, u2 @ u1 @ psi)) ** 2) < 1e-12
    zs = [S("z+"), S("z-")]
    sym = two_time_state([R, R], zs, zs)
    assert abs(two_time_measurement_prob(sym, I2, I2, P("x+")) - 0.5) < 1e-12
    assert two_time_measurement_prob(sym, I2, I2, np.zeros((2, 2))) == 0
    assert np.allclose(two_time_distribution(sym, I2, I2, [P("x+"), P("x-")]), [0.5, 0.5])


def test_mts_inner_examples(rng):
    m = two_time_state([1], [S("z+")], [S("x+")])
    assert abs(mts_inner(m, m) - 1) < 1e-15
    o = two_time_state([1], [S("z-")], [S("x+")])
    assert abs(mts_inner(m, o)) < 1e-15
    b1, b2 = la.random_basis(rng, 2), la.random_basis(rng, 2)
    alpha = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    beta = rng.standard_normal(4) + 1j * rng.standard_normal(4)

    def build(c):
        return MultiTimeState.build([
            (c[2 * i + j], [(FWD, b1[j]), (BWD, b2[i])]) for i in range(2) for j in range(2)
        ])

    assert abs(mts_inner(build(alpha), build(beta)) - np.sum(np.conj(alpha) * beta)) < 1e-12


def test_mts_inner_bra_slots_are_dual(rng):
    # a bra slot scaled by a phase contributes the conjugate phase
    phase = np.exp(0.4j)
    a = two_time_state([1], [S("z+")], [S("x+")])
    b = two_time_state([1], [phase * S("z+")], [S("x+")])
    assert abs(mts_inner(a, b) - np.conj(phase)) < 1e-15


def test_mts_inner_incompatible():
    a = two_time_state([1], [S("z+")], [S("x+")])
    b = MultiTimeState.build([(1, [(BWD, S("x+")), (FWD, S("z+"))])])
    with pytest.raises(IncompatibilityError):
        mts_inner(a, b)


def test_validate_examples():
    assert validate_mts(two_time_state([1], [S("z+")], [S("x+")])).valid
    bad = MultiTimeState.build([(1, [(BWD, S("z+")), (FWD, S("z+")), (FWD, S("x+")), (BWD, S("z+"))])])
    rep = validate_mts(bad)
    assert not rep.valid and "kets" in rep.violations[0]
    assert validate_mts(tau_ghz_mts()).valid
    unnorm = MultiTimeState.build([(1, [(FWD, 2 * S("z+")), (BWD, S("z+"))])])
    assert not validate_mts(unnorm).valid


def test_validate_two_slot_pattern_warning():
    m = MultiTimeState.build([(1, [(FWD, S("z+")), (FWD, S("x+"))])])
    rep = validate_mts(m)
    assert rep.valid and rep.warnings


def test_direction_parse():
    assert SlotDirection.parse("bra") is BWD
    assert SlotDirection.parse("forward") is FWD
    with pytest.raises(ValueError):
        SlotDirection.parse("sideways")


def test_branches_share_pattern():
    with pytest.raises(IncompatibilityError):
        MultiTimeState.build([(1, [(FWD, S("z+")), (BWD, S("z+"))]), (1, [(BWD, S("z+")), (BWD, S("z+"))])])


def test_render():
    assert two_time_state([1], [S("z+")], [S("x+")]).render() == "(1) <z+||x+>"
