import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eddlab.bounds import (DistBelowEnvelope, DPPKernelEnvelope, EDDParams, SeparationTooSmall, ball_volume_constant,
                           boolean_beta_bound, boolean_beta_bound_quad, dpp_beta_bound, edd_bound, edd_from_volume,
                           edd_predicate, gibbs_clan_overlap, volume_form_bound)
from eddlab.geometry import Box, diam, set_distance
from eddlab.rng import make_rng
from eddlab.samplers import GibbsSpec, PairPotential
from oracles import mp_boolean, mp_dpp


def test_dpp_example():
    env = DPPKernelEnvelope(1, 1, 1, 1)
    expected = 18 * math.exp(4) * math.exp(-2 * math.e ** 2)
    assert dpp_beta_bound(env, 1, 1, 2) == pytest.approx(expected, rel=1e-13)
    assert dpp_beta_bound(env, 1, 1, 2) == pytest.approx(3.7532e-4, rel=1e-4)


def test_dpp_zero_volume_and_envelope_guard():
    env = DPPKernelEnvelope(1, 1, 1, 1, c4=3)
    assert dpp_beta_bound(env, 0, 5, 4) == 0.0
    with pytest.raises(DistBelowEnvelope):
        dpp_beta_bound(env, 1, 1, 2.9)


def test_dpp_matches_high_precision():
    rng = make_rng(1)
    for _ in range(100):
        k, c1, c2, c3 = rng.uniform(0.1, 3, 4)
        pa, pb = rng.uniform(0.01, 5, 2)
        dist = rng.uniform(0, 3)
        got = dpp_beta_bound(DPPKernelEnvelope(k, c1, c2, c3), pa, pb, dist)
        ref = float(mp_dpp(k, c1, c2, c3, pa, pb, dist))
        assert got == pytest.approx(ref, rel=1e-10)


def test_dpp_symmetric_and_monotone():
    env = DPPKernelEnvelope(0.7, 1.3, 0.4, 0.9)
    vals = [dpp_beta_bound(env, 2, 3, d) for d in np.linspace(0, 5, 40)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert dpp_beta_bound(env, 2, 3, 1.1) == dpp_beta_bound(env, 3, 2, 1.1)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_boolean_closed_form_matches_quadrature(d):
    rng = make_rng(10 + d)
    for _ in range(100):
        lam, c1 = rng.uniform(0.1, 3, 2)
        c2 = rng.uniform(0.2, 4)
        r0 = rng.uniform(0, 1)
        ra, rb = rng.uniform(0, 3, 2)
        sep = 4 * r0 + rng.uniform(0, 10)
        got = boolean_beta_bound(lam, c1, c2, r0, ra, rb, sep, d)
        assert got == pytest.approx(boolean_beta_bound_quad(lam, c1, c2, r0, ra, rb, sep, d), rel=1e-8)
        assert got == pytest.approx(float(mp_boolean(lam, c1, c2, ra, rb, sep, d)), rel=1e-8)


def test_boolean_trivial_cases():
    assert boolean_beta_bound(1, 0, 1, 0.1, 1, 1, 5, 2) == 0.0
    with pytest.raises(SeparationTooSmall):
        boolean_beta_bound(1, 1, 1, 1.0, 1, 1, 3.9, 2)


def test_boolean_monotonicity():
    # decreasing in R once c2 (r_i + R/4) >= d; increasing in the radii
    vals = [boolean_beta_bound(1, 1, 2, 0.1, 1, 1.5, R, 2) for R in np.linspace(1, 20, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert boolean_beta_bound(1, 1, 2, 0.1, 2, 1.5, 4, 2) > boolean_beta_bound(1, 1, 2, 0.1, 1, 1.5, 4, 2)
    assert boolean_beta_bound(1, 1, 2, 0.1, 1, 2, 4, 3) > boolean_beta_bound(1, 1, 2, 0.1, 1, 1.5, 4, 3)
    assert boolean_beta_bound(1, 1, 2, 0.1, 1, 2, 4, 3) == boolean_beta_bound(1, 1, 2, 0.1, 2, 1, 4, 3)


def test_edd_example():
    p = EDDParams(0, 1, 1, 1, 1)
    applies, val = edd_predicate(p, Box([0, 0], [1, 1]), Box([11, 0], [12, 1]))
    assert applies
    assert val == pytest.approx(math.exp(-10))
    assert val == pytest.approx(4.54e-5, rel=1e-3)


def test_edd_below_threshold_and_symmetry():
    p = EDDParams(1, 1, 1, 5, 1)
    a, b = Box([0, 0], [10, 10]), Box([12, 0], [20, 10])
    assert edd_predicate(p, a, b)[0] is False
    assert edd_predicate(p, a, b)[0] == edd_predicate(p, b, a)[0]
    q = EDDParams(1, 2, 0.5, 0.1, 1)
    assert edd_predicate(q, a, b) == edd_predicate(q, b, a)


def test_kappa_values():
    assert ball_volume_constant(1) == pytest.approx(1.0)
    assert ball_volume_constant(2) == pytest.approx(math.pi / 4)
    assert ball_volume_constant(3) == pytest.approx(math.pi / 6)


def test_edd_from_volume_exponent_zero():
    p = edd_from_volume(0, 2.5, 1, 1, 1, 2)
    assert p.theta0 == 0 and p.theta1 == 2.5


def test_edd_from_volume_substitution():
    # kappa_d <= 1 in d <= 3, so the prefactor is kept and the exponent scales by d
    p = edd_from_volume(1.0, 3.0, 0.7, 2.0, 5.0, 2)
    assert (p.theta0, p.theta1, p.theta2, p.theta3) == (2.0, 3.0, 0.7, 4.0)
    assert p.theta4 == pytest.approx(max(math.sqrt(5.0), math.e))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_edd_from_volume_dominates_volume_form(d):
    rng = make_rng(40 + d)
    applied = 0
    for _ in range(1000):
        t = (rng.uniform(0, 2), *rng.uniform(0.1, 3, 4))
        p = edd_from_volume(*t, d)
        lo_a = rng.uniform(-20, 20, d)
        a = Box(lo_a, lo_a + rng.uniform(0.01, 8, d))
        lo_b = rng.uniform(-20, 20, d) + rng.uniform(0, 60) * rng.choice([-1, 1], d)
        b = Box(lo_b, lo_b + rng.uniform(0.01, 8, d))
        dist = set_distance(a, b)
        applies, bound = edd_bound(p, diam(a), diam(b), dist)
        if not applies:
            continue
        applied += 1
        v_applies, v_bound = volume_form_bound(*t, a.volume, b.volume, dist)
        assert v_applies
        assert bound >= v_bound * (1 - 1e-12)
    assert applied > 100


def test_clan_overlap_touching_vs_separated():
    spec = GibbsSpec(1.0, 1.0, PairPotential("hardcore", r0=0.5))
    a = Box([-1, -4], [0, 4])
    touching = gibbs_clan_overlap(spec, a, Box([0, -4], [1, 4]), 200, 1)
    far = gibbs_clan_overlap(spec, a, Box([30, -4], [31, 4]), 50, 2)
    assert touching[0] > 0.35
    assert far[0] == 0.0 and far[1] <= 1 / 50
    assert touching[2] == 0.0


def test_clan_overlap_decays_with_separation():
    spec = GibbsSpec(1.0, 1.0, PairPotential("hardcore", r0=0.5))
    a = Box([-1, -4], [0, 4])
    seps = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    est = [gibbs_clan_overlap(spec, a, Box([s, -4], [s + 1, 4]), 300, 7)[0] for s in seps]
    assert est[-1] < est[0]
    slope, _ = np.polyfit(seps, np.log(est), 1)
    assert slope < 0


@given(st.floats(0, 2), st.floats(0.1, 5), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 10),
       st.floats(0.01, 50), st.floats(0.01, 50), st.floats(0, 100), st.floats(0, 100))
def test_edd_bound_nonincreasing_in_distance(t0, t1, t2, t3, t4, da, db, x, y):
    p = EDDParams(t0, t1, t2, t3, t4)
    lo, hi = sorted((x, y))
    a1, v1 = edd_bound(p, da, db, lo)
    a2, v2 = edd_bound(p, da, db, hi)
    if a1:
        assert a2 and v2 <= v1
    ab, ba = edd_bound(p, da, db, hi), edd_bound(p, db, da, hi)
    assert ab[0] == ba[0] and (ab[1] == ba[1] or math.isnan(ab[1]) and math.isnan(ba[1]))
