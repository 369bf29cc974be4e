from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypblend.errors import HypothesisFails, InvalidModel, PreconditionFailed, UnsupportedDimension
from hypblend.horseshoe import (
    StandardAffineHorseshoe,
    blender_entropy_hypothesis,
    blender_model,
    disjoint_model,
    essential_center_test,
    integrable_model,
    lyapunov_spectrum,
    periodic_point,
    plaque_hit_bound_check,
    point_from_itinerary,
    reverse_doubling_search,
    smale_model,
    unstable_ball_mass,
    unstable_point,
    validate,
)

# diag(4, 2, 1/3) with n branches; only the spectrum and the branch count matter here
SIX = [(0, 0, 0), (-1, 0, 0.1), (-2, 0, 0.2), (-3, 0, 0.3), (-1, -1, 0.4), (-2, -1, 0.5)]


def diag421_model(n):
    return StandardAffineHorseshoe(1, 1, 1, [4.0, 2.0, 1.0 / 3.0], SIX[:n])


def test_smale_valid():
    h = smale_model()
    rep = validate(h)
    assert rep["ok"]
    lo, hi = h.unstable_boxes()
    assert lo[:, 0].tolist() == [0.0, 0.75] and hi[:, 0].tolist() == [0.25, 1.0]
    assert rep["unstable_gap"] == 0.5


def test_overlap_rejected():
    h = StandardAffineHorseshoe(1, 0, 1, [4.0, 0.25], [[0.0, 0.0], [-0.5, 0.75]])
    with pytest.raises(InvalidModel) as info:
        validate(h)
    assert info.value.details["clause"] == "disjointness"


def test_unit_expansion_rejected():
    h = StandardAffineHorseshoe(1, 0, 1, [1.0, 0.25], [[0.0, 0.0]])
    with pytest.raises(InvalidModel) as info:
        validate(h)
    assert info.value.details["clause"] == "contraction"


def test_reference_models_valid():
    for h in (blender_model(), disjoint_model(), integrable_model()):
        assert validate(h)["ok"]


def test_constant_itinerary_fixed_point():
    pt, bound = point_from_itinerary(smale_model(), [0] * 21, 10)
    assert np.abs(pt).max() <= bound


def test_smale_half_itinerary_long_iteration():
    h = smale_model()
    W = 10
    pt, bound = point_from_itinerary(h, [0] * W + [1] * (W + 1), W)
    # oracle: 10^4 inverse unstable steps of branch 1, forward stable steps of branch 0
    x, y = 0.5, 0.5
    for _ in range(10_000):
        x = (x + 3.0) / 4.0
        y = y / 4.0
    assert abs(pt[0] - x) <= bound and abs(pt[1] - y) <= bound


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=41, max_size=41))
def test_itinerary_conjugacy_and_refinement(syms):
    h = smale_model()
    W = 20
    pt, bound = point_from_itinerary(h, syms, W)
    # f(point(w)) against point(shift w); the shifted window is centered on old time 1
    img = h.branch_map(syms[W], pt)
    shifted, b2 = point_from_itinerary(h, syms[2:], W - 1)
    assert np.abs(img - shifted).max() <= 2 * max(bound, b2)
    wide, _ = point_from_itinerary(h, [0] * 5 + syms + [1] * 5, W + 5)
    assert np.abs(wide - pt).max() <= bound


def test_spectrum_diag421():
    sp = lyapunov_spectrum(diag421_model(6))
    assert np.allclose(sorted(sp["exponents"]), sorted([math.log(4), math.log(2), -math.log(3)]), atol=1e-15)
    assert abs(sp["chi_u_inf"] - math.log(2)) < 1e-15
    assert abs(sp["log_jac_u"] - math.log(8)) < 1e-15


def test_spectrum_e():
    h = StandardAffineHorseshoe(1, 0, 1, [math.e, 1 / math.e], [[0.0, 0.0]])
    assert np.allclose(sorted(lyapunov_spectrum(h)["exponents"]), [-1.0, 1.0], atol=1e-15)


def test_identity_not_hyperbolic():
    with pytest.raises(InvalidModel):
        lyapunov_spectrum(StandardAffineHorseshoe(1, 0, 1, [1.0, 1.0], [[0.0, 0.0]]))


def test_hypothesis_six_branches():
    rep = blender_entropy_hypothesis(diag421_model(6), 1)
    oracle = math.log(6) - (math.log(8) - 0.5 * math.log(2))
    assert abs(rep["entropy_margin"] - oracle) < 1e-12
    assert abs(rep["entropy_margin"] - 0.059) < 5e-4
    lo, hi = rep["c_interval"]
    assert abs(hi - 0.5) < 1e-15
    assert abs(lo - 2 * (math.log(8) - math.log(6)) / math.log(4)) < 1e-12
    assert 0 < rep["c"] < 1
    assert rep["c_rate_ok"] and rep["c_rate_margin"] > 0
    assert rep["c_entropy_ok"] and rep["c_entropy_margin"] > 0


def test_hypothesis_five_branches_fails():
    with pytest.raises(HypothesisFails) as info:
        blender_entropy_hypothesis(diag421_model(5), 1)
    oracle = math.log(5) - (math.log(8) - 0.5 * math.log(2))
    assert abs(info.value.details["margin"] - oracle) < 1e-12
    assert abs(oracle + 0.124) < 1e-3  # the quoted value is rounded; the exact margin is -0.12343


def test_hypothesis_large_k_fails():
    # the threshold tends to log 8 > log 6
    with pytest.raises(HypothesisFails):
        blender_entropy_hypothesis(diag421_model(6), 1000)


@given(st.integers(1, 6), st.integers(1, 5))
def test_hypothesis_monotone_in_branches(n, k):
    a = blender_entropy_hypothesis(diag421_model(n), k, raise_on_fail=False)
    if a["entropy_ok"] and n < 6:
        assert blender_entropy_hypothesis(diag421_model(n + 1), k, raise_on_fail=False)["entropy_ok"]


def brute_plaque_count(h, n):
    """Max multiplicity of the closed n-fold center images, checked at every image endpoint."""
    rate = 1.0 / h.diag[h.d_uu]
    t = h.center_translations()[:, 0]
    los = []
    for word in itertools.product(range(h.n_branches), repeat=n):
        lo = 0.0
        for j in word:
            lo = rate * lo + t[j]
        los.append(lo)
    side = rate**n
    pts = los + [lo + side for lo in los]
    return max(sum(1 for lo in los if lo - 1e-12 <= p <= lo + side + 1e-12) for p in pts)


def test_plaque_overlapping_beta_two():
    h = StandardAffineHorseshoe(1, 1, 1, [2.0, 1.5, 1 / 3], [[0.0, 0.0, 0.0], [-1.0, -0.5, 0.6]])
    rep = plaque_hit_bound_check(h, 3)
    assert rep["compositions"] == 8 and rep["bound"] == 8
    assert rep["max_count"] == brute_plaque_count(h, 3) <= 8


def test_plaque_disjoint_and_depth_zero():
    assert plaque_hit_bound_check(disjoint_model(), 4)["max_count"] == 1
    assert plaque_hit_bound_check(blender_model(), 0)["max_count"] == 1


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_plaque_matches_brute_force(n):
    h = blender_model()
    assert plaque_hit_bound_check(h, n)["max_count"] == brute_plaque_count(h, n)


def test_essential_cases():
    assert essential_center_test(integrable_model()) == {"verdict": "JointlyIntegrable", "diameter": 0.0}
    rep = essential_center_test(blender_model())
    assert rep["verdict"] == "Essential" and abs(rep["diameter"] - 1.0) < 1e-15
    single = StandardAffineHorseshoe(1, 1, 1, [3.0, 1.5, 1 / 3], [[-0.2, -0.5, 0.05]])
    assert essential_center_test(single)["diameter"] == 0.0
    with pytest.raises(UnsupportedDimension):
        essential_center_test(smale_model())


def test_ball_mass_examples():
    h = smale_model()
    assert unstable_ball_mass(h, np.array([0.5]), 1.0) == (1.0, 1.0)
    lo, hi = unstable_ball_mass(h, np.array([0.0]), 0.3)
    assert lo <= 0.5 <= hi
    assert unstable_ball_mass(h, np.array([0.0]), 0.0) == (0.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=30, max_size=30),
       st.floats(1e-3, 0.5), st.floats(1e-3, 0.5))
def test_ball_mass_monotone(future, r1, r2):
    h = blender_model()
    x = unstable_point(h, future)
    r1, r2 = sorted((r1, r2))
    assert unstable_ball_mass(h, x, r1)[0] <= unstable_ball_mass(h, x, r2)[1] + 1e-15


@pytest.mark.parametrize("j", [0, 1])
def test_ball_mass_self_similar(j):
    h = smale_model()
    lo_box, hi_box = h.unstable_boxes()
    center = 0.5 * (lo_box[j] + hi_box[j])
    lo, hi = unstable_ball_mass(h, center, 0.125 + 1e-9)
    assert lo - 1e-3 <= h.weights[j] <= hi + 1e-3


def test_reverse_doubling_golden():
    rep = reverse_doubling_search(blender_model(), [0.1, 0.05], [1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64])
    assert rep["certified"]
    assert (rep["rho"], rep["eta"]) == (0.1, 0.25)


def test_reverse_doubling_integrable_rejected():
    with pytest.raises(PreconditionFailed):
        reverse_doubling_search(integrable_model(), [0.1], [0.25])


def test_reverse_doubling_eta_near_one_fails():
    rep = reverse_doubling_search(blender_model(), [0.1], [0.99])
    assert not rep["certified"] and rep["violation"] > 0


def test_periodic_point_is_periodic():
    h = blender_model()
    word = (0, 1, 1, 0)
    p = periodic_point(h, word)
    q = p
    for j in word:
        q = h.branch_map(j, q)
    assert np.abs(p - q).max() <= 1e-12


def test_json_roundtrip():
    h = blender_model()
    g = StandardAffineHorseshoe.from_json(h.to_json())
    assert np.array_equal(g.diag, h.diag) and np.array_equal(g.branches, h.branches)
    with pytest.raises(InvalidModel):
        StandardAffineHorseshoe.from_json({"d_uu": 1})
