from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypblend.errors import HypothesisViolated, UnsupportedDimension
from hypblend.horseshoe import StandardAffineHorseshoe, blender_model, smale_model
from hypblend.ifs import (
    CenterIfs,
    GridSet,
    claim_parameters,
    composite_translations,
    coverage_claim_bruteforce,
    extract_center_ifs,
    perturb_and_verify,
    plaque_count_max,
    recurrent_compact_check,
    sample_family,
    search_recurrent_compact,
    suffix_indices,
)

OVERLAP = CenterIfs(2 / 3, [[-1 / 6], [1 / 6]])
DISJOINT = CenterIfs(1 / 3, [[-1 / 3], [1 / 3]])
CONSISTENT = CenterIfs(0.5, np.concatenate([[0.0], np.linspace(-0.2, 0.2, 6)])[:, None])


def test_extract_blender_center():
    ifs = extract_center_ifs(blender_model())
    assert np.allclose(ifs.L, [2 / 3], atol=1e-15)
    assert np.allclose(sorted(ifs.translations[:, 0]), [-1 / 6, 1 / 6], atol=1e-15)
    # the images touch the boundary of B: [-1/2, 1/6] and [-1/6, 1/2]
    assert abs(ifs.slack()) < 1e-15


def test_extract_needs_center():
    with pytest.raises(UnsupportedDimension):
        extract_center_ifs(smale_model())


def test_extract_single_branch():
    h = StandardAffineHorseshoe(1, 1, 1, [3.0, 1.5, 1 / 3], [[-0.2, -0.25, 0.05]])
    ifs = extract_center_ifs(h)
    assert ifs.n_maps == 1
    # attractor is the fixed point t / (1 - L)
    fixed = ifs.translations[0, 0] / (1 - ifs.L[0])
    assert abs(ifs.apply(0, [fixed])[0] - fixed) < 1e-15


def test_overlap_interval_certified():
    K = GridSet.from_box([-0.4], [0.4], 1000)
    rep = recurrent_compact_check(OVERLAP, K)
    assert rep["certified"]
    # hand check at representative cells: the left end is pulled in by the left map
    cells = np.argwhere(K.mask)[:, 0]
    assert rep["witness"][0] == 0 and rep["witness"][-1] == 1
    mid = int(np.searchsorted(cells, 500))
    assert rep["witness"][mid] in (0, 1)


def test_disjoint_interval_rejected():
    rep = recurrent_compact_check(DISJOINT, GridSet.from_box([-0.4], [0.4], 1000))
    assert not rep["certified"]
    assert rep["uncovered"] > 0
    # the cell at the origin lies in neither image
    bad = {tuple(c) for c in rep["uncovered_cells"].tolist()}
    assert (500,) in bad or (499,) in bad


def test_empty_rejected():
    assert recurrent_compact_check(OVERLAP, GridSet.empty(100)) == {"certified": False, "reason": "empty"}


def exact_recurrent(ifs, K):
    """Independent check in rational arithmetic: each closed cell has a branch whose
    preimage lies in the union of closed cells that are interior (both neighbours occupied)."""
    res = K.resolution
    occ = set(np.flatnonzero(K.mask).tolist())
    inner = {i for i in occ if i - 1 in occ and i + 1 in occ}
    L = Fraction(ifs.L[0]).limit_denominator(10**6)
    ts = [Fraction(t).limit_denominator(10**6) for t in ifs.translations[:, 0]]
    for i in occ:
        lo, hi = Fraction(i, res) - Fraction(1, 2), Fraction(i + 1, res) - Fraction(1, 2)
        ok = False
        for t in ts:
            plo, phi = (lo - t) / L, (hi - t) / L
            a = (plo + Fraction(1, 2)) * res
            b = (phi + Fraction(1, 2)) * res
            first, last = int(a // 1), int(-((-b) // 1)) - 1
            if all(k in inner for k in range(first, last + 1)):
                ok = True
                break
        if not ok:
            return False
    return True


@pytest.mark.parametrize("res", [1000, 2000, 4000])
def test_search_overlap_and_disjoint(res):
    found = search_recurrent_compact(OVERLAP, res)
    assert found["found"]
    assert found["set"].contains_box([-0.35], [0.35])
    assert recurrent_compact_check(OVERLAP, found["set"])["certified"]
    assert not search_recurrent_compact(DISJOINT, res)["found"]


def test_search_agrees_with_exact_oracle():
    found = search_recurrent_compact(OVERLAP, 200)
    assert exact_recurrent(OVERLAP, found["set"])


def test_refinement_monotone():
    K = GridSet.from_box([-0.4], [0.4], 1000)
    for f in (1, 2, 4):
        assert recurrent_compact_check(OVERLAP, K.refine(f))["certified"]


def test_thin_overlap_resolution_sweep():
    # images [-1/2, 0.005] and [-0.005, 1/2] overlap by 0.01, below the coarse cell widths
    ifs = CenterIfs(0.505, [[-0.2475], [0.2475]])
    found = [search_recurrent_compact(ifs, r)["found"] for r in (10, 50, 200, 1000, 4000)]
    assert found == [False, False, False, True, True]


def test_thin_gap_never_found():
    ifs = CenterIfs(0.499, [[-0.2505], [0.2505]])
    assert not any(search_recurrent_compact(ifs, r)["found"] for r in (50, 1000, 4000))


def test_gridset_text_roundtrip():
    K = GridSet.from_box([-0.1, -0.2], [0.3, 0.1], 40)
    assert np.array_equal(GridSet.from_text(K.to_text()).mask, K.mask)
    with pytest.raises(ValueError):
        GridSet.from_text("grid 4 1\n4\n")


def test_composite_translations_match_direct_composition():
    T, words = composite_translations(CONSISTENT, 3)
    for t, w in zip(T, words):
        z = np.zeros(1)
        for j in w:
            z = CONSISTENT.apply(int(j), z)
        assert abs(CONSISTENT.apply(0, z)[0] - t[0]) < 1e-15


def brute_claim_measure(ifs, n, threshold_count, grid=20000):
    """Midpoint quadrature of the multiplicity function; the images are intervals."""
    T, _ = composite_translations(ifs, n)
    lam = ifs.L[0] ** (n + 1)
    xs = -0.5 + (np.arange(grid) + 0.5) / grid
    counts = ((xs[:, None] >= T[None, :, 0] - lam / 2) & (xs[:, None] <= T[None, :, 0] + lam / 2)).sum(axis=1)
    return float((counts >= threshold_count).mean())


def test_claim_criterion_instance_measure():
    ifs = CenterIfs(0.5, [[0.0], [-0.2], [0.0], [0.2]])
    rep = coverage_claim_bruteforce(ifs, 2, beta=1.0)
    assert rep["images"] == 9
    assert rep["alpha_n"] == 9 / 16 and rep["threshold_count"] == 1
    assert abs(rep["measure_A"] - brute_claim_measure(ifs, 2, 1)) < 1e-3
    # A sits inside L_0(B), of length J
    assert rep["measure_A"] <= ifs.J
    assert rep["max_overlap"] == 5


def test_claim_single_branch():
    ifs = CenterIfs(0.5, [[0.0], [0.1]])
    for n in range(4):
        rep = coverage_claim_bruteforce(ifs, n, beta=1.0)
        assert abs(rep["measure_A"] - 0.5 ** (n + 1)) < 1e-15
        assert rep["measure_A"] >= rep["alpha_n"]


def test_claim_depth_zero():
    ifs = CenterIfs(0.5, [[0.1], [0.2]])
    rep = coverage_claim_bruteforce(ifs, 0)
    assert rep["A"] == [(-0.15, 0.35)]
    assert rep["measure_A"] >= 0.5 * ifs.J


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_claim_holds_on_consistent_instance(n):
    rep = coverage_claim_bruteforce(CONSISTENT, n, beta=6.0)
    assert rep["claim_ok"]
    assert abs(rep["measure_A"] - brute_claim_measure(CONSISTENT, n, rep["threshold_count"])) < 2e-3
    assert plaque_count_max(CONSISTENT, n) <= 6**n


def test_claim_parameters_formula():
    p = claim_parameters(0.5, 3, 2, 1.0)
    assert p["alpha_n"] == 9 / 16 and p["threshold"] == 9 / 16 and p["threshold_count"] == 1


def test_plaque_count_brute_force():
    ifs = CenterIfs(0.5, [[0.0], [-0.2], [0.0], [0.2]])
    lam = 0.25
    ivs = []
    for w in itertools.product([1, 2, 3], repeat=2):
        z = 0.0
        for j in w:
            z = 0.5 * z + ifs.translations[j, 0]
        ivs.append((z - lam / 2, z + lam / 2))
    pts = [a for a, _ in ivs] + [b for _, b in ivs]
    brute = max(sum(1 for a, b in ivs if a - 1e-12 <= p <= b + 1e-12) for p in pts)
    assert plaque_count_max(ifs, 2) == brute == 5


def test_suffix_keying():
    fam = sample_family(CONSISTENT, 4, 0.5, 6.0, seed=0, trial=0)
    assert fam.m == 3
    _, words = composite_translations(CONSISTENT, 4)
    idx = suffix_indices(words, 6, fam.m)
    for a in range(0, len(words), 97):
        for b in range(0, len(words), 89):
            if tuple(words[a, -3:]) == tuple(words[b, -3:]):
                assert idx[a] == idx[b]
                assert np.array_equal(fam.shift(idx[a]), fam.shift(idx[b]))


def test_hypothesis_violation():
    with pytest.raises(HypothesisViolated):
        perturb_and_verify(CenterIfs(0.5, [[0.0], [0.1]]), 2, 0.5, 1.0, trials=1)


def test_single_branch_reports_no_success():
    # beta < 1 is the only way to meet the hypothesis with H = 1
    rep = perturb_and_verify(CenterIfs(0.5, [[0.0], [0.1]]), 3, 0.5, 0.3, trials=10, seed=0)
    assert rep["success_count"] == 0


def test_successes_are_certified():
    rep = perturb_and_verify(CONSISTENT, 4, 0.9, 6.0, trials=25, seed=0)
    assert rep["plaque_count"]["ok"] and rep["claim"]["claim_ok"]
    assert rep["success_count"] >= 20
    assert rep["certified_count"] == rep["success_count"]
    fam, K = rep["first_witness"]
    from hypblend.ifs import perturbed_ifs
    assert recurrent_compact_check(perturbed_ifs(CONSISTENT, fam), K)["certified"]


def test_perturb_deterministic():
    a = perturb_and_verify(CONSISTENT, 3, 0.9, 6.0, trials=5, seed=11)
    b = perturb_and_verify(CONSISTENT, 3, 0.9, 6.0, trials=5, seed=11)
    assert a["per_trial"] == b["per_trial"]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 0.95), st.floats(0.0, 0.3))
def test_search_output_always_certified(L, t):
    ifs = CenterIfs(L, [[-t], [t]])
    out = search_recurrent_compact(ifs, 300)
    if out["found"]:
        assert recurrent_compact_check(ifs, out["set"])["certified"]
        assert exact_recurrent(ifs, out["set"])


def test_erode_counts_cells():
    K = GridSet.from_box([-0.4], [0.4], 10)
    assert K.erode(0).count() == K.count() == 8
    assert K.erode(1).count() == 6 and K.erode(4).is_empty()
