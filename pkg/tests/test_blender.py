from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypblend.blender import (
    LipschitzGraph,
    TransversalRecurrentSet,
    blender_graph_test,
    build_transversal_recurrent_set,
    monte_carlo_blender,
    project_lipschitz,
    random_graph,
    recertify,
    robustness_probe,
    transversal_recurrence_check,
)
from hypblend.errors import NotCertified, PreconditionFailed
from hypblend.horseshoe import StandardAffineHorseshoe, blender_model, disjoint_model
from hypblend.ifs import GridSet, extract_center_ifs, search_recurrent_compact


@pytest.fixture(scope="module")
def certified_center():
    return GridSet.from_box([-0.4], [0.4], 1000)


def forward_orbit_stays(h, point, itinerary):
    """Float forward iteration: every iterate in the closed rectangle of its branch."""
    lo, hi = h.unstable_boxes()
    x = np.asarray(point, dtype=float)
    for j in itinerary:
        if not ((x[: h.d_u] >= lo[j] - 1e-9).all() and (x[: h.d_u] <= hi[j] + 1e-9).all()):
            return False
        if not ((x[h.d_u:] >= -1e-9).all() and (x[h.d_u:] <= 1 + 1e-9).all()):
            return False
        x = h.branch_map(j, x)
    return True


def test_constant_graph_intersects():
    h = blender_model()
    res = blender_graph_test(h, LipschitzGraph.constant([0.0, 0.0]))
    assert res["verdict"] == "Intersects"
    assert len(res["itinerary"]) == 60
    assert recertify(h, LipschitzGraph.constant([0.0, 0.0]), res["itinerary"])["ok"]
    assert forward_orbit_stays(h, res["point"], res["itinerary"][:20])


def test_disjoint_gap_graph_escapes():
    res = blender_graph_test(disjoint_model(), LipschitzGraph.constant([0.0, 0.0]))
    assert res == {"verdict": "Escapes", "exit_time": 1, "depth": 0}


def test_graph_outside_chart():
    with pytest.raises(PreconditionFailed):
        blender_graph_test(blender_model(), LipschitzGraph.constant([1.2, 0.0]))


def test_monte_carlo_blender_all_intersect():
    rep = monte_carlo_blender(blender_model(), 200, seed=0)
    assert rep["intersect_count"] == 200
    assert rep["recertified"] == 200
    assert rep["escape_witnesses"] == [] and rep["inconclusive"] == 0
    assert rep["max_lipschitz"] <= 1.0


def test_monte_carlo_empty():
    rep = monte_carlo_blender(blender_model(), 0)
    assert rep["graphs"] == 0 and rep["intersect_count"] == 0


def test_non_blender_gap_family_escapes():
    h = disjoint_model()
    # graphs whose center value sits in the gap (1/3, 2/3) of the center images: theta_c in (-1.1, 1.1)
    escapes = 0
    for v in np.linspace(-0.9, 0.9, 7):
        res = blender_graph_test(h, LipschitzGraph.constant([v, 0.1]))
        escapes += res["verdict"] == "Escapes"
    assert escapes >= 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.95, 0.95), min_size=2, max_size=40))
def test_projection_certificate(vals):
    nodes = np.linspace(-1, 1, len(vals))
    out = project_lipschitz(np.array(vals)[:, None], nodes)
    g = LipschitzGraph(nodes, out)
    assert g.lipschitz <= 1.0
    assert (np.abs(out) < 1).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_graph_intersections_recertify(seed):
    h = blender_model()
    g = random_graph(np.random.default_rng(seed), 2)
    res = blender_graph_test(h, g)
    assert res["verdict"] == "Intersects"
    assert recertify(h, g, res["itinerary"])["ok"]


def test_search_set_is_certified_product():
    h = blender_model()
    Kc = search_recurrent_compact(extract_center_ifs(h), 1000)["set"]
    assert transversal_recurrence_check(h, build_transversal_recurrent_set(h, Kc))["certified"]


def test_build_product(certified_center):
    h = blender_model()
    K = build_transversal_recurrent_set(h, certified_center)
    assert K.stable_lo.shape == (2, 1)
    lo, hi = h.stable_boxes()
    assert np.array_equal(K.stable_lo, lo) and np.array_equal(K.stable_hi, hi)


def test_build_uncertified():
    with pytest.raises(NotCertified):
        build_transversal_recurrent_set(disjoint_model(), GridSet.from_box([-0.4], [0.4], 1000))


def test_build_no_stable_direction():
    h = StandardAffineHorseshoe(1, 1, 0, [3.0, 1.5], [[-0.2, 0.0], [-1.9, -0.5]])
    Kc = search_recurrent_compact(extract_center_ifs(h), 500)["set"]
    K = build_transversal_recurrent_set(h, Kc)
    assert K.stable_lo.shape == (2, 0)
    assert transversal_recurrence_check(h, K)["certified"]


def test_transversal_certified_n_one(certified_center):
    h = blender_model()
    rep = transversal_recurrence_check(h, build_transversal_recurrent_set(h, certified_center))
    assert rep["certified"] and rep["max_n"] == 1


def test_transversal_shrunk_rejected():
    h = blender_model()
    K = TransversalRecurrentSet(GridSet.from_box([-0.2], [0.2], 1000), *h.stable_boxes())
    rep = transversal_recurrence_check(h, K, n_max=1)
    assert not rep["certified"] and rep["reason"] == "uncovered cell"
    lo, hi = rep["cell_box"]
    # neither center preimage of the witness cell fits in the interior, which is
    # [-0.2, 0.2] with one boundary cell of width 1e-3 removed on each side
    ifs = extract_center_ifs(h)
    for t in ifs.translations[:, 0]:
        plo, phi = (lo[0] - t) / ifs.L[0], (hi[0] - t) / ifs.L[0]
        assert plo < -0.199 + 1e-12 or phi > 0.199 - 1e-12


def test_transversal_n_max_zero(certified_center):
    h = blender_model()
    K = TransversalRecurrentSet(certified_center, *h.stable_boxes())
    assert not transversal_recurrence_check(h, K, n_max=0)["certified"]


def test_robustness(certified_center):
    h = blender_model()
    K = build_transversal_recurrent_set(h, certified_center)
    rep = robustness_probe(h, K, perturbations=20, delta=1e-3, seed=0)
    assert rep["certified"] == 20 and rep["all_certified"]
