from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypblend.errors import AdmissibilityViolated, GapTooLarge, NotHyperbolic
from hypblend.horseshoe import periodic_point, point_from_itinerary, smale_model
from hypblend.shadowing import (
    HyperbolicSequence,
    PseudoOrbit,
    admissibility_bound,
    concatenate_segments,
    orbit_residual,
    shadow_affine,
    shadow_nonlinear,
    uniqueness_decay_check,
)


def dense_oracle(seq, e):
    """Solve all equations u_{i+1} - L_i u_i = e_i plus the two end clamps as one linear system."""
    steps, du, ds = seq.steps, seq.du, seq.ds
    d = du + ds
    n = (steps + 1) * d
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    row = 0
    for i in range(steps):
        L = seq.linear(i)
        M[row:row + d, (i + 1) * d:(i + 2) * d] = np.eye(d)
        M[row:row + d, i * d:(i + 1) * d] = -L
        rhs[row:row + d] = e[i]
        row += d
    for k in range(ds):
        M[row, du + k] = 1.0
        row += 1
    for k in range(du):
        M[row, steps * d + k] = 1.0
        row += 1
    return np.linalg.solve(M, rhs).reshape(steps + 1, d)


def random_block(rng, dim, norm):
    """Random matrix with infinity norm exactly ``norm``."""
    m = rng.normal(size=(dim, dim))
    return m * (norm / np.abs(m).sum(axis=1).max())


def random_instance(rng, kappa, steps=60, du=2, ds=2, eps=0.1):
    q = math.exp(-kappa)
    lus, lss = [], []
    for _ in range(steps):
        while True:
            lu = rng.normal(size=(du, du)) + 3 * np.eye(du)
            inv = np.linalg.inv(lu)
            if np.abs(inv).sum(axis=1).max() > 0:
                break
        lus.append(lu * (np.abs(inv).sum(axis=1).max() / q))
        lss.append(random_block(rng, ds, q))
    # bounded pseudo-orbit points; offsets are chosen so the jumps have sup-norm <= eps
    x = rng.uniform(-1, 1, size=(steps + 1, du + ds))
    jumps = rng.uniform(-eps, eps, size=(steps, du + ds))
    probe = HyperbolicSequence(0, lus, lss, [np.zeros(du + ds)] * steps)
    offsets = [x[i + 1] - probe.linear(i) @ x[i] - jumps[i] for i in range(steps)]
    seq = HyperbolicSequence(-(steps // 2), lus, lss, offsets)
    return seq, PseudoOrbit(seq.n_min, x)


@pytest.mark.parametrize("kappa", [math.log(2), 1.0, 3.0])
def test_random_affine_instances(kappa):
    rng = np.random.default_rng(17)
    for _ in range(100):
        seq, pseudo = random_instance(rng, kappa)
        assert seq.kappa >= kappa - 1e-12
        orb = shadow_affine(seq, pseudo)
        assert orbit_residual(seq, orb.points) <= 1e-12 * max(1.0, np.abs(orb.points).max())
        eps = pseudo.epsilon(seq)
        assert orb.deviation <= seq.theta * eps + 1e-12
        oracle = dense_oracle(seq, pseudo.jumps(seq))
        assert np.abs((pseudo.points - orb.points) - oracle).max() <= 1e-10


def test_zero_jumps():
    seq = HyperbolicSequence.constant(0, 10, [[2.0]], [[0.5]], offset=[0.0, 0.0])
    pts = np.zeros((11, 2))
    orb = shadow_affine(seq, PseudoOrbit(0, pts))
    assert orb.deviation == 0.0
    assert np.array_equal(orb.points, pts)


def test_single_jump_closed_form():
    steps = 40
    offsets = [np.zeros(2) for _ in range(steps)]
    offsets[20] = np.array([1.0, 1.0])  # step from time 0 to time 1
    seq = HyperbolicSequence(-20, [[[2.0]]] * steps, [[[0.5]]] * steps, offsets)
    pseudo = PseudoOrbit(-20, np.zeros((steps + 1, 2)))
    assert np.array_equal(pseudo.jumps(seq)[20], [-1.0, -1.0])
    orb = shadow_affine(seq, pseudo)
    u = pseudo.points - orb.points
    assert np.array_equal(u[19], [0.25, 0.0])
    assert np.array_equal(u[20], [0.5, 0.0])
    assert np.array_equal(u[21], [0.0, -1.0])
    assert np.array_equal(u[22], [0.0, -0.5])


def test_not_hyperbolic():
    seq = HyperbolicSequence.constant(0, 5, [[1.0]], [[0.5]])
    with pytest.raises(NotHyperbolic):
        shadow_affine(seq, PseudoOrbit(0, np.zeros((6, 2))))


def quadratic_sequence(scale, steps=40):
    seq = HyperbolicSequence.constant(0, steps, [[2.0]], [[0.5]], offset=[0.1, -0.2])
    seq.remainders = [lambda x: scale * x**2] * steps
    seq.eta = 2 * scale  # |d/dx (s x^2)| = 2 s |x| on the unit box
    return seq


def test_nonlinear_zero_remainder_matches_affine():
    rng = np.random.default_rng(3)
    seq, pseudo = random_instance(rng, math.log(2), steps=30, du=1, ds=1)
    a = shadow_affine(seq, pseudo)
    seq.remainders = [lambda x: np.zeros_like(x)] * seq.steps
    b = shadow_nonlinear(seq, pseudo)
    assert np.abs(a.points - b.points).max() <= 1e-12


def test_nonlinear_quadratic():
    seq = quadratic_sequence(1e-3)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.5, 0.5, size=(seq.steps + 1, 2))
    orb = shadow_nonlinear(seq, PseudoOrbit(0, pts), tol=1e-10)
    assert orb.iterations <= 10
    res = max(np.abs(seq.linear(i) @ orb.points[i] + seq.offsets[i] + 1e-3 * orb.points[i] ** 2
                     - orb.points[i + 1]).max() for i in range(seq.steps))
    assert res <= 1e-10


def test_nonlinear_inadmissible():
    seq = quadratic_sequence(1.0)
    assert seq.eta >= admissibility_bound(seq.kappa)
    with pytest.raises(AdmissibilityViolated):
        shadow_nonlinear(seq, PseudoOrbit(0, np.zeros((seq.steps + 1, 2))))


def test_decay_identical_orbits():
    seq = HyperbolicSequence.constant(0, 10, [[2.0]], [[0.5]])
    orb = np.zeros((11, 2))
    rep = uniqueness_decay_check(seq, orb, orb, 0, 10)
    assert rep.ok and np.all(rep.margins == 0)


def test_decay_two_clamps_positive_interior_margin():
    steps = 40
    offsets = [np.zeros(2) for _ in range(steps)]
    offsets[20] = np.array([1.0, 1.0])
    seq = HyperbolicSequence(-20, [[[2.0]]] * steps, [[[0.5]]] * steps, offsets)
    pseudo = PseudoOrbit(-20, np.zeros((steps + 1, 2)))
    a = shadow_affine(seq, pseudo).points
    # a second orbit with different end data: push the stable start and unstable end
    b = a.copy()
    b[0, 1] += 0.3
    for i in range(steps):
        b[i + 1, 1] = seq.apply(i, b[i])[1]
    b[steps, 0] += 0.3
    for i in range(steps - 1, -1, -1):
        b[i, 0] = (b[i + 1, 0] - seq.offsets[i][0]) / 2.0
    rep = uniqueness_decay_check(seq, a, b, -20, 20)
    assert rep.ok
    assert (rep.margins[1:-1] > 0).all()


def test_decay_rejects_non_hyperbolic():
    seq = HyperbolicSequence.constant(0, 4, [[1.0]], [[1.0]])
    with pytest.raises(NotHyperbolic):
        uniqueness_decay_check(seq, np.zeros((5, 2)), np.zeros((5, 2)), 0, 4)


def random_orbit_pair(rng, kappa, steps):
    seq, pseudo = random_instance(rng, kappa, steps=steps)
    a = shadow_affine(seq, pseudo).points
    du = seq.du
    w = np.zeros_like(a)
    w[0, du:] = rng.normal(size=seq.ds)
    w[-1, :du] = rng.normal(size=du)
    for i in range(steps):
        w[i + 1, du:] = seq.linear_s[i] @ w[i, du:]
    for i in range(steps - 1, -1, -1):
        w[i, :du] = np.linalg.solve(seq.linear_u[i], w[i + 1, :du])
    return seq, a, a + w


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([math.log(2), 1.0, 3.0]), st.integers(5, 50))
def test_decay_property(seed, kappa, steps):
    rng = np.random.default_rng(seed)
    seq, a, b = random_orbit_pair(rng, kappa, steps)
    lo = seq.n_min + int(rng.integers(0, steps // 2))
    hi = seq.n_max - int(rng.integers(0, steps // 2))
    assert uniqueness_decay_check(seq, a, b, lo, hi).ok


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([math.log(2), 1.0, 3.0]), st.integers(1, 80))
def test_shadow_property(seed, kappa, steps):
    rng = np.random.default_rng(seed)
    seq, pseudo = random_instance(rng, kappa, steps=steps, du=1, ds=2)
    orb = shadow_affine(seq, pseudo)
    again = shadow_affine(seq, PseudoOrbit(seq.n_min, pseudo.points.copy()))
    assert np.abs(orb.points - again.points).max() <= 1e-11
    assert orb.deviation <= seq.theta * pseudo.epsilon(seq) + 1e-12
    oracle = dense_oracle(seq, pseudo.jumps(seq))
    assert np.abs((pseudo.points - orb.points) - oracle).max() <= 1e-10


def test_concatenate_single_word_is_periodic_point():
    h = smale_model()
    word = (0, 1, 1)
    res = concatenate_segments(h, [word], [0] * 8)
    assert res.max_gap <= 1e-12
    W = 12
    symbols = [word[(t - 0) % 3] for t in range(-W, W + 1)]
    pt, bound = point_from_itinerary(h, symbols, W)
    assert np.abs(res.coded_point - pt).max() <= bound + 1e-12
    assert np.abs(res.coded_point - periodic_point(h, word)).max() <= 1e-12


def test_concatenate_read_back_smale():
    h = smale_model()
    words = [(0, 0), (0, 1)]
    code = [0, 1, 1, 0, 1, 0]
    res = concatenate_segments(h, words, code)
    lo, hi = h.unstable_boxes()
    read = []
    for x in res.orbit.points[:-1]:
        # nearest unstable box, by distance from the interval
        dist = np.maximum(lo[:, 0] - x[0], 0) + np.maximum(x[0] - hi[:, 0], 0)
        read.append(int(np.argmin(dist)))
    assert tuple(read) == res.itinerary
    assert res.itinerary == tuple(j for c in code for j in words[c])


def test_concatenate_gap_too_large():
    with pytest.raises(GapTooLarge):
        concatenate_segments(smale_model(), [(0, 0), (1, 1)], [0, 1, 0], gap_bound=0.01)
