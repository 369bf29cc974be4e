"""Covering a finite subset of the circle R/Z by equal open arcs.

Given d points and a in (0, 1/2), produce arcs of a common length kappa
in [d^(-2d) (a/2)^d, a/2] that cover the points and leave complementary
gaps longer than kappa / a.  The construction is recursive: when points
are well spread each gets its own arc, otherwise short gaps are collapsed,
the quotient circle is rescaled and handled with a smaller parameter, and
the result is pulled back and enlarged.

Everything is exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import PostconditionViolated

FLOAT_GRID = 2**53


def rationalize(x) -> Fraction:
    """Exact for ints/Fractions/strings; floats are rounded to the 2^-53 grid."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(round(float(x) * FLOAT_GRID), FLOAT_GRID)


@dataclass(frozen=True)
class CircleCover:
    kappa: Fraction
    starts: tuple  # arc i is the open arc (starts[i], starts[i] + kappa) mod 1
    points: tuple
    a: Fraction
    depth: int

    @property
    def intervals(self) -> list[tuple[Fraction, Fraction]]:
        return [(s, self.kappa) for s in self.starts]

    def lower_bound(self) -> Fraction:
        d = len(self.points)
        return Fraction(1, d ** (2 * d)) * (self.a / 2) ** d


def lower_length(d: int, a: Fraction) -> Fraction:
    return Fraction(1, d ** (2 * d)) * (a / 2) ** d


def _canonical_base(pts: list[Fraction]) -> int:
    """Index of a rotation-invariant starting point.

    The cyclic gap sequence read from the chosen point is lexicographically
    maximal; rotating the input rotates the choice with it.
    """
    d = len(pts)
    gaps = [(pts[(i + 1) % d] - pts[i]) % 1 or Fraction(1) for i in range(d)]
    best = max(range(d), key=lambda i: gaps[i:] + gaps[:i])
    return best


def _cover_unrolled(offsets: list[Fraction], a: Fraction, depth: int) -> tuple[Fraction, list[Fraction], int]:
    """Cover points 0 = o_0 < o_1 < ... < o_{d-1} < 1 on the unit circle.

    Returns (kappa, arc starts in the same unrolled coordinate, depth).
    """
    d = len(offsets)
    ell = lower_length(d, a)
    if d == 1:
        kappa = a / 2
        return kappa, [offsets[0] - kappa / 2], depth
    gaps = [offsets[i + 1] - offsets[i] for i in range(d - 1)] + [1 - offsets[-1] + offsets[0]]
    threshold = (1 + 1 / a) * ell
    if min(gaps) > threshold:
        return ell, [o - ell / 2 for o in offsets], depth
    if d == 2:
        # both points share one arc: the short gap g <= threshold is covered
        # with room ell on either side
        i = 0 if gaps[0] <= gaps[1] else 1
        g = gaps[i]
        kappa = g + 2 * ell
        left = offsets[i]
        return kappa, [left - ell], depth
    # collapse every gap of length <= threshold (chains merge transitively)
    short = [g <= threshold for g in gaps]
    # rotate so that the unrolled window starts right after a long gap
    first_long = short.index(False)
    start = (first_long + 1) % d
    order = [(start + i) % d for i in range(d)]
    shift = offsets[start]
    pos = [(offsets[i] - shift) % 1 for i in order]
    gap_after = [gaps[i] for i in order]
    short_after = [short[i] for i in order]
    clusters = []  # (quotient position, collapsed length, first original pos)
    collapsed_before = Fraction(0)
    i = 0
    while i < d:
        j = i
        span = Fraction(0)
        while j < d - 1 and short_after[j]:
            span += gap_after[j]
            j += 1
        clusters.append((pos[i] - collapsed_before, span, pos[i]))
        collapsed_before += span
        i = j + 1
    big_l = 1 - collapsed_before
    d_prime = len(clusters)
    sub_a = Fraction(d - 2, d - 1) * a
    q_points = [c[0] / big_l for c in clusters]
    kappa_p, starts_p, sub_depth = _cover_unrolled(q_points, sub_a, depth + 1)
    assert d_prime <= d - 1

    def f_left(q: Fraction) -> Fraction:
        # original coordinate of quotient position q; a cluster at q maps to its first point
        n_wraps, r = divmod(q, big_l)
        extra = sum((c[1] for c in clusters if c[0] < r), Fraction(0))
        return n_wraps + r + extra

    def f_right(q: Fraction) -> Fraction:
        n_wraps, r = divmod(q, big_l)
        extra = sum((c[1] for c in clusters if c[0] <= r), Fraction(0))
        return n_wraps + r + extra

    kappa = kappa_p * big_l + (d - 1) * threshold
    starts = []
    for s in starts_p:
        qs, qe = s * big_l, (s + kappa_p) * big_l
        lo, hi = f_right(qs), f_left(qe)
        pad = (kappa - (hi - lo)) / 2
        starts.append(lo - pad + shift)
    return kappa, starts, sub_depth


def cover_circle(points: Iterable, a) -> CircleCover:
    a = rationalize(a)
    if not (0 < a < Fraction(1, 2)):
        raise ValueError("a must lie in (0, 1/2)")
    pts = sorted({rationalize(p) % 1 for p in points})
    if not pts:
        raise ValueError("the point set must be nonempty")
    base = _canonical_base(pts)
    p0 = pts[base]
    offsets = sorted((p - p0) % 1 for p in pts)
    kappa, starts, depth = _cover_unrolled(offsets, a, 1)
    cover = CircleCover(kappa=kappa, starts=tuple(sorted((s + p0) % 1 for s in starts)),
                        points=tuple(pts), a=a, depth=depth)
    report = verify_cover(cover)
    if not report["ok"]:
        raise PostconditionViolated("circle cover postcondition failed", **report)
    return cover


def _arc_union(starts: Sequence[Fraction], length: Fraction) -> list[tuple[Fraction, Fraction]]:
    """Union of open arcs as a list of (start, end) on the unrolled line, end-start <= 1."""
    if length >= 1:
        return [(Fraction(0), Fraction(1))]
    arcs = sorted((s % 1, s % 1 + length) for s in starts)
    merged: list[list[Fraction]] = []
    for s, e in arcs:
        if merged and s < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    # wrap-around merge
    if len(merged) > 1 and merged[-1][1] > merged[0][0] + 1:
        merged[0][0] = merged[-1][0] - 1
        merged[0][1] = max(merged[0][1], merged[-1][1] - 1)
        merged.pop()
    return [(s, e) for s, e in merged]


def verify_cover(cover: CircleCover) -> dict:
    """Exact check of coverage, equal lengths, gap bound and kappa bracket."""
    kappa, a = cover.kappa, cover.a
    d = len(cover.points)
    union = _arc_union(cover.starts, kappa)

    def inside(p: Fraction) -> bool:
        for s in cover.starts:
            if 0 < (p - s) % 1 < kappa:
                return True
        return False

    covered = all(inside(p) for p in cover.points)
    if len(union) == 1 and union[0][1] - union[0][0] >= 1:
        gaps = [Fraction(0)]
    else:
        gaps = []
        for i, (s, e) in enumerate(union):
            nxt = union[(i + 1) % len(union)][0]
            gaps.append((nxt - e) % 1 if len(union) > 1 else 1 - (e - s))
    min_gap = min(gaps)
    lo, hi = lower_length(d, a), a / 2
    ok_gap = min_gap > kappa / a
    ok_bracket = lo <= kappa <= hi
    return {
        "ok": covered and ok_gap and ok_bracket,
        "covered": covered,
        "min_gap": min_gap,
        "gap_bound": kappa / a,
        "gap_ok": ok_gap,
        "kappa_bracket": (lo, hi),
        "kappa_ok": ok_bracket,
    }
