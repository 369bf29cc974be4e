"""Blender tests for affine horseshoes with one strong unstable direction.

A graph is a map x -> theta(x) from [-1, 1] to (-1, 1)^{d_c + d_s}, linear
between grid nodes.  The chart places it in the horseshoe cube by

    uu = (x + 1) / 2,   c = c0 + lam_c * theta_c,   s = s0 + lam_s * theta_s.

The graph meets the local stable set of the horseshoe when some point of it
stays in the rectangles B_j^u x B^s under every forward iterate.  The search
is depth first over branches; at each depth the image graph over [0, 1] is
kept explicitly, so its center slope is multiplied by A_c / a_uu at every
step (one half for the blender model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .circle_cover import rationalize
from .errors import NotCertified, PreconditionFailed, ToleranceNotReached, UnsupportedDimension
from .ifs import CenterIfs, GridSet, _recurrent_cells, extract_center_ifs, recurrent_compact_check


@dataclass
class BlenderChart:
    c0: np.ndarray
    lam_c: np.ndarray
    s0: np.ndarray
    lam_s: np.ndarray


def default_chart(h) -> BlenderChart:
    """Center window [0.35, 0.65]^{d_c} and stable window [0.05, 0.95]^{d_s}."""
    return BlenderChart(np.full(h.d_c, 0.5), np.full(h.d_c, 0.15),
                        np.full(h.d_s, 0.5), np.full(h.d_s, 0.45))


@dataclass
class LipschitzGraph:
    nodes: np.ndarray  # (m,) increasing in [-1, 1], first -1 and last 1
    values: np.ndarray  # (m, d_cs)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]

    @property
    def lipschitz(self) -> float:
        if len(self.nodes) < 2:
            return 0.0
        slopes = np.abs(np.diff(self.values, axis=0)) / np.diff(self.nodes)[:, None]
        return float(slopes.max())

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([np.interp(x, self.nodes, self.values[:, k]) for k in range(self.values.shape[1])], axis=-1)

    @classmethod
    def constant(cls, value, nodes: int = 2) -> "LipschitzGraph":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.linspace(-1, 1, nodes), np.tile(value, (nodes, 1)))


def project_lipschitz(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Clamp each node to within slope 1 of its left neighbour (one pass suffices).

    The clamp width is shrunk by a few ulps so that the slope certificate,
    recomputed in floating point, never exceeds 1.
    """
    out = values.copy()
    dx = np.diff(nodes) * (1.0 - 1e-12)
    for i in range(1, len(out)):
        out[i] = np.clip(out[i], out[i - 1] - dx[i - 1], out[i - 1] + dx[i - 1])
    return out


def random_graph(rng: np.random.Generator, d_cs: int, n_nodes: int = 33, bound: float = 0.95) -> LipschitzGraph:
    nodes = np.linspace(-1.0, 1.0, n_nodes)
    raw = rng.uniform(-bound, bound, size=(n_nodes, d_cs))
    return LipschitzGraph(nodes, project_lipschitz(raw, nodes))


# ---------------------------------------------------------------------------
# graph test


def _check_supported(h):
    if h.d_uu != 1:
        raise UnsupportedDimension("blender tests are implemented for d_uu = 1", d_uu=h.d_uu)


def _restrict(u, vals, a, b):
    """Piecewise-linear restriction of nodes (u, vals) to [a, b]."""
    inside = (u > a) & (u < b)
    va = np.array([np.interp(a, u, vals[:, k]) for k in range(vals.shape[1])])
    vb = np.array([np.interp(b, u, vals[:, k]) for k in range(vals.shape[1])])
    uu = np.concatenate([[a], u[inside], [b]])
    vv = np.vstack([va, vals[inside], vb])
    return uu, vv


def _chart_nodes(h, theta: LipschitzGraph, chart: BlenderChart):
    if theta.values.shape[1] != h.d_c + h.d_s:
        raise PreconditionFailed("graph values must have d_c + d_s components")
    if not (np.abs(theta.values) < 1).all():
        raise PreconditionFailed("graph leaves the chart box")
    if theta.nodes[0] != -1.0 or theta.nodes[-1] != 1.0:
        raise PreconditionFailed("graph domain must cover [-1, 1]")
    u = (theta.nodes + 1.0) / 2.0
    c = chart.c0 + chart.lam_c * theta.values[:, : h.d_c]
    s = chart.s0 + chart.lam_s * theta.values[:, h.d_c:]
    return u, np.hstack([c, s])


def blender_graph_test(h, theta: LipschitzGraph, max_iter: int = 60, tol: float = 1e-9,
                       chart: BlenderChart | None = None, node_cap: int = 200_000) -> dict:
    """Intersects{point, itinerary} or Escapes{exit_time}."""
    _check_supported(h)
    chart = chart or default_chart(h)
    u0, v0 = _chart_nodes(h, theta, chart)
    ulo, uhi = h.unstable_boxes()
    uu_lo, uu_hi = ulo[:, 0], uhi[:, 0]
    c_lo, c_hi = ulo[:, 1:], uhi[:, 1:]
    dc = h.d_c
    a = h.diag
    best_depth = 0
    visited = 0
    # depth-first stack of (depth, itinerary, nodes, values)
    stack = [(0, (), u0, v0)]
    found = None
    while stack:
        depth, it, u, vals = stack.pop()
        best_depth = max(best_depth, depth)
        if depth == max_iter:
            found = it
            break
        visited += 1
        if visited > node_cap:
            break
        children = []
        for j in range(h.n_branches):
            ru, rv = _restrict(u, vals, uu_lo[j], uu_hi[j])
            cmin, cmax = rv[:, :dc].min(axis=0), rv[:, :dc].max(axis=0)
            smin, smax = rv[:, dc:].min(axis=0), rv[:, dc:].max(axis=0)
            margin = min(
                float((cmin - c_lo[j]).min(initial=math.inf)), float((c_hi[j] - cmax).min(initial=math.inf)),
                float(smin.min(initial=math.inf)), float((1 - smax).min(initial=math.inf)),
            )
            if margin >= 0:
                nu = a[0] * ru + h.branches[j, 0]
                nv = a[1:] * rv + h.branches[j, 1:]
                children.append((margin, j, nu, nv))
        # largest margin explored first
        for margin, j, nu, nv in sorted(children, key=lambda t: t[0]):
            stack.append((depth + 1, it + (j,), nu, nv))
    if found is None:
        return {"verdict": "Escapes", "exit_time": best_depth + 1, "depth": best_depth}
    # enclosure of the limit point in the original chart
    lo, hi = 0.0, 1.0
    for j in reversed(found):
        lo, hi = (lo - h.branches[j, 0]) / a[0], (hi - h.branches[j, 0]) / a[0]
        lo, hi = np.nextafter(min(lo, hi), -np.inf), np.nextafter(max(lo, hi), np.inf)
    xs = np.array([2 * lo - 1, 2 * hi - 1])
    inside = theta.nodes[(theta.nodes > xs[0]) & (theta.nodes < xs[1])]
    vals = theta.evaluate(np.concatenate([xs, inside]))
    phys = np.hstack([chart.c0 + chart.lam_c * vals[:, :dc], chart.s0 + chart.lam_s * vals[:, dc:]])
    diam = max(hi - lo, float((phys.max(axis=0) - phys.min(axis=0)).max()))
    point = np.concatenate([[(lo + hi) / 2], phys.mean(axis=0)])
    if diam > tol:
        raise ToleranceNotReached(f"enclosure diameter {diam} exceeds {tol}", diameter=diam, depth=max_iter)
    return {"verdict": "Intersects", "point": point, "itinerary": found, "diameter": diam}


def recertify(h, theta: LipschitzGraph, itinerary, tol: float = 1e-9, chart: BlenderChart | None = None) -> dict:
    """Exact rational forward iteration of the graph point coded by ``itinerary``.

    The uu coordinate is T_{j_0} o ... o T_{j_{k-1}}(1/2) computed exactly; the
    other coordinates are read off the graph there.  Every iterate must lie
    in the tol-inflated rectangle of its branch.
    """
    chart = chart or default_chart(h)
    diag = [rationalize(x) for x in h.diag]
    br = [[rationalize(x) for x in v] for v in h.branches]
    u = Fraction(1, 2)
    for j in reversed(itinerary):
        u = (u - br[j][0]) / diag[0]
    x = 2 * u - 1
    nodes = [rationalize(t) for t in theta.nodes]
    k = max(0, min(len(nodes) - 2, int(np.searchsorted(theta.nodes, float(x), side="right")) - 1))
    w = (x - nodes[k]) / (nodes[k + 1] - nodes[k])
    vals = [rationalize(theta.values[k, i]) * (1 - w) + rationalize(theta.values[k + 1, i]) * w
            for i in range(theta.values.shape[1])]
    dc = h.d_c
    pt = [u]
    pt += [rationalize(chart.c0[i]) + rationalize(chart.lam_c[i]) * vals[i] for i in range(dc)]
    pt += [rationalize(chart.s0[i]) + rationalize(chart.lam_s[i]) * vals[dc + i] for i in range(h.d_s)]
    t = rationalize(tol)
    du = h.d_u
    worst = Fraction(10**9)
    for step, j in enumerate(itinerary):
        for i in range(du):
            lo = (0 - br[j][i]) / diag[i]
            hi = (1 - br[j][i]) / diag[i]
            worst = min(worst, pt[i] - lo, hi - pt[i])
        for i in range(du, h.d):
            worst = min(worst, pt[i], 1 - pt[i])
        if worst < -t:
            return {"ok": False, "step": step, "margin": float(worst)}
        pt = [diag[i] * pt[i] + br[j][i] for i in range(h.d)]
    return {"ok": True, "steps": len(itinerary), "margin": float(worst)}


def monte_carlo_blender(h, n_graphs: int, max_iter: int = 60, tol: float = 1e-9, seed: int = 0,
                        chart: BlenderChart | None = None, n_nodes: int = 33) -> dict:
    """Random 1-Lipschitz graphs, each tested and (when intersecting) re-certified."""
    _check_supported(h)
    seeds = np.random.SeedSequence(seed).spawn(n_graphs)
    report = {"graphs": n_graphs, "intersect_count": 0, "recertified": 0, "escape_witnesses": [],
              "inconclusive": 0, "max_lipschitz": 0.0}
    for i, ss in enumerate(seeds):
        g = random_graph(np.random.default_rng(ss), h.d_c + h.d_s, n_nodes)
        report["max_lipschitz"] = max(report["max_lipschitz"], g.lipschitz)
        try:
            res = blender_graph_test(h, g, max_iter, tol, chart)
        except ToleranceNotReached:
            report["inconclusive"] += 1
            continue
        if res["verdict"] == "Intersects":
            report["intersect_count"] += 1
            if recertify(h, g, res["itinerary"], tol, chart)["ok"]:
                report["recertified"] += 1
        else:
            report["escape_witnesses"].append({"graph": i, "exit_time": res["exit_time"]})
    return report


# ---------------------------------------------------------------------------
# transversal recurrent sets


@dataclass
class TransversalRecurrentSet:
    center: GridSet
    stable_lo: np.ndarray  # (n_branches, d_s)
    stable_hi: np.ndarray


def build_transversal_recurrent_set(h, K_c: GridSet) -> TransversalRecurrentSet:
    ifs = extract_center_ifs(h)
    check = recurrent_compact_check(ifs, K_c)
    if not check["certified"]:
        raise NotCertified("center set is not certified", reason=check.get("reason"))
    lo, hi = h.stable_boxes()
    return TransversalRecurrentSet(K_c, lo, hi)


def _center_ifs_unchecked(h) -> CenterIfs:
    L = 1.0 / h.diag[h.d_uu:h.d_u]
    return CenterIfs(L, h.center_translations() + L / 2 - 0.5)


def transversal_recurrence_check(h, K: TransversalRecurrentSet, n_max: int = 1,
                                 stable_samples: int = 5) -> dict:
    """Recurrence of K = K^c x (union of stable slabs) on the section uu = 1/2.

    For a center cell z_c and a stable value z_s, an itinerary of length n
    works when the composite center preimage of the cell lies in interior(K^c),
    the strong unstable plaque is pulled strictly inside (0,1), and the
    forward stable value stays inside the open stable slabs.
    """
    _check_supported(h)
    if n_max < 1:
        return {"certified": False, "reason": "n_max < 1"}
    ifs = _center_ifs_unchecked(h)
    ulo, uhi = h.unstable_boxes()
    plaque_ok = (ulo[:, 0] > 0) & (uhi[:, 0] < 1)
    # stable samples: points of each slab including its ends
    zs = np.concatenate([np.linspace(K.stable_lo[j], K.stable_hi[j], stable_samples) for j in range(h.n_branches)])
    cells = np.argwhere(K.center.mask)
    if len(cells) == 0:
        return {"certified": False, "reason": "empty"}
    times = np.zeros(len(cells), dtype=np.int64)
    for n in range(1, n_max + 1):
        todo = times == 0
        if not todo.any():
            break
        # composite center maps of length n (first letter applied first)
        words = np.indices((h.n_branches,) * n).reshape(n, -1).T
        trans = np.zeros((len(words), h.d_c))
        for k in range(n):
            trans = ifs.L * trans + ifs.translations[words[:, k]]
        comp = CenterIfs(ifs.L**n, trans)
        ok_word = np.ones(len(words), dtype=bool)
        for w_i, w in enumerate(words):
            # plaque of every letter pulled inside (0,1), stable value stays in open slabs
            if not plaque_ok[w].all():
                ok_word[w_i] = False
                continue
            s = zs.copy()
            for j in w[::-1]:
                s = h.a_s * s + h.branches[j, h.d_u:]
                if not _in_open_slabs(s, K.stable_lo, K.stable_hi).all():
                    ok_word[w_i] = False
                    break
        if not ok_word.any():
            continue
        branch = _recurrent_cells(CenterIfs(comp.L, comp.translations[ok_word]), K.center, cells[todo])
        idx = np.flatnonzero(todo)
        times[idx[branch >= 0]] = n
    bad = np.flatnonzero(times == 0)
    if bad.size:
        c = cells[bad[0]]
        lo, hi = K.center.cell_bounds(c)
        return {"certified": False, "reason": "uncovered cell", "cell": c.tolist(),
                "cell_box": (lo.tolist(), hi.tolist()), "uncovered": int(bad.size),
                "uncovered_cells": cells[bad]}
    return {"certified": True, "max_n": int(times.max()), "times": np.bincount(times).tolist()}


def _in_open_slabs(s: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """For points s (m, d_s): inside the interior of some slab [lo_j, hi_j]."""
    inside = (s[:, None, :] > lo[None]) & (s[:, None, :] < hi[None])
    return inside.all(axis=2).any(axis=1)


def perturb_translations(h, delta: float, rng: np.random.Generator):
    """Copy of h with every translation coordinate moved by at most delta."""
    from .horseshoe import StandardAffineHorseshoe

    shift = rng.uniform(-delta, delta, size=h.branches.shape)
    return StandardAffineHorseshoe(h.d_uu, h.d_c, h.d_s, h.diag.copy(), h.branches + shift)


def robustness_probe(h, K: TransversalRecurrentSet, perturbations: int = 20, delta: float = 1e-3,
                     seed: int = 0) -> dict:
    seeds = np.random.SeedSequence(seed).spawn(perturbations)
    results = []
    for ss in seeds:
        g = perturb_translations(h, delta, np.random.default_rng(ss))
        lo, hi = g.stable_boxes()
        res = transversal_recurrence_check(g, TransversalRecurrentSet(K.center, lo, hi), n_max=1)
        results.append(res["certified"])
    return {"perturbations": perturbations, "delta": delta, "certified": int(sum(results)),
            "all_certified": all(results)}
