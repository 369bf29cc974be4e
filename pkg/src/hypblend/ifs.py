"""Center iterated function systems on B = [-1/2, 1/2]^d.

Maps are L_j(z) = L z + v_j with L diagonal.  Compact sets are GridSets:
unions of closed cells of a uniform grid with ``resolution`` cells per axis.
Certification of the recurrent compact condition is conservative: preimage
boxes are rounded outward to whole cells and "interior" is the one-cell
erosion of the mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import EnumerationCap, HypothesisViolated, UnsupportedDimension

ROUND = 1e-9


@dataclass
class CenterIfs:
    L: np.ndarray  # diagonal of the common linear part
    translations: np.ndarray  # (n_maps, d_c)

    def __post_init__(self):
        self.translations = np.atleast_2d(np.asarray(self.translations, dtype=float))
        self.L = np.broadcast_to(np.asarray(self.L, dtype=float), (self.translations.shape[1],)).copy()
        if not ((self.L > 0) & (self.L < 1)).all():
            raise ValueError("contraction entries must lie in (0, 1)")

    @property
    def d_c(self) -> int:
        return self.translations.shape[1]

    @property
    def n_maps(self) -> int:
        return self.translations.shape[0]

    @property
    def J(self) -> float:
        return float(np.prod(self.L))

    def apply(self, j: int, z) -> np.ndarray:
        return self.L * np.asarray(z, dtype=float) + self.translations[j]

    def image_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.translations - self.L / 2, self.translations + self.L / 2

    def slack(self) -> float:
        """Distance from the union of images to the boundary of B (negative if outside)."""
        lo, hi = self.image_boxes()
        return float(min((lo + 0.5).min(), (0.5 - hi).min()))


def extract_center_ifs(h) -> CenterIfs:
    """Center IFS of a horseshoe, moved from [0,1]^{d_c} to the centered cube."""
    from .horseshoe import validate

    if h.d_c < 1:
        raise UnsupportedDimension("the model has no center direction", d_c=h.d_c)
    validate(h)
    L = 1.0 / h.diag[h.d_uu:h.d_u]
    t = h.center_translations()
    # y = z - 1/2:  y' = L (y + 1/2) + t - 1/2
    return CenterIfs(L, t + L / 2 - 0.5)


# ---------------------------------------------------------------------------
# grid sets


@dataclass
class GridSet:
    resolution: int
    mask: np.ndarray  # bool, shape (resolution,) * d

    @property
    def d(self) -> int:
        return self.mask.ndim

    @property
    def cell(self) -> float:
        return 1.0 / self.resolution

    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()

    @classmethod
    def empty(cls, resolution: int, d: int = 1) -> "GridSet":
        return cls(resolution, np.zeros((resolution,) * d, dtype=bool))

    @classmethod
    def from_box(cls, lo, hi, resolution: int) -> "GridSet":
        """Outer approximation: every cell meeting the closed box."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        mask = np.zeros((resolution,) * len(lo), dtype=bool)
        i0 = np.clip(np.floor((lo + 0.5) * resolution + ROUND).astype(int), 0, resolution)
        i1 = np.clip(np.ceil((hi + 0.5) * resolution - ROUND).astype(int), 0, resolution)
        mask[tuple(slice(a, b) for a, b in zip(i0, i1))] = True
        return cls(resolution, mask)

    def interior(self) -> np.ndarray:
        """Cells whose full 3^d neighbourhood is occupied."""
        structure = np.ones((3,) * self.d, dtype=bool)
        return ndimage.binary_erosion(self.mask, structure=structure, border_value=0)

    def erode(self, cells: int = 1) -> "GridSet":
        if cells <= 0:
            # scipy reads iterations=0 as "until nothing changes"
            return GridSet(self.resolution, self.mask.copy())
        structure = np.ones((3,) * self.d, dtype=bool)
        m = ndimage.binary_erosion(self.mask, structure=structure, iterations=cells, border_value=0)
        return GridSet(self.resolution, m)

    def refine(self, factor: int) -> "GridSet":
        m = self.mask
        for axis in range(self.d):
            m = np.repeat(m, factor, axis=axis)
        return GridSet(self.resolution * factor, m)

    def cell_bounds(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = -0.5 + idx / self.resolution
        return lo, lo + 1.0 / self.resolution

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.argwhere(self.mask)
        lo, _ = self.cell_bounds(idx.min(axis=0))
        _, hi = self.cell_bounds(idx.max(axis=0))
        return lo, hi

    def contains_box(self, lo, hi) -> bool:
        """True when every cell meeting the closed box is occupied."""
        inner = GridSet.from_box(lo, hi, self.resolution)
        return bool(self.mask[inner.mask].all()) and inner.count() > 0

    def to_text(self) -> str:
        """Header line then run lengths of the flattened (C-order) mask, starting with a 0-run."""
        flat = self.mask.reshape(-1).astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0] == 1:
            runs = [0] + runs
        return f"gridset {self.resolution} {self.d}\n" + " ".join(map(str, runs)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GridSet":
        lines = text.strip().splitlines()
        head = lines[0].split()
        if len(head) != 3 or head[0] != "gridset":
            raise ValueError("expected header 'gridset <resolution> <d>'")
        res, d = int(head[1]), int(head[2])
        runs = [int(t) for t in " ".join(lines[1:]).split()]
        flat = np.zeros(res**d, dtype=bool)
        pos, val = 0, False
        for r in runs:
            flat[pos:pos + r] = val
            pos += r
            val = not val
        if pos != flat.size:
            raise ValueError("run lengths do not match the grid size")
        return cls(res, flat.reshape((res,) * d))


def _summed_area(mask: np.ndarray) -> np.ndarray:
    s = mask.astype(np.int64)
    for axis in range(mask.ndim):
        s = np.cumsum(s, axis=axis)
    return np.pad(s, [(1, 0)] * mask.ndim)


def _box_full(sat: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """For index boxes [lo, hi] (inclusive, shape (m, d)) test that every cell is set."""
    d = lo.shape[1]
    total = np.zeros(lo.shape[0], dtype=np.int64)
    for corner in product((0, 1), repeat=d):
        idx = tuple(np.where(c, hi[:, a] + 1, lo[:, a]) for a, c in enumerate(corner))
        sign = (-1) ** (d - sum(corner))
        total += sign * sat[idx]
    volume = np.prod(hi - lo + 1, axis=1)
    return total == volume


def _preimage_index_boxes(ifs: CenterIfs, resolution: int, cells: np.ndarray, j: int):
    """Outward-rounded index boxes of L_j^{-1}(cell); also a validity flag."""
    lo = -0.5 + cells / resolution
    hi = lo + 1.0 / resolution
    plo = (lo - ifs.translations[j]) / ifs.L
    phi = (hi - ifs.translations[j]) / ifs.L
    ilo = np.floor((plo + 0.5) * resolution - ROUND).astype(np.int64)
    ihi = np.ceil((phi + 0.5) * resolution + ROUND).astype(np.int64) - 1
    ok = (ilo >= 0).all(axis=1) & (ihi < resolution).all(axis=1)
    return np.clip(ilo, 0, resolution - 1), np.clip(ihi, 0, resolution - 1), ok


def _pairs_1d(lo: np.ndarray, hi: np.ndarray, starts: np.ndarray, width: float):
    """Pairs (point index, map index) with lo[map] <= point < hi[map] + width.

    ``starts`` must be sorted; used so that only nearby maps are examined.
    """
    a = np.searchsorted(starts, lo - width, side="left")
    b = np.searchsorted(starts, hi, side="right")
    counts = np.maximum(b - a, 0)
    maps = np.repeat(np.arange(len(lo)), counts)
    offset = np.repeat(a - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    pts = np.arange(counts.sum()) + offset
    return pts, maps


def _recurrent_cells(ifs: CenterIfs, K: GridSet, cells: np.ndarray) -> np.ndarray:
    """Least branch index witnessing recurrence for each cell, -1 where none works."""
    sat = _summed_area(K.interior())
    branch = np.full(len(cells), -1, dtype=np.int64)
    if ifs.d_c == 1 and len(cells):
        # only maps whose image box meets the cell can work
        order = np.argsort(cells[:, 0], kind="stable")
        starts = -0.5 + cells[order, 0] / K.resolution
        ilo, ihi = ifs.image_boxes()
        pi, mj = _pairs_1d(ilo[:, 0], ihi[:, 0], starts, 1.0 / K.resolution)
        ci = order[pi]
        lo = -0.5 + cells[ci] / K.resolution
        plo = (lo - ifs.translations[mj]) / ifs.L
        phi = (lo + 1.0 / K.resolution - ifs.translations[mj]) / ifs.L
        a = np.floor((plo + 0.5) * K.resolution - ROUND).astype(np.int64)
        b = np.ceil((phi + 0.5) * K.resolution + ROUND).astype(np.int64) - 1
        ok = (a >= 0).all(axis=1) & (b < K.resolution).all(axis=1)
        a = np.clip(a, 0, K.resolution - 1)
        b = np.clip(b, 0, K.resolution - 1)
        ok &= _box_full(sat, a, b)
        best = np.full(len(cells), ifs.n_maps, dtype=np.int64)
        np.minimum.at(best, ci[ok], mj[ok])
        branch[best < ifs.n_maps] = best[best < ifs.n_maps]
        return branch
    for j in range(ifs.n_maps):
        todo = branch < 0
        if not todo.any():
            break
        ilo, ihi, ok = _preimage_index_boxes(ifs, K.resolution, cells[todo], j)
        good = ok & _box_full(sat, ilo, ihi)
        sub = np.flatnonzero(todo)[good]
        branch[sub] = j
    return branch


def recurrent_compact_check(ifs: CenterIfs, K: GridSet) -> dict:
    """Certified if every cell of K has a branch whose preimage lies in interior(K)."""
    if K.d != ifs.d_c:
        raise ValueError("grid dimension does not match the IFS")
    if K.is_empty():
        return {"certified": False, "reason": "empty"}
    cells = np.argwhere(K.mask)
    branch = _recurrent_cells(ifs, K, cells)
    bad = np.flatnonzero(branch < 0)
    if bad.size:
        c = cells[bad[0]]
        lo, hi = K.cell_bounds(c)
        return {"certified": False, "reason": "no branch pulls the cell into the interior",
                "cell": c.tolist(), "cell_box": (lo.tolist(), hi.tolist()), "uncovered": int(bad.size),
                "uncovered_cells": cells[bad]}
    return {"certified": True, "witness": branch, "cells": int(len(cells))}


def candidate_region(ifs: CenterIfs, resolution: int) -> GridSet:
    """Cells contained in at least one image box L_j(B)."""
    d = ifs.d_c
    idx = np.indices((resolution,) * d).reshape(d, -1).T
    lo = -0.5 + idx / resolution
    hi = lo + 1.0 / resolution
    ilo, ihi = ifs.image_boxes()
    inside = np.zeros(len(idx), dtype=bool)
    for j in range(ifs.n_maps):
        inside |= ((lo >= ilo[j] - ROUND) & (hi <= ihi[j] + ROUND)).all(axis=1)
    return GridSet(resolution, inside.reshape((resolution,) * d))


def search_recurrent_compact(ifs: CenterIfs, resolution: int, max_iter: int | None = None) -> dict:
    """Largest grid fixed point of K -> {cells with a preimage in interior(K)}.

    Starts from the candidate region; the mask only shrinks, so the loop
    stops after at most (number of cells) rounds.
    """
    K = candidate_region(ifs, resolution)
    rounds = 0
    limit = max_iter if max_iter is not None else K.count() + 1
    while not K.is_empty() and rounds < limit:
        rounds += 1
        cells = np.argwhere(K.mask)
        branch = _recurrent_cells(ifs, K, cells)
        drop = cells[branch < 0]
        if drop.size == 0:
            break
        K.mask[tuple(drop.T)] = False
    if K.is_empty():
        return {"found": False, "rounds": rounds, "resolution": resolution}
    check = recurrent_compact_check(ifs, K)
    if not check["certified"]:
        return {"found": False, "rounds": rounds, "resolution": resolution, "reason": "not stable"}
    return {"found": True, "set": K, "rounds": rounds, "resolution": resolution, "check": check}


# ---------------------------------------------------------------------------
# composite systems and the measure-counting claim


def _words(H: int, n: int) -> np.ndarray:
    """All words in {1..H}^n in lexicographic order, shape (H^n, n)."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((H,) * n).reshape(n, -1).T
    return grids + 1


def composite_translations(ifs: CenterIfs, n: int, cap: int = 10**6) -> tuple[np.ndarray, np.ndarray]:
    """Translations of L_0 o L_{j_n} o ... o L_{j_1} and the word array."""
    H = ifs.n_maps - 1
    if H < 1:
        raise ValueError("the IFS needs L_0 and at least one further map")
    if H**n > cap:
        raise EnumerationCap(f"{H**n} composite maps exceed the cap {cap}", count=H**n, cap=cap)
    words = _words(H, n)
    t = np.zeros((len(words), ifs.d_c))
    for k in range(n):
        t = ifs.L * t + ifs.translations[words[:, k]]
    return ifs.L * t + ifs.translations[0], words


def _sweep_at_least(lo: np.ndarray, hi: np.ndarray, threshold: int) -> list[tuple[float, float]]:
    """Closed intervals where at least ``threshold`` of the [lo_i, hi_i] overlap."""
    ev = np.concatenate([np.stack([lo, np.ones_like(lo)], 1), np.stack([hi, -np.ones_like(hi)], 1)])
    # openings before closings at equal coordinates (closed intervals)
    order = np.lexsort((-ev[:, 1], ev[:, 0]))
    ev = ev[order]
    out = []
    depth = 0
    start = None
    for x, s in ev:
        depth += int(s)
        if s > 0 and depth >= threshold and start is None:
            start = x
        elif s < 0 and depth < threshold and start is not None:
            if x > start:
                out.append((float(start), float(x)))
            start = None
    return out


def claim_parameters(J: float, H: int, n: int, beta: float) -> dict:
    threshold = 0.5 * J ** (n + 1) * H**n
    return {
        "alpha_n": 0.5 * J ** (n + 1) * (H / beta) ** n,
        "threshold": threshold,
        "threshold_count": max(1, math.ceil(threshold - 1e-12)),
    }


def coverage_claim_bruteforce(ifs: CenterIfs, n: int, beta: float = 1.0, cap: int = 10**6,
                              quadrature: int = 512) -> dict:
    """Measure of the set of points covered by many composite images of B.

    One dimension: exact sweep over interval endpoints.  Higher dimension:
    grid quadrature giving [lower, upper] (the claim uses the lower value).
    """
    T, _ = composite_translations(ifs, n, cap)
    lam = ifs.L ** (n + 1)
    H = ifs.n_maps - 1
    params = claim_parameters(ifs.J, H, n, beta)
    k = params["threshold_count"]
    if ifs.d_c == 1:
        A = _sweep_at_least(T[:, 0] - lam[0] / 2, T[:, 0] + lam[0] / 2, k)
        measure = sum(b - a for a, b in A)
        lower = upper = measure
    else:
        N = quadrature
        idx = np.indices((N,) * ifs.d_c).reshape(ifs.d_c, -1).T
        clo = -0.5 + idx / N
        chi = clo + 1.0 / N
        full = np.zeros(len(idx), dtype=np.int64)
        meet = np.zeros(len(idx), dtype=np.int64)
        for t in T:
            full += ((clo >= t - lam / 2) & (chi <= t + lam / 2)).all(axis=1)
            meet += ((chi >= t - lam / 2) & (clo <= t + lam / 2)).all(axis=1)
        cell = N ** -ifs.d_c
        lower = float((full >= k).sum() * cell)
        upper = float((meet >= k).sum() * cell)
        measure = lower
        A = None
    max_count = None
    if ifs.d_c == 1:
        depth = _sweep_depth_max(T[:, 0] - lam[0] / 2, T[:, 0] + lam[0] / 2)
        max_count = depth
    return {
        "n": n,
        "images": int(len(T)),
        "measure_A": measure,
        "measure_interval": (lower, upper),
        "A": A,
        "max_overlap": max_count,
        "beta_n": beta**n,
        **params,
        "claim_ok": lower >= params["alpha_n"],
    }


def _sweep_depth_max(lo: np.ndarray, hi: np.ndarray) -> int:
    ev = np.concatenate([np.stack([lo, np.ones_like(lo)], 1), np.stack([hi, -np.ones_like(hi)], 1)])
    ev = ev[np.lexsort((-ev[:, 1], ev[:, 0]))]
    return int(np.cumsum(ev[:, 1]).max())


def plaque_count_max(ifs: CenterIfs, n: int, cap: int = 10**6) -> int:
    """max_x #{j in {1..H}^n : x in L_j(B)} (one dimension, exact sweep)."""
    H = ifs.n_maps - 1
    if H**n > cap:
        raise EnumerationCap(f"{H**n} words exceed the cap {cap}", count=H**n, cap=cap)
    words = _words(H, n)
    t = np.zeros((len(words), ifs.d_c))
    for k in range(n):
        t = ifs.L * t + ifs.translations[words[:, k]]
    lam = ifs.L ** n
    return _sweep_depth_max(t[:, 0] - lam[0] / 2, t[:, 0] + lam[0] / 2)


# ---------------------------------------------------------------------------
# randomized perturbation


@dataclass
class PerturbationFamily:
    n: int
    c: float
    m: int
    beta: float
    w: np.ndarray  # (H^m, d_c), indexed by the suffix word
    seed: int
    trial: int

    def shift(self, suffix_index: np.ndarray) -> np.ndarray:
        return self.w[suffix_index]


def sample_family(ifs: CenterIfs, n: int, c: float, beta: float, seed: int, trial: int) -> PerturbationFamily:
    H = ifs.n_maps - 1
    m = min(n, math.floor(c * n) + 1)
    w = np.empty((H**m, ifs.d_c))
    for s in range(H**m):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, s)))
        w[s] = rng.uniform(-0.5, 0.5, ifs.d_c)
    return PerturbationFamily(n=n, c=c, m=m, beta=beta, w=w, seed=seed, trial=trial)


def suffix_indices(words: np.ndarray, H: int, m: int) -> np.ndarray:
    """Base-H index of the last m letters of each word."""
    idx = np.zeros(len(words), dtype=np.int64)
    for k in range(words.shape[1] - m, words.shape[1]):
        idx = idx * H + (words[:, k] - 1)
    return idx


def perturbed_ifs(ifs: CenterIfs, fam: PerturbationFamily, scale: float = 10.0) -> CenterIfs:
    T, words = composite_translations(ifs, fam.n)
    lam = ifs.L ** (fam.n + 1)
    sfx = suffix_indices(words, ifs.n_maps - 1, fam.m)
    return CenterIfs(lam, T + scale * lam * fam.shift(sfx))


def covering_condition(ifs: CenterIfs, fam: PerturbationFamily, A: list[tuple[float, float]],
                       scale: float = 10.0, lattice: float = 0.01, chunk: int = 4096) -> dict:
    """Check that every lattice probe in the tile union K lies in a shifted image of the cores."""
    lam = float(ifs.L[0] ** (fam.n + 1))
    pert = perturbed_ifs(ifs, fam, scale)
    # tiles [lam(u - 1/2), lam(u + 1/2)] meeting A
    tiles = set()
    for a, b in A:
        u0 = math.ceil(a / lam - 0.5 - ROUND)
        u1 = math.floor(b / lam + 0.5 + ROUND)
        tiles.update(range(u0, u1 + 1))
    tiles_arr = np.array(sorted(tiles), dtype=np.int64)
    steps = round(1 / lattice)
    offs = np.arange(-steps // 2, steps // 2 + 1) * lattice
    probes = np.unique(np.round((tiles_arr[:, None] + offs[None, :]).reshape(-1) / lattice).astype(np.int64))
    probes = probes * lattice * lam
    tile_set = tiles_arr
    T = pert.translations[:, 0]
    covered = np.zeros(len(probes), dtype=bool)
    # probes inside the extent of each shifted image of the tile union
    ext_lo = T + lam * lam * (tile_set[0] - 0.5)
    ext_hi = T + lam * lam * (tile_set[-1] + 0.5)
    pi, mj = _pairs_1d(ext_lo, ext_hi, probes, 0.0)
    for s in range(0, len(pi), chunk * 64):
        z = probes[pi[s:s + chunk * 64]]
        p = (z - T[mj[s:s + chunk * 64]]) / lam  # preimage under the composite map
        u = np.rint(p / lam)
        in_core = np.abs(p - lam * u) <= lam / 4 + ROUND * lam
        pos = np.clip(np.searchsorted(tile_set, u.astype(np.int64)), 0, len(tile_set) - 1)
        hit = in_core & (tile_set[pos] == u.astype(np.int64))
        covered[pi[s:s + chunk * 64][hit]] = True
    return {
        "holds": bool(covered.all()),
        "probes": int(len(probes)),
        "uncovered": int((~covered).sum()),
        "tiles": int(len(tile_set)),
    }


def perturb_and_verify(ifs: CenterIfs, n: int, c: float, beta: float, trials: int, seed: int = 0,
                       scale: float = 10.0, lattice: float = 0.01, cap: int = 10**6,
                       cells_per_tile: int = 16) -> dict:
    """Sample perturbations, test the covering condition and certify successes."""
    if ifs.d_c != 1:
        raise UnsupportedDimension("the perturbation construction is implemented for d_c = 1", d_c=ifs.d_c)
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    H = ifs.n_maps - 1
    JH = ifs.J * H
    if not beta ** (2 - c) < JH**2:
        raise HypothesisViolated("beta^(2-c) >= (J H)^2", lhs=beta ** (2 - c), rhs=JH**2)
    if H**n > cap:
        raise EnumerationCap(f"{H**n} composite maps exceed the cap {cap}", count=H**n, cap=cap)
    claim = coverage_claim_bruteforce(ifs, n, beta, cap)
    plaque = plaque_count_max(ifs, n, cap)
    lam = float(ifs.L[0] ** (n + 1))
    resolution = math.ceil(cells_per_tile / lam)
    results = []
    first = None
    successes = certified = 0
    for trial in range(trials):
        fam = sample_family(ifs, n, c, beta, seed, trial)
        cov = covering_condition(ifs, fam, claim["A"], scale, lattice) if claim["A"] else {
            "holds": False, "probes": 0, "uncovered": 0, "tiles": 0}
        entry = {"trial": trial, "covering": cov["holds"], "uncovered": cov["uncovered"]}
        if cov["holds"]:
            successes += 1
            search = search_recurrent_compact(perturbed_ifs(ifs, fam, scale), resolution)
            entry["certified"] = search["found"]
            if search["found"]:
                certified += 1
                if first is None:
                    first = (fam, search["set"])
        results.append(entry)
    return {
        "n": n,
        "c": c,
        "m": min(n, math.floor(c * n) + 1),
        "beta": beta,
        "hypothesis": {"lhs": beta ** (2 - c), "rhs": JH**2},
        "plaque_count": {"max": plaque, "beta_n": beta**n, "ok": plaque <= math.ceil(beta**n - 1e-9)},
        "claim": {k: claim[k] for k in ("measure_A", "alpha_n", "threshold_count", "claim_ok")},
        "trials": trials,
        "success_count": successes,
        "certified_count": certified,
        "resolution": resolution,
        "first_witness": first,
        "per_trial": results,
    }
