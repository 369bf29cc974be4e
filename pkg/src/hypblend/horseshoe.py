"""Standard affine horseshoes with diagonal linear part.

Branch j acts by f_j(x) = A x + v_j on the cube [0,1]^d, A = diag(a_1..a_d)
with the first d_u = d_uu + d_c entries expanding and the last d_s
contracting.  The unstable sub-rectangle of branch j is
B_j^u = (A^u)^{-1}(B^u - v_j^u) and its stable slab is B_j^s = A^s B^s + v_j^s.

The unstable coordinate of a point is determined by its forward itinerary
(through the inverse branches T_j = (A^u)^{-1}(. - v_j^u)), the stable one by
its backward itinerary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BoundViolated,
    EnumerationCap,
    HypothesisFails,
    InvalidModel,
    PreconditionFailed,
    ResolutionExceeded,
    UnsupportedDimension,
)


@dataclass
class StandardAffineHorseshoe:
    d_uu: int
    d_c: int
    d_s: int
    diag: np.ndarray
    branches: np.ndarray  # (n_branches, d)
    simple_spectrum: bool = False
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float).reshape(-1)
        self.branches = np.atleast_2d(np.asarray(self.branches, dtype=float))
        d = self.d_uu + self.d_c + self.d_s
        if self.diag.shape != (d,):
            raise InvalidModel("diag length does not match d_uu + d_c + d_s", clause="shape")
        if self.branches.shape[1] != d or self.branches.shape[0] < 1:
            raise InvalidModel("each branch translation must have length d", clause="shape")
        if self.weights is None:
            self.weights = np.full(self.n_branches, 1.0 / self.n_branches)
        else:
            self.weights = np.asarray(self.weights, dtype=float)

    @property
    def d(self) -> int:
        return self.d_uu + self.d_c + self.d_s

    @property
    def d_u(self) -> int:
        return self.d_uu + self.d_c

    @property
    def n_branches(self) -> int:
        return self.branches.shape[0]

    @property
    def a_u(self) -> np.ndarray:
        return self.diag[: self.d_u]

    @property
    def a_s(self) -> np.ndarray:
        return self.diag[self.d_u:]

    @property
    def kappa(self) -> float:
        return float(np.abs(np.log(np.abs(self.diag))).min())

    @property
    def J(self) -> float:
        return float(1.0 / np.prod(np.abs(self.diag[self.d_uu:self.d_u])))

    @property
    def beta(self) -> float:
        return float(np.prod(np.abs(self.diag[: self.d_uu])))

    def translation(self, j: int) -> np.ndarray:
        return self.branches[j]

    def branch_map(self, j: int, x: np.ndarray) -> np.ndarray:
        return self.diag * np.asarray(x, dtype=float) + self.branches[j]

    def unstable_inverse(self, j: int, xu: np.ndarray) -> np.ndarray:
        return (np.asarray(xu, dtype=float) - self.branches[j, : self.d_u]) / self.a_u

    def unstable_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) arrays of shape (n_branches, d_u) for the B_j^u."""
        vu = self.branches[:, : self.d_u]
        e0 = (0.0 - vu) / self.a_u
        e1 = (1.0 - vu) / self.a_u
        return np.minimum(e0, e1), np.maximum(e0, e1)

    def stable_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        vs = self.branches[:, self.d_u:]
        e0 = vs
        e1 = self.a_s + vs
        return np.minimum(e0, e1), np.maximum(e0, e1)

    def center_translations(self) -> np.ndarray:
        """Translations of the center IFS z -> z/A_c - v^c/A_c on [0,1]^{d_c}."""
        ac = self.diag[self.d_uu:self.d_u]
        return -self.branches[:, self.d_uu:self.d_u] / ac

    def to_json(self) -> dict:
        return {
            "d_uu": self.d_uu,
            "d_c": self.d_c,
            "d_s": self.d_s,
            "diag": [float(a) for a in self.diag],
            "branches": [{"v": [float(t) for t in v]} for v in self.branches],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StandardAffineHorseshoe":
        try:
            branches = [b["v"] if isinstance(b, dict) else b for b in obj["branches"]]
            return cls(int(obj["d_uu"]), int(obj["d_c"]), int(obj["d_s"]), obj["diag"], branches,
                       simple_spectrum=bool(obj.get("simple_spectrum", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidModel(f"malformed horseshoe description: {exc}", clause="shape") from exc


# reference models -----------------------------------------------------------


def smale_model() -> StandardAffineHorseshoe:
    """Two-branch horseshoe in the plane, B^u_j = [0,1/4] and [3/4,1]."""
    return StandardAffineHorseshoe(1, 0, 1, [4.0, 0.25], [[0.0, 0.0], [-3.0, 0.75]])


def blender_model(center_shift: float = 0.5) -> StandardAffineHorseshoe:
    """d = 3 model whose center IFS is y -> 2y/3 -+ 1/6 in centered coordinates."""
    return StandardAffineHorseshoe(
        1, 1, 1, [3.0, 1.5, 1.0 / 3.0],
        [[-0.2, 0.0, 0.05], [-1.9, -center_shift, 0.6]],
    )


def disjoint_model() -> StandardAffineHorseshoe:
    """d = 3 model whose center IFS is y -> y/3 -+ 1/3 (disjoint images)."""
    return StandardAffineHorseshoe(
        1, 1, 1, [4.0, 3.0, 1.0 / 3.0],
        [[-0.5, 0.0, 0.05], [-2.5, -2.0, 0.6]],
    )


def integrable_model() -> StandardAffineHorseshoe:
    """Both branches share their center translation: the center slice is a point."""
    return blender_model(center_shift=0.0)


# validation -----------------------------------------------------------------


def _box_gap(lo1, hi1, lo2, hi2) -> float:
    """Sup-norm distance between two closed boxes (0 when they meet)."""
    sep = np.maximum(lo2 - hi1, lo1 - hi2)
    return float(max(0.0, sep.max())) if sep.size else 0.0


def validate(h: StandardAffineHorseshoe, raise_on_fail: bool = True) -> dict:
    """Numerical margins for each clause of the standard-horseshoe definition.

    Containment is checked for closed boxes (slack >= 0); disjointness needs a
    strictly positive gap.
    """
    report: dict = {"ok": True, "failed": []}

    def fail(clause: str):
        report["ok"] = False
        report["failed"].append(clause)

    if (h.diag <= 0).any():
        fail("positivity")
    logs = np.log(np.abs(h.diag))
    margin_u = float(logs[: h.d_u].min()) if h.d_u else math.inf
    margin_s = float(-logs[h.d_u:].min()) if h.d_s else math.inf
    report["contraction_margin"] = min(margin_u, margin_s)
    if not report["contraction_margin"] > 0:
        fail("contraction")

    ulo, uhi = h.unstable_boxes()
    slo, shi = h.stable_boxes()
    slack_u = float(min(ulo.min(), (1 - uhi).min())) if h.d_u else math.inf
    slack_s = float(min(slo.min(), (1 - shi).min())) if h.d_s else math.inf
    report["containment_slack"] = min(slack_u, slack_s)
    if report["containment_slack"] < 0:
        fail("containment")

    nb = h.n_branches
    gap_u = gap_s = math.inf
    for i in range(nb):
        for j in range(i + 1, nb):
            if h.d_u:
                gap_u = min(gap_u, _box_gap(ulo[i], uhi[i], ulo[j], uhi[j]))
            if h.d_s:
                gap_s = min(gap_s, _box_gap(slo[i], shi[i], slo[j], shi[j]))
    report["unstable_gap"] = gap_u
    report["stable_gap"] = gap_s
    if nb > 1 and not (gap_u > 0 and gap_s > 0):
        fail("disjointness")

    if h.simple_spectrum:
        dist = np.diff(np.sort(h.diag))
        report["spectral_gap"] = float(dist.min()) if dist.size else math.inf
        if dist.size and not dist.min() > 0:
            fail("simple-spectrum")

    if raise_on_fail and not report["ok"]:
        raise InvalidModel(f"violated clause: {report['failed'][0]}", clause=report["failed"][0],
                           report=report)
    return report


# coding ---------------------------------------------------------------------


def point_from_itinerary(h: StandardAffineHorseshoe, symbols: Sequence[int], W: int) -> tuple[np.ndarray, float]:
    """Point whose symbols at times -W..W are ``symbols`` (symbols[W] is time 0).

    Unstable coordinates come from the forward symbols, stable ones from the
    backward symbols; the unknown tails are replaced by the cube center, so
    the error is at most e^{-kappa W} / 2 in the sup-norm.
    """
    symbols = list(symbols)
    if len(symbols) != 2 * W + 1:
        raise ValueError("itinerary must cover times -W..W")
    xu = np.full(h.d_u, 0.5)
    for j in reversed(symbols[W:]):
        xu = h.unstable_inverse(j, xu)
    xs = np.full(h.d_s, 0.5)
    for j in symbols[:W]:
        xs = h.a_s * xs + h.branches[j, h.d_u:]
    bound = 0.5 * math.exp(-h.kappa * W)
    return np.concatenate([xu, xs]), bound


def periodic_point(h: StandardAffineHorseshoe, word: Sequence[int]) -> np.ndarray:
    """Fixed point of f_{w_{p-1}} o ... o f_{w_0}, the point coded by word^infinity."""
    p = len(word)
    if p == 0:
        raise ValueError("empty word")
    c = np.zeros(h.d)
    for j in word:
        c = h.diag * c + h.branches[j]
    return c / (1.0 - h.diag**p)


# spectrum and entropy arithmetic -------------------------------------------


def lyapunov_spectrum(h: StandardAffineHorseshoe) -> dict:
    logs = np.log(np.abs(h.diag))
    pos = logs[logs > 0]
    if pos.size == 0 or (logs == 0).any():
        raise InvalidModel("linear part is not hyperbolic", clause="contraction")
    values, counts = np.unique(np.round(logs, 14), return_counts=True)
    order = np.argsort(-values)
    return {
        "exponents": sorted(logs.tolist(), reverse=True),
        "distinct": [(float(values[i]), int(counts[i])) for i in order],
        "chi_u_inf": float(pos.min()),
        "chi_u_max": float(pos.max()),
        "log_jac_u": float(pos.sum()),
        "log_det_uu": float(logs[: h.d_uu].sum()),
        "log_det_c": float(logs[h.d_uu:h.d_u].sum()),
    }


def blender_entropy_hypothesis(h: StandardAffineHorseshoe, k: int, h_top: float | None = None,
                               raise_on_fail: bool = True) -> dict:
    """Entropy hypothesis for smoothness k and the derived exponent c.

    h_top defaults to log(number of branches).  The admissible c form an
    open interval (c_lo, c_hi); its midpoint is returned so that both
    inequalities hold with the largest common margin.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    sp = lyapunov_spectrum(h)
    n = h.n_branches
    ent = math.log(n) if h_top is None else float(h_top)
    threshold = sp["log_jac_u"] - sp["chi_u_inf"] / (2 * k)
    report = {
        "h_top": ent,
        "threshold": threshold,
        "entropy_margin": ent - threshold,
        "entropy_ok": ent > threshold,
    }
    if not report["entropy_ok"]:
        if raise_on_fail:
            raise HypothesisFails("entropy is below the threshold", inequality="entropy",
                                  margin=report["entropy_margin"])
        return report
    c_hi = min(1.0, sp["chi_u_inf"] / (k * sp["chi_u_max"]))
    c_lo = max(0.0, 2.0 * (sp["log_jac_u"] - ent) / sp["chi_u_max"])
    if not c_lo < c_hi:
        raise HypothesisFails("no exponent c satisfies both constraints", inequality="c-interval",
                              c_lo=c_lo, c_hi=c_hi)
    c = 0.5 * (c_lo + c_hi)
    m22 = sp["chi_u_inf"] - c * k * sp["chi_u_max"]
    m23 = ent - (sp["log_jac_u"] - 0.5 * c * sp["chi_u_max"])
    # with H + 1 branches the relevant count is H = n - 1
    big_h = n - 1
    lhs24 = (math.log(big_h) if big_h > 0 else -math.inf) - sp["log_jac_u"]
    m24 = lhs24 + 0.5 * c * sp["log_det_uu"]
    report.update({
        "c": c,
        "c_interval": (c_lo, c_hi),
        "c_rate_margin": m22,
        "c_rate_ok": m22 > 0,
        "c_entropy_margin": m23,
        "c_entropy_ok": m23 > 0,
        "count_margin": m24,
        "count_ok": m24 > 0,
        "beta": h.beta,
        "J": h.J,
        "H": big_h,
    })
    return report


# center IFS counting --------------------------------------------------------


def _center_maps(h: StandardAffineHorseshoe) -> tuple[np.ndarray, np.ndarray]:
    rate = 1.0 / h.diag[h.d_uu:h.d_u]
    return rate, h.center_translations()


def plaque_hit_bound_check(h: StandardAffineHorseshoe, n: int, samples: int = 2000,
                           seed: int = 0, cap: int = 10**6) -> dict:
    """Largest number of n-fold center compositions whose image contains a point.

    The count is compared with ceil(beta^n).  Sample points are random
    points of [0,1]^{d_c} together with every image endpoint (d_c = 1), where
    the maximum of a count of closed intervals is attained.
    """
    if h.d_c < 1:
        raise UnsupportedDimension("the model has no center direction", d_c=h.d_c)
    nb = h.n_branches
    total = nb**n
    if total > cap:
        raise EnumerationCap(f"{total} compositions exceed the cap {cap}", count=total, cap=cap)
    rate, trans = _center_maps(h)
    # images of [0,1]^{d_c}: lo corner and common side length rate^n
    lo = np.zeros((1, h.d_c))
    for _ in range(n):
        lo = (rate * lo[:, None, :] + trans[None, :, :]).reshape(-1, h.d_c)
    side = rate**n
    rng = np.random.default_rng(seed)
    pts = rng.random((samples, h.d_c))
    if h.d_c == 1:
        pts = np.concatenate([pts, lo, lo + side])
    best = 0
    for chunk in np.array_split(pts, max(1, len(pts) // 512)):
        inside = ((chunk[:, None, :] >= lo[None] - 1e-12) & (chunk[:, None, :] <= lo[None] + side + 1e-12)).all(axis=2)
        best = max(best, int(inside.sum(axis=1).max()) if len(chunk) else 0)
    bound = math.ceil(h.beta**n - 1e-9)
    report = {"n": n, "max_count": best, "bound": bound, "compositions": total}
    if best > max(bound, 1):
        raise BoundViolated("plaque hit count exceeds beta^n", **report)
    return report


def essential_center_test(h: StandardAffineHorseshoe, tol: float = 1e-12) -> dict:
    if h.d_c != 1:
        raise UnsupportedDimension("essential center test needs d_c = 1", d_c=h.d_c)
    rate, trans = _center_maps(h)
    t = trans[:, 0]
    diam = float((t.max() - t.min()) / (1.0 - rate[0]))
    verdict = "JointlyIntegrable" if diam < tol else "Essential"
    return {"verdict": verdict, "diameter": diam}


# unstable measure -----------------------------------------------------------


def unstable_point(h: StandardAffineHorseshoe, future: Sequence[int]) -> np.ndarray:
    xu = np.full(h.d_u, 0.5)
    for j in reversed(list(future)):
        xu = h.unstable_inverse(j, xu)
    return xu


def unstable_ball_mass(h: StandardAffineHorseshoe, center: np.ndarray, r: float,
                       resolution: float = 1e-3, floor: float = 1e-12,
                       max_depth: int = 80, max_cells: int = 4_000_000) -> tuple[float, float]:
    """Interval [lo, hi] for the self-similar unstable measure of the sup-norm ball.

    Cylinder boxes T_{w_0} o ... o T_{w_k}([0,1]^{d_u}) are refined while they
    straddle the ball boundary; the loop stops once the straddling mass is
    below ``resolution`` times the inside mass (or below ``floor``).
    """
    if r <= 0:
        return 0.0, 0.0
    center = np.asarray(center, dtype=float)
    blo, bhi = center - r, center + r
    a_inv = 1.0 / h.a_u
    vu = h.branches[:, : h.d_u]
    w = h.weights
    # cells: offset t and common scale s; box = t + s * [0,1]^{d_u}
    t = np.zeros((1, h.d_u))
    wt = np.ones(1)
    s = np.ones(h.d_u)
    lo_mass = 0.0
    for depth in range(max_depth + 1):
        cell_lo = np.minimum(t, t + s)
        cell_hi = np.maximum(t, t + s)
        inside = ((cell_lo >= blo) & (cell_hi <= bhi)).all(axis=1)
        outside = ((cell_hi < blo) | (cell_lo > bhi)).any(axis=1)
        lo_mass += float(wt[inside].sum())
        part = ~inside & ~outside
        pmass = float(wt[part].sum())
        if pmass <= max(floor, resolution * lo_mass):
            return lo_mass, min(1.0, lo_mass + pmass)
        t, wt = t[part], wt[part]
        if len(t) * h.n_branches > max_cells:
            break
        # append one inverse branch on the right: T_w o T_j
        child_off = -vu * a_inv  # T_j(0)
        t = (t[:, None, :] + s * child_off[None, :, :]).reshape(-1, h.d_u)
        wt = (wt[:, None] * w[None, :]).reshape(-1)
        s = s * a_inv
    raise ResolutionExceeded("straddling mass did not fall below the resolution",
                             depth=depth, cells=int(len(t)), partial_mass=pmass)


def reverse_doubling_search(h: StandardAffineHorseshoe, rho_grid: Sequence[float],
                            eta_grid: Sequence[float], samples: int = 8, seed: int = 0,
                            radii: int = 8, resolution: float = 1e-3, future_len: int = 60) -> dict:
    """First (rho, eta) on the grid such that mass(eta r) < mass(r)/2 on all tests.

    Each test uses a sampled point of the unstable slice and r = rho 2^{-i},
    i = 1..radii.  Comparisons use hi(eta r) against lo(r)/2.
    """
    ess = essential_center_test(h)
    if ess["verdict"] != "Essential":
        raise PreconditionFailed("the center is not essential", verdict=ess["verdict"])
    rng = np.random.default_rng(seed)
    futures = rng.choice(h.n_branches, size=(samples, future_len), p=h.weights)
    centers = [unstable_point(h, f) for f in futures]
    cache: dict = {}

    def mass(i: int, r: float):
        key = (i, r)
        if key not in cache:
            cache[key] = unstable_ball_mass(h, centers[i], r, resolution=resolution)
        return cache[key]

    best = None
    for rho in rho_grid:
        rs = [rho * 2.0**-k for k in range(1, radii + 1)]
        for eta in eta_grid:
            worst = -math.inf
            witness = None
            for i in range(samples):
                for r in rs:
                    small = mass(i, eta * r)[1]
                    big = mass(i, r)[0]
                    v = small - 0.5 * big
                    if v > worst:
                        worst, witness = v, {"sample": i, "r": r, "small_hi": small, "big_lo": big}
            if worst < 0:
                return {"certified": True, "rho": rho, "eta": eta, "margin": -worst, "witness": witness,
                        "samples": samples, "radii": rs}
            if best is None or worst < best["violation"]:
                best = {"certified": False, "rho": rho, "eta": eta, "violation": worst, "witness": witness}
    return best
