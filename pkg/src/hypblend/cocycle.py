"""Locally constant linear cocycles over subshifts of finite type.

A cocycle with window (l, r), l <= 0 <= r, assigns a d x d matrix to every
admissible word x_l..x_r; A(x) is the matrix of the word of x at l..r and
A_n(x) = A(sigma^{n-1} x) ... A(x).

Symbolic points are eventually periodic in both directions, so holonomy
products can be evaluated exactly (they stabilise after finitely many
factors).  Operator norms are spectral norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    Degenerate,
    IllConditioned,
    InvalidModel,
    NotComparable,
    NotConverged,
    PreconditionFailed,
)
from .subshift import ParryMeasure, SubshiftOfFiniteType, admissible_words


@dataclass(frozen=True)
class SymbolicPoint:
    """x_i = core[i - start] on the core, left cycle before it, right cycle after it."""

    left: tuple
    core: tuple
    right: tuple
    start: int = 0

    @classmethod
    def periodic(cls, word: Sequence[int], start: int = 0) -> "SymbolicPoint":
        w = tuple(word)
        return cls(w, w, w, start)

    @property
    def end(self) -> int:
        return self.start + len(self.core)

    def at(self, i: int) -> int:
        if i < self.start:
            return self.left[(i - self.start) % len(self.left)]
        if i >= self.end:
            return self.right[(i - self.end) % len(self.right)]
        return self.core[i - self.start]

    def window(self, lo: int, hi: int) -> tuple:
        """Symbols at lo..hi inclusive."""
        return tuple(self.at(i) for i in range(lo, hi + 1))

    def shift(self, k: int = 1) -> "SymbolicPoint":
        return SymbolicPoint(self.left, self.core, self.right, self.start - k)

    def is_admissible(self, sft: SubshiftOfFiniteType) -> bool:
        span = len(self.left) + len(self.right) + 2
        return sft.is_admissible(self.window(self.start - span, self.end + span))


def _period_span(x: SymbolicPoint, y: SymbolicPoint, side: str) -> int:
    if side == "right":
        return math.lcm(len(x.right), len(y.right))
    return math.lcm(len(x.left), len(y.left))


def agree_from(x: SymbolicPoint, y: SymbolicPoint) -> int | None:
    """Least k with x_i = y_i for all i >= k, or None if the right tails differ."""
    e = max(x.end, y.end, x.start, y.start)
    span = _period_span(x, y, "right")
    if any(x.at(i) != y.at(i) for i in range(e, e + span)):
        return None
    k = e
    lo = min(x.start, y.start) - _period_span(x, y, "left") - 1
    while k > lo and x.at(k - 1) == y.at(k - 1):
        k -= 1
    if k == lo:
        return -math.inf  # identical points
    return k


def agree_until(x: SymbolicPoint, y: SymbolicPoint) -> int | None:
    """Largest k with x_i = y_i for all i <= k, or None if the left tails differ."""
    s = min(x.start, y.start, x.end, y.end)
    span = _period_span(x, y, "left")
    if any(x.at(i) != y.at(i) for i in range(s - span, s)):
        return None
    k = s - 1
    hi = max(x.end, y.end) + _period_span(x, y, "right") + 1
    while k < hi and x.at(k + 1) == y.at(k + 1):
        k += 1
    if k == hi:
        return math.inf
    return k


@dataclass
class LocallyConstantCocycle:
    base: SubshiftOfFiniteType
    window: tuple
    values: dict  # word tuple -> (d, d) array

    def __post_init__(self):
        l, r = self.window
        if not l <= 0 <= r:
            raise InvalidModel("window must satisfy l <= 0 <= r", clause="window")
        self.values = {tuple(k): np.asarray(v, dtype=float) for k, v in self.values.items()}
        mats = list(self.values.values())
        if not mats:
            raise InvalidModel("no cocycle values", clause="values")
        d = mats[0].shape[0]
        for w in admissible_words(self.base, r - l + 1):
            if tuple(w) not in self.values:
                raise InvalidModel(f"missing value for cylinder {tuple(w)}", clause="values")
        for k, m in self.values.items():
            if m.shape != (d, d):
                raise InvalidModel("all values must be square of the same size", clause="values")
            if np.linalg.cond(m) > 1e14:
                raise InvalidModel(f"value on {k} is not invertible", clause="values")
        self._inverse = {k: np.linalg.inv(m) for k, m in self.values.items()}

    @property
    def d(self) -> int:
        return next(iter(self.values.values())).shape[0]

    def condition_numbers(self) -> dict:
        return {k: float(np.linalg.cond(m)) for k, m in self.values.items()}

    @classmethod
    def constant(cls, base: SubshiftOfFiniteType, matrix) -> "LocallyConstantCocycle":
        return cls(base, (0, 0), {(a,): matrix for a in range(base.alphabet_size)})

    @classmethod
    def per_symbol(cls, base: SubshiftOfFiniteType, matrices: Sequence) -> "LocallyConstantCocycle":
        return cls(base, (0, 0), {(a,): m for a, m in enumerate(matrices)})

    def word_at(self, x: SymbolicPoint, k: int = 0) -> tuple:
        l, r = self.window
        return x.window(k + l, k + r)

    def A(self, x: SymbolicPoint, k: int = 0) -> np.ndarray:
        """A(sigma^k x)."""
        return self.values[self.word_at(x, k)]

    def A_inv(self, x: SymbolicPoint, k: int = 0) -> np.ndarray:
        return self._inverse[self.word_at(x, k)]

    def product(self, x: SymbolicPoint, n: int, start: int = 0) -> np.ndarray:
        """A(sigma^{start+n-1} x) ... A(sigma^start x)."""
        m = np.eye(self.d)
        for k in range(start, start + n):
            m = self.A(x, k) @ m
        return m

    def is_diagonal(self) -> bool:
        return all(np.count_nonzero(m - np.diag(np.diag(m))) == 0 for m in self.values.values())

    def to_json(self) -> dict:
        return {
            "base": self.base.to_json(),
            "window": list(self.window),
            "values": [{"word": list(k), "matrix": m.reshape(-1).tolist()} for k, m in sorted(self.values.items())],
        }

    @classmethod
    def from_json(cls, obj: dict, base: SubshiftOfFiniteType | None = None) -> "LocallyConstantCocycle":
        from .subshift import parse_sft
        import json

        if base is None:
            base = parse_sft(json.dumps(obj["base"]))
        vals = {}
        for item in obj["values"]:
            flat = np.asarray(item["matrix"], dtype=float)
            d = int(round(math.sqrt(flat.size)))
            vals[tuple(item["word"])] = flat.reshape(d, d)
        return cls(base, tuple(obj["window"]), vals)


# ---------------------------------------------------------------------------
# Lyapunov exponents


def lyapunov_exponents(coc: LocallyConstantCocycle, measure: ParryMeasure, n_orbits: int = 100,
                       orbit_len: int = 100, seed: int = 0) -> dict:
    """QR estimate of all exponents: mean over orbits and standard error across orbits."""
    d = coc.d
    if orbit_len < 10 * d:
        raise ValueError("orbit_len must be at least 10 d")
    l, r = coc.window
    seeds = np.random.SeedSequence(seed).spawn(n_orbits)
    per_orbit = np.empty((n_orbits, d))
    logdet = np.empty(n_orbits)
    for i, ss in enumerate(seeds):
        path = measure.sample_path(orbit_len + r - l, np.random.default_rng(ss))
        q = np.eye(d)
        acc = np.zeros(d)
        for k in range(orbit_len):
            word = tuple(int(s) for s in path[k:k + r - l + 1])
            q, rr = np.linalg.qr(coc.values[word] @ q)
            diag = np.abs(np.diag(rr))
            if not np.all(np.isfinite(diag)) or diag.min() <= 1e-300:
                raise Degenerate("orthonormalization collapsed", orbit=i, step=k)
            acc += np.log(diag)
        # columns are kept in QR order; sorting per orbit would bias nearby exponents upward
        per_orbit[i] = acc / orbit_len
        logdet[i] = acc.sum() / orbit_len
    order = np.argsort(-per_orbit.mean(axis=0), kind="stable")
    per_orbit = per_orbit[:, order]
    est = per_orbit.mean(axis=0)
    se = per_orbit.std(axis=0, ddof=1) / math.sqrt(n_orbits) if n_orbits > 1 else np.full(d, math.inf)
    out = {
        "exponents": est.tolist(),
        "stderr": se.tolist(),
        "sum": float(logdet.mean()),
        "sum_stderr": float(logdet.std(ddof=1) / math.sqrt(n_orbits)) if n_orbits > 1 else math.inf,
        "samples": n_orbits * orbit_len,
        "mean_log_det": mean_log_det(coc, measure),
    }
    if coc.is_diagonal():
        out["exact"] = diagonal_exponents(coc, measure)
    return out


def _cylinder_weights(coc: LocallyConstantCocycle, measure: ParryMeasure) -> dict:
    return {w: measure.cylinder_measure(w) for w in coc.values}


def diagonal_exponents(coc: LocallyConstantCocycle, measure: ParryMeasure) -> list:
    """Exact exponents of a diagonal cocycle: cylinder-weighted averages of log|a_i|, sorted."""
    acc = np.zeros(coc.d)
    for w, p in _cylinder_weights(coc, measure).items():
        if p > 0:
            acc += p * np.log(np.abs(np.diag(coc.values[w])))
    return sorted(acc.tolist(), reverse=True)


def mean_log_det(coc: LocallyConstantCocycle, measure: ParryMeasure) -> float:
    return float(sum(p * math.log(abs(np.linalg.det(coc.values[w])))
                     for w, p in _cylinder_weights(coc, measure).items() if p > 0))


# ---------------------------------------------------------------------------
# holonomies


@dataclass
class HolonomyMap:
    from_point: SymbolicPoint
    to_point: SymbolicPoint
    matrix: np.ndarray
    side: str
    convergence_residual: float
    steps: int
    intertwining_residual: float = float("nan")


def _raw_holonomy(coc: LocallyConstantCocycle, x: SymbolicPoint, y: SymbolicPoint, side: str,
                  tol: float, n_max: int, n_min: int):
    d = coc.d
    prev = np.eye(d)
    resid = math.inf
    for n in range(1, n_max + 1):
        if side == "stable":
            ax = coc.product(x, n)
            ay = coc.product(y, n)
            cur = np.linalg.solve(ay, ax)
        else:
            ax = coc.product(x, n, start=-n)
            ay = coc.product(y, n, start=-n)
            cur = ay @ np.linalg.inv(ax)
        resid = float(np.linalg.norm(cur - prev, 2))
        prev = cur
        if n >= n_min and resid < tol:
            return cur, resid, n
    return prev, resid, n_max


def _stabilisation(coc: LocallyConstantCocycle, x: SymbolicPoint, y: SymbolicPoint, side: str) -> int:
    l, r = coc.window
    if side == "stable":
        k = agree_from(x, y)
        return 1 if k == -math.inf else max(1, int(k) - l + 1)
    k = agree_until(x, y)
    return 1 if k == math.inf else max(1, r - int(k) + 1)


def holonomy(coc: LocallyConstantCocycle, x: SymbolicPoint, y: SymbolicPoint, side: str = "stable",
             tol: float = 1e-12, n_max: int = 200) -> HolonomyMap:
    """Limit of the partial products for points in the same local stable (unstable) set."""
    if side not in ("stable", "unstable"):
        raise ValueError("side must be 'stable' or 'unstable'")
    if side == "stable":
        k = agree_from(x, y)
        if k is None or k > 0:
            raise NotComparable("points do not share coordinates i >= 0", agree_from=k)
    else:
        k = agree_until(x, y)
        if k is None or k < 0:
            raise NotComparable("points do not share coordinates i <= 0", agree_until=k)
    n_min = _stabilisation(coc, x, y, side) + 1
    mat, resid, steps = _raw_holonomy(coc, x, y, side, tol, n_max, n_min)
    if resid >= tol:
        raise NotConverged(f"holonomy did not converge in {n_max} steps", residual=resid, best=mat)
    hol = HolonomyMap(x, y, mat, side, resid, steps)
    # intertwining H(sx, sy) A(x) = A(y) H(x, y)
    sx, sy = x.shift(1), y.shift(1)
    n2 = _stabilisation(coc, sx, sy, side) + 1
    h2, _, _ = _raw_holonomy(coc, sx, sy, side, tol, n_max + 1, n2)
    lhs = h2 @ coc.A(x)
    rhs = coc.A(y) @ mat
    hol.intertwining_residual = float(np.linalg.norm(lhs - rhs, 2) / max(1.0, np.linalg.norm(rhs, 2)))
    return hol


# ---------------------------------------------------------------------------
# fiber bunching


def periodic_points(sft: SubshiftOfFiniteType, p_max: int) -> list:
    pts = []
    for p in range(1, p_max + 1):
        for w in admissible_words(sft, p):
            if sft.allows(w[-1], w[0]):
                pts.append(SymbolicPoint.periodic(w))
    return pts


def _stable_partners(sft: SubshiftOfFiniteType, x: SymbolicPoint, cycles: list, rng, extra: int) -> list:
    """Points sharing x_i for i >= 0 with a different admissible past."""
    # the shared future is copied up to a whole period past the core so the tails stay in phase
    e = max(x.end, 0) + len(x.right)
    future = x.window(0, e - 1)
    out = []
    for c in cycles:
        past = c.left
        if past != x.left and sft.allows(past[-1], x.at(0)):
            out.append(SymbolicPoint(past, future, x.right, 0))
    for _ in range(extra):
        c = cycles[rng.integers(len(cycles))]
        k = int(rng.integers(1, 4))
        mid = tuple(int(s) for s in rng.integers(0, sft.alphabet_size, size=k))
        if sft.is_admissible(list(c.left[-1:]) + list(mid) + [x.at(0)]):
            out.append(SymbolicPoint(c.left, mid + future, x.right, -k))
    return out


def fiber_bunching_check(coc: LocallyConstantCocycle, C: float = 10.0, eps: float = 0.1,
                         n_max: int = 20, p_max: int = 4, samples: int = 20, seed: int = 0) -> dict:
    """max over pairs and n of ||A_n(x)|| ||A_n(x)^{-1}|| ||A(s^n x) - A(s^n y)|| / (C e^{-eps n})."""
    if not (C > 0 and eps > 0):
        raise ValueError("C and eps must be positive")
    rng = np.random.default_rng(seed)
    cycles = periodic_points(coc.base, p_max)
    worst = {"ratio": 0.0}
    pairs = 0
    for x in cycles:
        for y in _stable_partners(coc.base, x, cycles, rng, samples // max(1, len(cycles)) + 1):
            pairs += 1
            an = np.eye(coc.d)
            for n in range(n_max + 1):
                diff = np.linalg.norm(coc.A(x, n) - coc.A(y, n), 2)
                lhs = np.linalg.norm(an, 2) * np.linalg.norm(np.linalg.inv(an), 2) * diff
                ratio = lhs / (C * math.exp(-eps * n))
                if ratio > worst["ratio"]:
                    worst = {"ratio": float(ratio), "n": n, "x": x, "y": y, "lhs": float(lhs)}
                an = coc.A(x, n) @ an
    return {"passed": worst["ratio"] < 1.0, "pairs": pairs, "worst": worst}


# ---------------------------------------------------------------------------
# pinching and bunching (pure arithmetic on growth rates)


def pinching_bunching_check(blocks: Sequence[tuple], j: int, alpha: float, n: int = 1) -> dict:
    """Evaluate the four inequalities for block j.

    ``blocks`` are (min, max) log-growth rates per unit time, ordered by
    increasing rate (block j+1 dominates block j).  Norms at horizon n are
    ||Df^n|E_k|| = e^{n max_k} and ||(Df^n|E_k)^{-1}|| = e^{-n min_k}; E^s is
    the union of blocks with negative max rate, E^u of those with positive
    min rate.  Terms that refer to a missing block are vacuous.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    lo = [b[0] for b in blocks]
    hi = [b[1] for b in blocks]
    top, bottom = max(hi), min(lo)
    mn, mx = lo[j], hi[j]
    out = {}
    if j + 1 < len(blocks):
        v = n * mx - n * lo[j + 1] + alpha * n * top
        out["pinch_upper"] = {"log_value": v, "value": math.exp(v), "ok": v < 0}
    else:
        out["pinch_upper"] = {"vacuous": True, "ok": True}
    if j - 1 >= 0:
        v = -n * mn + n * hi[j - 1] - alpha * n * bottom
        out["pinch_lower"] = {"log_value": v, "value": math.exp(v), "ok": v < 0}
    else:
        out["pinch_lower"] = {"vacuous": True, "ok": True}
    stable = [hi[k] for k in range(len(blocks)) if hi[k] < 0]
    unstable = [lo[k] for k in range(len(blocks)) if lo[k] > 0]
    if stable:
        v = n * mx - n * mn + alpha * n * max(stable)
        out["bunch_stable"] = {"log_value": v, "value": math.exp(v), "ok": v < 0}
    else:
        out["bunch_stable"] = {"vacuous": True, "ok": True}
    if unstable:
        v = -alpha * n * min(unstable) - n * mn + n * mx
        out["bunch_unstable"] = {"log_value": v, "value": math.exp(v), "ok": v < 0}
    else:
        out["bunch_unstable"] = {"vacuous": True, "ok": True}
    out["pinched"] = out["pinch_upper"]["ok"] and out["pinch_lower"]["ok"]
    out["bunched"] = out["bunch_stable"]["ok"] and out["bunch_unstable"]["ok"]
    return out


# ---------------------------------------------------------------------------
# common invariant measures on projective space


@dataclass
class ProjectiveCloud:
    points: np.ndarray  # (m, d) unit vectors, sign ignored
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.points = self.points / np.linalg.norm(self.points, axis=1, keepdims=True)
        self.weights = np.asarray(self.weights, dtype=float)

    def moment(self) -> np.ndarray:
        """Second moment sum w v v^T, a sign-invariant summary of the measure."""
        return (self.points.T * self.weights) @ self.points

    def push(self, m: np.ndarray) -> "ProjectiveCloud":
        return ProjectiveCloud(self.points @ m.T, self.weights)


def _line_distance(u: np.ndarray, v: np.ndarray) -> float:
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    # sine of the angle via the orthogonal component; 1 - cos^2 loses half the digits
    return float(np.linalg.norm(u - (u @ v) * v))


def _eigen_classes(B: np.ndarray, tol: float, cond_max: float = 1e8):
    """Real eigenspaces (clustered) and invariant 2-planes of complex pairs."""
    w, V = np.linalg.eig(B)
    if np.linalg.cond(V) > cond_max:
        raise IllConditioned("eigenvector matrix is ill conditioned", cond=float(np.linalg.cond(V)))
    scale = max(1.0, float(np.abs(w).max()))
    real_idx = [i for i in range(len(w)) if abs(w[i].imag) <= 1e-8 * scale]
    cplx_idx = [i for i in range(len(w)) if w[i].imag > 1e-8 * scale]
    spaces = []
    used = set()
    for i in real_idx:
        if i in used:
            continue
        group = [k for k in real_idx if k not in used and abs(w[k].real - w[i].real) <= 1e-8 * scale]
        used.update(group)
        basis = np.real(V[:, group])
        q, _ = np.linalg.qr(basis)
        spaces.append({"eigenvalue": float(w[i].real), "basis": q[:, : len(group)]})
    planes = []
    for i in cplx_idx:
        M = np.stack([np.real(V[:, i]), np.imag(V[:, i])], axis=1)
        planes.append({"eigenvalue": complex(w[i]), "frame": M})
    return spaces, planes


def _conformal_uniform(M: np.ndarray, points: int = 64) -> ProjectiveCloud:
    t = np.linspace(0, math.pi, points, endpoint=False)
    circle = np.stack([np.cos(t), np.sin(t)], axis=1)
    return ProjectiveCloud(circle @ M.T, np.full(points, 1.0 / points))


def _restrict_to(Bp: np.ndarray, basis: np.ndarray, tol: float):
    """Matrix of Bp on span(basis) if the span is invariant, else None."""
    img = Bp @ basis
    coef, *_ = np.linalg.lstsq(basis, img, rcond=None)
    if np.linalg.norm(basis @ coef - img) > tol * max(1.0, np.linalg.norm(img)):
        return None
    return coef


def common_invariant_measure_test(B, Bp, tol: float = 1e-8) -> dict:
    """Exists(witness) or NoneFound(certificate) for a probability measure on PR^d
    invariant under both B and Bp.

    Candidates come from the eigenstructure of B: point masses on real
    eigendirections (and finite cycles of them permuted by Bp), arbitrary
    measures on projectivised eigenspaces of dimension >= 2 (B acts there as a
    scalar), and conjugated uniform measures on the invariant planes of
    complex eigenvalue pairs.
    """
    B = np.asarray(B, dtype=float)
    Bp = np.asarray(Bp, dtype=float)
    d = B.shape[0]
    if d < 2:
        raise ValueError("dimension must be at least 2")
    spaces, planes = _eigen_classes(B, tol)
    rejected = []
    # 1-dimensional eigendirections: functional graph under Bp
    atoms = [s["basis"][:, 0] for s in spaces if s["basis"].shape[1] == 1]
    succ = []
    for a in atoms:
        img = Bp @ a
        nxt = None
        for k, b in enumerate(atoms):
            if _line_distance(img, b) <= tol:
                nxt = k
                break
        succ.append(nxt)
    for start in range(len(atoms)):
        seen = []
        k = start
        while k is not None and k not in seen:
            seen.append(k)
            k = succ[k]
        if k is not None and k == start:
            pts = np.array([atoms[i] for i in seen])
            return {"verdict": "Exists", "class": "eigendirection-cycle",
                    "witness": ProjectiveCloud(pts, np.full(len(seen), 1.0 / len(seen)))}
    if atoms:
        rejected.append({"class": "eigendirections", "count": len(atoms), "reason": "no cycle under B'"})
    # eigenspaces of dimension >= 2
    for s in spaces:
        Q = s["basis"]
        if Q.shape[1] < 2:
            continue
        N = _restrict_to(Bp, Q, tol)
        if N is not None:
            w, V = np.linalg.eig(N)
            real = [i for i in range(len(w)) if abs(w[i].imag) <= tol * max(1.0, abs(w[i]))]
            if real:
                v = Q @ np.real(V[:, real[0]])
                return {"verdict": "Exists", "class": "eigenspace",
                        "witness": ProjectiveCloud(v[None, :], [1.0])}
            Mi = np.stack([np.real(V[:, 0]), np.imag(V[:, 0])], axis=1)
            return {"verdict": "Exists", "class": "eigenspace-plane",
                    "witness": _conformal_uniform(Q @ Mi)}
        # an eigenvector of Bp inside the space still gives a common point mass
        w, V = np.linalg.eig(Bp)
        for i in range(len(w)):
            if abs(w[i].imag) > tol * max(1.0, abs(w[i])):
                continue
            v = np.real(V[:, i])
            if np.linalg.norm(v - Q @ (Q.T @ v)) <= tol:
                return {"verdict": "Exists", "class": "eigenspace",
                        "witness": ProjectiveCloud(v[None, :], [1.0])}
        rejected.append({"class": "eigenspace", "dim": Q.shape[1], "reason": "B' has no invariant line in it"})
    # complex planes
    for p in planes:
        M = p["frame"]
        N = _restrict_to(Bp, M, tol)
        if N is not None:
            # Bp acts on the plane; the conjugated uniform measure is invariant iff N is conformal
            G = N.T @ N
            if abs(G[0, 1]) <= tol * abs(G[0, 0]) and abs(G[0, 0] - G[1, 1]) <= tol * abs(G[0, 0]):
                return {"verdict": "Exists", "class": "complex-plane", "witness": _conformal_uniform(M)}
            reason = "B' is not conformal on the plane"
        else:
            reason = "B' does not preserve the plane"
        rejected.append({"class": "complex-plane", "eigenvalue": str(p["eigenvalue"]), "reason": reason})
    return {"verdict": "NoneFound", "certificate": rejected}


def projective_stationary_probe(coc: LocallyConstantCocycle, base_word: Sequence[int],
                                extra_maps: Sequence = (), iterations: int = 200, particles: int = 64,
                                seed: int = 0, tol: float = 1e-6, bunching: tuple | None = None,
                                init: str = "uniform") -> dict:
    """Push a particle cloud by the period map at a periodic base point (and
    optional holonomy matrices, chosen at random per particle); report the
    change in the second-moment matrix after the last step.
    """
    if bunching is not None:
        C, eps = bunching
        fb = fiber_bunching_check(coc, C, eps)
        if not fb["passed"]:
            raise PreconditionFailed("fiber bunching fails for the supplied constants", worst=fb["worst"]["ratio"])
    x = SymbolicPoint.periodic(base_word)
    P = coc.product(x, len(base_word))
    maps = [P] + [np.asarray(m, dtype=float) for m in extra_maps]
    d = coc.d
    rng = np.random.default_rng(seed)
    if init == "uniform" and d == 2:
        cloud = _conformal_uniform(np.eye(2), particles)
    else:
        cloud = ProjectiveCloud(rng.normal(size=(particles, d)), np.full(particles, 1.0 / particles))
    resid = math.inf
    for _ in range(iterations):
        choice = rng.integers(len(maps), size=particles) if len(maps) > 1 else np.zeros(particles, dtype=int)
        new = np.stack([maps[c] @ v for c, v in zip(choice, cloud.points)])
        nxt = ProjectiveCloud(new, cloud.weights)
        resid = float(np.abs(nxt.moment() - cloud.moment()).max())
        cloud = nxt
    report = {"cloud": cloud, "residual": resid, "iterations": iterations}
    if resid > tol:
        raise NotConverged("particle cloud is not stationary", residual=resid, report=report)
    return report
