"""Shadowing of pseudo-orbits for finite windows of hyperbolic maps.

Each step is g_n(x) = L_n x + b_n + r_n(x) with L_n = diag(L_n^u, L_n^s).
A pseudo-orbit (x_n) has jumps e_n = x_{n+1} - g_n(x_n).  The true orbit
y_n = x_n - u_n is recovered from the bounded solution of

    u_{n+1} = L_n u_n + e_n,

summing stable components forward and unstable components backward, with
zero deviation imposed at the two ends of the window (the clamp).

Norms are sup-norms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AdmissibilityViolated,
    GapTooLarge,
    InadmissibleWord,
    NotAnOrbit,
    NotConverged,
    NotHyperbolic,
)


def _opnorm_inf(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.abs(m).sum(axis=1).max())


@dataclass
class HyperbolicSequence:
    """Maps g_n for n = n_min .. n_max - 1 acting on R^(du+ds).

    ``linear_u[i]`` / ``linear_s[i]`` / ``offsets[i]`` describe g_{n_min+i}.
    ``remainders`` are optional callables r_n(x) together with a declared
    C^1 size ``eta`` (supplied by the caller, not verified).
    """

    n_min: int
    linear_u: list
    linear_s: list
    offsets: list
    remainders: list | None = None
    eta: float = 0.0
    kappa: float = field(init=False)

    def __post_init__(self):
        self.linear_u = [np.atleast_2d(np.asarray(m, dtype=float)) if np.size(m) else np.zeros((0, 0))
                         for m in self.linear_u]
        self.linear_s = [np.atleast_2d(np.asarray(m, dtype=float)) if np.size(m) else np.zeros((0, 0))
                         for m in self.linear_s]
        self.offsets = [np.asarray(b, dtype=float) for b in self.offsets]
        if not (len(self.linear_u) == len(self.linear_s) == len(self.offsets)):
            raise ValueError("per-step data must have equal lengths")
        rates = []
        for lu, ls in zip(self.linear_u, self.linear_s):
            if lu.size:
                rates.append(-math.log(_opnorm_inf(np.linalg.inv(lu))))
            if ls.size:
                ns = _opnorm_inf(ls)
                rates.append(math.inf if ns == 0 else -math.log(ns))
        self.kappa = min(rates) if rates else math.inf

    @property
    def steps(self) -> int:
        return len(self.offsets)

    @property
    def n_max(self) -> int:
        return self.n_min + self.steps

    @property
    def du(self) -> int:
        return self.linear_u[0].shape[0] if self.steps else 0

    @property
    def ds(self) -> int:
        return self.linear_s[0].shape[0] if self.steps else 0

    @property
    def theta(self) -> float:
        return 1.0 / (1.0 - math.exp(-self.kappa))

    def linear(self, i: int) -> np.ndarray:
        du, ds = self.du, self.ds
        m = np.zeros((du + ds, du + ds))
        m[:du, :du] = self.linear_u[i]
        m[du:, du:] = self.linear_s[i]
        return m

    def apply(self, i: int, x: np.ndarray) -> np.ndarray:
        y = self.linear(i) @ x + self.offsets[i]
        if self.remainders is not None:
            y = y + self.remainders[i](x)
        return y

    def require_hyperbolic(self):
        if not self.kappa > 0:
            raise NotHyperbolic(f"hyperbolicity margin {self.kappa} is not positive", kappa=self.kappa)

    @classmethod
    def constant(cls, n_min: int, steps: int, lu, ls, offset=None) -> "HyperbolicSequence":
        lu = np.atleast_2d(np.asarray(lu, dtype=float))
        ls = np.atleast_2d(np.asarray(ls, dtype=float))
        d = lu.shape[0] + ls.shape[0]
        b = np.zeros(d) if offset is None else np.asarray(offset, dtype=float)
        return cls(n_min, [lu] * steps, [ls] * steps, [b] * steps)


@dataclass
class PseudoOrbit:
    n_min: int
    points: np.ndarray  # shape (steps + 1, d)

    def jumps(self, seq: HyperbolicSequence) -> np.ndarray:
        return np.array([self.points[i + 1] - seq.apply(i, self.points[i]) for i in range(seq.steps)])

    def epsilon(self, seq: HyperbolicSequence) -> float:
        e = self.jumps(seq)
        return float(np.abs(e).max()) if e.size else 0.0


@dataclass
class ShadowOrbit:
    n_min: int
    points: np.ndarray
    deviation: float
    clamp: str
    residual: float
    iterations: int = 0


def orbit_residual(seq: HyperbolicSequence, points: np.ndarray) -> float:
    if seq.steps == 0:
        return 0.0
    return max(float(np.abs(seq.apply(i, points[i]) - points[i + 1]).max()) for i in range(seq.steps))


def solve_deviation(seq: HyperbolicSequence, e: np.ndarray) -> np.ndarray:
    """Bounded solution of u_{n+1} = L_n u_n + e_n with the end clamps.

    Stable part: u^s at the first index is 0, then forward recursion.
    Unstable part: u^u at the last index is 0, then backward recursion
    u^u_n = (L_n^u)^{-1} (u^u_{n+1} - e^u_n).
    """
    du, ds = seq.du, seq.ds
    steps = seq.steps
    u = np.zeros((steps + 1, du + ds))
    for i in range(steps):
        u[i + 1, du:] = seq.linear_s[i] @ u[i, du:] + e[i, du:]
    for i in range(steps - 1, -1, -1):
        if du:
            u[i, :du] = np.linalg.solve(seq.linear_u[i], u[i + 1, :du] - e[i, :du])
    return u


def shadow_affine(seq: HyperbolicSequence, pseudo: PseudoOrbit) -> ShadowOrbit:
    seq.require_hyperbolic()
    if seq.remainders is not None:
        raise ValueError("shadow_affine needs zero remainders; use shadow_nonlinear")
    if pseudo.points.shape[0] != seq.steps + 1:
        raise ValueError("pseudo-orbit length must be steps + 1")
    e = pseudo.jumps(seq)
    u = solve_deviation(seq, e)
    y = pseudo.points - u
    # one step of iterative refinement: the computed orbit's own jumps are
    # rounding noise, amplified by ||L^u|| in the backward unstable solve
    y = y - solve_deviation(seq, PseudoOrbit(seq.n_min, y).jumps(seq))
    u = pseudo.points - y
    return ShadowOrbit(n_min=seq.n_min, points=y, deviation=float(np.abs(u).max()),
                       clamp="zero-deviation", residual=orbit_residual(seq, y))


def admissibility_bound(kappa: float) -> float:
    return (1.0 - math.exp(-kappa)) / 4.0


def shadow_nonlinear(seq: HyperbolicSequence, pseudo: PseudoOrbit, tol: float = 1e-10,
                     max_iter: int = 100) -> ShadowOrbit:
    """Picard iteration: linear solve with the remainder evaluated on the last iterate."""
    seq.require_hyperbolic()
    if seq.remainders is None:
        orbit = shadow_affine(seq, pseudo)
        return orbit
    bound = admissibility_bound(seq.kappa)
    if not seq.eta < bound:
        raise AdmissibilityViolated(f"declared C1 size {seq.eta} is not below {bound}",
                                    eta=seq.eta, bound=bound)
    x = pseudo.points
    lin_jumps = np.array([x[i + 1] - seq.linear(i) @ x[i] - seq.offsets[i] for i in range(seq.steps)])
    y = x.copy()
    residual = math.inf
    for it in range(1, max_iter + 1):
        e = lin_jumps - np.array([seq.remainders[i](y[i]) for i in range(seq.steps)])
        y = x - solve_deviation(seq, e)
        residual = orbit_residual(seq, y)
        if residual <= tol:
            return ShadowOrbit(n_min=seq.n_min, points=y, deviation=float(np.abs(x - y).max()),
                               clamp="zero-deviation", residual=residual, iterations=it)
    raise NotConverged(f"no convergence in {max_iter} iterations", max_iter=max_iter, residual=residual)


@dataclass
class DecayReport:
    ok: bool
    margins: np.ndarray
    worst_index: int


def uniqueness_decay_check(seq: HyperbolicSequence, orbit_a: np.ndarray, orbit_b: np.ndarray,
                           n1: int, n2: int, orbit_tol: float = 1e-9) -> DecayReport:
    """||z_k - y_k|| <= e^{-kappa(k-n1)}||z_n1 - y_n1|| + e^{-kappa(n2-k)}||z_n2 - y_n2||."""
    seq.require_hyperbolic()
    for name, orb in (("a", orbit_a), ("b", orbit_b)):
        res = orbit_residual(seq, orb)
        if res > orbit_tol:
            raise NotAnOrbit(f"orbit {name} has residual {res}", residual=res)
    i1, i2 = n1 - seq.n_min, n2 - seq.n_min
    if not 0 <= i1 <= i2 <= seq.steps:
        raise ValueError("n1, n2 must lie in the window with n1 <= n2")
    diff = np.abs(np.asarray(orbit_a) - np.asarray(orbit_b)).max(axis=1)
    k = np.arange(i1, i2 + 1)
    rhs = np.exp(-seq.kappa * (k - i1)) * diff[i1] + np.exp(-seq.kappa * (i2 - k)) * diff[i2]
    margins = rhs - diff[i1:i2 + 1]
    # rounding in the orbits themselves is allowed for
    slack = 1e-12 * max(1.0, float(np.abs(orbit_a).max()))
    worst = int(np.argmin(margins))
    return DecayReport(ok=bool((margins >= -slack).all()), margins=margins, worst_index=n1 + worst)


# ---------------------------------------------------------------------------
# concatenation of orbit segments for affine horseshoes


@dataclass
class ConcatenatedOrbit:
    orbit: ShadowOrbit
    itinerary: tuple
    coded_point: np.ndarray
    max_gap: float
    pseudo: np.ndarray


def concatenate_segments(h, words: Sequence[Sequence[int]], code: Sequence[int],
                         gap_bound: float = 1.0, clamp: str = "periodic-ends",
                         ) -> ConcatenatedOrbit:
    """Shadow the pseudo-orbit made of the exact segments coded by ``words``.

    ``h`` is a StandardAffineHorseshoe.  Segment i is the orbit of the
    periodic point with repeated itinerary ``words[code[i]]`` over one period.
    The returned coded point is the shadow point at the start of the
    segment of index len(code)//2 (the middle of the window, where the clamp
    error is smallest).

    Affine shadowing needs no smallness of the jumps, so the default
    ``gap_bound`` only rules out pseudo-orbits that leave the unit cube.
    """
    from .horseshoe import periodic_point

    nwords = len(words)
    for w in words:
        if any(not 0 <= j < h.n_branches for j in w):
            raise InadmissibleWord(f"word {tuple(w)} uses a missing branch")
    if any(not 0 <= c < nwords for c in code):
        raise InadmissibleWord("code refers to a word that is not in Y")
    lengths = {len(w) for w in words}
    if len(lengths) != 1:
        raise InadmissibleWord("all words must share a common length")
    seg_len = lengths.pop()
    starts = [periodic_point(h, tuple(w)) for w in words]
    points = []
    itinerary = []
    for c in code:
        p = starts[c].copy()
        for j in words[c]:
            points.append(p)
            itinerary.append(j)
            p = h.branch_map(j, p)
    # final point closes the last segment
    points.append(starts[code[-1]] if clamp == "periodic-ends" else p)
    pseudo = np.array(points)
    steps = len(itinerary)
    du = h.d_u
    lu = np.diag(h.diag[:du])
    ls = np.diag(h.diag[du:])
    offsets = [h.translation(j) for j in itinerary]
    seq = HyperbolicSequence(0, [lu] * steps, [ls] * steps, offsets)
    # jumps are measured against the branch dynamics
    e = np.array([pseudo[i + 1] - seq.apply(i, pseudo[i]) for i in range(steps)])
    max_gap = float(np.abs(e).max()) if e.size else 0.0
    if max_gap > gap_bound:
        raise GapTooLarge(f"segment gap {max_gap} exceeds {gap_bound}", gap=max_gap, bound=gap_bound)
    orbit = shadow_affine(seq, PseudoOrbit(0, pseudo))
    mid = (len(code) // 2) * seg_len
    return ConcatenatedOrbit(orbit=orbit, itinerary=tuple(itinerary), coded_point=orbit.points[mid],
                             max_gap=max_gap, pseudo=pseudo)
