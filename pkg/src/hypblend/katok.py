"""Katok-style extraction of horseshoes on symbolic systems.

Points are eventually periodic sequences (``SymbolicPoint``) with the metric
d(x, y) = 2^{-min{|i| : x_i != y_i}}.  An open ball of radius 2^{-b} is the
central cylinder on coordinates -b..b, and d_{f,n}(x, y) < 2^{-j} means x, y
agree on coordinates -j..n-1+j.

In ``select_return_set`` the carrier X is the finite set of periodic points
of period m (every point of X returns to X at time m).  Words of length m are
enumerated as integer codes, most significant digit first, so ascending
codes are lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cocycle import SymbolicPoint, agree_from
from .errors import (
    CardinalityShortfall,
    GapTooLarge,
    LengthOverflow,
    SearchExhausted,
    SeparationFailure,
)
from .subshift import ParryMeasure, SubshiftOfFiniteType, admissible_words, parry_measure

CODE_CAP = 1 << 25


def point_distance(x: SymbolicPoint, y: SymbolicPoint, k: int = 0) -> float:
    """d(f^k x, f^k y)."""
    if agree_from(x, y) == -math.inf:
        return 0.0
    pad = max(len(x.left), len(y.left), len(x.right), len(y.right)) * max(len(x.right), len(y.right), 1)
    lo = min(x.start, y.start, k) - pad - 1
    hi = max(x.end, y.end, k) + pad + 1
    # scan outward from k; the first disagreement is usually close
    for r in range(max(k - lo, hi - k) + 1):
        if (k - r >= lo and x.at(k - r) != y.at(k - r)) or (k + r <= hi and x.at(k + r) != y.at(k + r)):
            return math.ldexp(1.0, -r)
    return 0.0


def dyn_distance(x: SymbolicPoint, y: SymbolicPoint, n: int) -> float:
    """max over k = 0..n-1 of d(f^k x, f^k y)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return max(point_distance(x, y, k) for k in range(n))


# ---------------------------------------------------------------------------
# entropy from covers


def _cylinder_masses(sft: SubshiftOfFiniteType, measure: ParryMeasure, length: int, cap: int) -> tuple:
    words = admissible_words(sft, length, cap=cap)
    arr = np.array(words, dtype=np.int64)
    mass = measure.stationary[arr[:, 0]].copy()
    for k in range(length - 1):
        mass *= measure.transition_probs[arr[:, k], arr[:, k + 1]]
    return arr, mass


def entropy_estimate(sft: SubshiftOfFiniteType, n: int, rho_depth: int, beta: float,
                     measure: ParryMeasure | None = None, cap: int = 10**7) -> dict:
    """Cover and separation counts for d_{f,n}-balls of radius 2^{-rho_depth}.

    Balls are cylinders on coordinates -j..n-1+j, so the cheapest cover of
    mass >= beta takes the heaviest cylinders first.  The separated set picks
    one point per cylinder of that carrier, scanning lexicographically.
    """
    if n < 1 or rho_depth < 0:
        raise ValueError("need n >= 1 and rho_depth >= 0")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if measure is None:
        measure = parry_measure(sft)
    length = n + 2 * rho_depth
    words, mass = _cylinder_masses(sft, measure, length, cap)
    order = np.argsort(-mass, kind="stable")
    cum = np.cumsum(mass[order])
    target = beta * (1 - 1e-12)
    upper = int(np.searchsorted(cum, target, side="left")) + 1
    upper = min(upper, len(words))
    carrier = np.sort(order[:upper])
    # greedy separated set inside the carrier: keep a word if its window is new
    seen = set()
    lower = 0
    for idx in carrier:
        key = words[idx].tobytes()
        if key not in seen:
            seen.add(key)
            lower += 1
    return {
        "n": n,
        "rho": math.ldexp(1.0, -rho_depth),
        "beta": beta,
        "lower": lower,
        "upper": upper,
        "lower_rate": math.log(lower) / n,
        "upper_rate": math.log(upper) / n,
        "carrier_mass": float(cum[upper - 1]),
    }


# ---------------------------------------------------------------------------
# return sets


class _Codes:
    """Vectorised digit access for base-A codes of length m."""

    def __init__(self, codes: np.ndarray, base: int, m: int):
        self.codes = codes
        self.base = base
        self.m = m
        self._pow2 = base & (base - 1) == 0
        self._bits = base.bit_length() - 1

    def digit(self, i: int, subset: np.ndarray | None = None) -> np.ndarray:
        """Symbol at coordinate i of the periodic point (cyclic)."""
        c = self.codes if subset is None else subset
        pos = self.m - 1 - (i % self.m)
        if self._pow2:
            return (c >> (pos * self._bits)) & (self.base - 1)
        return (c // self.base ** pos) % self.base

    def window_key(self, lo: int, hi: int, subset: np.ndarray | None = None) -> np.ndarray:
        key = np.zeros(len(self.codes if subset is None else subset), dtype=np.int64)
        for i in range(lo, hi + 1):
            key = key * self.base + self.digit(i, subset)
        return key


def _decode(code: int, base: int, m: int) -> tuple:
    out = []
    for _ in range(m):
        out.append(code % base)
        code //= base
    return tuple(reversed(out))


@dataclass
class ReturnSet:
    sft: SubshiftOfFiniteType
    N: int
    m: int
    ball_depth: int
    center: tuple
    codes: np.ndarray
    separation_depth: int
    psi: list
    psi_means: list
    gamma: float
    delta: float
    h: float
    counts: dict = field(default_factory=dict)
    chain: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(len(self.codes))

    @property
    def rho(self) -> float:
        return math.ldexp(1.0, -self.separation_depth)

    def word(self, k: int) -> tuple:
        return _decode(int(self.codes[k]), self.sft.alphabet_size, self.m)

    def point(self, k: int) -> SymbolicPoint:
        return SymbolicPoint.periodic(self.word(k))

    def verify(self, sample: int = 200, seed: int = 0) -> dict:
        """Re-check the three certified properties without the pipeline's shortcuts."""
        return verify_return_set(self, sample, seed)

    def summary(self) -> dict:
        return {
            "N": self.N, "m": self.m, "ball_depth": self.ball_depth, "center": list(self.center),
            "size": self.size, "rho": self.rho, "gamma": self.gamma, "delta": self.delta, "h": self.h,
            "threshold": math.exp(self.N * (self.h - self.delta)),
            "counts": self.counts, "chain": self.chain, "certificates": self.certificates,
        }


def select_return_set(sft: SubshiftOfFiniteType, delta: float, xi: float, m: int, gamma: float = 0.5,
                      rho_depth: int = 3, ball_depth: int = 0, psi: Sequence[Sequence[int]] = ((0,),),
                      measure: ParryMeasure | None = None) -> ReturnSet:
    """Return-set pipeline on the period-m periodic points of ``sft``.

    Stages: X (admissible cyclic words), X^0_m (some return time n in
    [m, (1+xi)m) lands in the starting ball), X_m (Birkhoff averages of every
    cylinder indicator psi stay within gamma/2 of its mean for all n >= m),
    E_m (greedy lexicographic (m, rho)-separated set), V_n, then the densest
    ball.  Raises CardinalityShortfall if #Y does not exceed exp(N(h - delta)).
    """
    if measure is None:
        measure = parry_measure(sft)
    h = measure.entropy_rate()
    if not xi < delta / (h + 4):
        raise ValueError(f"xi = {xi} must be below delta/(h+4) = {delta / (h + 4)}")
    if m < 1 or ball_depth < 0 or rho_depth < 0:
        raise ValueError("m >= 1, ball_depth >= 0, rho_depth >= 0 required")
    psi = [tuple(c) for c in psi]
    if any(len(c) - 1 > rho_depth for c in psi):
        raise ValueError("rho must resolve every test function (cylinder length - 1 <= rho_depth)")
    A = sft.alphabet_size
    if A ** m > CODE_CAP:
        raise LengthOverflow(f"{A}^{m} codes exceed the cap {CODE_CAP}", count=A ** m, cap=CODE_CAP)
    T = sft.transitions.astype(bool)
    all_codes = np.arange(A ** m, dtype=np.int64)
    cx = _Codes(all_codes, A, m)
    ok = np.ones(len(all_codes), dtype=bool)
    for k in range(m):
        ok &= T[cx.digit(k), cx.digit(k + 1)]
    codes = all_codes[ok]
    del all_codes, ok
    counts = {"X": int(len(codes))}
    if not len(codes):
        raise CardinalityShortfall("no periodic points of period m", achieved=0, counts=counts)
    cx = _Codes(codes, A, m)
    b = ball_depth
    home = cx.window_key(-b, b)
    n_hi = math.ceil((1 + xi) * m)  # n ranges over m <= n < (1 + xi) m
    n_range = [n for n in range(m, n_hi) if n < (1 + xi) * m]
    returns = {n: cx.window_key(n - b, n + b) == home for n in n_range}
    x0 = np.zeros(len(codes), dtype=bool)
    for r in returns.values():
        x0 |= r
    counts["X0_m"] = int(x0.sum())
    # Birkhoff test.  With n = k m + r the deviation is a Moebius function of k,
    # so its sup over n >= m is attained at the least admissible k or in the limit.
    good = x0.copy()
    means = [measure.cylinder_measure(c) for c in psi]
    for c, mu in zip(psi, means):
        def hit(j):
            out = np.ones(len(codes), dtype=bool)
            for t, sym in enumerate(c):
                out &= cx.digit(j + t) == sym
            return out

        S = np.zeros(len(codes), dtype=np.int16)
        for j in range(1, m + 1):
            S += hit(j)
        dev = np.abs(S / m - mu)
        Sr = np.zeros(len(codes), dtype=np.int16)
        for r in range(1, m):
            Sr += hit(r)
            np.maximum(dev, np.abs((S + Sr) / (m + r) - mu), out=dev)
        good &= dev < gamma / 2
        del S, Sr, dev
    counts["X_m"] = int(good.sum())
    xm_codes = codes[good]
    # separation: d_{f,m} >= rho iff the windows -j..m-1+j differ; a period-m
    # window of length >= m determines the point, so distinct codes are separated
    sep_key = _Codes(xm_codes, A, m).window_key(0, m - 1)
    _, first = np.unique(sep_key, return_index=True)
    e_codes = xm_codes[np.sort(first)]
    counts["E_m"] = int(len(e_codes))
    ce = _Codes(e_codes, A, m)
    e_home = ce.window_key(-b, b)
    v_sizes = {n: int((ce.window_key(n - b, n + b) == e_home).sum()) for n in n_range}
    counts["V_n"] = {str(n): v for n, v in v_sizes.items()}
    if not v_sizes:
        raise CardinalityShortfall("empty return-time range", achieved=0, counts=counts)
    N = max(n_range, key=lambda n: (v_sizes[n], -n))
    vmask = ce.window_key(N - b, N + b) == e_home
    v_codes = e_codes[vmask]
    v_home = e_home[vmask]
    counts["V_N"] = int(len(v_codes))
    if not len(v_codes):
        raise CardinalityShortfall("V_N is empty", achieved=0, counts=counts)
    keys, cnt = np.unique(v_home, return_counts=True)
    best = keys[int(np.argmax(cnt))]
    y_codes = v_codes[v_home == best]
    counts["Y"] = int(len(y_codes))
    t = int(len(admissible_words(sft, 2 * b + 1)))
    counts["balls"] = t
    center = _decode(int(best), A, 2 * b + 1)
    threshold = math.exp(N * (h - delta))
    chain = {
        "V_N_vs_E_over_xi_m": [counts["V_N"], counts["E_m"] / (xi * m)],
        "V_N_ok": counts["V_N"] >= counts["E_m"] / (xi * m),
        "Y_vs_V_over_t": [counts["Y"], counts["V_N"] / t],
        "Y_ok": counts["Y"] >= counts["V_N"] / t,
        "X_m_fraction": counts["X_m"] / counts["X"],
        "X_m_above_half": counts["X_m"] > counts["X"] / 2,
        "m_above_log_t_over_xi": m > math.log(t) / xi,
    }
    if not counts["Y"] > threshold:
        raise CardinalityShortfall(f"#Y = {counts['Y']} does not exceed {threshold:.6g}",
                                   achieved=counts["Y"], threshold=threshold, counts=counts, chain=chain)
    ret = ReturnSet(sft=sft, N=N, m=m, ball_depth=b, center=center, codes=y_codes,
                    separation_depth=rho_depth, psi=psi, psi_means=means, gamma=gamma, delta=delta, h=h,
                    counts=counts, chain=chain)
    ret.certificates = verify_return_set(ret)
    return ret


def verify_return_set(ret: ReturnSet, sample: int = 200, seed: int = 0) -> dict:
    """Separation, return and Birkhoff checks.

    The full set is checked from an explicit digit matrix; a random sample is
    re-checked with SymbolicPoint evaluation and pairwise dyn_distance.
    """
    A, m, N, b, j = ret.sft.alphabet_size, ret.m, ret.N, ret.ball_depth, ret.separation_depth
    codes = ret.codes
    digits = np.empty((len(codes), m), dtype=np.uint8)
    for k in range(m):
        digits[:, k] = (codes // A ** (m - 1 - k)) % A
    idx = lambda lo, hi: np.arange(lo, hi + 1) % m
    # separation on coordinates -j..N-1+j
    cols = idx(-j, N - 1 + j)
    if len(cols) * math.log2(A) <= 62:
        key = np.zeros(len(codes), dtype=np.int64)
        for col in cols:
            key = key * A + digits[:, col]
        separated = len(np.unique(key)) == len(codes)
    else:
        separated = len(np.unique(digits[:, cols], axis=0)) == len(codes)
    center = np.array(ret.center)
    returns = bool((digits[:, idx(N - b, N + b)] == center).all()) and bool(
        (digits[:, idx(-b, b)] == center).all())
    birk_ok = True
    worst = 0.0
    for c, mu in zip(ret.psi, ret.psi_means):
        total = np.zeros(len(codes))
        for jj in range(1, N + 1):
            total += (digits[:, idx(jj, jj + len(c) - 1)] == np.array(c)).all(axis=1)
        dev = np.abs(total / N - mu)
        worst = max(worst, float(dev.max()))
        birk_ok &= bool((dev < ret.gamma / 2).all())
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(codes), size=min(sample, len(codes)), replace=False)
    pts = [ret.point(int(k)) for k in pick]
    spot_sep = all(dyn_distance(pts[a], pts[a + 1], N) >= ret.rho for a in range(len(pts) - 1))
    ball = SymbolicPoint.periodic(ret.center, start=-b) if b else SymbolicPoint.periodic(ret.center)
    spot_ret = all(point_distance(p, ball.shift(-N), N) < math.ldexp(1.0, -b) for p in pts)
    return {"separated": bool(separated and spot_sep), "returns": bool(returns and spot_ret),
            "birkhoff": bool(birk_ok), "worst_birkhoff_deviation": worst}


# ---------------------------------------------------------------------------
# assembly


def assemble_horseshoe(ret: ReturnSet, h=None, n_pairs: int = 20, steps: int = 1000, seed: int = 0) -> dict:
    """Full shift over the alphabet Y (words of length N), entropy (1/N) log #Y.

    With an affine horseshoe ``h`` the codes are realised by shadowing: the
    Y-words are read as branch itineraries, random codes of total length >=
    ``steps`` are concatenated, and each shadow orbit must stay within
    C0 eps of its pseudo-orbit (C0 = theta, eps = largest segment gap).
    """
    size = ret.size
    entropy = math.log(size) / ret.N if size else -math.inf
    out = {"alphabet": size, "N": ret.N, "entropy": entropy, "target": ret.h - ret.delta,
           "exceeds_target": entropy > ret.h - ret.delta, "degenerate": size <= 1}
    if size <= 1:
        return out
    rng = np.random.default_rng(seed)
    K = max(2, math.ceil(steps / ret.N))
    if h is None:
        # symbolic: concatenations are exact, so distinct codes give distinct points
        worst = math.inf
        for _ in range(n_pairs):
            a = rng.integers(size, size=K)
            bcode = a.copy()
            pos = int(rng.integers(K))
            bcode[pos] = (a[pos] + 1 + rng.integers(size - 1)) % size
            wa = sum((ret.word(int(k)) for k in a), ())
            wb = sum((ret.word(int(k)) for k in bcode), ())
            if not ret.sft.is_admissible(wa + wa[:1]) or not ret.sft.is_admissible(wb + wb[:1]):
                raise SeparationFailure("concatenation is not admissible")
            pa, pb = SymbolicPoint.periodic(wa), SymbolicPoint.periodic(wb)
            dist = max(point_distance(pa, pb, pos * ret.N + k) for k in range(ret.N))
            worst = min(worst, dist)
            if dist < ret.rho:
                raise SeparationFailure("two codes give rho-close orbits", distance=dist, rho=ret.rho)
        out["min_code_separation"] = worst
        out["injective_on_pairs"] = n_pairs
        return out
    from .shadowing import concatenate_segments

    theta = 1.0 / (1.0 - math.exp(-h.kappa))
    words = {}
    max_dev = 0.0
    max_resid = 0.0
    min_sep = math.inf
    bound = 0.0
    for _ in range(n_pairs):
        a = rng.integers(size, size=K)
        bcode = a.copy()
        pos = int(rng.integers(1, K - 1)) if K > 2 else 0
        bcode[pos] = (a[pos] + 1 + rng.integers(size - 1)) % size
        used = sorted(set(a.tolist()) | set(bcode.tolist()))
        local = {k: i for i, k in enumerate(used)}
        ws = [ret.word(k) for k in used]
        for k, w in zip(used, ws):
            words[k] = w
        try:
            ca = concatenate_segments(h, ws, [local[int(k)] for k in a])
            cb = concatenate_segments(h, ws, [local[int(k)] for k in bcode])
        except GapTooLarge as exc:
            raise SeparationFailure("segment gap too large for shadowing", **exc.details) from exc
        eps = max(ca.max_gap, cb.max_gap)
        c0eps = theta * eps
        bound = max(bound, c0eps)
        for c in (ca, cb):
            max_dev = max(max_dev, c.orbit.deviation)
            max_resid = max(max_resid, c.orbit.residual)
            if c.orbit.deviation > c0eps * (1 + 1e-9) + 1e-12:
                raise SeparationFailure("shadow orbit leaves the C0 eps tube", deviation=c.orbit.deviation,
                                        bound=c0eps)
        sep = float(np.abs(ca.orbit.points - cb.orbit.points).max())
        min_sep = min(min_sep, sep)
        if not sep > 2 * c0eps:
            raise SeparationFailure("two codes yield points closer than 2 C0 eps", distance=sep,
                                    bound=2 * c0eps)
    out.update({"theta": theta, "max_deviation": max_dev, "max_residual": max_resid,
                "tube": bound, "min_code_separation": min_sep, "injective_on_pairs": n_pairs,
                "steps": K * ret.N})
    return out


# ---------------------------------------------------------------------------
# marker refinement


def _is_primitive(w: tuple) -> bool:
    n = len(w)
    return all(w != w[p:] + w[:p] for p in range(1, n) if n % p == 0)


def _occurrences(pattern: tuple, text: tuple) -> list:
    k = len(pattern)
    return [i for i in range(len(text) - k + 1) if text[i:i + k] == pattern]


def marker_refine(sft: SubshiftOfFiniteType, N: int, delta: float, symbol: int | None = None,
                  ell_max: int = 64, cap: int = 10**6, check_blocks: int = 200, seed: int = 0) -> dict:
    """Block code x L(0) x L(1) ... x L(ell-1) with L(0) = L(1) = L0 and the rest from L'.

    ``x`` is a symbol with x L x admissible for the words L of length N-1.
    Proximity at depth 0 means equality of words.  Returns the full-shift
    subsystem (alphabet L'^(ell-2), period N ell) with its entropy and the
    disjointness certificate for the shifts 1 <= i < N ell.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    from .subshift import top_entropy

    h = top_entropy(sft)
    if h <= 1e-12:
        word = tuple(admissible_words(sft, 1)[0])
        return {"degenerate": True, "entropy": 0.0, "h": h, "orbit": list(word)}
    syms = range(sft.alphabet_size) if symbol is None else [symbol]
    best = None
    for s in syms:
        L = [w for w in admissible_words(sft, N - 1, cap=cap) if sft.allows(s, w[0]) and sft.allows(w[-1], s)]
        if best is None or len(L) > len(best[1]):
            best = (s, L)
    s, L = best
    attrition = {"L": len(L), "L_target": math.exp(N * (h - delta / 4))}
    L0 = None
    for w in L:
        text = w + (s,) + w
        if _is_primitive((s,) + w) and _occurrences(w, text) == [0, N]:
            L0 = w
            break
    if L0 is None:
        raise SearchExhausted("no word with exact minimal period N and clean self-overlap", attrition=attrition)
    text = L0 + (s,) + L0
    banned = {text[i:i + N - 1] for i in range(N + 1)}
    Lp = [w for w in L if w not in banned]
    attrition["L_prime"] = len(Lp)
    attrition["L_prime_target"] = math.exp(N * (h - delta / 2))
    if len(Lp) < 2:
        raise SearchExhausted("the filtered family has fewer than two words", attrition=attrition)
    rate = math.log(len(Lp)) / N
    ell = None
    for e in range(3, ell_max + 1):
        if (e - 2) / e * rate >= h - delta:
            ell = e
            break
    if ell is None:
        raise SearchExhausted(f"no block length up to {ell_max} reaches entropy h - delta", attrition=attrition,
                              rate=rate)
    entropy = (ell - 2) / ell * rate
    # structural certificate: a misaligned copy of (x L0 x L0) would force a filtered
    # word or L0 itself to sit inside L0 x L0 at an offset 1..N-1
    structural = all(text[o:o + N - 1] not in set(Lp) for o in range(1, N)) and all(
        text[o:o + N - 1] != L0 for o in range(1, N))
    # direct scan of random block concatenations
    rng = np.random.default_rng(seed)
    marker = (s,) + L0 + (s,) + L0
    period = N * ell
    scan_ok = True
    for _ in range(check_blocks):
        seq = ()
        for _b in range(3):
            seq += marker
            for _k in range(ell - 2):
                seq += (s,) + Lp[int(rng.integers(len(Lp)))]
        if any(i % period for i in _occurrences(marker, seq)):
            scan_ok = False
            break
    return {
        "degenerate": False,
        "h": h,
        "symbol": s,
        "N": N,
        "L0": list(L0),
        "ell": ell,
        "period": period,
        "alphabet_log_size": (ell - 2) * math.log(len(Lp)),
        "entropy": entropy,
        "target": h - delta,
        "attrition": attrition,
        "disjoint_structural": structural,
        "disjoint_scan": scan_ok,
        "filtered_words": [list(w) for w in Lp],
    }
