"""Subshifts of finite type.

Entropy and the maximal-entropy (Parry) measure, lexicographic word
enumeration, marker words, and the block construction that embeds a full
shift of nearly full entropy into a transitive SFT.

Words are plain tuples of integer symbols.  Entropy is in nats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    EmptySubshift,
    LengthOverflow,
    NoMarker,
    NotConverged,
    NotTransitive,
    ParseError,
    SearchExhausted,
)

Word = tuple

DEFAULT_WORD_CAP = 10**7


@dataclass(frozen=True)
class SubshiftOfFiniteType:
    transitions: np.ndarray

    def __post_init__(self):
        a = np.array(self.transitions, dtype=np.int64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError("transition matrix must be square and nonempty")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("transition matrix must be 0-1")
        a.setflags(write=False)
        object.__setattr__(self, "transitions", a)

    @property
    def alphabet_size(self) -> int:
        return self.transitions.shape[0]

    @classmethod
    def full_shift(cls, n: int) -> "SubshiftOfFiniteType":
        return cls(np.ones((n, n), dtype=np.int64))

    @classmethod
    def golden_mean(cls) -> "SubshiftOfFiniteType":
        return cls(np.array([[1, 1], [1, 0]]))

    def allows(self, a: int, b: int) -> bool:
        return bool(self.transitions[a, b])

    def is_admissible(self, word: Sequence[int]) -> bool:
        n = self.alphabet_size
        if any(not 0 <= s < n for s in word):
            return False
        return all(self.transitions[a, b] for a, b in zip(word, word[1:]))

    def pruned(self) -> tuple["SubshiftOfFiniteType", list[int]]:
        """Drop symbols with no successor or no predecessor, repeatedly.

        Returns the pruned shift and the surviving original labels.
        """
        keep = list(range(self.alphabet_size))
        a = self.transitions
        while keep:
            sub = a[np.ix_(keep, keep)]
            alive = (sub.sum(axis=1) > 0) & (sub.sum(axis=0) > 0)
            if alive.all():
                return SubshiftOfFiniteType(sub), keep
            keep = [s for s, ok in zip(keep, alive) if ok]
        raise EmptySubshift("pruning removed every symbol")

    def is_transitive(self) -> bool:
        ncomp, _ = connected_components(self.transitions, directed=True, connection="strong")
        if ncomp != 1:
            return False
        return bool(self.transitions.any())

    def to_text(self) -> str:
        rows = [" ".join(str(int(v)) for v in row) for row in self.transitions]
        return "\n".join([f"sft {self.alphabet_size}", *rows]) + "\n"

    def to_json(self) -> dict:
        return {"alphabet_size": self.alphabet_size, "transitions": self.transitions.tolist()}


def parse_sft(text: str) -> SubshiftOfFiniteType:
    """Parse the ``sft <n>`` text format, or its JSON equivalent."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
            sft = SubshiftOfFiniteType(np.array(data["transitions"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"bad sft json: {exc}") from exc
        if "alphabet_size" in data and data["alphabet_size"] != sft.alphabet_size:
            raise ParseError("alphabet_size does not match the matrix", line=1)
        return sft
    lines = [ln.split("#")[0].strip() for ln in text.splitlines()]
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not numbered:
        raise ParseError("empty sft description", line=1)
    lineno, head = numbered[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != "sft" or not parts[1].isdigit():
        raise ParseError("expected header 'sft <alphabet_size>'", line=lineno)
    n = int(parts[1])
    rows = []
    for lineno, ln in numbered[1:]:
        cells = ln.split() if " " in ln else list(ln)
        if len(cells) != n or any(c not in ("0", "1") for c in cells):
            raise ParseError(f"row must have {n} entries of 0/1", line=lineno)
        rows.append([int(c) for c in cells])
    if len(rows) != n:
        raise ParseError(f"expected {n} rows, got {len(rows)}", line=numbered[-1][0])
    return SubshiftOfFiniteType(np.array(rows))


def word_str(word: Sequence[int]) -> str:
    if all(0 <= s < 10 for s in word):
        return "".join(str(s) for s in word)
    return ",".join(str(s) for s in word)


# ---------------------------------------------------------------------------
# Perron data


def _perron_vector(m: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray, bool]:
    """Power iteration on m + I with Collatz-Wielandt bracketing.

    For a nonnegative matrix and a positive vector x, min (Mx)_i/x_i and
    max (Mx)_i/x_i bracket the spectral radius, so the stopping rule is a
    certified relative gap rather than a step-size heuristic.
    """
    shifted = m.astype(float) + np.eye(m.shape[0])
    x = np.ones(m.shape[0])
    lo, hi = 0.0, math.inf
    for _ in range(max_iter):
        y = shifted @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        x = y / y.max()
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi) - 1.0, x, True
        if x.min() <= 0:
            break
    return 0.5 * (lo + hi) - 1.0, x, False


def perron_root(sft: SubshiftOfFiniteType, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    pruned, _ = sft.pruned()
    a = pruned.transitions
    lam, _, ok = _perron_vector(a, tol, max_iter)
    if ok:
        return lam
    if a.shape[0] <= 64:
        return float(np.max(np.abs(np.linalg.eigvals(a.astype(float)))))
    raise NotConverged("power iteration did not bracket the Perron root", estimate=lam)


def top_entropy(sft: SubshiftOfFiniteType, tol: float = 1e-12) -> float:
    """Log of the Perron root of the pruned transition matrix."""
    lam = perron_root(sft, tol)
    return math.log(lam)


@dataclass(frozen=True)
class ParryMeasure:
    stationary: np.ndarray
    transition_probs: np.ndarray
    perron_root: float

    def entropy_rate(self) -> float:
        p = self.transition_probs
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
        return float(-(self.stationary[:, None] * p * logs).sum())

    def cylinder_measure(self, word: Sequence[int]) -> float:
        if not word:
            return 1.0
        m = float(self.stationary[word[0]])
        for a, b in zip(word, word[1:]):
            m *= float(self.transition_probs[a, b])
        return m

    def sample_path(self, length: int, rng: np.random.Generator) -> np.ndarray:
        n = len(self.stationary)
        out = np.empty(length, dtype=np.int64)
        out[0] = rng.choice(n, p=self.stationary)
        cum = np.cumsum(self.transition_probs, axis=1)
        u = rng.random(length)
        for i in range(1, length):
            row = cum[out[i - 1]]
            out[i] = min(int(np.searchsorted(row, u[i] * row[-1], side="right")), n - 1)
        return out


def parry_measure(sft: SubshiftOfFiniteType, tol: float = 1e-13) -> ParryMeasure:
    if not sft.is_transitive():
        raise NotTransitive("Parry measure needs a strongly connected transition graph")
    a = sft.transitions
    lam_r, r, ok_r = _perron_vector(a, tol, 200_000)
    lam_l, l, ok_l = _perron_vector(a.T, tol, 200_000)
    if not (ok_r and ok_l):
        w, v = np.linalg.eig(a.astype(float))
        k = int(np.argmax(w.real))
        lam_r = float(w[k].real)
        r = np.abs(v[:, k].real)
        w2, v2 = np.linalg.eig(a.T.astype(float))
        l = np.abs(v2[:, int(np.argmax(w2.real))].real)
    lam = lam_r
    # one exact Perron step sharpens the eigenvector pair
    r = a @ r / lam if ok_r else r
    p = a * r[None, :] / (lam * r[:, None])
    p = p / p.sum(axis=1, keepdims=True)
    pi = l * r
    pi = pi / pi.sum()
    return ParryMeasure(stationary=pi, transition_probs=p, perron_root=lam)


def bernoulli_measure(weights: Sequence[float]) -> ParryMeasure:
    """Product measure on a full shift, in the same Markov-chain container."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    p = np.tile(w, (len(w), 1))
    return ParryMeasure(stationary=w.copy(), transition_probs=p, perron_root=float(len(w)))


# ---------------------------------------------------------------------------
# words


def count_words(sft: SubshiftOfFiniteType, n: int, first: int | None = None,
                last: int | None = None) -> int:
    """Exact number of admissible words of length n (Python integers)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = sft.transitions.tolist()
    size = sft.alphabet_size
    vec = [0] * size
    for s in range(size):
        if first is None or s == first:
            vec[s] = 1
    for _ in range(n - 1):
        vec = [sum(vec[i] for i in range(size) if a[i][j]) for j in range(size)]
    if last is not None:
        return vec[last]
    return sum(vec)


def iter_admissible_words(sft: SubshiftOfFiniteType, n: int, first: int | None = None,
                          last: int | None = None) -> Iterator[Word]:
    """Lexicographic generator; dead branches are pruned by reachability."""
    size = sft.alphabet_size
    a = sft.transitions.astype(bool)
    # reach[k][s]: from s, `last` is reachable in exactly k steps
    if last is None:
        reach = None
    else:
        reach = [np.zeros(size, dtype=bool) for _ in range(n)]
        reach[0][last] = True
        for k in range(1, n):
            reach[k] = (a.astype(int) @ reach[k - 1].astype(int)) > 0
    succ = [[b for b in range(size) if a[s, b]] for s in range(size)]
    starts = range(size) if first is None else [first]

    def ok(sym: int, remaining: int) -> bool:
        return reach is None or bool(reach[remaining][sym])

    stack: list[tuple[int, ...]] = []
    for s in reversed(list(starts)):
        if ok(s, n - 1):
            stack.append((s,))
    while stack:
        w = stack.pop()
        if len(w) == n:
            yield w
            continue
        rem = n - len(w) - 1
        for b in reversed(succ[w[-1]]):
            if ok(b, rem):
                stack.append(w + (b,))


def admissible_words(sft: SubshiftOfFiniteType, n: int, first: int | None = None,
                     last: int | None = None, cap: int = DEFAULT_WORD_CAP) -> list[Word]:
    if n < 1:
        raise ValueError("n must be >= 1")
    total = count_words(sft, n, first, last)
    if total > cap:
        raise LengthOverflow(f"{total} words of length {n} exceed the cap {cap}",
                             count=total, cap=cap)
    return list(iter_admissible_words(sft, n, first, last))


def occurrences(pattern: Sequence[int], text: Sequence[int]) -> list[int]:
    m = len(pattern)
    pat = tuple(pattern)
    return [i for i in range(len(text) - m + 1) if tuple(text[i:i + m]) == pat]


def returning_words(sft: SubshiftOfFiniteType, n: int, star: int) -> Iterator[Word]:
    """Words of length n starting at star that can be followed by star."""
    for w in iter_admissible_words(sft, n, first=star):
        if sft.allows(w[-1], star):
            yield w


def is_marker(word: Sequence[int]) -> bool:
    """The word occurs in its own square only at the two trivial positions.

    Length-one words are rejected: their two occurrences are adjacent, so the
    property says nothing about synchronization.
    """
    if len(word) < 2:
        return False
    return len(occurrences(word, tuple(word) + tuple(word))) == 2


def find_marker_word(sft: SubshiftOfFiniteType, n: int, star: int) -> Word:
    examined = 0
    if n < 2:
        raise NoMarker(f"no marker of length {n} at symbol {star}", examined=examined, n=n, star=star)
    for w in returning_words(sft, n, star):
        examined += 1
        if is_marker(w):
            return w
    raise NoMarker(f"no marker of length {n} at symbol {star}", examined=examined, n=n, star=star)


# ---------------------------------------------------------------------------
# full-shift extraction


@dataclass(frozen=True)
class FullShiftExtraction:
    """Blocks ``marker marker f_1 ... f_{q-2}`` with each f_i a free word.

    The embedded full shift has alphabet size ``count``; its words are
    generated on demand because the count grows like |free|^(q-2).
    """

    chunk: int
    blocks: int
    marker: Word
    free_words: tuple
    star: int
    symbols: tuple = field(default=())

    @property
    def k(self) -> int:
        return self.chunk * self.blocks

    @property
    def count(self) -> int:
        return len(self.free_words) ** (self.blocks - 2)

    @property
    def entropy(self) -> float:
        return (self.blocks - 2) * math.log(len(self.free_words)) / self.k

    def word(self, index: int) -> Word:
        """The index-th word in lexicographic order of its free part."""
        if not 0 <= index < self.count:
            raise IndexError(index)
        f = len(self.free_words)
        digits = []
        for _ in range(self.blocks - 2):
            index, d = divmod(index, f)
            digits.append(d)
        out = self.marker + self.marker
        for d in reversed(digits):
            out = out + self.free_words[d]
        return self._relabel(out)

    def words(self, limit: int | None = None) -> Iterator[Word]:
        stop = self.count if limit is None else min(limit, self.count)
        for i in range(stop):
            yield self.word(i)

    def _relabel(self, w: Word) -> Word:
        if not self.symbols:
            return w
        return tuple(self.symbols[s] for s in w)


def marker_positions_aligned(ext: FullShiftExtraction) -> bool:
    """Certify that marker.marker occurs in any concatenation only at block starts.

    A concatenation is a sequence of chunks of length n, each the marker or a
    free word, following the periodic pattern (M, M, F, ..., F).  A window of
    length 2n starting at offset r inside chunk a is covered by chunks a, a+1
    and (when r > 0) a+2.  Every case is enumerated: the middle chunk must
    equal a specific length-n factor of marker.marker, and free words are by
    construction not such factors.
    """
    n, q, w0 = ext.chunk, ext.blocks, ext.marker
    mm = w0 + w0
    free = set(ext.free_words)
    if w0 in free:
        return False
    chunk_kinds = ["M", "M"] + ["F"] * (q - 2)

    def options(kind):
        return [w0] if kind == "M" else ext.free_words

    for a in range(q):
        k0, k1, k2 = chunk_kinds[a], chunk_kinds[(a + 1) % q], chunk_kinds[(a + 2) % q]
        for r in range(n):
            middle_needed = mm[n - r:2 * n - r]
            if middle_needed not in options(k1):
                continue
            if r == 0:
                # window is exactly chunks a, a+1
                if k0 == "M" and k1 == "M" and a % q != 0:
                    return False
                if k0 == "F" and w0 in free:
                    return False
                continue
            # left piece: suffix of chunk a, right piece: prefix of chunk a+2
            left_ok = any(c[r:] == mm[:n - r] for c in options(k0))
            right_ok = any(c[:r] == mm[2 * n - r:] for c in options(k2))
            if left_ok and right_ok:
                return False
    return True


def _minimal_blocks(free_count: int, n: int, target: float, q_max: int) -> int | None:
    if free_count < 1:
        return None
    lf = math.log(free_count)
    for q in range(3, q_max + 1):
        if (q - 2) * lf / (q * n) > target:
            return q
    return None


def extract_full_shift(sft: SubshiftOfFiniteType, epsilon: float, n_min: int | None = None,
                       n_max: int = 24, q_max: int = 4096,
                       free_cap: int = 200_000) -> FullShiftExtraction:
    """Embed a full shift with entropy above h_top - epsilon.

    Scans chunk lengths n from n_min upward; for each n and start symbol the
    lexicographically least marker is taken, the free words are the
    returning words that are not factors of marker.marker, and the smallest
    number of chunks per block meeting the entropy floor is used.  The
    overall period k = n * blocks is minimized over the scan.
    """
    pruned, keep = sft.pruned()
    if not pruned.is_transitive():
        raise NotTransitive("extraction needs a transitive subshift")
    h = top_entropy(pruned)
    target = h - epsilon
    if n_min is None:
        n_min = max(1, math.ceil(math.log2(max(pruned.alphabet_size, 1)))) + 2
    best = None
    tried = []
    for n in range(n_min, n_max + 1):
        if best is not None and 3 * n >= best[0]:
            break
        for star in range(pruned.alphabet_size):
            try:
                w0 = find_marker_word(pruned, n, star)
            except NoMarker:
                tried.append((n, star, "no marker"))
                continue
            total = count_words(pruned, n + 1, first=star, last=star)
            mm = w0 + w0
            factors = {mm[i:i + n] for i in range(n + 1)}
            excluded = sum(1 for f in factors if f[0] == star and pruned.allows(f[-1], star))
            free_count = total - excluded
            q = _minimal_blocks(free_count, n, target, q_max)
            tried.append((n, star, free_count))
            if q is None or free_count > free_cap:
                continue
            k = n * q
            if best is None or k < best[0]:
                best = (k, n, q, star, w0)
    if best is None:
        raise SearchExhausted(
            f"no extraction with entropy above {target:.6g} for n in [{n_min}, {n_max}]",
            n_range=(n_min, n_max), entropy=h, tried=tried)
    _, n, q, star, w0 = best
    mm = w0 + w0
    factors = {mm[i:i + n] for i in range(n + 1)}
    free = tuple(w for w in returning_words(pruned, n, star) if w not in factors)
    symbols = tuple(keep) if keep != list(range(sft.alphabet_size)) else ()
    return FullShiftExtraction(chunk=n, blocks=q, marker=w0, free_words=free, star=star,
                               symbols=symbols)
