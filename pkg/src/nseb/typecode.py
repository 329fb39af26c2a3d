"""Types, type classes and the exactly uniform block code.

A word of length k has type ``counts`` (symbol multiplicities).  Words of one
type are ranked lexicographically; the codebook keeps the first ``m * B`` words
of every type close to ``p`` and maps a kept word to ``rank mod B``, which hits
each value of ``range(B)`` exactly ``m`` times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityError, DomainError, InfeasibleCodebook, NotGoodError
from .source import MarginalSchedule, entropy_bits

EXACT_LIMIT = 10 ** 7


def _frac(x) -> Fraction:
    # floats are read through their shortest decimal repr, so 0.2 means 1/5
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(repr(float(x)))


def word_counts(word: Sequence[int], size: int) -> tuple[int, ...]:
    c = [0] * size
    for s in word:
        c[int(s)] += 1
    return tuple(c)


def empirical_measure(word: Sequence[int], size: int) -> tuple[Fraction, ...]:
    """Empirical law of a word as exact fractions with denominator len(word)."""
    k = len(word)
    if k < 1:
        raise DomainError("empty word")
    return tuple(Fraction(c, k) for c in word_counts(word, size))


def _counts_from_measure(q, k: int) -> tuple[int, ...]:
    out = []
    for x in q:
        val = _frac(x) * k
        if val.denominator != 1 or val < 0:
            raise DomainError(f"{x} is not a multiple of 1/{k}")
        out.append(int(val))
    if sum(out) != k:
        raise DomainError("type does not sum to 1")
    return tuple(out)


def multinomial(counts: Sequence[int]) -> int:
    out, n = 1, 0
    for c in counts:
        n += c
        out *= math.comb(n, c)
    return out


def type_class_size(q, k: int) -> int:
    """Number of words of length k with empirical measure q."""
    return multinomial(_counts_from_measure(q, k))


def compositions(k: int, size: int) -> Iterator[tuple[int, ...]]:
    """All count vectors of ``size`` nonnegative parts summing to k, lexicographic."""
    if size == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in compositions(k - first, size - 1):
            yield (first,) + rest


def rank_in_class(word: Sequence[int], size: int) -> int:
    """Lexicographic rank of ``word`` among the words sharing its type."""
    counts = list(word_counts(word, size))
    remaining = len(word)
    total = multinomial(counts)
    rank = 0
    for s in word:
        s = int(s)
        # words of this type starting with a smaller symbol at this position
        for t in range(s):
            if counts[t]:
                rank += total * counts[t] // remaining
        total = total * counts[s] // remaining
        counts[s] -= 1
        remaining -= 1
    return rank


def rank_rows(words: np.ndarray, size: int) -> np.ndarray:
    """:func:`rank_in_class` for every row of ``words``, vectorized while it fits int64."""
    words = np.asarray(words, dtype=np.int64)
    n, k = words.shape
    if size ** k * max(k, 1) >= 2 ** 62:
        return np.array([rank_in_class(w, size) for w in words.tolist()], dtype=object)
    counts = np.stack([(words == s).sum(axis=1) for s in range(size)], axis=1)
    total = np.array([multinomial(c) for c in counts.tolist()], dtype=np.int64)
    rank = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    for pos in range(k):
        s = words[:, pos]
        remaining = k - pos
        below = np.arange(size)[None, :] < s[:, None]
        rank += ((total[:, None] * counts) // remaining * below).sum(axis=1)
        total = total * counts[rows, s] // remaining
        counts[rows, s] -= 1
    return rank


def unrank_in_class(counts: Sequence[int], rank: int) -> list[int]:
    """Inverse of :func:`rank_in_class`."""
    counts = list(counts)
    remaining = sum(counts)
    total = multinomial(counts)
    if not 0 <= rank < total:
        raise DomainError(f"rank {rank} outside type class of size {total}")
    word = []
    while remaining:
        for t, c in enumerate(counts):
            if not c:
                continue
            block = total * c // remaining
            if rank < block:
                word.append(t)
                total = block
                counts[t] -= 1
                remaining -= 1
                break
            rank -= block
    return word


@dataclass(frozen=True)
class TypeEntry:
    counts: tuple[int, ...]
    size: int
    m: int
    kept: int
    tv: Fraction

    @property
    def discarded(self) -> int:
        return self.size - self.kept


@dataclass(frozen=True, eq=False)
class TypeCodebook:
    """Admissible types with their kept ranks; ``psi`` is rank mod ``B_size``."""

    k: int
    epsilon: float
    delta: Fraction
    p: tuple
    marker_a: int
    m_bits: int
    entries: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.p)

    @property
    def B_size(self) -> int:
        return 1 << self.m_bits

    @property
    def entropy_bits(self) -> float:
        return entropy_bits(self.p)

    @property
    def admissible_types(self) -> list[tuple[int, ...]]:
        return list(self.entries)

    @property
    def good_count(self) -> int:
        return sum(e.kept for e in self.entries.values())

    def is_good(self, word: Sequence[int]) -> bool:
        if len(word) != self.k:
            return False
        e = self.entries.get(word_counts(word, self.size))
        return e is not None and e.kept > 0 and rank_in_class(word, self.size) < e.kept

    def psi(self, word: Sequence[int]) -> int:
        if len(word) != self.k:
            raise NotGoodError(f"word length {len(word)} != {self.k}")
        e = self.entries.get(word_counts(word, self.size))
        if e is None:
            raise NotGoodError("type not admissible")
        r = rank_in_class(word, self.size)
        if r >= e.kept:
            raise NotGoodError(f"rank {r} beyond kept prefix {e.kept}")
        return r % self.B_size

    def classify(self, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Goodness and code for each row of ``words``; code is -1 off the good set."""
        words = np.asarray(words)
        n = words.shape[0]
        good = np.zeros(n, dtype=bool)
        codes = np.full(n, -1, dtype=np.int64)
        if n == 0 or not self.entries:
            return good, codes
        A, k = self.size, self.k
        counts = np.zeros((n, A), dtype=np.int64)
        for s in range(A):
            counts[:, s] = (words == s).sum(axis=1)
        radix = (k + 1) ** np.arange(A, dtype=np.int64)
        keys = counts @ radix
        adm = np.array([np.dot(c, radix) for c in self.entries], dtype=np.int64)
        rows = np.flatnonzero(np.isin(keys, adm))
        if rows.size == 0:
            return good, codes
        kept = dict(zip(adm.tolist(), (e.kept for e in self.entries.values())))
        ranks = rank_rows(words[rows], A)
        limit = np.array([kept[x] for x in keys[rows].tolist()], dtype=object)
        ok = np.array([r < lim for r, lim in zip(ranks.tolist(), limit.tolist())], dtype=bool)
        good[rows[ok]] = True
        codes[rows[ok]] = np.array([r % self.B_size for r in np.asarray(ranks)[ok].tolist()], dtype=np.int64)
        return good, codes

    def good_words(self) -> tuple[np.ndarray, np.ndarray]:
        """Every kept word and its code, rows ordered by type then rank."""
        if self.size ** self.k > EXACT_LIMIT:
            raise CapacityError(f"|A|^k = {self.size ** self.k} exceeds the exact-enumeration limit")
        rows, codes = [], []
        for c, e in self.entries.items():
            for r in range(e.kept):
                rows.append(unrank_in_class(c, r))
                codes.append(r % self.B_size)
        return np.array(rows, dtype=np.int16).reshape(-1, self.k), np.array(codes, dtype=np.int64)

    def summary(self) -> dict:
        return {
            "k": self.k, "epsilon": self.epsilon, "delta": float(self.delta), "delta_exact": str(self.delta),
            "p": [float(x) for x in self.p], "entropy_bits": self.entropy_bits, "m_bits": self.m_bits,
            "B_size": self.B_size, "good_words": self.good_count,
            "types": [{"counts": list(c), "tv": float(e.tv), "size": e.size, "m": e.m, "kept": e.kept,
                       "discarded": e.discarded} for c, e in self.entries.items()],
        }


def default_delta(p) -> Fraction:
    """Half the TV distance from p to the nearest point mass, capped at 1/5."""
    return min(Fraction(1, 5), 1 - max(_frac(x) for x in p))


def entropy_budget(p, k: int, epsilon: float) -> int:
    """m = ceil(k (H(p) - epsilon)), so that B = 2^m."""
    x = k * (entropy_bits(p) - epsilon)
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 else math.ceil(x)


def build_codebook(p, k: int, epsilon: float, delta=None, marker_a: int = 0) -> TypeCodebook:
    """Codebook over the denominator-k types within TV distance ``delta`` of p.

    TV distance here is the plain L1 sum.  Raises :class:`InfeasibleCodebook`
    when k < ceil(2/epsilon) or some admissible type has fewer than B words.
    """
    if k < 1 or epsilon <= 0:
        raise DomainError("need k >= 1 and epsilon > 0")
    pf = tuple(_frac(x) for x in p)
    if sum(pf) != 1:
        raise DomainError("p must sum to 1")
    if k < math.ceil(2 / epsilon):
        raise InfeasibleCodebook(f"k={k} below ceil(2/epsilon)={math.ceil(2 / epsilon)}")
    delta = default_delta(pf) if delta is None else _frac(delta)
    m_bits = entropy_budget(pf, k, epsilon)
    if m_bits < 1:
        raise InfeasibleCodebook(f"entropy budget k(H(p)-epsilon) = {k * (entropy_bits(pf) - epsilon):.3f} < 1 bit")
    B = 1 << m_bits
    entries = {}
    for c in compositions(k, len(pf)):
        tv = sum(abs(Fraction(ci, k) - pi) for ci, pi in zip(c, pf))
        if tv >= delta:
            continue
        if c[marker_a] == k:
            raise InfeasibleCodebook(f"delta={delta} admits the all-marker word")
        size = multinomial(c)
        if size < B:
            raise InfeasibleCodebook(f"type {c} has {size} words < B = 2^{m_bits} = {B}")
        m = size // B
        entries[c] = TypeEntry(c, size, m, m * B, tv)
    return TypeCodebook(k, float(epsilon), delta, tuple(float(x) for x in pf), marker_a, m_bits, entries)


def psi_encode(word: Sequence[int], codebook: TypeCodebook) -> int:
    return codebook.psi(word)


# -- masses under the oblique product --------------------------------------------

def _chunked_word_probs(schedule: MarginalSchedule, indices: np.ndarray, words: np.ndarray,
                        budget: int = 1 << 24):
    k = words.shape[1]
    step = max(1, budget // max(1, words.shape[0] * k))
    cols = np.arange(k)
    for lo in range(0, indices.size, step):
        idx = indices[lo:lo + step]
        marg = schedule.marginals((idx[:, None] + cols).reshape(-1)).reshape(idx.size, k, -1)
        # probs[i, w] = prod_j marg[i, j, words[w, j]]
        yield lo, np.prod(marg[:, cols, words], axis=2)


@dataclass(frozen=True)
class MassEstimate:
    value: float
    ci_low: float
    ci_high: float
    samples: int

    def __float__(self):
        return self.value


def good_masses(schedule: MarginalSchedule, indices, codebook: TypeCodebook) -> np.ndarray:
    """Exact rho_i x ... x rho_{i+k-1} mass of the good set for each index."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if schedule.size ** codebook.k > EXACT_LIMIT:
        raise CapacityError("exact mass needs |A|^k <= 10^7")
    words, _ = codebook.good_words()
    out = np.zeros(indices.size)
    if not words.shape[0]:
        return out
    for lo, probs in _chunked_word_probs(schedule, indices, words):
        out[lo:lo + probs.shape[0]] = probs.sum(axis=1)
    return out


def good_mass(schedule: MarginalSchedule, i: int, codebook: TypeCodebook, method: str = "exact",
              samples: int = 100_000, seed: int = 0):
    """Mass of the good set for the block starting at index i.

    ``method="montecarlo"`` returns a :class:`MassEstimate` with a 95% interval.
    """
    if method == "exact":
        return float(good_masses(schedule, [i], codebook)[0])
    if method != "montecarlo":
        raise DomainError("method is 'exact' or 'montecarlo'")
    rng = np.random.default_rng(seed)
    marg = schedule.marginals(np.arange(i, i + codebook.k))
    cdf = np.cumsum(marg, axis=1)
    u = rng.random((samples, codebook.k))
    words = np.minimum((u[..., None] >= cdf[None]).sum(-1), schedule.size - 1)
    good, _ = codebook.classify(words)
    est = good.mean()
    half = 1.96 * math.sqrt(max(est * (1 - est), 1.0 / samples) / samples)
    est = float(est)
    return MassEstimate(est, max(0.0, est - half), min(1.0, est + half), samples)


def uniformity_defects(schedule: MarginalSchedule, indices, codebook: TypeCodebook) -> np.ndarray:
    """P(psi = c | good) - 1/B for each index (rows) and code c (columns)."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if schedule.size ** codebook.k > EXACT_LIMIT:
        raise CapacityError("exact defects need |A|^k <= 10^7")
    words, codes = codebook.good_words()
    B = codebook.B_size
    out = np.full((indices.size, B), np.nan)
    if not words.shape[0]:
        return out
    onehot = np.zeros((codes.size, B))
    onehot[np.arange(codes.size), codes] = 1.0
    for lo, probs in _chunked_word_probs(schedule, indices, words):
        per_code = probs @ onehot
        out[lo:lo + probs.shape[0]] = per_code / per_code.sum(axis=1, keepdims=True) - 1.0 / B
    return out


def uniformity_defect(schedule: MarginalSchedule, i: int, codebook: TypeCodebook, c: int | None = None):
    row = uniformity_defects(schedule, [i], codebook)[0]
    return row if c is None else float(row[c])
