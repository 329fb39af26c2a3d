"""Equivariant matching of surplus symbols to deficient intervals.

Colors: a good length-k interval is green and carries one surplus symbol, a
length-1 interval is red and needs one, a bad length-k interval is maroon and
needs k.  Reading red and maroon as opening brackets (of weight 1 and k) and
green as a closing bracket, every closer is claimed by the nearest opener to
its left that still has room.  This is the fixpoint of repeatedly letting each
opener grab the green immediately to its right and deleting what is used up.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from enum import IntEnum

import numpy as np

from .errors import DomainError
from .intervals import IntervalDecomposition


class Color(IntEnum):
    GREEN = 0
    RED = 1
    MAROON = 2


@dataclass(frozen=True, eq=False)
class ColorSequence:
    colors: np.ndarray
    k: int
    offset: int = 0  # interval index of colors[0]

    def __post_init__(self):
        object.__setattr__(self, "colors", np.asarray(self.colors, dtype=np.int8).reshape(-1))

    def __len__(self):
        return int(self.colors.size)

    @classmethod
    def from_letters(cls, letters: str, k: int) -> "ColorSequence":
        code = {"g": Color.GREEN, "r": Color.RED, "m": Color.MAROON}
        return cls(np.array([code[c] for c in letters.replace(" ", "")], dtype=np.int8), k)


@dataclass(frozen=True, eq=False)
class MatchingAssignment:
    """Partners of every red/maroon index, with unresolved indices.

    Array form: ``opener_of[g]`` is the index claiming green ``g`` (-1 if
    none) and ``slot_of[g]`` its rank among that opener's partners.
    ``partners`` maps an opener to its greens in increasing order; an
    unresolved opener lists the partners found inside the window so far.
    """

    opener_of: np.ndarray
    slot_of: np.ndarray
    unresolved_mask: np.ndarray
    openers: np.ndarray
    k: int
    offset: int = 0

    @cached_property
    def partners(self) -> dict:
        out = {int(o) + self.offset: [] for o in self.openers}
        for g in np.flatnonzero(self.opener_of >= 0):
            out[int(self.opener_of[g]) + self.offset].append(int(g) + self.offset)
        return {o: tuple(v) for o, v in out.items()}

    @cached_property
    def unresolved(self) -> frozenset:
        return frozenset((np.flatnonzero(self.unresolved_mask) + self.offset).tolist())

    def resolved(self, i: int) -> bool:
        return i in self.partners and i not in self.unresolved

    def donor_map(self) -> dict:
        """green index -> (opener index, slot) for every claimed green."""
        g = np.flatnonzero(self.opener_of >= 0)
        return {int(x) + self.offset: (int(self.opener_of[x]) + self.offset, int(self.slot_of[x])) for x in g}


def color_intervals(decomposition: IntervalDecomposition, goodness) -> ColorSequence:
    """Colors of the complete intervals; ``goodness`` is per interval (ignored for length 1)."""
    good = np.asarray(goodness, dtype=bool)
    if good.shape != decomposition.lengths.shape:
        raise DomainError("goodness needs one flag per interval")
    keep = decomposition.complete
    lengths = decomposition.lengths[keep]
    colors = np.where(lengths == 1, Color.RED, np.where(good[keep], Color.GREEN, Color.MAROON))
    return ColorSequence(colors, decomposition.k)


def quotas(colors: ColorSequence) -> np.ndarray:
    c = colors.colors
    return np.where(c == Color.RED, 1, np.where(c == Color.MAROON, colors.k, 0))


def match_batch(colors: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bracket matching for a 2-D array of equal-length color rows.

    A maroon counts as k unit openers and a red as one.  The depth after each
    unit is a cumulative sum clamped at zero; a green that finds depth zero is
    unclaimed.  At a fixed depth level the openers and the greens that close
    them alternate, so sorting by (row, level, position) pairs them up.

    Returns ``(opener_of, slot_of, unresolved)`` with the shapes of ``colors``.
    """
    colors = np.atleast_2d(np.asarray(colors, dtype=np.int8))
    R, L = colors.shape
    flat = colors.reshape(-1)
    units = np.where(flat == Color.MAROON, k, 1)
    owner = np.repeat(np.arange(flat.size), units)  # flat cell of each unit
    is_open = flat[owner] != Color.GREEN
    row = owner // max(L, 1)
    step = np.where(is_open, 1, -1).astype(np.int64)
    csum = np.cumsum(step)
    first = np.searchsorted(row, np.arange(R))
    base = np.concatenate([[0], csum])[first]
    S = csum - np.repeat(base, np.diff(np.concatenate([first, [row.size]])))
    big = 2 * (row.size + 1)
    runmin = np.minimum.accumulate(S - row * big) + row * big
    depth = S - np.minimum(runmin, 0)
    prev = np.concatenate([[0], depth[:-1]])
    prev[first[first < row.size]] = 0
    matched_close = ~is_open & (prev > 0)
    level = np.where(is_open, depth, prev)
    keep = np.flatnonzero(is_open | matched_close)
    order = keep[np.lexsort((keep, level[keep], row[keep]))]
    nxt = np.concatenate([order[1:], [-1]])
    pair = is_open[order] & (nxt >= 0)
    pair[pair] &= ~is_open[nxt[pair]] & (row[nxt[pair]] == row[order[pair]]) & \
        (level[nxt[pair]] == level[order[pair]])
    open_units, close_units = order[pair], nxt[pair]

    opener_of = np.full(flat.size, -1, dtype=np.int64)
    opener_of[owner[close_units]] = owner[open_units] % max(L, 1)
    claimed = np.bincount(owner[open_units], minlength=flat.size)
    # slot: rank of each claimed green among its opener's greens, left to right
    slot_of = np.full(flat.size, -1, dtype=np.int64)
    g = owner[close_units]
    o = owner[open_units]
    srt = np.lexsort((g, o))
    g, o = g[srt], o[srt]
    starts = np.concatenate([[0], np.flatnonzero(o[1:] != o[:-1]) + 1])
    run_start = np.repeat(starts, np.diff(np.concatenate([starts, [o.size]])))
    slot_of[g] = np.arange(o.size) - run_start
    quota = np.where(flat == Color.RED, 1, np.where(flat == Color.MAROON, k, 0))
    unresolved = (flat != Color.GREEN) & (claimed < quota)
    return opener_of.reshape(R, L), slot_of.reshape(R, L), unresolved.reshape(R, L)


def mesalkin_match(colors: ColorSequence) -> MatchingAssignment:
    """Match every green to the nearest opener on its left that still has room."""
    opener_of, slot_of, unres = match_batch(colors.colors[None, :], colors.k)
    openers = np.flatnonzero(colors.colors != Color.GREEN)
    return MatchingAssignment(opener_of[0], slot_of[0], unres[0], openers, colors.k, colors.offset)


def _from_partners(colors: ColorSequence, partners: dict, unresolved) -> MatchingAssignment:
    n = len(colors)
    off = colors.offset
    opener_of = np.full(n, -1, dtype=np.int64)
    slot_of = np.full(n, -1, dtype=np.int64)
    for o, greens in partners.items():
        for j, g in enumerate(sorted(greens)):
            opener_of[g - off] = o - off
            slot_of[g - off] = j
    mask = np.zeros(n, dtype=bool)
    mask[[u - off for u in unresolved]] = True
    return MatchingAssignment(opener_of, slot_of, mask, np.flatnonzero(colors.colors != Color.GREEN),
                              colors.k, off)


def mesalkin_match_stack(colors: ColorSequence) -> MatchingAssignment:
    """Reference stack implementation (one opener entry per red/maroon)."""
    k = colors.k
    off = colors.offset
    partners: dict[int, list] = {}
    stack: list[list[int]] = []  # [index, remaining quota]
    for i, c in enumerate(colors.colors.tolist()):
        if c == 0:
            if stack:
                top = stack[-1]
                partners[top[0]].append(i + off)
                top[1] -= 1
                if not top[1]:
                    stack.pop()
        else:
            partners[i + off] = []
            stack.append([i + off, 1 if c == 1 else k])
    return _from_partners(colors, partners, [o for o, _ in stack])


def mesalkin_match_passes(colors: ColorSequence) -> MatchingAssignment:
    """Literal pass-by-pass version of :func:`mesalkin_match` (quadratic)."""
    k = colors.k
    off = colors.offset
    c = colors.colors.tolist()
    alive = list(range(len(c)))
    need = {i: (1 if ci == 1 else k) for i, ci in enumerate(c) if ci != 0}
    partners: dict[int, list] = {i + off: [] for i in need}
    while True:
        claimed = set()
        for left, right in zip(alive, alive[1:]):
            if c[left] != 0 and c[right] == 0 and need[left] > 0:
                partners[left + off].append(right + off)
                need[left] -= 1
                claimed.add(right)
        if not claimed:
            break
        alive = [i for i in alive if i not in claimed and not (c[i] != 0 and need[i] == 0)]
    return _from_partners(colors, partners, [i + off for i, n in need.items() if n > 0])


def check_assignment(colors: ColorSequence, m: MatchingAssignment) -> None:
    """Assert quota, rightness and single use; raises AssertionError."""
    c = colors.colors
    off = colors.offset
    used = set()
    q = quotas(colors)
    for o, greens in m.partners.items():
        assert c[o - off] != Color.GREEN, f"green {o} has partners"
        if o not in m.unresolved:
            assert len(greens) == q[o - off], f"opener {o} has {len(greens)} of {q[o - off]} partners"
        for g in greens:
            assert g > o, f"partner {g} left of {o}"
            assert c[g - off] == Color.GREEN, f"partner {g} not green"
            assert g not in used, f"green {g} used twice"
            used.add(g)


def excess_walk(colors: ColorSequence, j: int, n: int) -> int:
    """#green - k #maroon - #red over indices j..n inclusive."""
    if not 0 <= j <= n < len(colors):
        raise DomainError("indices out of range")
    seg = colors.colors[j:n + 1]
    return int((seg == Color.GREEN).sum() - colors.k * (seg == Color.MAROON).sum() - (seg == Color.RED).sum())


def synthetic_colors(n: int, k: int, good_prob: float, seed: int, kmode_stay: float | None = None) -> ColorSequence:
    """Colors from an idealized interval process.

    Intervals of length k are good with probability ``good_prob``.  A bad
    length-k interval is followed by one red interval with probability
    ``1 - kmode_stay`` (default ``kmode_stay = 1``: no reds).  This is a test
    generator for the matching, not a model of any particular source.
    """
    rng = np.random.default_rng(seed)
    good = rng.random(n) < good_prob
    colors = np.where(good, Color.GREEN, Color.MAROON).astype(np.int8)
    if kmode_stay is not None:
        red_after = (~good) & (rng.random(n) >= kmode_stay)
        out = np.empty(n + red_after.sum(), dtype=np.int8)
        pos = np.arange(n) + np.concatenate([[0], np.cumsum(red_after)[:-1]])
        out[pos] = colors
        out[pos[red_after] + 1] = Color.RED
        colors = out[:n]
    return ColorSequence(colors, k)
