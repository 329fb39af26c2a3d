"""Marker detection and the alternating decomposition into blocks of length k and 1.

A marker is a run ``a^{2k} b``.  From the right end of a marker onward every
position falls into an interval whose length follows a two-state automaton:

* k-mode: intervals of length k; an interval equal to ``a^k`` is a switch and
  the next interval starts 1-mode;
* 1-mode: intervals of length 1; a symbol other than ``a`` is a switch and the
  next interval starts k-mode.

The marker's right end is a length-1 interval holding ``b``, so a length-k
interval always follows it.  Inside a finite window the decomposition is only
known from the first visible marker onward; ``determined_from`` records that
boundary.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2_contingency

from .errors import DomainError, InsufficientDataError, WindowWarning
from .source import MarginalSchedule, Window, sample_window


def _a_run_ending(is_a: np.ndarray) -> np.ndarray:
    # run[t] = number of consecutive a's ending at t (0 when x_t != a)
    idx = np.arange(is_a.size)
    last_break = np.maximum.accumulate(np.where(is_a, -1, idx))
    return np.where(is_a, idx - last_break, 0)


def find_markers(w: Window, k: int, a: int | None = None, b: int | None = None) -> np.ndarray:
    """Absolute start positions n of the markers ``[n, n+2k]`` inside the window."""
    if k < 1:
        raise DomainError("k must be positive")
    a = w.alphabet.a if a is None else a
    b = w.alphabet.b if b is None else b
    x = w.symbols
    if x.size < 2 * k + 1:
        warnings.warn(f"window of length {x.size} cannot hold a marker for k={k}", WindowWarning, stacklevel=2)
        return np.empty(0, dtype=np.int64)
    run = _a_run_ending(x == a)
    ends = np.flatnonzero(x[1:] == b) + 1
    ends = ends[run[ends - 1] >= 2 * k]
    return (ends - 2 * k + w.start).astype(np.int64)


@dataclass(frozen=True, eq=False)
class IntervalDecomposition:
    """Intervals tiling ``[determined_from, window_end]``.

    ``starts`` are absolute.  ``complete`` is False only for a final length-k
    interval cut off by the window end; its switch flag is then meaningless.
    """

    k: int
    starts: np.ndarray
    lengths: np.ndarray
    switch: np.ndarray
    complete: np.ndarray
    determined_from: int
    window_start: int
    window_end: int
    markers: np.ndarray

    def __len__(self):
        return int(self.starts.size)

    @property
    def intervals(self) -> list[tuple[int, int]]:
        return list(zip(self.starts.tolist(), self.lengths.tolist()))

    def interval_at(self, pos: int) -> int:
        """Index of the interval containing ``pos``, or -1."""
        if not len(self) or pos < self.determined_from or pos > self.window_end:
            return -1
        return int(np.searchsorted(self.starts, pos, side="right") - 1)

    def shifted(self, t: int) -> "IntervalDecomposition":
        return IntervalDecomposition(self.k, self.starts + t, self.lengths, self.switch, self.complete,
                                     self.determined_from + t, self.window_start + t, self.window_end + t,
                                     self.markers + t)

    def to_text(self, w: Window | None = None) -> str:
        """One line per interval: start, length, flags and content."""
        lines = [f"# k={self.k} determined_from={self.determined_from} markers={self.markers.tolist()}"]
        for s, l, sw, c in zip(self.starts, self.lengths, self.switch, self.complete):
            flag = "switch" if sw else "-"
            if not c:
                flag = "undetermined"
            content = ""
            if w is not None:
                content = " ".join(map(str, w.slice(int(s), int(s + l - 1)).tokens()))
            lines.append(f"{s}\t{l}\t{flag}\t{content}")
        return "\n".join(lines)


def decompose(w: Window, k: int, a: int | None = None, b: int | None = None) -> IntervalDecomposition:
    """Alternating intervals of the window, anchored at its first marker."""
    a = w.alphabet.a if a is None else a
    markers = find_markers(w, k, a, b) if len(w) >= 2 * k + 1 else np.empty(0, dtype=np.int64)
    end = w.end
    empty = np.empty(0, dtype=np.int64)
    if markers.size == 0:
        if len(w) >= 2 * k + 1:
            warnings.warn("no marker in window; nothing is determined", WindowWarning, stacklevel=2)
        return IntervalDecomposition(k, empty, empty, empty.astype(bool), empty.astype(bool), end + 1,
                                     w.start, end, markers)
    x = w.symbols
    n = x.size
    is_a = x == a
    # next_non_a[t] = smallest u >= t with x_u != a (n if none)
    nona = np.flatnonzero(~is_a)
    # all-a block starts bucketed by residue mod k for k-mode jumps
    if n >= k:
        csum = np.concatenate([[0], np.cumsum(is_a)])
        block_a = np.flatnonzero(csum[k:] - csum[:-k] == k)
    else:
        block_a = empty
    by_res = [block_a[block_a % k == r] for r in range(k)]

    pieces_s, pieces_l, pieces_sw, pieces_c = [], [], [], []
    t = int(markers[0] + 2 * k - w.start)  # relative position of the first marker's b
    mode_one = True
    while t < n:
        if mode_one:
            j = np.searchsorted(nona, t)
            u = int(nona[j]) if j < nona.size else n
            stop = min(u, n - 1)
            seg = np.arange(t, stop + 1)
            sw = np.zeros(seg.size, dtype=bool)
            if u < n:
                sw[-1] = True
            pieces_s.append(seg); pieces_l.append(np.ones(seg.size, dtype=np.int64))
            pieces_sw.append(sw); pieces_c.append(np.ones(seg.size, dtype=bool))
            t = u + 1
            mode_one = False
        else:
            cand = by_res[t % k]
            j = np.searchsorted(cand, t)
            q = int(cand[j]) if j < cand.size else None
            last = q if q is not None else t + ((n - 1 - t) // k) * k
            seg = np.arange(t, last + 1, k)
            sw = np.zeros(seg.size, dtype=bool)
            comp = np.ones(seg.size, dtype=bool)
            if q is not None:
                sw[-1] = True
            elif seg.size and seg[-1] + k > n:
                comp[-1] = False
            pieces_s.append(seg); pieces_l.append(np.full(seg.size, k, dtype=np.int64))
            pieces_sw.append(sw); pieces_c.append(comp)
            t = (q + k) if q is not None else n
            mode_one = True
    starts = np.concatenate(pieces_s).astype(np.int64) + w.start
    return IntervalDecomposition(k, starts, np.concatenate(pieces_l), np.concatenate(pieces_sw),
                                 np.concatenate(pieces_c), int(starts[0]), w.start, end, markers)


def interval_words(w: Window, dec: IntervalDecomposition, mask: np.ndarray | None = None) -> np.ndarray:
    """Contents of the complete length-k intervals selected by ``mask``, one row each."""
    sel = (dec.lengths == dec.k) & dec.complete
    if mask is not None:
        sel &= mask
    rel = dec.starts[sel] - w.start
    return w.symbols[rel[:, None] + np.arange(dec.k)]


@dataclass(frozen=True)
class LawCheckReport:
    statistic: float
    p_value: float
    dof: int
    n_intervals: int
    interval_class: str

    def to_dict(self) -> dict:
        return dict(statistic=self.statistic, p_value=self.p_value, dof=self.dof,
                    n_intervals=self.n_intervals, interval_class=self.interval_class)


def _word_keys(words: np.ndarray, base: int) -> np.ndarray:
    return words.astype(np.int64) @ (base ** np.arange(words.shape[1] - 1, -1, -1, dtype=np.int64))


def conditional_interval_law_check(schedule: MarginalSchedule, k: int, interval_class: str = "k",
                                   N: int = 10_000, seed: int = 0, window_length: int = 1 << 16,
                                   max_windows: int = 200) -> LawCheckReport:
    """Two-sample chi-square test of harvested interval contents.

    Sample (a) is the content of non-switch intervals of the requested class
    (``"k"`` or ``"1"``) harvested from consecutive sampled windows.  Sample (b)
    is drawn directly at the same positions from the product law conditioned
    to avoid ``a^k`` (class ``"k"``) or to equal ``a`` (class ``"1"``).
    """
    if interval_class not in ("k", "1"):
        raise DomainError("interval_class is 'k' or '1'")
    if N < 10_000:
        raise DomainError("N must be at least 10^4")
    a = schedule.alphabet.a
    length = k if interval_class == "k" else 1
    harvested, positions = [], []
    count = 0
    for t in range(max_windows):
        w = sample_window(schedule, t * window_length, (t + 1) * window_length - 1, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", WindowWarning)
            dec = decompose(w, k)
        sel = (dec.lengths == length) & dec.complete & ~dec.switch
        rel = dec.starts[sel] - w.start
        harvested.append(w.symbols[rel[:, None] + np.arange(length)])
        positions.append(dec.starts[sel])
        count += rel.size
        if count >= N:
            break
    if count < 100:
        raise InsufficientDataError(f"harvested {count} intervals of class {interval_class!r}; need 100")
    obs = np.concatenate(harvested)[:N]
    pos = np.concatenate(positions)[:N]

    rng = np.random.default_rng([int(seed) & ((1 << 63) - 1), 0x5EED])
    ref = np.empty_like(obs)
    todo = np.arange(obs.shape[0])
    cols = pos[:, None] + np.arange(length)
    marg = schedule.marginals(cols.reshape(-1)).reshape(obs.shape[0], length, -1)
    cdf = np.cumsum(marg, axis=-1)
    for _ in range(10_000):
        if not todo.size:
            break
        u = rng.random((todo.size, length))
        draw = np.minimum((u[..., None] >= cdf[todo]).sum(-1), marg.shape[-1] - 1)
        all_a = (draw == a).all(axis=1)
        ok = ~all_a if interval_class == "k" else all_a
        ref[todo[ok]] = draw[ok]
        todo = todo[~ok]
    if todo.size:
        raise InsufficientDataError("rejection sampler did not terminate")

    base = schedule.size
    ko, kr = _word_keys(obs, base), _word_keys(ref, base)
    cats, inv = np.unique(np.concatenate([ko, kr]), return_inverse=True)
    n = ko.size
    table = np.stack([np.bincount(inv[:n], minlength=cats.size), np.bincount(inv[n:], minlength=cats.size)])
    # pool sparse categories so expected counts stay >= 5
    total = table.sum(axis=0)
    sparse = total < 10
    if sparse.any():
        table = np.column_stack([table[:, ~sparse], table[:, sparse].sum(axis=1)])
        table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return LawCheckReport(0.0, 1.0, 0, n, interval_class)
    stat, pval, dof, _ = chi2_contingency(table, correction=False)
    return LawCheckReport(float(stat), float(pval), int(dof), n, interval_class)
