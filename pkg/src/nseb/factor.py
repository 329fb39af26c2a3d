"""The finitary factor: source window to output symbols with coding radii.

For every good length-k interval the code ``psi(word)`` is expanded into k+1
output symbols.  The first k are written on the interval itself; the last one
is donated through the matching to a red interval (its single position) or to
slot ``i`` of a maroon interval (its i-th position).  Anything not written is
unresolved.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, WindowWarning
from .expand import ExpansionPlan, expand_many
from .intervals import IntervalDecomposition, decompose
from .matching import Color, ColorSequence, MatchingAssignment, color_intervals, mesalkin_match
from .source import MarginalSchedule, Window, sample_window
from .typecode import TypeCodebook

UNRESOLVED = -1
BINARY_SENTINEL = 0xFF

Encoder = Callable[[np.ndarray, np.ndarray, TypeCodebook], tuple]


@dataclass(frozen=True, eq=False)
class FactorOutput:
    """Output values and coding radii per absolute position; -1 marks unresolved."""

    start: int
    symbols: np.ndarray
    radius: np.ndarray
    out_alphabet_size: int
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.symbols.size)

    @property
    def end(self) -> int:
        return self.start + len(self) - 1

    @property
    def resolved(self) -> np.ndarray:
        return self.symbols != UNRESOLVED

    def resolved_symbols(self) -> np.ndarray:
        return self.symbols[self.resolved]

    def at(self, pos: int) -> int:
        return int(self.symbols[pos - self.start])

    def to_text(self) -> str:
        idx = np.arange(self.start, self.end + 1)
        sym = self.symbols.astype(object)
        rad = self.radius.astype(object)
        sym[~self.resolved] = "-"
        rad[~self.resolved] = "-"
        return "".join(f"{i}\t{s}\t{r}\n" for i, s, r in zip(idx.tolist(), sym.tolist(), rad.tolist()))

    def to_bytes(self) -> bytes:
        if self.out_alphabet_size > BINARY_SENTINEL:
            raise DomainError("binary format holds at most 255 output symbols")
        return np.where(self.resolved, self.symbols, BINARY_SENTINEL).astype(np.uint8).tobytes()


@dataclass(frozen=True, eq=False)
class Pipeline:
    """Intermediate stages of one extraction, for inspection and tests."""

    window: Window
    decomposition: IntervalDecomposition
    colors: ColorSequence
    codes: np.ndarray
    matching: MatchingAssignment
    output: FactorOutput


def _default_encoder(words, starts, codebook):
    return codebook.classify(words)


def run_pipeline(w: Window, codebook: TypeCodebook, plan: ExpansionPlan,
                 encoder: Encoder | None = None) -> Pipeline:
    """Full extraction keeping every stage.  ``encoder`` replaces psi (for tests)."""
    if plan.k != codebook.k:
        raise ConfigError(f"plan k={plan.k} but codebook k={codebook.k}")
    if w.alphabet is None:
        raise ConfigError("window needs an alphabet")
    if codebook.size != len(w.alphabet):
        raise ConfigError("codebook and window alphabets differ in size")
    k = codebook.k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WindowWarning)
        dec = decompose(w, k)
    n = len(w)
    out = np.full(n, UNRESOLVED, dtype=np.int64)
    rad = np.full(n, UNRESOLVED, dtype=np.int64)
    writes = np.zeros(n, dtype=np.int8)

    complete = dec.complete
    kint = np.flatnonzero((dec.lengths == k) & complete)
    rel = dec.starts[kint] - w.start
    words = w.symbols[rel[:, None] + np.arange(k)]
    good_k, codes_k = (encoder or _default_encoder)(words, dec.starts[kint], codebook)
    good = np.zeros(len(dec), dtype=bool)
    good[kint] = good_k
    codes = np.full(len(dec), -1, dtype=np.int64)
    codes[kint] = codes_k
    colors = color_intervals(dec, good)
    match = mesalkin_match(colors)

    # left end of the latest marker whose b sits at or before each interval start
    marker_b = dec.markers + 2 * k
    def anchor(starts):
        j = np.searchsorted(marker_b, starts, side="right") - 1
        return dec.markers[j]

    greens = np.flatnonzero(colors.colors == Color.GREEN)
    expanded = expand_many(codes[greens], plan) if greens.size else np.empty((0, k + 1), dtype=np.int64)
    starts = dec.starts
    ends = starts + dec.lengths - 1

    if greens.size:
        gs = starts[greens]
        pos = gs[:, None] + np.arange(k)
        L = anchor(gs)[:, None]
        R = ends[greens][:, None]
        out[(pos - w.start).ravel()] = expanded[:, :k].ravel()
        rad[(pos - w.start).ravel()] = np.maximum(pos - L, R - pos).ravel()
        np.add.at(writes, (pos - w.start).ravel(), 1)

    g = np.flatnonzero(match.opener_of >= 0)
    if g.size:
        o = match.opener_of[g]
        slots = starts[o] + match.slot_of[g]
        L = anchor(starts[o])
        row = np.searchsorted(greens, g)
        out[slots - w.start] = expanded[row, k]
        rad[slots - w.start] = np.maximum(slots - L, ends[g] - slots)
        np.add.at(writes, slots - w.start, 1)
    donated = int(g.size)
    if writes.max(initial=0) > 1:
        raise AssertionError("a position was written twice")

    c = colors.colors
    stats = {
        "window_start": w.start, "window_end": w.end, "k": k, "j": plan.j,
        "markers": int(dec.markers.size), "determined_from": dec.determined_from,
        "intervals": int(len(dec)), "green": int((c == Color.GREEN).sum()),
        "red": int((c == Color.RED).sum()), "maroon": int((c == Color.MAROON).sum()),
        "unresolved_openers": int(match.unresolved_mask.sum()), "discarded_extras": int(greens.size - donated),
        "resolved_positions": int((out != UNRESOLVED).sum()),
        "unresolved_positions": int((out == UNRESOLVED).sum()),
    }
    fo = FactorOutput(w.start, out, rad, plan.out_alphabet_size, stats)
    return Pipeline(w, dec, colors, codes, match, fo)


def extract(w: Window, codebook: TypeCodebook, plan: ExpansionPlan, schedule: MarginalSchedule | None = None,
            encoder: Encoder | None = None) -> FactorOutput:
    """Output of the factor on a window.

    ``schedule`` is accepted for symmetry with the sampling side but not used:
    the map reads nothing except the window's symbols.
    """
    if schedule is not None and schedule.size != codebook.size:
        raise ConfigError("schedule and codebook alphabets differ in size")
    return run_pipeline(w, codebook, plan, encoder).output


def coding_radius_profile(output: FactorOutput, R: int | None = None) -> dict:
    """Histogram of coding radii over resolved positions."""
    r = output.radius[output.resolved]
    prof = {"resolved": int(r.size), "unresolved": int(len(output) - r.size)}
    if not r.size:
        prof.update(histogram=[], max=None, mean=None, median=None, tail_fraction=None)
        return prof
    prof.update(histogram=np.bincount(r).tolist(), max=int(r.max()), mean=float(r.mean()),
                median=float(np.median(r)), q99=float(np.quantile(r, 0.99)))
    if R is not None:
        prof["R"] = int(R)
        prof["tail_fraction"] = float((r > R).mean())
    return prof


def thread_cap(default: int | None = None) -> int:
    """Worker count, capped by the NSEB_THREADS environment variable."""
    n = default or os.cpu_count() or 1
    env = os.environ.get("NSEB_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ConfigError(f"NSEB_THREADS={env!r} is not an integer") from None
    return n


def extract_stream(schedule: MarginalSchedule, codebook: TypeCodebook, plan: ExpansionPlan, m: int, n: int,
                   seed: int, chunk: int = 1 << 20, overlap: int | None = None,
                   workers: int | None = None) -> FactorOutput:
    """Chunked extraction over positions ``m..n``.

    Chunk windows extend ``overlap`` (default 8k) positions into their right
    neighbour; values resolved in both must agree, which is asserted.  The
    result does not depend on ``workers``.
    """
    if n < m:
        raise DomainError("empty range")
    overlap = 8 * codebook.k if overlap is None else overlap
    bounds = [(lo, min(n, lo + chunk - 1 + overlap)) for lo in range(m, n + 1, chunk)]

    def one(b):
        return extract(sample_window(schedule, b[0], b[1], seed), codebook, plan)

    workers = thread_cap(workers)
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(bounds))) as ex:
            parts = list(ex.map(one, bounds))
    else:
        parts = [one(b) for b in bounds]
    total = n - m + 1
    sym = np.full(total, UNRESOLVED, dtype=np.int64)
    rad = np.full(total, UNRESOLVED, dtype=np.int64)
    stats: dict = {"chunks": len(parts), "overlap": overlap, "overlap_checked": 0}
    for part in parts:
        sl = slice(part.start - m, part.end - m + 1)
        old_s, old_r = sym[sl], rad[sl]
        both = (old_s != UNRESOLVED) & part.resolved
        if np.any(old_s[both] != part.symbols[both]) or np.any(old_r[both] != part.radius[both]):
            raise AssertionError(f"chunks disagree near position {part.start}")
        stats["overlap_checked"] += int(both.sum())
        take = part.resolved & (old_s == UNRESOLVED)
        old_s[take] = part.symbols[take]
        old_r[take] = part.radius[take]
        for key in ("green", "red", "maroon", "markers", "discarded_extras"):
            stats[key] = stats.get(key, 0) + part.stats[key]
    stats["resolved_positions"] = int((sym != UNRESOLVED).sum())
    stats["unresolved_positions"] = int(total - stats["resolved_positions"])
    return FactorOutput(m, sym, rad, plan.out_alphabet_size, stats)


@dataclass(frozen=True)
class EquivarianceReport:
    passed: bool
    trials: int
    compared: int
    mismatches: list

    def to_dict(self) -> dict:
        return dict(passed=self.passed, trials=self.trials, compared=self.compared,
                    mismatches=self.mismatches[:20], n_mismatches=len(self.mismatches))


def equivariance_check(schedule: MarginalSchedule, codebook: TypeCodebook, plan: ExpansionPlan, trials: int = 100,
                       seed: int = 0, window_length: int = 1 << 17, max_shift: int | None = None,
                       encoder: Encoder | None = None, span: int = 1 << 24) -> EquivarianceReport:
    """Compare the factor of a shifted point with the shifted factor.

    Each trial draws x on a window, extracts it, then extracts the window of
    ``T^s x`` (the content at ``m+s ..`` placed at start ``m``) and compares
    position ``i`` of the second with position ``i+s`` of the first, on
    positions resolved in both.
    """
    if trials < 1:
        raise DomainError("trials must be positive")
    rng = np.random.default_rng([int(seed) & ((1 << 63) - 1), 0xE0])
    max_shift = max_shift or window_length // 2
    mismatches, compared = [], 0
    for _ in range(trials):
        m = int(rng.integers(-span, span))
        s = int(rng.integers(1, max_shift + 1))
        x = sample_window(schedule, m, m + window_length - 1 + s, seed)
        base = extract(x.slice(m, m + window_length - 1), codebook, plan, encoder=encoder)
        moved = extract(x.slice(m + s, m + s + window_length - 1).relocated(m), codebook, plan, encoder=encoder)
        a = base.symbols[s:]
        b = moved.symbols[: window_length - s]
        both = (a != UNRESOLVED) & (b != UNRESOLVED)
        compared += int(both.sum())
        bad = np.flatnonzero(both & (a != b))
        mismatches.extend((m + s + int(i), s) for i in bad[:5])
    return EquivarianceReport(not mismatches, trials, compared, mismatches)


def index_dependent_encoder(words, starts, codebook):
    """A deliberately broken psi that mixes in the absolute start index."""
    good, codes = codebook.classify(words)
    codes = np.where(good, (codes + np.asarray(starts)) % codebook.B_size, -1)
    return good, codes
