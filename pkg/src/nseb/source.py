"""Non-stationary product measures over a finite alphabet.

A schedule assigns a probability vector to every integer index.  Windows are
sampled with a counter-based generator keyed by (seed, block of the absolute
index), so any two windows drawn with the same seed agree where they overlap.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, DomainError

#: positions per generator block; changing it changes every sampled stream
BLOCK = 1 << 16
DEFAULT_MAX_WINDOW = 50_000_000
DEFAULT_CLIP = 1e-3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Alphabet:
    """Ordered symbol set with the two marker symbols.

    Internally symbols are the integer codes ``0 .. size-1``.
    """

    symbols: tuple
    marker_a: Any = None
    marker_b: Any = None

    def __post_init__(self):
        syms = tuple(self.symbols)
        object.__setattr__(self, "symbols", syms)
        if len(syms) < 2:
            raise DomainError("alphabet needs at least two symbols")
        if len(set(syms)) != len(syms):
            raise DomainError("alphabet symbols must be distinct")
        if self.marker_a is None:
            object.__setattr__(self, "marker_a", syms[0])
        if self.marker_b is None:
            object.__setattr__(self, "marker_b", syms[1])
        for m in (self.marker_a, self.marker_b):
            if m not in syms:
                raise DomainError(f"marker {m!r} not in alphabet")
        if self.marker_a == self.marker_b:
            raise DomainError("marker_a and marker_b must differ")

    @classmethod
    def of_size(cls, size: int, marker_a: int = 0, marker_b: int = 1) -> "Alphabet":
        return cls(tuple(range(size)), marker_a, marker_b)

    def __len__(self):
        return len(self.symbols)

    @property
    def a(self) -> int:
        return self.symbols.index(self.marker_a)

    @property
    def b(self) -> int:
        return self.symbols.index(self.marker_b)

    def encode(self, tokens) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(self.symbols)}
        if isinstance(tokens, str) and not all(isinstance(s, str) and len(s) == 1 for s in self.symbols):
            tokens = tokens.split()
        elif isinstance(tokens, str):
            tokens = [t for t in tokens if not t.isspace()]
        try:
            return np.array([lookup[t] for t in tokens], dtype=np.int16)
        except KeyError as exc:
            raise DomainError(f"symbol {exc.args[0]!r} not in alphabet") from None

    def decode(self, codes) -> list:
        return [self.symbols[int(c)] for c in codes]


def prob_vector(weights, rational: bool = False):
    """Validate weights and return a float array, or a tuple of Fractions."""
    if rational:
        w = tuple(Fraction(x) for x in weights)
        if any(x < 0 for x in w):
            raise DomainError("negative probability")
        if sum(w) != 1:
            raise DomainError(f"weights sum to {sum(w)}, not 1")
        return w
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise DomainError("probability vector must be one-dimensional")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("probabilities must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise DomainError(f"weights sum to {w.sum()!r}, not 1")
    return w


def entropy_bits(p) -> float:
    """Shannon entropy in bits."""
    p = np.asarray([float(x) for x in p])
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


def _lift_to_floor(w: np.ndarray, floor: np.ndarray) -> np.ndarray:
    # coordinates below their floor are raised to it; the others give up mass
    # in proportion to their excess over the floor
    excess = np.where(w < floor, 0.0, w - floor)
    total = excess.sum(axis=-1, keepdims=True)
    budget = 1.0 - floor.sum()
    return floor + excess * (budget / total)


@dataclass(frozen=True, eq=False)
class MarginalSchedule:
    """Per-index marginals rho_i of an independent source.

    Use the constructors :meth:`stationary`, :meth:`power_decay`,
    :meth:`table` rather than instantiating directly.
    """

    alphabet: Alphabet
    kind: str
    limiting: np.ndarray
    doeblin_floor: float
    params: Mapping[str, Any] = field(default_factory=dict)
    exceptions: frozenset = frozenset()
    doeblin_only_one_sided: bool = False
    _fn: Callable | None = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def stationary(cls, alphabet: Alphabet, p) -> "MarginalSchedule":
        p = prob_vector(p)
        _check_size(alphabet, p)
        return cls(alphabet, "stationary", p, float(p.min()), {})

    @classmethod
    def power_decay(cls, alphabet: Alphabet, p, exponent: float, scale: float,
                    offset: float = 0.0, direction=None, clip: float = DEFAULT_CLIP,
                    one_sided: bool = False) -> "MarginalSchedule":
        """rho_n = p + scale * max(|n| + offset, 1)**(-exponent) * direction, floored.

        ``direction`` defaults to moving mass from symbol 0 to symbol 1.  Every
        coordinate is floored at ``clip``; with ``one_sided`` only the
        coordinates in the support of ``p`` are.
        """
        p = prob_vector(p)
        _check_size(alphabet, p)
        if direction is None:
            direction = np.zeros(len(p))
            direction[0], direction[1] = -1.0, 1.0
        direction = np.asarray(direction, dtype=float)
        if direction.shape != p.shape or abs(direction.sum()) > 1e-12:
            raise DomainError("direction must have the alphabet's length and sum to 0")
        if exponent <= 0:
            raise DomainError("exponent must be positive")
        if not 0 < clip < 1.0 / len(p):
            raise DomainError("clip must lie in (0, 1/|A|)")
        params = dict(exponent=float(exponent), scale=float(scale), offset=float(offset),
                      direction=direction.tolist(), clip=float(clip), one_sided=bool(one_sided))
        return cls(alphabet, "power_decay", p, float(clip), params,
                   doeblin_only_one_sided=bool(one_sided) and bool(np.any(p == 0)))

    @classmethod
    def table(cls, alphabet: Alphabet, p, entries: Mapping[int, Sequence[float]],
              exceptions=None) -> "MarginalSchedule":
        """Explicit marginals at finitely many indices, ``p`` elsewhere."""
        p = prob_vector(p)
        _check_size(alphabet, p)
        ent = {int(i): prob_vector(v) for i, v in entries.items()}
        for v in ent.values():
            _check_size(alphabet, v)
        if exceptions is None:
            floor = min([p.min()] + [v.min() for v in ent.values()])
            exc = frozenset()
        else:
            exc = frozenset(int(i) for i in exceptions)
            floor = min([p.min()] + [v.min() for i, v in ent.items() if i not in exc])
        return cls(alphabet, "table", p, float(floor), {"entries": ent}, exc)

    @classmethod
    def from_function(cls, alphabet: Alphabet, p, fn: Callable[[np.ndarray], np.ndarray],
                      floor: float, params=None) -> "MarginalSchedule":
        """Marginals given by a vectorized callable ``indices -> (n, |A|)`` array."""
        p = prob_vector(p)
        _check_size(alphabet, p)
        return cls(alphabet, "function", p, float(floor), dict(params or {}), _fn=fn)

    # -- queries ------------------------------------------------------------
    def marginals(self, indices) -> np.ndarray:
        """Marginals at an array of indices, shape ``(len(indices), |A|)``."""
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        A = len(self.limiting)
        if self.kind == "stationary":
            return np.broadcast_to(self.limiting, (idx.size, A)).copy()
        if self.kind == "power_decay":
            q = self.params
            base = np.maximum(np.abs(idx).astype(float) + q["offset"], 1.0)
            amp = q["scale"] * base ** (-q["exponent"])
            w = self.limiting + amp[:, None] * np.asarray(q["direction"])
            floor = np.full(A, q["clip"])
            if q["one_sided"]:
                floor = np.where(self.limiting > 0, q["clip"], 0.0)
            return _lift_to_floor(w, floor)
        if self.kind == "table":
            out = np.broadcast_to(self.limiting, (idx.size, A)).copy()
            keys, rows = self._table_arrays
            if keys.size and idx.size:
                j = np.clip(np.searchsorted(keys, idx), 0, keys.size - 1)
                hit = keys[j] == idx
                out[hit] = rows[j[hit]]
            return out
        if self.kind == "function":
            return np.asarray(self._fn(idx), dtype=float).reshape(idx.size, A)
        raise DomainError(f"unknown schedule kind {self.kind!r}")

    @cached_property
    def _table_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        ent = self.params["entries"]
        keys = np.array(sorted(ent), dtype=np.int64)
        rows = np.array([ent[i] for i in keys.tolist()], dtype=float).reshape(keys.size, len(self.limiting))
        return keys, rows

    def marginal_at(self, i: int) -> np.ndarray:
        return self.marginals([i])[0]

    @property
    def size(self) -> int:
        return len(self.limiting)

    def to_dict(self) -> dict:
        if self.kind == "function":
            raise DomainError("function schedules have no file form")
        d = {"alphabet": list(self.alphabet.symbols), "marker_a": self.alphabet.marker_a,
             "marker_b": self.alphabet.marker_b, "kind": self.kind, "p": self.limiting.tolist()}
        if self.kind == "power_decay":
            d.update({k: self.params[k] for k in ("exponent", "scale", "offset", "direction", "clip", "one_sided")})
        elif self.kind == "table":
            d["entries"] = [{"index": i, "p": v.tolist()} for i, v in sorted(self.params["entries"].items())]
            if self.exceptions:
                d["exceptions"] = sorted(self.exceptions)
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical file form; record it alongside seeds."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __repr__(self):
        return f"MarginalSchedule(kind={self.kind!r}, size={self.size}, params={dict(self.params)!r})"


def _check_size(alphabet, p):
    if len(p) != len(alphabet):
        raise DomainError(f"probability vector has {len(p)} entries for {len(alphabet)} symbols")


def marginal_at(schedule: MarginalSchedule, i: int) -> np.ndarray:
    return schedule.marginal_at(i)


def dissipative_schedule(clip: float = DEFAULT_CLIP) -> MarginalSchedule:
    """Binary schedule with rho_i(0) = 10 / sqrt(|i| + 2), floored at ``clip`` on symbol 1."""
    return MarginalSchedule.power_decay(Alphabet((0, 1)), [0.0, 1.0], exponent=0.5, scale=10.0,
                                        offset=2.0, direction=[1.0, -1.0], clip=clip, one_sided=True)


# -- windows and sampling ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class Window:
    """Symbols at absolute positions ``start .. start + len - 1``."""

    start: int
    symbols: np.ndarray
    alphabet: Alphabet | None = None

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.int16).reshape(-1)
        object.__setattr__(self, "symbols", s)
        object.__setattr__(self, "start", int(self.start))
        if self.alphabet is not None and s.size and (s.min() < 0 or s.max() >= len(self.alphabet)):
            raise DomainError("window entries outside the alphabet")

    @classmethod
    def from_tokens(cls, tokens, alphabet: Alphabet, start: int = 0) -> "Window":
        return cls(start, alphabet.encode(tokens), alphabet)

    def __len__(self):
        return int(self.symbols.size)

    @property
    def end(self) -> int:
        """Last absolute position (inclusive)."""
        return self.start + len(self) - 1

    def at(self, pos: int) -> int:
        return int(self.symbols[pos - self.start])

    def slice(self, m: int, n: int) -> "Window":
        """Sub-window on absolute positions ``m..n`` inclusive."""
        m, n = max(m, self.start), min(n, self.end)
        return Window(m, self.symbols[m - self.start:n - self.start + 1], self.alphabet)

    def relocated(self, start: int) -> "Window":
        """Same content placed at a different start index."""
        return Window(start, self.symbols, self.alphabet)

    def tokens(self) -> list:
        return self.alphabet.decode(self.symbols) if self.alphabet else self.symbols.tolist()


def _zigzag(b: int) -> int:
    return 2 * b if b >= 0 else -2 * b - 1


def block_uniforms(seed: int, block: int, lo: int = 0, hi: int = BLOCK - 1) -> np.ndarray:
    """Uniforms driving offsets ``lo..hi`` of block ``block`` (positions ``block*BLOCK + offset``).

    Philox emits four 64-bit words per counter step and each double uses one,
    so jumping the counter by ``lo // 4`` lands on the right draw.
    """
    bitgen = np.random.Philox(key=int(seed) & _MASK64, counter=[0, _zigzag(int(block)), 0, 0])
    bitgen.advance(lo // 4)
    return np.random.Generator(bitgen).random(hi - lo + 1 + lo % 4)[lo % 4:]


def _draw(u: np.ndarray, marg: np.ndarray) -> np.ndarray:
    # smallest s with u < cdf_s; clamp guards cdf rounding just below 1
    cdf = np.cumsum(marg, axis=-1)
    if marg.ndim == 1:
        s = np.searchsorted(cdf, u, side="right")
    else:
        s = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(s, marg.shape[-1] - 1).astype(np.int16)


def sample_window(schedule: MarginalSchedule, m: int, n: int, seed: int,
                  max_length: int = DEFAULT_MAX_WINDOW) -> Window:
    """Independent draws at positions ``m..n`` inclusive.

    The result depends only on ``(schedule, seed)`` and the absolute position,
    never on the window bounds.
    """
    if n < m - 1:
        raise DomainError("window end precedes start")
    length = n - m + 1
    if length > max_length:
        raise CapacityError(f"window of {length} positions exceeds cap {max_length}")
    out = np.empty(length, dtype=np.int16)
    stationary = schedule.kind == "stationary"
    for b in range(m // BLOCK, n // BLOCK + 1) if length else ():
        lo, hi = max(m, b * BLOCK), min(n, (b + 1) * BLOCK - 1)
        u = block_uniforms(seed, b, lo - b * BLOCK, hi - b * BLOCK)
        marg = schedule.limiting if stationary else schedule.marginals(np.arange(lo, hi + 1))
        out[lo - m:hi - m + 1] = _draw(u, marg)
    return Window(m, out, schedule.alphabet)


# -- series diagnostics -------------------------------------------------------

@dataclass(frozen=True)
class SeriesReport:
    """Partial sum of a two-sided series with tail diagnostics.

    ``last_decade_increment`` is the largest single step of the partial sums
    S(M) = sum over |n| <= M, taken over M in (N/10, N].
    """

    partial_sum: float
    tail_slope: float
    last_decade_increment: float
    verdict: str
    N: int
    partial_sums: np.ndarray | None = None

    def __float__(self):
        return self.partial_sum

    def to_dict(self) -> dict:
        return {"partial_sum": self.partial_sum, "tail_slope": self.tail_slope,
                "last_decade_increment": self.last_decade_increment, "verdict": self.verdict, "N": self.N}


EQUIVALENT_INCREMENT = 1e-6
SINGULAR_SLOPE = -1.1


def _series(summand, N: int, labels=("equivalent", "singular", "inconclusive")) -> SeriesReport:
    # summand: callable on an index array returning per-index terms
    M = np.arange(0, N + 1)
    steps = summand(M)
    steps[1:] += summand(-M[1:])
    partial = np.cumsum(steps)
    tail = slice(N // 10 + 1, N + 1)
    m_tail, s_tail = M[tail], steps[tail]
    inc = float(s_tail.max()) if s_tail.size else 0.0
    pos = s_tail > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(m_tail[pos]), np.log(s_tail[pos]), 1)[0])
    else:
        slope = -math.inf
    if slope >= SINGULAR_SLOPE:
        verdict = labels[1]
    elif inc < EQUIVALENT_INCREMENT:
        verdict = labels[0]
    else:
        verdict = labels[2]
    return SeriesReport(float(partial[-1]), slope, inc, verdict, N, partial)


def kakutani_divergence(s1: MarginalSchedule, s2: MarginalSchedule, N: int) -> SeriesReport:
    """sum_{|n|<=N} sum_a (s1_n(a) - s2_n(a))^2 with an equivalence verdict."""
    if s1.alphabet != s2.alphabet:
        raise DomainError("schedules are over different alphabets")
    if N < 10:
        raise DomainError("N must be at least 10")
    return _series(lambda idx: ((s1.marginals(idx) - s2.marginals(idx)) ** 2).sum(axis=1), N)


def shift_nonsingularity_sum(schedule: MarginalSchedule, N: int) -> SeriesReport:
    """sum_{|n|<=N} sum_a (sqrt rho_n(a) - sqrt rho_{n-1}(a))^2.

    The verdict reads ``convergent``/``divergent``/``inconclusive`` with the
    same thresholds as :func:`kakutani_divergence`.
    """
    if N < 10:
        raise DomainError("N must be at least 10")

    def term(idx):
        return ((np.sqrt(schedule.marginals(idx)) - np.sqrt(schedule.marginals(idx - 1))) ** 2).sum(axis=1)

    return _series(term, N, labels=("convergent", "divergent", "inconclusive"))


# -- countable alphabets ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CountableSchedule:
    """Independent source on the nonnegative integers.

    ``weights(a)`` gives the limiting law on an array of symbols; the optional
    ``perturb(i, a)`` gives the marginal at index ``i`` when it differs.
    """

    weights: Callable[[np.ndarray], np.ndarray]
    perturb: Callable[[int, np.ndarray], np.ndarray] | None = None

    @classmethod
    def geometric(cls, r: float = 0.5) -> "CountableSchedule":
        return cls(lambda a: (1 - r) * r ** np.asarray(a, dtype=float))


_SUM_TERMS = 1 << 20


def _check_summable(w: np.ndarray):
    head, total = w[: _SUM_TERMS // 2].sum(), w.sum()
    if not np.all(w >= 0) or total - head > 1e-9 or abs(total - 1.0) > 1e-9:
        raise DomainError(f"weights are not a summable probability sequence (partial sum {total:.6g})")


def truncate_alphabet(source: CountableSchedule, n: int) -> MarginalSchedule:
    """Push the source forward under a -> min(a, n).

    ``params`` records the entropy of the truncated and full limiting laws.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    symbols = np.arange(_SUM_TERMS)
    full = np.asarray(source.weights(symbols), dtype=float)
    _check_summable(full)

    def collapse(w):
        return np.concatenate([w[:n], [max(0.0, 1.0 - w[:n].sum())]])

    p = collapse(full)
    info = {"n": n, "entropy_bits": entropy_bits(p), "source_entropy_bits": entropy_bits(full)}
    alphabet = Alphabet.of_size(n + 1)
    if source.perturb is None:
        sched = MarginalSchedule.stationary(alphabet, p)
        return MarginalSchedule(alphabet, "stationary", sched.limiting, sched.doeblin_floor, info)

    def fn(idx):
        return np.stack([collapse(np.asarray(source.perturb(int(i), symbols), dtype=float)) for i in idx])

    return MarginalSchedule.from_function(alphabet, p, fn, floor=0.0, params=info)


# -- schedule files -----------------------------------------------------------

_KEYS = {"alphabet", "marker_a", "marker_b", "kind", "p", "exponent", "scale", "offset",
         "direction", "clip", "one_sided", "entries", "exceptions", "name"}


def _position(text: str, needle: str):
    at = text.find(f'"{needle}"')
    if at < 0:
        return None, None
    line = text.count("\n", 0, at) + 1
    return line, at - (text.rfind("\n", 0, at) + 1) + 1


def schedule_from_json(text: str) -> MarginalSchedule:
    """Parse a schedule description; errors carry line and column."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(d, dict):
        raise ConfigError("schedule must be a JSON object", 1, 1)
    for key in d:
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", *_position(text, key))
    for key in ("alphabet", "kind", "p"):
        if key not in d:
            raise ConfigError(f"missing key {key!r}", 1, 1)
    try:
        alphabet = Alphabet(tuple(d["alphabet"]), d.get("marker_a"), d.get("marker_b"))
        kind = d["kind"]
        if kind == "stationary":
            return MarginalSchedule.stationary(alphabet, d["p"])
        if kind == "power_decay":
            return MarginalSchedule.power_decay(
                alphabet, d["p"], exponent=d.get("exponent", 0.5), scale=d.get("scale", 1.0),
                offset=d.get("offset", 0.0), direction=d.get("direction"),
                clip=d.get("clip", DEFAULT_CLIP), one_sided=d.get("one_sided", False))
        if kind == "table":
            entries = {}
            for e in d.get("entries", []):
                if set(e) - {"index", "p"}:
                    raise ConfigError(f"unknown key in table entry: {sorted(set(e) - {'index', 'p'})}",
                                      *_position(text, "entries"))
                entries[int(e["index"])] = e["p"]
            return MarginalSchedule.table(alphabet, d["p"], entries, d.get("exceptions"))
        raise ConfigError(f"unknown kind {kind!r}", *_position(text, "kind"))
    except (DomainError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc), 1, 1) from None


def load_schedule(path) -> MarginalSchedule:
    with open(path, encoding="utf-8") as fh:
        return schedule_from_json(fh.read())


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
