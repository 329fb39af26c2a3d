"""Estimators and series used to check extraction output and source properties.

Distances follow the unnormalized convention: ``tv_distance`` is the plain L1
sum and ranges over [0, 2].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2_contingency

from .errors import CapacityError, DomainError, InsufficientDataError
from .source import MarginalSchedule, entropy_bits, sample_window

EXACT_LIMIT = 10 ** 7


# -- entropy ----------------------------------------------------------------

@dataclass(frozen=True)
class EntropyReport:
    block_length: int
    plug_in_rate: float
    ci: tuple
    n_samples: int
    alphabet_size: int

    def to_dict(self) -> dict:
        return dict(block_length=self.block_length, plug_in_rate=self.plug_in_rate, ci=list(self.ci),
                    n_samples=self.n_samples, alphabet_size=self.alphabet_size)


def _block_keys(seq: np.ndarray, L: int, A: int) -> np.ndarray:
    keys = np.zeros(seq.size - L + 1, dtype=np.int64)
    for i in range(L):
        keys = keys * A + seq[i:seq.size - L + 1 + i]
    return keys


def _entropy_of_counts(counts: np.ndarray) -> np.ndarray:
    # bits; counts along the last axis
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(counts > 0, counts / n, 1.0)
        return -(np.where(counts > 0, f * np.log2(f), 0.0)).sum(axis=-1)


def required_length(L: int, alphabet_size: int) -> int:
    return 100 * alphabet_size ** L


def plug_in_entropy(seq, L: int = 1, alphabet_size: int | None = None, n_boot: int = 200,
                    seed: int = 0) -> EntropyReport:
    """Empirical entropy of sliding L-blocks, divided by L, with a bootstrap CI.

    The CI resamples the block histogram multinomially ``n_boot`` times.
    """
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    A = int(alphabet_size or (seq.max() + 1 if seq.size else 1))
    if seq.size and (seq.min() < 0 or seq.max() >= A):
        raise DomainError("symbols outside the alphabet")
    need = required_length(L, A)
    if seq.size < need:
        raise InsufficientDataError(f"block length {L} over {A} symbols needs {need} samples, got {seq.size}")
    if A ** L > 2 ** 62:
        raise CapacityError("block alphabet too large")
    _, counts = np.unique(_block_keys(seq, L, A), return_counts=True)
    rate = float(_entropy_of_counts(counts)) / L
    rng = np.random.default_rng(seed)
    boot = rng.multinomial(int(counts.sum()), counts / counts.sum(), size=n_boot)
    rates = _entropy_of_counts(boot) / L
    lo, hi = np.quantile(rates, [0.025, 0.975])
    return EntropyReport(L, max(rate, 0.0), (float(lo), float(hi)), int(seq.size), A)


def largest_block_length(n: int, alphabet_size: int, cap: int = 10) -> int:
    """Largest L <= cap with 100 A^L <= n (at least 1)."""
    L = 1
    while L < cap and required_length(L + 1, alphabet_size) <= n:
        L += 1
    return L


# -- distances ----------------------------------------------------------------

def tv_distance(q1, q2) -> float:
    """sum_a |q1(a) - q2(a)| (no factor 1/2)."""
    q1, q2 = np.asarray(q1, dtype=float), np.asarray(q2, dtype=float)
    if q1.shape != q2.shape:
        raise DomainError("probability vectors over different alphabets")
    return float(np.abs(q1 - q2).sum())


def divergence_as_printed(q, p) -> float:
    """sum_a p(a) log2(p(a) / q(a)) in bits; +inf when q(a) = 0 < p(a)."""
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise DomainError("probability vectors over different alphabets")
    on = p > 0
    if np.any(q[on] == 0):
        return math.inf
    return float((p[on] * np.log2(p[on] / q[on])).sum())


def tv_to_uniform(seq, alphabet_size: int) -> float:
    freq = np.bincount(np.asarray(seq, dtype=np.int64), minlength=alphabet_size) / len(seq)
    return tv_distance(freq, np.full(alphabet_size, 1.0 / alphabet_size))


def lag_independence(seq, alphabet_size: int, lags=(1, 2, 3, 4)) -> list[dict]:
    """Chi-square test of independence between x_t and x_{t+lag}."""
    seq = np.asarray(seq, dtype=np.int64)
    out = []
    for lag in lags:
        pairs = seq[:-lag] * alphabet_size + seq[lag:]
        table = np.bincount(pairs, minlength=alphabet_size ** 2).reshape(alphabet_size, alphabet_size)
        table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        if min(table.shape) < 2:
            out.append({"lag": lag, "statistic": 0.0, "p_value": 1.0})
            continue
        stat, pval, _, _ = chi2_contingency(table, correction=False)
        out.append({"lag": lag, "statistic": float(stat), "p_value": float(pval)})
    return out


# -- Shannon-McMillan-Breiman diagnostics -------------------------------------------

def shannon_gn(schedule: MarginalSchedule, seed: int, n: int) -> float:
    """log2 rho([x]_1^n) / n + mean_{k<=n} H(rho_k) for x sampled with ``seed``."""
    if n < 1:
        raise DomainError("n must be positive")
    x = sample_window(schedule, 1, n, seed).symbols
    marg = schedule.marginals(np.arange(1, n + 1))
    px = marg[np.arange(n), x]
    if np.any(px == 0):
        raise DomainError("sampled a zero-probability symbol")
    return float(np.log2(px).sum() / n + _entropy_of_counts(marg).mean())


@dataclass(frozen=True)
class AEPReport:
    cover_size: int | float
    mass: float
    log2_bound: float
    within_bound: bool
    length: int
    method: str

    def to_dict(self) -> dict:
        return dict(cover_size=self.cover_size, mass=self.mass, log2_bound=self.log2_bound,
                    within_bound=self.within_bound, length=self.length, method=self.method)


def aep_cover(schedule: MarginalSchedule, n: int, epsilon: float, M: int = 0, h: float | None = None,
              method: str = "exact", samples: int = 200_000, seed: int = 0) -> AEPReport:
    """Cylinders on coordinates ``1-M .. n+M`` with mass above 2^{-n(h+eps)}.

    ``h`` defaults to the entropy of the limiting law.  Exact mode enumerates
    every word; Monte Carlo mode estimates the mass directly and the count by
    importance weighting.
    """
    h = entropy_bits(schedule.limiting) if h is None else h
    idx = np.arange(1 - M, n + M + 1)
    length = idx.size
    thresh = -n * (h + epsilon)  # log2
    with np.errstate(divide="ignore"):
        logm = np.log2(schedule.marginals(idx))
    A = schedule.size
    if method == "exact":
        if A ** length > EXACT_LIMIT:
            raise CapacityError(f"{A}^{length} cylinders exceed the exact limit")
        lp = np.zeros(1)
        for row in logm:
            lp = (lp[:, None] + row[None, :]).reshape(-1)
        keep = lp > thresh
        size = int(keep.sum())
        mass = float(np.exp2(lp[keep]).sum())
        ok = size == 0 or math.log2(size) <= n * (h + epsilon) + 1e-12
        return AEPReport(size, mass, n * (h + epsilon), ok, length, method)
    if method != "montecarlo":
        raise DomainError("method is 'exact' or 'montecarlo'")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(schedule.marginals(idx), axis=1)
    lp = np.zeros(samples)
    for j in range(length):
        s = np.minimum(np.searchsorted(cdf[j], rng.random(samples), side="right"), A - 1)
        lp += logm[j, s]
    keep = lp > thresh
    size = float(np.mean(np.where(keep, np.exp2(-lp), 0.0)))
    ok = size == 0 or math.log2(size) <= n * (h + epsilon)
    return AEPReport(size, float(keep.mean()), n * (h + epsilon), ok, length, method)


def hamming_ball_count(n: int, eps: float, alphabet_size: int) -> int:
    """C(n, floor(eps n)) * |B|^floor(eps n)."""
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    r = math.floor(eps * n)
    return math.comb(n, r) * alphabet_size ** r


def hamming_ball_rate(n: int, eps: float, alphabet_size: int) -> tuple[float, float]:
    """(log2(count)/n, eps log2|B| + H(eps, 1-eps))."""
    count = hamming_ball_count(n, eps, alphabet_size)
    return math.log2(count) / n, eps * math.log2(alphabet_size) + entropy_bits([eps, 1 - eps])


def wl_average(schedule: MarginalSchedule, cylinder, n: int, seed: int, start: int = 0) -> tuple[float, float]:
    """(1/n) sum_{j<n} 1[x_{j..j+w-1} = cylinder] and its expectation under the schedule."""
    cyl = np.asarray(cylinder, dtype=np.int64)
    w = cyl.size
    x = sample_window(schedule, start, start + n + w - 2, seed).symbols
    hit = np.ones(n, dtype=bool)
    mean = np.ones(n)
    marg = schedule.marginals(np.arange(start, start + n + w - 1))
    for i, s in enumerate(cyl):
        hit &= x[i:i + n] == s
        mean *= marg[i:i + n, s]
    return float(hit.mean()), float(mean.mean())


# -- dissipativity -------------------------------------------------------------

def hellinger_affinity(a, b):
    """sqrt(ab) + sqrt((1-a)(1-b)) for coordinate laws (a, 1-a) and (b, 1-b)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.sqrt(a * b) + np.sqrt((1 - a) * (1 - b))


@dataclass(frozen=True, eq=False)
class DissipativityReport:
    """Truncated affinities of the shifted measure with itself.

    ``tail_logmass[n]`` bounds the log-affinity dropped by truncating to
    ``|k| <= truncation_K``; ``tail_bound`` bounds the resulting error of the
    partial sums.  ``stated_tail_logmass`` is sum_{|k|>K} (delta_k)^2 / 2 over
    the explicit band, a lower-order estimate kept for comparison.
    """

    n: np.ndarray
    affinity: np.ndarray
    partial_sums: np.ndarray
    loglog_slope: float
    fit_range: tuple
    truncation_K: int
    tail_logmass: np.ndarray
    tail_bound: float
    stated_tail_logmass: np.ndarray

    def to_dict(self, full: bool = False) -> dict:
        d = dict(N=int(self.n[-1]), truncation_K=self.truncation_K, loglog_slope=self.loglog_slope,
                 fit_range=list(self.fit_range), tail_bound=self.tail_bound,
                 partial_sum=float(self.partial_sums[-1]),
                 max_tail_logmass=float(self.tail_logmass.max()),
                 max_stated_tail_logmass=float(self.stated_tail_logmass.max()))
        if full:
            d.update(affinity=self.affinity.tolist(), partial_sums=self.partial_sums.tolist(),
                     tail_logmass=self.tail_logmass.tolist())
        return d


def _neg_log_affinity(schedule, ks: np.ndarray, n_values: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    # -sum_k log A(rho_k, rho_{k-n}) for each n
    mk = schedule.marginals(ks)
    out = np.zeros(n_values.size)
    rows = max(1, chunk // max(1, ks.size))
    lo_idx = ks.min() - n_values.max()
    span = schedule.marginals(np.arange(lo_idx, ks.max() + 1))
    for lo in range(0, n_values.size, rows):
        nv = n_values[lo:lo + rows]
        other = span[(ks[None, :] - nv[:, None]) - lo_idx]  # (rows, |ks|, A)
        aff = np.sqrt(mk[None] * other).sum(axis=-1)
        out[lo:lo + rows] = -np.log(np.minimum(aff, 1.0)).sum(axis=1)
    return out


def _power_decay_remainder(schedule: MarginalSchedule, K2: int, n_values: np.ndarray) -> np.ndarray:
    """Upper bound on -sum_{|k| > K2} log A(rho_k, rho_{k-n}).

    Uses 1 - A = (1/2) sum_a (sqrt u - sqrt v)^2 <= (1/2) sum_a (u-v)^2/(u+v), a
    mean-value bound on |u - v| and an integral bound on the power-law sum.
    """
    q = schedule.params
    c, r, o = q["scale"], q["exponent"], q["offset"]
    d = np.abs(np.asarray(q["direction"]))
    p = schedule.limiting
    out = np.zeros(n_values.size)
    for t, n in enumerate(n_values):
        n = int(n)
        base = K2 - n + o  # smallest |k| - n + o in the tail
        if base < 1 or K2 < 2 * n:
            return np.full(n_values.size, math.inf)
        # the floor must be inactive throughout the tail
        w = p + c * base ** (-r) * np.asarray(q["direction"])
        floor = np.where(p > 0, q["clip"], 0.0) if q["one_sided"] else np.full(p.size, q["clip"])
        if np.any(w < floor):
            return np.full(n_values.size, math.inf)
        diff2 = (n * c * r) ** 2  # times (|k|-n+o)^(-2r-2)
        total = 0.0
        for a in range(p.size):
            if d[a] == 0:
                continue
            if p[a] > 0:
                denom = 2 * (p[a] - c * d[a] * base ** (-r))
                if denom <= 0:
                    return np.full(n_values.size, math.inf)
                s = 2 * r + 2
                coef = diff2 * d[a] ** 2 / denom
            else:
                # u + v >= 2 c d_a (|k|+n+o)^(-r) and (|k|+n+o) <= ratio (|k|-n+o)
                ratio = (K2 + n + o) / base
                s = r + 2
                coef = diff2 * d[a] ** 2 * ratio ** r / (2 * c * d[a])
            total += 0.5 * coef * 2 * base ** (1 - s) / (s - 1)  # both signs of k
        h2 = min(total, 0.5)
        out[t] = total / (1 - h2)
    return out


def hellinger_series(schedule: MarginalSchedule, N: int, K: int, fit_range=(100, 1000),
                     band: int = 10) -> DissipativityReport:
    """Affinity between the source and its n-fold shift for n = 0..N.

    affinity(n) = prod_{|k|<=K} sum_a sqrt(rho_k(a) rho_{k-n}(a)).  The dropped
    coordinates are summed explicitly up to ``band * K`` and bounded beyond.
    """
    if schedule.size != 2:
        raise DomainError("hellinger_series supports binary schedules only")
    if K < 10 * N:
        raise DomainError("need K >= 10 N")
    n_values = np.arange(N + 1)
    ks = np.arange(-K, K + 1)
    logaff = -_neg_log_affinity(schedule, ks, n_values)
    logaff[0] = 0.0  # the measure against itself; avoids rounding in sum_a rho_k(a)
    affinity = np.exp(logaff)
    partial = np.cumsum(affinity)

    K2 = band * K
    far = np.concatenate([np.arange(-K2, -K), np.arange(K + 1, K2 + 1)])
    band_mass = _neg_log_affinity(schedule, far, n_values)
    if schedule.kind == "stationary":
        rest = np.zeros(N + 1)
    elif schedule.kind == "table":
        reach = max((abs(i) for i in schedule.params["entries"]), default=0) + N
        rest = np.zeros(N + 1) if reach <= K2 else np.full(N + 1, math.inf)
    elif schedule.kind == "power_decay":
        rest = _power_decay_remainder(schedule, K2, n_values)
    else:
        rest = np.full(N + 1, math.inf)
    tail = band_mass + rest
    tail[0] = 0.0  # shift 0 drops nothing
    tail_bound = float(np.sum(affinity * np.minimum(1.0, tail)))

    mf = schedule.marginals(far)
    lo_idx = far.min() - N
    span = schedule.marginals(np.arange(lo_idx, far.max() + 1))
    stated = np.array([((mf[:, 0] - span[far - n - lo_idx, 0]) ** 2).sum() / 2 for n in n_values])

    lo, hi = fit_range
    sel = (n_values >= lo) & (n_values <= min(hi, N)) & (affinity > 0)
    if sel.sum() >= 2:
        slope = float(np.polyfit(np.log(n_values[sel]), logaff[sel], 1)[0])
    else:
        slope = math.nan
    return DissipativityReport(n_values, affinity, partial, slope, (lo, hi), K, tail, tail_bound, stated)


# -- entropy ceiling -------------------------------------------------------------

@dataclass(frozen=True)
class CeilingReport:
    passed: bool
    rate: float
    ceiling: float
    block_length: int
    n_samples: int

    def to_dict(self) -> dict:
        return dict(passed=self.passed, rate=self.rate, ceiling=self.ceiling, block_length=self.block_length,
                    n_samples=self.n_samples)


MIN_RESOLVED = 100_000


def entropy_ceiling_report(output, p, L: int | None = None, tolerance: float = 0.05,
                           alphabet_size: int | None = None) -> CeilingReport:
    """Pass iff the plug-in rate of the resolved output is at most H(p) + tolerance.

    ``output`` is a FactorOutput or a plain symbol array.
    """
    if hasattr(output, "resolved_symbols"):
        seq = output.resolved_symbols()
        alphabet_size = alphabet_size or output.out_alphabet_size
    else:
        seq = np.asarray(output, dtype=np.int64)
    if seq.size < MIN_RESOLVED:
        raise InsufficientDataError(f"{seq.size} resolved symbols; need {MIN_RESOLVED}")
    A = int(alphabet_size or seq.max() + 1)
    L = L or largest_block_length(seq.size, max(A, 2))
    rep = plug_in_entropy(seq, L, A)
    ceiling = entropy_bits(p) + tolerance
    return CeilingReport(rep.plug_in_rate <= ceiling, rep.plug_in_rate, ceiling, L, int(seq.size))
