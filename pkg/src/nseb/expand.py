"""Split one uniform code in ``range(2^m)`` into k+1 independent 2^j-ary symbols."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ExpansionPlan:
    k: int
    m: int
    j: int
    target_entropy_bits: float = 0.0

    def __post_init__(self):
        if self.j < 0 or self.j * (self.k + 1) > self.m:
            raise DomainError(f"j={self.j} overdraws the budget: j(k+1) = {self.j * (self.k + 1)} > m = {self.m}")

    @property
    def B_size(self) -> int:
        return 1 << self.m

    @property
    def out_alphabet_size(self) -> int:
        return 1 << self.j

    @property
    def out_len(self) -> int:
        return self.k + 1

    @property
    def feasible(self) -> bool:
        return self.j >= 1

    @property
    def rate(self) -> float:
        """Output bits per source position, j(k+1)/k."""
        return self.j * (self.k + 1) / self.k

    @property
    def meets_target(self) -> bool:
        return self.feasible and self.j >= self.target_entropy_bits

    @property
    def reason(self) -> str:
        if self.m < self.k + 1:
            return f"m={self.m} < k+1={self.k + 1}: no whole bit per output symbol"
        if not self.meets_target:
            return f"j={self.j} bits per symbol is below the target {self.target_entropy_bits}"
        return "ok"

    def to_dict(self) -> dict:
        return dict(k=self.k, m=self.m, j=self.j, out_alphabet_size=self.out_alphabet_size, out_len=self.out_len,
                    bits_used=self.j * self.out_len, rate=self.rate, feasible=self.feasible,
                    meets_target=self.meets_target, reason=self.reason)


def plan_expansion(k: int, m: int, target_entropy_bits: float = 0.0) -> ExpansionPlan:
    """Largest j with j(k+1) <= m.  An infeasible plan has j = 0 and says why."""
    if k < 1 or m < 0:
        raise DomainError("need k >= 1 and m >= 0")
    return ExpansionPlan(k, m, m // (k + 1), float(target_entropy_bits))


def minimal_block_length(entropy_bits: float, epsilon: float, target_entropy_bits: float,
                         k_max: int = 4096) -> int | None:
    """Smallest k whose budget ceil(k(H - eps)) yields j >= target, or None below k_max."""
    need = max(1, math.ceil(target_entropy_bits - 1e-12))
    for k in range(max(1, math.ceil(2 / epsilon)), k_max + 1):
        m = math.ceil(k * (entropy_bits - epsilon) - 1e-9)
        if m // (k + 1) >= need:
            return k
    return None


def expand_uniform(code: int, plan: ExpansionPlan) -> list[int]:
    """Top j(k+1) bits of ``code``, most significant first, as k+1 chunks of j bits."""
    if not 0 <= code < plan.B_size:
        raise DomainError(f"code {code} outside [0, {plan.B_size})")
    return expand_many(np.array([code]), plan)[0].tolist()


def expand_many(codes: np.ndarray, plan: ExpansionPlan) -> np.ndarray:
    """Vectorized :func:`expand_uniform`; returns shape (len(codes), k+1)."""
    codes = np.asarray(codes, dtype=np.int64)
    if plan.m > 62:
        raise DomainError("codes wider than 62 bits are not supported")
    top = codes >> (plan.m - plan.j * plan.out_len)
    shifts = plan.j * np.arange(plan.out_len - 1, -1, -1)
    return ((top[:, None] >> shifts) & (plan.out_alphabet_size - 1)).astype(np.int64)
