"""Named schedules and extraction settings used by the demos and the desk suite."""
from __future__ import annotations

import numpy as np

from .source import Alphabet, MarginalSchedule, dissipative_schedule

FAIR = (0.5, 0.5)
#: four-symbol law with H(p) ~ 1.571 bits, enough for one output bit per position at k = 9
SKEWED4 = (0.6, 0.2, 0.1, 0.1)
SKEWED4_K = 9
SKEWED4_EPS = 0.5
SKEWED4_DELTA = 0.15


def binary() -> Alphabet:
    return Alphabet((0, 1))


def fair_coin() -> MarginalSchedule:
    return MarginalSchedule.stationary(binary(), FAIR)


def fair_power_decay(exponent: float = 0.5, scale: float = 1.0) -> MarginalSchedule:
    """rho_n(0) = 1/2 - scale |n|^-exponent, floored at 10^-3."""
    return MarginalSchedule.power_decay(binary(), FAIR, exponent=exponent, scale=scale)


def skewed4_stationary() -> MarginalSchedule:
    return MarginalSchedule.stationary(Alphabet.of_size(4), SKEWED4)


def skewed4_power_decay() -> MarginalSchedule:
    return MarginalSchedule.power_decay(Alphabet.of_size(4), SKEWED4, exponent=0.5, scale=0.5)


def skewed4_table(seed: int = 11, radius: int = 2000) -> MarginalSchedule:
    """Random marginals near SKEWED4 on [-radius, radius]."""
    rng = np.random.default_rng(seed)
    base = np.asarray(SKEWED4)
    entries = {}
    for i in range(-radius, radius + 1):
        w = rng.dirichlet(400 * base)
        entries[i] = (w / w.sum()).tolist()
    return MarginalSchedule.table(Alphabet.of_size(4), SKEWED4, entries)


__all__ = ["FAIR", "SKEWED4", "SKEWED4_K", "SKEWED4_EPS", "SKEWED4_DELTA", "binary", "fair_coin",
           "fair_power_decay", "skewed4_stationary", "skewed4_power_decay", "skewed4_table", "dissipative_schedule"]
