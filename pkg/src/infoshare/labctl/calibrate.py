"""Search for low- and high-congestion demand levels."""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .config import ScenarioConfig
from .runner import run_scenario

log = logging.getLogger(__name__)

LOW_REFERENCE_LAMBDA = 281.0
CALIBRATION_SEEDS = (100, 101, 102, 103, 104)
# Slope (s/min) a static run must exceed to count as unstable while calibrating the
# high regime. Stricter than the reporting threshold: right at the 1 s/min onset the
# network is barely past saturation and information buys well under 10 %.
HIGH_SLOPE_THRESHOLD = 3.0


class CalibrationError(RuntimeError):
    def __init__(self, msg: str, tested: dict[float, object]):
        self.tested = tested
        detail = ", ".join(f"{k:g}: {v}" for k, v in sorted(tested.items()))
        super().__init__(f"{msg} (tested lambda -> outcome: {detail})")


@dataclass
class Calibration:
    regime: str
    lambda_mean: float
    tested: dict[float, object] = field(default_factory=dict)


def static_unstable(base: ScenarioConfig, lam: float, seeds: Sequence[int], threshold: float,
                    quorum: float = 1.0) -> bool:
    """True if static routing at ``lam`` exceeds ``threshold`` on at least ``quorum`` of ``seeds``.

    Stops as soon as the outcome is decided.
    """
    need = quorum * len(seeds)
    hits = misses = 0
    for s in seeds:
        row = run_scenario(base.replace(routing="static", lambda_mean_veh_per_h=lam, seed=s), keep_trace=False).row
        slope = row.stability_slope_s_per_min
        if slope is None or slope > threshold:
            hits += 1
        else:
            misses += 1
        if hits >= need:
            return True
        if len(seeds) - misses < need:
            return False
    return hits >= need


def static_dynamic_gap(base: ScenarioConfig, lam: float, seeds: Sequence[int]) -> float:
    """Relative difference |tau(dynamic) - tau(static)| / tau(static) on seed means."""
    def mean_tau(routing):
        taus = [run_scenario(base.replace(routing=routing, lambda_mean_veh_per_h=lam, seed=s),
                             keep_trace=False).row.tau_avg_all_s for s in seeds]
        return statistics.fmean(t for t in taus if t is not None)
    st, dy = mean_tau("static"), mean_tau("dynamic")
    return abs(dy - st) / st


def bisect_threshold(pred: Callable[[float], bool], lo: float, hi: float, rel_res: float = 0.05,
                     max_expand: int = 8) -> tuple[float, dict[float, bool]]:
    """Smallest x (to relative resolution) with ``pred(x)`` true, assuming monotone pred.

    ``lo`` must be false and ``hi`` true; ``hi`` is doubled up to ``max_expand`` times
    to find a bracket.
    """
    tested: dict[float, bool] = {}

    def ev(x):
        if x not in tested:
            tested[x] = pred(x)
            log.info("calibration: lambda=%g -> %s", x, tested[x])
        return tested[x]

    if ev(lo):
        raise CalibrationError("lower bracket already satisfies the predicate", tested)
    n = 0
    while not ev(hi):
        n += 1
        if n > max_expand:
            raise CalibrationError("no upper bracket found", tested)
        lo, hi = hi, hi * 2
    while hi / lo > 1 + rel_res:
        mid = (lo * hi) ** 0.5
        if ev(mid):
            hi = mid
        else:
            lo = mid
    return hi, tested


def calibrate_congestion(base: ScenarioConfig, regime: str, seeds: Sequence[int] = CALIBRATION_SEEDS,
                         quorum: float = 1.0, lo: float = 1000.0, hi: float = 4000.0,
                         rel_res: float = 0.05, threshold: float = HIGH_SLOPE_THRESHOLD) -> Calibration:
    """Demand level for a congestion regime.

    ``high``: smallest mean lambda (within ``rel_res``) at which static routing is
    unstable, with a stability slope above ``threshold`` s/min, in at least
    ``quorum`` of ``seeds``.
    ``low``: the reference lambda of 281 veh/h if static and all-dynamic mean trip
    times differ by less than 5 %, otherwise the largest lambda found by
    bisection below it that satisfies that condition.
    """
    if regime == "high":
        lam, tested = bisect_threshold(lambda x: static_unstable(base, x, seeds, threshold, quorum), lo, hi, rel_res)
        return Calibration("high", lam, dict(tested))
    if regime == "low":
        tested: dict[float, object] = {}
        x = LOW_REFERENCE_LAMBDA
        for _ in range(12):
            gap = static_dynamic_gap(base, x, seeds)
            tested[x] = round(gap, 4)
            if gap < 0.05:
                return Calibration("low", x, tested)
            x /= 2
        raise CalibrationError("no low-regime lambda found", tested)
    raise ValueError(f"regime must be 'low' or 'high' (got {regime!r})")
