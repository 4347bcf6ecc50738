"""Trip-time metrics over a run trace."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from itertools import accumulate
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TraceRecord:
    vehicle_id: int
    info_class: str
    source: str
    sink: str
    spawned_s: float
    entered_s: float | None
    completed_s: float | None
    n_segments: int
    distance_m: float

    @property
    def trip_time_s(self) -> float | None:
        if self.completed_s is None:
            return None
        return self.completed_s - self.spawned_s


@dataclass(frozen=True)
class Metrics:
    tau_avg_all_s: float | None
    tau_avg_informed_s: float | None
    tau_avg_uninformed_s: float | None
    completed_in_window: int
    completed_informed: int
    completed_uninformed: int
    series: tuple[tuple[float, float], ...]  # (t_s, moving-average trip time or nan)
    stability_slope_s_per_min: float | None
    unstable: bool


def _mean(xs: Sequence[float]) -> float | None:
    return math.fsum(xs) / len(xs) if xs else None


def moving_average_series(trace: Sequence[TraceRecord], end_s: float, window_s: float = 300.0,
                          step_s: float = 60.0) -> list[tuple[float, float]]:
    """Mean trip time of completions in (t - window_s, t], sampled every ``step_s`` up to ``end_s``."""
    done = sorted((r.completed_s, r.completed_s - r.spawned_s) for r in trace if r.completed_s is not None)
    times = [c for c, _ in done]
    csum = [0.0, *accumulate(d for _, d in done)]
    out = []
    n = int(math.floor(end_s / step_s + 1e-9))
    for i in range(1, n + 1):
        t = i * step_s
        lo = bisect.bisect_right(times, t - window_s)
        hi = bisect.bisect_right(times, t)
        out.append((t, (csum[hi] - csum[lo]) / (hi - lo) if hi > lo else math.nan))
    return out


def stability_slope(series: Sequence[tuple[float, float]], start_s: float, end_s: float) -> float | None:
    """Least-squares slope (s of trip time per minute) of the series within [start_s, end_s]."""
    pts = [(t, y) for t, y in series if start_s <= t <= end_s and not math.isnan(y)]
    if len(pts) < 2:
        return None
    x = np.array([t / 60.0 for t, _ in pts])
    y = np.array([y for _, y in pts])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def compute_metrics(trace: Sequence[TraceRecord], cfg) -> Metrics:
    end = cfg.sim_duration_s
    start = end - cfg.measure_window_s
    inside = [r for r in trace if r.completed_s is not None and start <= r.completed_s <= end]
    durations = [r.completed_s - r.spawned_s for r in inside]
    inf = [r.completed_s - r.spawned_s for r in inside if r.info_class == "informed"]
    uninf = [r.completed_s - r.spawned_s for r in inside if r.info_class != "informed"]
    series = moving_average_series(trace, end, cfg.series_window_s, cfg.series_step_s)
    slope = stability_slope(series, start, end) if inside else None
    return Metrics(
        tau_avg_all_s=_mean(durations),
        tau_avg_informed_s=_mean(inf),
        tau_avg_uninformed_s=_mean(uninf),
        completed_in_window=len(inside),
        completed_informed=len(inf),
        completed_uninformed=len(uninf),
        series=tuple(series),
        stability_slope_s_per_min=slope,
        unstable=slope is None or slope > cfg.stability_threshold_s_per_min,
    )
