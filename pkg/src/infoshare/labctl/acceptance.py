"""Built-in acceptance suite: runs every experiment and checks the ten acceptance properties.

The expensive part is a single pass of simulations shared by all criteria:
high-regime calibration, a theta / update-period sweep at the calibrated
demand over ten seeds, a low-demand sweep, matching pure-static runs and
determinism re-runs.
"""

from __future__ import annotations

import logging
import math
import random
import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

from .. import oracles
from ..flowsim import INFORMED, PoissonSource, assign_information_class, rng_streams, sample_destination, spawn_arrivals
from .calibrate import CALIBRATION_SEEDS, Calibration, calibrate_congestion
from .config import S1_ROW, ScenarioConfig, load_defaults
from .runner import ScenarioResult, run_sweep

log = logging.getLogger(__name__)

HIGH_THETAS = (0.0, 0.3, 0.5, 0.7, 1.0)
SLOW_UPDATE_S = 540.0
SLOW_UPDATE_THETAS = (0.7, 1.0)
LOW_LAMBDA = 281.0


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.number:>2} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class Campaign:
    """All simulation results the criteria are evaluated on."""

    seeds: tuple[int, ...]
    calibration: Calibration
    low_calibration: Calibration | None
    high: dict[tuple[float, float], list[ScenarioResult]]  # (theta, tau_up) -> per-seed results
    low: dict[float, list[ScenarioResult]]  # theta -> per-seed results
    static: list[ScenarioResult]
    reruns: list[tuple[ScenarioResult, ScenarioResult]]
    tau_up: float = 180.0
    elapsed_s: float = 0.0
    notes: list[str] = field(default_factory=list)

    def all_results(self) -> list[ScenarioResult]:
        out = [r for rs in self.high.values() for r in rs]
        out += [r for rs in self.low.values() for r in rs]
        out += self.static
        out += [b for _, b in self.reruns]
        return out


def _taus(rs: Sequence[ScenarioResult], attr: str = "tau_avg_all_s") -> list[float]:
    return [getattr(r.row, attr) for r in rs if getattr(r.row, attr) is not None]


def _mean(xs: Sequence[float]) -> float:
    return statistics.fmean(xs) if xs else math.nan


def run_campaign(seeds: Sequence[int] = tuple(range(10)), jobs: int = 1,
                 calibration_seeds: Sequence[int] = CALIBRATION_SEEDS,
                 base: ScenarioConfig | None = None) -> Campaign:
    t0 = time.perf_counter()
    base = (base or load_defaults()).replace(routing="selective", scenario_id="")
    seeds = tuple(seeds)
    cal = calibrate_congestion(base, "high", seeds=calibration_seeds)
    low_cal = calibrate_congestion(base, "low", seeds=calibration_seeds[:2])
    lam = cal.lambda_mean
    log.info("high-regime lambda %.2f, low-regime lambda %.2f", lam, low_cal.lambda_mean)

    cells = [(th, base.tau_up_s) for th in HIGH_THETAS] + [(th, SLOW_UPDATE_S) for th in SLOW_UPDATE_THETAS]
    plan = [base.replace(lambda_mean_veh_per_h=lam, theta=th, tau_up_s=tau, seed=s)
            for th, tau in cells for s in seeds]
    low_plan = [base.replace(lambda_mean_veh_per_h=LOW_LAMBDA, theta=th, seed=s) for th in (0.0, 1.0) for s in seeds]
    static_plan = [base.replace(routing="static", lambda_mean_veh_per_h=lam, seed=s) for s in seeds]
    # determinism: every configuration cell is run a second time at the first seed
    rerun_plan = [plan[i * len(seeds)] for i in range(len(cells))] + [low_plan[0], low_plan[len(seeds)]]

    res = run_sweep(plan + low_plan + static_plan + rerun_plan, jobs=jobs, check_invariants=True)
    n_hi, n_lo, n_st = len(plan), len(low_plan), len(static_plan)
    hi, lo, st, again = res[:n_hi], res[n_hi:n_hi + n_lo], res[n_hi + n_lo:n_hi + n_lo + n_st], res[n_hi + n_lo + n_st:]
    high = {cell: hi[i * len(seeds):(i + 1) * len(seeds)] for i, cell in enumerate(cells)}
    low = {0.0: lo[:len(seeds)], 1.0: lo[len(seeds):]}
    firsts = [high[cell][0] for cell in cells] + [low[0.0][0], low[1.0][0]]
    return Campaign(seeds, cal, low_cal, high, low, st, list(zip(firsts, again)), base.tau_up_s,
                    elapsed_s=time.perf_counter() - t0)


# criteria -------------------------------------------------------------------------


def criterion_1(c: Campaign) -> Criterion:
    tau_up = c.tau_up
    s0, s1 = c.high[(0.0, tau_up)], c.high[(1.0, tau_up)]
    wins = sum(a.row.tau_avg_all_s is not None and b.row.tau_avg_all_s is not None
               and b.row.tau_avg_all_s < a.row.tau_avg_all_s for a, b in zip(s0, s1))
    m0, m1 = _mean(_taus(s0)), _mean(_taus(s1))
    gain = (m0 - m1) / m0
    need = math.ceil(0.9 * len(c.seeds))
    ok = wins >= need and gain >= 0.10
    return Criterion(1, "dynamic beats static at high load", ok,
                     f"lambda={c.calibration.lambda_mean:.1f}: theta=1 faster in {wins}/{len(s0)} seeds (need {need}), "
                     f"mean {m1:.1f}s vs {m0:.1f}s, improvement {gain:.1%} (need >= 10%)")


def criterion_2(c: Campaign) -> Criterion:
    tau_up = c.tau_up
    full = _taus(c.high[(1.0, tau_up)])
    best_theta, best = None, None
    for th in (0.5, 0.7):
        xs = _taus(c.high[(th, tau_up)])
        if best is None or _mean(xs) < _mean(best):
            best_theta, best = th, xs
    n = min(len(full), len(best))
    gap = _mean(full) - _mean(best)
    sp2 = (statistics.variance(full) + statistics.variance(best)) / 2 if n > 1 else math.inf
    se = math.sqrt(sp2 * 2 / n) if n else math.inf
    ok = gap > 0 and gap > se
    return Criterion(2, "interior optimum", ok,
                     f"theta={best_theta} mean {_mean(best):.1f}s vs theta=1 {_mean(full):.1f}s, "
                     f"gap {gap:.1f}s vs pooled SE {se:.1f}s")


def criterion_3(c: Campaign) -> Criterion:
    m0, m1 = _mean(_taus(c.low[0.0])), _mean(_taus(c.low[1.0]))
    rel = abs(m1 - m0) / m0
    low_lam = c.low_calibration.lambda_mean if c.low_calibration else math.nan
    mono = low_lam < c.calibration.lambda_mean
    ok = rel < 0.05 and mono
    return Criterion(3, "low-load indifference", ok,
                     f"lambda={LOW_LAMBDA:g}: theta=0 {m0:.1f}s, theta=1 {m1:.1f}s, difference {rel:.2%} (need < 5%); "
                     f"calibrated low {low_lam:g} < high {c.calibration.lambda_mean:.1f}: {mono}")


def criterion_4(c: Campaign) -> Criterion:
    tau_up = c.tau_up
    thr = c.high[(0.0, tau_up)][0].cfg.stability_threshold_s_per_min
    s0 = [r.row.stability_slope_s_per_min for r in c.high[(0.0, tau_up)]]
    s1 = [r.row.stability_slope_s_per_min for r in c.high[(1.0, tau_up)]]
    unstable0 = sum(s is None or s > thr for s in s0)
    stable1 = sum(s is not None and s < thr for s in s1)
    need = math.ceil(0.9 * len(c.seeds))
    ok = unstable0 >= need and stable1 == len(s1)
    return Criterion(4, "static instability at high load", ok,
                     f"theta=0 slope > {thr:g} s/min in {unstable0}/{len(s0)} (need {need}), "
                     f"theta=1 below it in {stable1}/{len(s1)}; max theta=1 slope "
                     f"{max((s for s in s1 if s is not None), default=math.nan):.2f}")


def criterion_5(c: Campaign) -> Criterion:
    tau_up = c.tau_up
    parts, ok = [], True
    for th in (0.3, 0.5, 0.7):
        rs = c.high[(th, tau_up)]
        inf, uninf = _mean(_taus(rs, "tau_avg_informed_s")), _mean(_taus(rs, "tau_avg_uninformed_s"))
        ok &= inf <= uninf
        parts.append(f"theta={th}: {inf:.1f}s <= {uninf:.1f}s")
    return Criterion(5, "informed users do no worse", ok, "; ".join(parts))


def criterion_6(c: Campaign) -> Criterion:
    tau_up = c.tau_up
    parts, ok = [], True
    for th in SLOW_UPDATE_THETAS:
        fast, slow = _mean(_taus(c.high[(th, tau_up)])), _mean(_taus(c.high[(th, SLOW_UPDATE_S)]))
        ok &= fast <= slow
        parts.append(f"theta={th}: {fast:.1f}s (tau_up={tau_up:g}) <= {slow:.1f}s (tau_up={SLOW_UPDATE_S:g})")
    return Criterion(6, "frequent updates help", ok, "; ".join(parts))


def criterion_7(n_tables: int = 100) -> Criterion:
    rep = oracles.check_router(n_tables=n_tables)
    return Criterion(7, "router oracle", rep.ok,
                     f"{rep.comparisons} source/sink comparisons on grids up to 3x3 over {n_tables} cost tables, "
                     f"{len(rep.mismatches)} mismatches")


def criterion_8(n_sequences: int = 10_000) -> Criterion:
    rep = oracles.check_moving_average(n_sequences)
    return Criterion(8, "telemetry oracle", rep.ok,
                     f"{rep.comparisons} sequences, {len(rep.mismatches)} mismatches, "
                     f"max relative error {rep.max_rel_error:.1e}")


def criterion_9(c: Campaign) -> Criterion:
    runs = c.all_results()
    failed = [r.cfg.label for r in runs if r.row.status.startswith("failed")]
    bad = [f"{r.cfg.label}: {v}" for r in runs for v in (r.violations or [])]
    unmonitored = sum(r.violations is None for r in runs)
    nondet = [a.cfg.label for a, b in c.reruns if a.trace_hash != b.trace_hash]
    tau_up = c.tau_up
    theta0 = c.high[(0.0, tau_up)]
    static_diff = [a.cfg.seed for a, b in zip(theta0, c.static) if a.trace_hash != b.trace_hash]
    demand_diff = []
    for i, s in enumerate(c.seeds):
        hashes = {rs[i].arrival_hash for (th, tau), rs in c.high.items()} | {c.static[i].arrival_hash}
        if len(hashes) != 1:
            demand_diff.append(s)
    ok = not (failed or bad or unmonitored or nondet or static_diff or demand_diff)
    detail = (f"{len(runs)} monitored runs: {len(bad)} invariant violations, {len(failed)} failed; "
              f"{len(c.reruns) - len(nondet)}/{len(c.reruns)} re-runs hash-identical; "
              f"theta=0 == static trace on {len(theta0) - len(static_diff)}/{len(theta0)} seeds; "
              f"arrival stream identical across theta on {len(c.seeds) - len(demand_diff)}/{len(c.seeds)} seeds")
    if bad:
        detail += f"; first violation: {bad[0]}"
    return Criterion(9, "simulation invariants", ok, detail)


def criterion_10(poisson_seeds: int = 100, od_draws: int = 1_000_000, theta_draws: int = 100_000) -> Criterion:
    # Poisson spawn counts: 3600 veh/h for 7200 one-second ticks, per seed
    totals = []
    for s in range(poisson_seeds):
        streams = rng_streams(10_000 + s)
        src = PoissonSource("src", 3600.0, {"D1": 1.0})
        ids = iter(range(1 << 40))
        n = 0
        for tick in range(7200):
            n += len(spawn_arrivals(src, float(tick), 1.0, streams["arrivals"], streams["information"], 0.0, ids))
        totals.append(n)
    mean = statistics.fmean(totals)
    sigma_mean = math.sqrt(7200.0 / poisson_seeds)
    poisson_ok = abs(mean - 7200.0) <= 5 * sigma_mean
    within_3sd = sum(abs(x - 7200) <= 3 * math.sqrt(7200) for x in totals)

    rng = random.Random("od-frequency")
    src = PoissonSource("S1", 1.0, S1_ROW)
    hits = sum(sample_destination(src, rng) == "D8" for _ in range(od_draws))
    freq = hits / od_draws
    od_ok = abs(freq - 0.20) <= 0.002

    rng = random.Random("theta-frequency")
    informed = sum(assign_information_class(rng, 0.5) == INFORMED for _ in range(theta_draws))
    frac = informed / theta_draws
    theta_ok = abs(frac - 0.5) <= 0.008

    ok = poisson_ok and od_ok and theta_ok
    return Criterion(10, "statistical contracts", ok,
                     f"mean spawns over {poisson_seeds} seeds {mean:.1f} (7200 +/- {5 * sigma_mean:.1f}), "
                     f"{within_3sd}/{poisson_seeds} seeds within 3 sd; D8 frequency {freq:.4f} (0.20 +/- 0.002); "
                     f"informed fraction {frac:.4f} (0.5 +/- 0.008)")


def evaluate(c: Campaign) -> list[Criterion]:
    return [criterion_1(c), criterion_2(c), criterion_3(c), criterion_4(c), criterion_5(c), criterion_6(c),
            criterion_7(), criterion_8(), criterion_9(c), criterion_10()]


def run_acceptance(jobs: int = 1, quick: bool = False) -> list[Criterion]:
    """Run the campaign and evaluate all ten criteria (``quick``: three seeds, smoke check only)."""
    if quick:
        c = run_campaign(seeds=(0, 1, 2), jobs=jobs, calibration_seeds=CALIBRATION_SEEDS[:2])
    else:
        c = run_campaign(jobs=jobs)
    return evaluate(c)
