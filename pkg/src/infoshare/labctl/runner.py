"""Single-scenario runs and sweeps."""

from __future__ import annotations

import hashlib
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..flowsim import InvariantMonitor, Simulation
from ..netgrid import build_grid
from .config import ScenarioConfig, build_sources
from .metrics import Metrics, TraceRecord, compute_metrics

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "scenario_id", "theta", "lambda_mean", "tau_up_s", "n_car", "seed", "spawned", "completed",
    "tau_avg_all_s", "tau_avg_informed_s", "tau_avg_uninformed_s", "stability_slope_s_per_min", "status",
)


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    theta: float
    lambda_mean: float
    tau_up_s: float
    n_car: int
    seed: int
    spawned: int
    completed: int
    tau_avg_all_s: float | None
    tau_avg_informed_s: float | None
    tau_avg_uninformed_s: float | None
    stability_slope_s_per_min: float | None
    status: str = "ok"  # ok | unstable | failed: <reason>

    def as_csv(self) -> list[str]:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return f"{x:.6f}" if math.isfinite(x) else ""
            return str(x)
        return [fmt(getattr(self, c)) for c in RESULT_COLUMNS]


@dataclass
class ScenarioResult:
    cfg: ScenarioConfig
    row: ResultRow
    metrics: Metrics | None
    trace: list[TraceRecord] = field(default_factory=list)
    trace_hash: str = ""
    arrival_hash: str = ""
    in_network: int = 0
    pending: int = 0
    reroutes: int = 0
    snapshots: list = field(default_factory=list)
    violations: list[str] | None = None  # None when invariants were not monitored


def simulate(cfg: ScenarioConfig, monitor: bool = False) -> tuple[Simulation, InvariantMonitor | None]:
    """Build the grid and demand for ``cfg`` and run the engine to completion."""
    cfg.validate()
    g = build_grid(cfg.grid)
    sim = Simulation(g, build_sources(cfg, g), cfg.flow_params(), cfg.seed)
    mon = InvariantMonitor(sim) if monitor else None
    sim.run(cfg.sim_duration_s, mon)
    return sim, mon


def trace_of(sim: Simulation) -> list[TraceRecord]:
    g = sim.g
    src_label = {g.index[s]: f"S{i}" for i, s in enumerate(g.sources, start=1)}
    dst_label = {g.index[s]: f"D{i}" for i, s in enumerate(g.sinks, start=1)}
    out = []
    for v in sim.vehicles:
        # distance and segment count refer to segments actually entered
        n_seg = v.pos + 1 if v.entered_network_at_s is not None else 0
        out.append(TraceRecord(
            v.id, v.info_class, src_label[v.source], dst_label[v.destination], v.spawned_at_s,
            v.entered_network_at_s, v.completed_at_s, n_seg, v.distance_m,
        ))
    return out


def arrival_hash(trace: Iterable[TraceRecord]) -> str:
    h = hashlib.blake2b(digest_size=16)
    for r in trace:
        h.update(f"{r.vehicle_id},{r.spawned_s!r},{r.source},{r.sink};".encode())
    return h.hexdigest()


def run_scenario(cfg: ScenarioConfig, keep_trace: bool = True, keep_snapshots: bool = False,
                 check_invariants: bool = False) -> ScenarioResult:
    sim, mon = simulate(cfg, check_invariants)
    trace = trace_of(sim)
    m = compute_metrics(trace, cfg)
    status = "unstable" if m.unstable else "ok"
    row = ResultRow(
        scenario_id=cfg.label,
        theta=cfg.effective_theta,
        lambda_mean=cfg.lambda_mean_veh_per_h,
        tau_up_s=cfg.tau_up_s,
        n_car=cfg.n_car,
        seed=cfg.seed,
        spawned=sim.spawned,
        completed=sim.completed,
        tau_avg_all_s=m.tau_avg_all_s,
        tau_avg_informed_s=m.tau_avg_informed_s,
        tau_avg_uninformed_s=m.tau_avg_uninformed_s,
        stability_slope_s_per_min=m.stability_slope_s_per_min,
        status=status,
    )
    log.info("%s: tau_avg=%s slope=%s", row.scenario_id, row.tau_avg_all_s, row.stability_slope_s_per_min)
    return ScenarioResult(
        cfg, row, m, trace if keep_trace else [], sim.trace_hash(), arrival_hash(trace),
        sim.in_network(), sim.pending(), sim.reroute_count,
        sim.snapshots if keep_snapshots else [],
        mon.violations if mon is not None else None,
    )


def _failed(cfg: ScenarioConfig, exc: BaseException) -> ScenarioResult:
    row = ResultRow(cfg.label, cfg.effective_theta, cfg.lambda_mean_veh_per_h, cfg.tau_up_s, cfg.n_car,
                    cfg.seed, 0, 0, None, None, None, None, f"failed: {type(exc).__name__}: {exc}")
    return ScenarioResult(cfg, row, None)


def _run_safe(cfg: ScenarioConfig, keep_trace: bool, check_invariants: bool = False) -> ScenarioResult:
    try:
        return run_scenario(cfg, keep_trace, check_invariants=check_invariants)
    except Exception as exc:  # sweep continues past failed scenarios
        log.warning("scenario %s failed: %s", cfg.label, exc)
        return _failed(cfg, exc)


def run_sweep(plan: Sequence[ScenarioConfig], jobs: int = 1, keep_traces: bool = False,
              check_invariants: bool = False) -> list[ScenarioResult]:
    """Run every scenario of ``plan``; results come back in plan order."""
    n = len(plan)
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_safe, plan, [keep_traces] * n, [check_invariants] * n))
    return [_run_safe(cfg, keep_traces, check_invariants) for cfg in plan]


# aggregation ------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    point: str
    routing: str
    theta: float
    lambda_mean: float
    tau_up_s: float
    n_car: int
    n_seeds: int
    tau_all_mean: float | None
    tau_all_std: float | None
    tau_informed_mean: float | None
    tau_uninformed_mean: float | None
    slope_mean: float | None
    unstable_runs: int


SUMMARY_COLUMNS = tuple(SummaryRow.__dataclass_fields__)


def point_key(cfg: ScenarioConfig) -> str:
    return cfg.replace(seed=0, scenario_id="").label.rsplit("-s", 1)[0]


def _stats(xs: list[float]) -> tuple[float | None, float | None]:
    if not xs:
        return None, None
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def aggregate(results: Sequence[ScenarioResult]) -> list[SummaryRow]:
    """Mean and sample standard deviation per scenario point (all seeds pooled), in first-seen order."""
    groups: dict[str, list[ScenarioResult]] = {}
    for r in results:
        groups.setdefault(point_key(r.cfg), []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if not r.row.status.startswith("failed")]
        c = rs[0].cfg
        vals = lambda f: [getattr(r.row, f) for r in ok if getattr(r.row, f) is not None]
        m_all, s_all = _stats(vals("tau_avg_all_s"))
        out.append(SummaryRow(
            key, c.routing, c.effective_theta, c.lambda_mean_veh_per_h, c.tau_up_s, c.n_car, len(ok),
            m_all, s_all, _stats(vals("tau_avg_informed_s"))[0], _stats(vals("tau_avg_uninformed_s"))[0],
            _stats(vals("stability_slope_s_per_min"))[0], sum(r.row.status == "unstable" for r in ok),
        ))
    return out
