"""Discrete-time spatial-queue simulation with informed and uninformed vehicles.

Each segment holds vehicles in two stages: a running stage (free-flow
traversal) followed by per-movement exit queues discharged by the actuated
signal at its downstream intersection. Downstream storage limits discharge
(spillback).
"""

from __future__ import annotations

import bisect
import hashlib
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from . import router
from .netgrid import MOVEMENTS, RoadGraph
from .router import CostProvider, Route
from .telemetry import Telemetry, WeightSnapshot

INFORMED = "informed"
UNINFORMED = "uninformed"
NS, EW = "NS", "EW"


class ConsistencyError(RuntimeError):
    """Internal simulator state is inconsistent (a bug, not a user error)."""


@dataclass(frozen=True)
class FlowParams:
    dt_s: float = 1.0
    saturation_flow_veh_per_s_per_lane: float = 0.5
    vehicle_length_m: float = 7.5
    min_green_s: float = 10.0
    max_green_s: float = 60.0
    theta: float = 0.0
    tau_up_s: float = 180.0
    n_car: int = 10
    # False runs the pure static scenario: no telemetry, no snapshots
    information: bool = True
    static_random_ties: bool = False
    # rest in green while the cross axis has no queue; end a green early once its own queue is empty
    gap_out: bool = True


class Vehicle:
    __slots__ = (
        "id", "source", "destination", "info_class", "informed", "path", "pos",
        "spawned_at_s", "entered_network_at_s", "completed_at_s", "segment_entry_s", "distance_m",
    )

    def __init__(self, vid: int, source: int, destination: int, info_class: str, spawned_at_s: float):
        self.id = vid
        self.source = source
        self.destination = destination
        self.info_class = info_class
        self.informed = info_class == INFORMED
        self.path: list[int] = [source]
        self.pos = 0
        self.spawned_at_s = spawned_at_s
        self.entered_network_at_s: float | None = None
        self.completed_at_s: float | None = None
        self.segment_entry_s: float | None = None
        self.distance_m = 0.0

    @property
    def current_segment(self) -> int:
        return self.path[self.pos]

    def remaining(self) -> list[int]:
        return self.path[self.pos:]

    def __repr__(self) -> str:
        return f"Vehicle({self.id}, {self.info_class}, at={self.current_segment}, dst={self.destination})"


class PoissonSource:
    """Poisson arrival process at one source stub with its OD row."""

    def __init__(self, source: str, rate_veh_per_h: float, od_row: Mapping[str, float]):
        if rate_veh_per_h < 0:
            raise ValueError(f"negative rate at {source}")
        probs = [(k, float(p)) for k, p in od_row.items()]
        if any(p < 0 for _, p in probs) or abs(sum(p for _, p in probs) - 1.0) > 1e-9:
            raise ValueError(f"OD row of {source} must be non-negative and sum to 1")
        self.source = source
        self.rate_veh_per_h = float(rate_veh_per_h)
        self.od_row = dict(od_row)
        self.sinks = [k for k, p in probs if p > 0]
        acc, cum = 0.0, []
        for _, p in probs:
            if p > 0:
                acc += p
                cum.append(acc)
        self._cum = [c / acc for c in cum]
        self._cum[-1] = 1.0
        self.pending: deque[Vehicle] = deque()
        self.next_arrival_s: float | None = None  # lazily drawn


def sample_destination(src: PoissonSource, rng: random.Random) -> str:
    return src.sinks[bisect.bisect_right(src._cum, rng.random())]


def assign_information_class(rng: random.Random, theta: float) -> str:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1] (got {theta})")
    return INFORMED if rng.random() < theta else UNINFORMED


def spawn_arrivals(src: PoissonSource, t_s: float, dt_s: float, rng: random.Random,
                   info_rng: random.Random, theta: float, ids: Iterator[int],
                   index: Mapping[str, int] | None = None) -> list[Vehicle]:
    """Vehicles whose Poisson arrival instant falls in [t_s, t_s + dt_s).

    Arrivals are generated from exponential gaps, so the per-tick count is
    Poisson with mean rate * dt. Destination and gap draws share ``rng``;
    the information class is drawn from the separate ``info_rng``.
    """
    if not dt_s > 0:
        raise ValueError("dt_s must be positive")
    if src.rate_veh_per_h <= 0:
        return []
    rate = src.rate_veh_per_h / 3600.0
    if src.next_arrival_s is None:
        src.next_arrival_s = rng.expovariate(rate)
    out = []
    end = t_s + dt_s
    while src.next_arrival_s < end:
        dst = sample_destination(src, rng)
        src.next_arrival_s += rng.expovariate(rate)
        cls = assign_information_class(info_rng, theta)
        if index is not None:
            out.append(Vehicle(next(ids), index[src.source], index[dst], cls, t_s))
        else:
            out.append(Vehicle(next(ids), src.source, dst, cls, t_s))
    return out


def actuated_greens(q_ns: float, q_ew: float, min_green_s: float, max_green_s: float) -> dict[str, float]:
    """Green split proportional to the queue share of each axis."""
    total = q_ns + q_ew
    if total <= 0:
        return {NS: min_green_s, EW: min_green_s}
    span = max_green_s - min_green_s
    clamp = lambda g: min(max(g, min_green_s), max_green_s)
    return {NS: clamp(min_green_s + span * q_ns / total), EW: clamp(min_green_s + span * q_ew / total)}


class SignalController:
    def __init__(self, intersection: str, ns_in: list[int], ew_in: list[int],
                 min_green_s: float, max_green_s: float, active: str = NS):
        if not min_green_s <= max_green_s:
            raise ValueError("min_green_s must not exceed max_green_s")
        self.intersection = intersection
        self.incoming = {NS: ns_in, EW: ew_in}
        self.min_green_s = min_green_s
        self.max_green_s = max_green_s
        self.green_s = {NS: min_green_s, EW: min_green_s}
        self.active = active
        self.phase_start_s = 0.0

    def expired(self, t_s: float) -> bool:
        return t_s - self.phase_start_s >= self.green_s[self.active]


def update_signals(ctrl: SignalController, queue_lengths_by_axis: Mapping[str, float], t_s: float) -> None:
    """Phase expiry: recompute the green split and hand over to the other axis."""
    ctrl.green_s = actuated_greens(queue_lengths_by_axis[NS], queue_lengths_by_axis[EW],
                                   ctrl.min_green_s, ctrl.max_green_s)
    ctrl.active = EW if ctrl.active == NS else NS
    ctrl.phase_start_s = t_s


class LinkState:
    __slots__ = ("segment", "capacity", "fft", "lanes", "length", "running", "queues",
                 "targets", "edges", "slot", "occupancy", "credit", "rr", "nqueued")

    def __init__(self, segment: int, capacity: int, fft: float, lanes: int, length: float):
        self.segment = segment
        self.capacity = capacity
        self.fft = fft
        self.lanes = lanes
        self.length = length
        self.running: deque = deque()  # (exit_ready_s, vehicle)
        self.queues: list[deque] = []
        self.targets: list[int] = []
        self.edges: list[int] = []
        self.slot: dict[int, int] = {}
        self.occupancy = 0
        self.credit = 0.0
        self.rr = 0
        self.nqueued = 0  # total length of the exit queues


@dataclass
class TickReport:
    t_s: float
    spawned: list[Vehicle] = field(default_factory=list)
    completed: list[Vehicle] = field(default_factory=list)
    traversals: list[tuple[int, int, float]] = field(default_factory=list)  # (vehicle, edge idx, duration)
    snapshot: WeightSnapshot | None = None
    reroutes: int = 0


def rng_streams(seed: int) -> dict[str, random.Random]:
    """Independent named streams; string seeding is stable across processes."""
    return {name: random.Random(f"{seed}:{name}") for name in ("arrivals", "information", "signals", "ties")}


class Simulation:
    """One simulation instance; owns all mutable state, single-threaded."""

    def __init__(self, graph: RoadGraph, sources: Sequence[PoissonSource], params: FlowParams,
                 seed: int = 0, hash_events: bool = True):
        if not params.dt_s > 0:
            raise ValueError("dt_s must be positive")
        self.g = graph
        self.p = params
        self.seed = seed
        self.rng = rng_streams(seed)
        self.sources = list(sources)
        self.t = 0.0
        self.tick = 0
        self._ids = iter(range(1 << 62))
        self.vehicles: list[Vehicle] = []
        self.active: dict[int, Vehicle] = {}
        self.spawned = 0
        self.completed = 0
        self.reroute_count = 0
        self.hash_events = hash_events
        self._hasher = hashlib.blake2b(digest_size=16)
        self.snapshots: list[WeightSnapshot] = []

        ff = graph.free_flow_times()
        self.links: list[LinkState] = []
        for i, sid in enumerate(graph.ids):
            seg = graph.segments[sid]
            cap = int(seg.lanes * seg.length_m / params.vehicle_length_m)
            self.links.append(LinkState(i, max(cap, 1), ff[i], seg.lanes, seg.length_m))
        for i, link in enumerate(self.links):
            outs = sorted(graph.succ[i], key=lambda vk: (MOVEMENTS.index(graph.edges[vk[1]].movement), vk[0]))
            for v, k in outs:
                link.slot[v] = len(link.queues)
                link.queues.append(deque())
                link.targets.append(v)
                link.edges.append(k)

        sig = self.rng["signals"]
        self.signals: list[SignalController] = []
        for nid, node in graph.intersections.items():
            ns = [graph.index[s] for s in node.incoming if graph.segments[s].axis == NS]
            ew = [graph.index[s] for s in node.incoming if graph.segments[s].axis == EW]
            start = NS if sig.random() < 0.5 else EW
            self.signals.append(SignalController(nid, ns, ew, params.min_green_s, params.max_green_s, start))

        self.telemetry = Telemetry(graph, params.n_car) if params.information else None
        self.snapshot: WeightSnapshot | None = None
        self._dyn_tables: dict[int, list[int]] = {}
        self._static_tables: dict[int, list[int]] = {}
        if params.information and not params.tau_up_s > 0:
            raise ValueError("tau_up_s must be positive")
        tau_ticks = params.tau_up_s / params.dt_s
        self._tau_ticks = None if math.isinf(tau_ticks) else max(1, round(tau_ticks))
        self._rate = params.saturation_flow_veh_per_s_per_lane * params.dt_s

    # routing ---------------------------------------------------------------

    def _static_next(self, dst: int) -> list[int]:
        tab = self._static_tables.get(dst)
        if tab is None:
            tab = router.next_hops(self.g, CostProvider.static(self.g), dst)[1]
            self._static_tables[dst] = tab
        return tab

    def _dynamic_next(self, dst: int) -> list[int]:
        tab = self._dyn_tables.get(dst)
        if tab is None:
            tab = router.next_hops(self.g, CostProvider.dynamic(self.g, self.snapshot), dst)[1]
            self._dyn_tables[dst] = tab
        return tab

    def _initial_path(self, v: Vehicle) -> list[int]:
        if v.informed and self.snapshot is not None:
            return router.walk(self._dynamic_next(v.destination), v.source, v.destination)
        if self.p.static_random_ties:
            tie_rng = random.Random(f"{self.seed}:ties:{v.id}")
            r = router.static_route(self.g, self.g.ids[v.source], self.g.ids[v.destination], rng=tie_rng)
            return [self.g.index[s] for s in r.segments]
        return router.walk(self._static_next(v.destination), v.source, v.destination)

    def route_of(self, v: Vehicle) -> Route:
        ids = self.g.ids
        return Route(tuple(ids[i] for i in v.remaining()), math.nan, self.t)

    def apply_snapshot(self, snap: WeightSnapshot) -> int:
        """Install ``snap`` and reroute informed vehicles from their next segment onward."""
        self.snapshot = snap
        self._dyn_tables = {}
        changed = 0
        for v in self.active.values():
            if not v.informed:
                continue
            path, pos = v.path, v.pos
            if pos + 1 >= len(path):
                continue
            tail = router.walk(self._dynamic_next(v.destination), path[pos + 1], v.destination)
            if tail != path[pos + 1:]:
                v.path = path[: pos + 1] + tail
                changed += 1
        return changed

    # dynamics --------------------------------------------------------------

    def _admit(self, src_idx: int, src: PoissonSource) -> int:
        link = self.links[src_idx]
        n = 0
        pending = src.pending
        while pending and link.occupancy < link.capacity:
            v = pending.popleft()
            v.entered_network_at_s = self.t
            v.segment_entry_s = self.t
            v.distance_m += link.length
            link.occupancy += 1
            link.running.append((self.t + link.fft, v))
            n += 1
        return n

    def advance_links(self, report: TickReport) -> None:
        t = self.t
        for link in self.links:
            running = link.running
            while running and running[0][0] <= t:
                _, v = running.popleft()
                path, pos = v.path, v.pos
                if pos + 1 == len(path):
                    if path[pos] != v.destination:
                        raise ConsistencyError(f"{v!r} has no next segment but is not at its destination")
                    v.completed_at_s = t
                    link.occupancy -= 1
                    del self.active[v.id]
                    self.completed += 1
                    report.completed.append(v)
                    continue
                slot = link.slot.get(path[pos + 1])
                if slot is None:
                    raise ConsistencyError(f"{v!r} routed over missing edge {path[pos]}->{path[pos + 1]}")
                link.queues[slot].append(v)
                link.nqueued += 1

    def axis_queues(self, ctrl: SignalController) -> dict[str, int]:
        links = self.links
        return {ax: sum(links[s].nqueued for s in segs) for ax, segs in ctrl.incoming.items()}

    def update_signals(self) -> None:
        gap_out = self.p.gap_out
        for ctrl in self.signals:
            if gap_out:
                q = self.axis_queues(ctrl)
                waiting = q[EW if ctrl.active == NS else NS]
                if not waiting or not (q[ctrl.active] == 0 or ctrl.expired(self.t)):
                    continue
            elif not ctrl.expired(self.t):
                continue
            else:
                q = self.axis_queues(ctrl)
            for s in ctrl.incoming[ctrl.active]:
                self.links[s].credit = 0.0
            update_signals(ctrl, q, self.t)

    def serve_intersections(self, report: TickReport) -> None:
        t = self.t
        links = self.links
        traversals = report.traversals
        tel = self.telemetry
        for ctrl in self.signals:
            for s in ctrl.incoming[ctrl.active]:
                link = links[s]
                link.credit += self._rate * link.lanes
                if link.credit < 1.0:
                    continue
                queues = link.queues
                nq = len(queues)
                blocked = [False] * nq
                servable = True
                while link.credit >= 1.0:
                    served = False
                    for j in range(nq):
                        qi = (link.rr + j) % nq
                        q = queues[qi]
                        if not q or blocked[qi]:
                            continue
                        dst = links[link.targets[qi]]
                        if dst.occupancy >= dst.capacity:
                            blocked[qi] = True
                            continue
                        v = q.popleft()
                        link.nqueued -= 1
                        link.credit -= 1.0
                        link.occupancy -= 1
                        dst.occupancy += 1
                        k = link.edges[qi]
                        dur = t - v.segment_entry_s
                        traversals.append((v.id, k, dur))
                        if tel is not None:
                            tel.record(k, dur, t)
                        v.pos += 1
                        v.segment_entry_s = t
                        v.distance_m += dst.length
                        dst.running.append((t + dst.fft, v))
                        link.rr = (qi + 1) % nq
                        served = True
                        break
                    if not served:
                        servable = False
                        break
                if not servable and link.credit > 1.0:
                    link.credit = 1.0

    def step(self) -> TickReport:
        """Advance one tick: snapshot, arrivals, link propagation, signals, service."""
        report = TickReport(self.t)
        p = self.p
        if self.telemetry is not None and (
            self.tick == 0 or (self._tau_ticks is not None and self.tick % self._tau_ticks == 0)
        ):
            snap = self.telemetry.publish_snapshot(self.t)
            self.snapshots.append(snap)
            report.snapshot = snap
            report.reroutes = self.apply_snapshot(snap)
            self.reroute_count += report.reroutes

        arrivals, info = self.rng["arrivals"], self.rng["information"]
        index = self.g.index
        theta = p.theta if p.information else 0.0
        for src in self.sources:
            new = spawn_arrivals(src, self.t, p.dt_s, arrivals, info, theta, self._ids, index)
            for v in new:
                v.path = self._initial_path(v)
                self.active[v.id] = v
            if new:
                src.pending.extend(new)
                self.vehicles.extend(new)
                report.spawned.extend(new)
                self.spawned += len(new)
            if src.pending:
                self._admit(index[src.source], src)

        self.advance_links(report)
        self.update_signals()
        self.serve_intersections(report)

        if self.hash_events and (report.spawned or report.completed or report.traversals):
            self._hasher.update(repr((
                self.tick,
                [(v.id, v.destination, v.info_class) for v in report.spawned],
                [v.id for v in report.completed],
                report.traversals,
            )).encode())
        self.tick += 1
        self.t = self.tick * p.dt_s
        return report

    def run(self, duration_s: float, monitor: "InvariantMonitor | None" = None) -> "Simulation":
        n = round(duration_s / self.p.dt_s)
        for _ in range(n):
            report = self.step()
            if monitor is not None:
                monitor.observe(report)
        # closing publication when the horizon falls on a snapshot boundary
        if self.telemetry is not None and self._tau_ticks is not None and self.tick % self._tau_ticks == 0:
            self.snapshots.append(self.telemetry.publish_snapshot(self.t))
        return self

    def place_vehicle(self, path: Sequence[str], info_class: str = UNINFORMED, queued: bool = False) -> Vehicle:
        """Put a vehicle directly onto ``path[0]`` with a fixed route (scenario construction, tests).

        With ``queued`` the vehicle waits in the exit queue towards ``path[1]``;
        otherwise it starts a free-flow traversal of ``path[0]`` now.
        """
        idx = [self.g.index[s] for s in path]
        link = self.links[idx[0]]
        if link.occupancy >= link.capacity:
            raise ConsistencyError(f"segment {path[0]} is full")
        v = Vehicle(next(self._ids), idx[0], idx[-1], info_class, self.t)
        v.path = idx
        v.entered_network_at_s = v.segment_entry_s = self.t
        v.distance_m = link.length
        link.occupancy += 1
        if queued:
            if len(idx) < 2:
                raise ValueError("a queued vehicle needs a next segment")
            link.queues[link.slot[idx[1]]].append(v)
            link.nqueued += 1
        else:
            link.running.append((self.t + link.fft, v))
        self.active[v.id] = v
        self.vehicles.append(v)
        self.spawned += 1
        return v

    # bookkeeping -----------------------------------------------------------

    def in_network(self) -> int:
        return sum(link.occupancy for link in self.links)

    def pending(self) -> int:
        return sum(len(s.pending) for s in self.sources)

    def trace_hash(self) -> str:
        return self._hasher.hexdigest()


class InvariantMonitor:
    """Checks conservation, storage safety, per-movement FIFO and trip-time sanity after each tick."""

    def __init__(self, sim: Simulation, limit: int = 20):
        self.sim = sim
        self.limit = limit
        self.violations: list[str] = []
        self.ticks = 0
        self._last_entry: dict[int, float] = {}
        self._fft = [link.fft for link in sim.links]

    def _flag(self, msg: str) -> None:
        if len(self.violations) < self.limit:
            self.violations.append(msg)

    def observe(self, report: TickReport) -> None:
        sim = self.sim
        t = report.t_s
        self.ticks += 1
        occupancy = 0
        for link in sim.links:
            occupancy += link.occupancy
            if link.occupancy > link.capacity:
                self._flag(f"t={t}: segment {sim.g.ids[link.segment]} holds {link.occupancy} > {link.capacity}")
            if link.occupancy != len(link.running) + link.nqueued:
                self._flag(f"t={t}: occupancy bookkeeping broken on {sim.g.ids[link.segment]}")
        if sim.spawned != sim.completed + occupancy + sim.pending():
            self._flag(f"t={t}: conservation broken: spawned {sim.spawned} != completed {sim.completed} "
                       f"+ in-network {occupancy} + pending {sim.pending()}")
        last = self._last_entry
        for _, k, dur in report.traversals:
            entry = t - dur
            if entry < last.get(k, -math.inf):
                self._flag(f"t={t}: FIFO violated on edge {sim.g.edges[k].key}")
            last[k] = entry
        tol = sim.p.dt_s
        for v in report.completed:
            segs = v.path[: v.pos + 1]
            floor = sum(self._fft[i] for i in segs) - tol * len(segs)
            if v.completed_at_s - v.spawned_at_s < floor:
                self._flag(f"vehicle {v.id} finished faster than free flow")

    @property
    def ok(self) -> bool:
        return not self.violations
