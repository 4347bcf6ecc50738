"""Coordinator information plane: per-movement traversal history and weight snapshots."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .netgrid import RoadGraph

TICK_TOLERANCE_S = 1.0


class TelemetryError(ValueError):
    pass


@dataclass(frozen=True)
class TraversalSample:
    edge: tuple[str, str]
    duration_s: float
    completed_at_s: float


@dataclass(frozen=True)
class WeightSnapshot:
    published_at_s: float
    epoch: int
    edge_costs: tuple[float, ...]  # aligned with graph.edges
    costs: Mapping[tuple[str, str], float]

    def cost(self, frm: str, to: str) -> float:
        return self.costs[(frm, to)]


class Telemetry:
    """Last-``n_car`` traversal times per TurnEdge.

    Edges are addressed either by (from, to) key or by their index in
    ``graph.edges``; the simulator uses the index form.
    """

    def __init__(self, graph: RoadGraph, n_car: int = 10):
        if n_car < 1:
            raise TelemetryError(f"n_car must be >= 1 (got {n_car})")
        self.graph = graph
        self.n_car = n_car
        self.rings: list[deque] = [deque(maxlen=n_car) for _ in graph.edges]
        self._last_t = [float("-inf")] * len(graph.edges)
        ff = graph.free_flow_times()
        self.fallback = [ff[graph.index[e.frm]] for e in graph.edges]
        self.epoch = -1
        self.last_published_s = float("-inf")

    def _edge(self, edge) -> int:
        if isinstance(edge, int):
            if not 0 <= edge < len(self.rings):
                raise TelemetryError(f"unknown edge index {edge}")
            return edge
        k = self.graph.edge_index.get(tuple(edge))
        if k is None:
            raise TelemetryError(f"unknown edge {edge!r}")
        return k

    def record_traversal(self, sample: TraversalSample) -> None:
        k = self._edge(sample.edge)
        if not sample.duration_s > 0:
            raise TelemetryError(f"traversal duration must be positive (got {sample.duration_s})")
        if sample.duration_s < self.fallback[k] - TICK_TOLERANCE_S:
            raise TelemetryError(
                f"traversal of {sample.edge} in {sample.duration_s}s beats free-flow time {self.fallback[k]:.3f}s"
            )
        if sample.completed_at_s < self._last_t[k]:
            raise TelemetryError(f"out-of-order sample on {sample.edge}")
        self.record(k, sample.duration_s, sample.completed_at_s)

    def record(self, k: int, duration_s: float, completed_at_s: float) -> None:
        """Unchecked fast path used by the simulation engine."""
        self.rings[k].append(duration_s)
        self._last_t[k] = completed_at_s

    def samples(self, edge) -> list[float]:
        return list(self.rings[self._edge(edge)])

    def moving_average(self, edge) -> float:
        k = self._edge(edge)
        ring = self.rings[k]
        if not ring:
            return self.fallback[k]
        return sum(ring) / len(ring)

    def publish_snapshot(self, now_s: float) -> WeightSnapshot:
        if now_s < self.last_published_s:
            raise TelemetryError(f"snapshot time went backwards: {now_s} < {self.last_published_s}")
        costs = tuple(
            sum(ring) / len(ring) if ring else fb for ring, fb in zip(self.rings, self.fallback)
        )
        self.epoch += 1
        self.last_published_s = now_s
        table = MappingProxyType({e.key: c for e, c in zip(self.graph.edges, costs)})
        return WeightSnapshot(now_s, self.epoch, costs, table)


def cold_snapshot(graph: RoadGraph, now_s: float = 0.0) -> WeightSnapshot:
    return Telemetry(graph, 1).publish_snapshot(now_s)


def dump_snapshots_csv(snapshots: Iterable[WeightSnapshot], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "edge", "cost_s"])
        for snap in snapshots:
            for (a, b), c in snap.costs.items():
                w.writerow([snap.epoch, f"{a}->{b}", repr(c)])
