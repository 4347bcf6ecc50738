"""Shortest-path routing over a RoadGraph.

Path cost convention: a TurnEdge (v_i -> v_j) carries the cost of traversing
v_i and crossing its downstream intersection; the final segment of a route
adds a terminal cost (its length under static costs, its free-flow time under
dynamic costs).

Ties between equal-cost routes are broken canonically: among all optimal
routes the one whose segment-id sequence is lexicographically smallest wins.
This makes results independent of edge insertion order.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Sequence

from .netgrid import RoadGraph

TIE_RTOL = 1e-9


class RoutingError(RuntimeError):
    """Destination unreachable from the requested origin."""


class CostContractError(ValueError):
    """A cost table is incomplete or contains a non-finite / non-positive cost."""


@dataclass(frozen=True)
class Route:
    segments: tuple[str, ...]
    cost_estimate: float
    computed_at_s: float = 0.0


class CostProvider:
    """Edge and terminal costs aligned with ``g.edges`` / ``g.ids``.

    Use :meth:`static` or :meth:`dynamic` rather than the constructor.
    """

    def __init__(self, mode: str, edge_costs: Sequence[float], terminal_costs: Sequence[float], snapshot=None):
        self.mode = mode
        self.edge_costs = edge_costs
        self.terminal_costs = terminal_costs
        self.snapshot = snapshot

    @classmethod
    def static(cls, g: RoadGraph) -> "CostProvider":
        cached = getattr(g, "_static_costs", None)
        if cached is None:
            lengths = [g.segments[s].length_m for s in g.ids]
            edge = [lengths[g.index[e.frm]] for e in g.edges]
            cached = cls("static_distance", edge, lengths)
            g._static_costs = cached
        return cached

    @classmethod
    def dynamic(cls, g: RoadGraph, snap) -> "CostProvider":
        costs = snap.edge_costs
        if len(costs) != len(g.edges):
            missing = [e.key for e in g.edges if e.key not in snap.costs]
            raise CostContractError(f"snapshot epoch {snap.epoch} does not cover edges {missing[:5]}")
        return cls("dynamic_snapshot", costs, g.free_flow_times(), snap)

    @classmethod
    def from_table(cls, g: RoadGraph, table: dict[tuple[str, str], float], terminal: Sequence[float] | None = None) -> "CostProvider":
        """Provider from an explicit {(from, to): cost} table; terminal costs default to 1."""
        try:
            edge = [table[e.key] for e in g.edges]
        except KeyError as exc:
            raise CostContractError(f"cost table missing edge {exc.args[0]}") from None
        return cls("table", edge, list(terminal) if terminal is not None else [1.0] * len(g.ids))


def _check(c: float, what) -> float:
    if not (c > 0 and math.isfinite(c)):
        raise CostContractError(f"non-finite or non-positive cost {c!r} on {what}")
    return c


def cost_to_go(g: RoadGraph, costs: CostProvider, target: int) -> list[float]:
    """Binary-heap Dijkstra on the reversed graph: cost from every vertex to ``target``."""
    n = len(g.ids)
    dist = [math.inf] * n
    term = costs.terminal_costs[target]
    if not (term >= 0 and math.isfinite(term)):
        raise CostContractError(f"non-finite or negative terminal cost {term!r} on {g.ids[target]}")
    dist[target] = term
    heap = [(dist[target], target)]
    ec = costs.edge_costs
    pred = g.pred
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for u, k in pred[v]:
            c = ec[k]
            if not (c > 0 and c < math.inf):
                _check(c, g.edges[k].key)
            nd = d + c
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def _best_successors(g: RoadGraph, ec, dist, u: int) -> list[int]:
    best = math.inf
    cands = []
    for v, k in g.succ[u]:
        c = ec[k] + dist[v]
        cands.append((c, v))
        if c < best:
            best = c
    tol = TIE_RTOL * best
    return [v for c, v in cands if c - best <= tol]


def next_hops(g: RoadGraph, costs: CostProvider, target: int) -> tuple[list[float], list[int]]:
    """Cost-to-go and canonical next hop (-1 at the target / unreachable) for every vertex."""
    dist = cost_to_go(g, costs, target)
    nxt = [-1] * len(dist)
    ec = costs.edge_costs
    for u in range(len(dist)):
        if u != target and dist[u] < math.inf:
            nxt[u] = min(_best_successors(g, ec, dist, u))
    return dist, nxt


def walk(nxt: Sequence[int], start: int, target: int) -> list[int]:
    path = [start]
    u = start
    while u != target:
        u = nxt[u]
        path.append(u)
    return path


def shortest_path(g: RoadGraph, costs: CostProvider, frm: str, to: str, at_s: float = 0.0,
                  rng: random.Random | None = None) -> Route:
    """Minimum-cost route from segment ``frm`` to segment ``to``.

    With ``rng`` given, ties are broken uniformly at random instead of by
    segment id.
    """
    if frm not in g.index or to not in g.index:
        raise KeyError(f"unknown segment in ({frm!r}, {to!r})")
    s, t = g.index[frm], g.index[to]
    dist = cost_to_go(g, costs, t)
    if dist[s] == math.inf:
        raise RoutingError(f"{to} is unreachable from {frm}")
    path = [s]
    u = s
    while u != t:
        cands = _best_successors(g, costs.edge_costs, dist, u)
        u = rng.choice(cands) if rng is not None else min(cands)
        path.append(u)
    return Route(tuple(g.ids[i] for i in path), dist[s], at_s)


def static_route(g: RoadGraph, frm: str, to: str, at_s: float = 0.0, rng: random.Random | None = None) -> Route:
    return shortest_path(g, CostProvider.static(g), frm, to, at_s, rng)


def dynamic_route(g: RoadGraph, snap, frm: str, to: str, at_s: float | None = None) -> Route:
    when = snap.published_at_s if at_s is None else at_s
    return shortest_path(g, CostProvider.dynamic(g, snap), frm, to, when)


def route_cost(g: RoadGraph, costs: CostProvider, segments: Sequence[str]) -> float:
    """Sum of provider costs along an explicit segment sequence."""
    idx = [g.index[s] for s in segments]
    total = costs.terminal_costs[idx[-1]]
    for a, b in zip(segments, segments[1:]):
        total += costs.edge_costs[g.edge_index[(a, b)]]
    return total
