"""Independent reference implementations used to cross-check the router and telemetry.

Nothing here shares code paths with the implementations it checks: routes are
verified against exhaustive simple-path enumeration, moving averages against a
plain backwards scan.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import router
from .netgrid import GridSpec, RoadGraph, build_grid
from .telemetry import Telemetry

SMALL_GRIDS = ((2, 2), (2, 3), (3, 2), (3, 3))


def enumerate_simple_paths(g: RoadGraph, start: int, targets: set[int]) -> list[tuple[int, ...]]:
    """Every vertex-simple path (as segment indices) from ``start`` to any vertex in ``targets``.

    Paths stop at the first target reached.
    """
    out: list[tuple[int, ...]] = []
    path = [start]
    on_path = {start}
    stack = [iter(g.succ[start])]
    if start in targets:
        return [(start,)]
    while stack:
        step = next(stack[-1], None)
        if step is None:
            stack.pop()
            on_path.discard(path.pop())
            continue
        v = step[0]
        if v in on_path:
            continue
        if v in targets:
            out.append((*path, v))
            continue
        path.append(v)
        on_path.add(v)
        stack.append(iter(g.succ[v]))
    return out


class PathOracle:
    """Brute-force minimum-cost routes between every (source, sink) pair of a graph."""

    def __init__(self, g: RoadGraph):
        self.g = g
        sinks = {g.index[s] for s in g.sinks}
        self.paths: list[tuple[int, ...]] = []
        for src in g.sources:
            self.paths.extend(enumerate_simple_paths(g, g.index[src], sinks))
        # group paths by (source, sink) and flatten their edge indices for vectorised costing
        self.groups: dict[tuple[int, int], np.ndarray] = {}
        by_pair: dict[tuple[int, int], list[int]] = {}
        for p_i, p in enumerate(self.paths):
            by_pair.setdefault((p[0], p[-1]), []).append(p_i)
        self.groups = {k: np.asarray(v) for k, v in by_pair.items()}
        flat, starts = [], []
        for p in self.paths:
            starts.append(len(flat))
            flat.extend(g.edge_index[(a, b)] for a, b in zip((g.ids[i] for i in p), (g.ids[i] for i in p[1:])))
        self._flat = np.asarray(flat)
        self._starts = np.asarray(starts)
        self._last = np.asarray([p[-1] for p in self.paths])

    def path_costs(self, edge_costs: Sequence[float], terminal_costs: Sequence[float]) -> np.ndarray:
        ec = np.asarray(edge_costs, dtype=float)
        tc = np.asarray(terminal_costs, dtype=float)
        return np.add.reduceat(ec[self._flat], self._starts) + tc[self._last]

    def best(self, costs: np.ndarray, pair: tuple[int, int], rtol: float = 1e-9) -> tuple[float, tuple[int, ...]]:
        """Optimal cost and the lexicographically smallest optimal path for ``pair``."""
        idx = self.groups[pair]
        c = costs[idx]
        lo = c.min()
        cands = idx[c <= lo + rtol * abs(lo)]
        return float(lo), min(self.paths[i] for i in cands)


@dataclass
class OracleReport:
    comparisons: int = 0
    mismatches: list[str] = field(default_factory=list)
    max_rel_error: float = 0.0

    @property
    def ok(self) -> bool:
        return self.comparisons > 0 and not self.mismatches


def random_cost_table(g: RoadGraph, rng: random.Random, integer: bool = False) -> tuple[dict, list[float]]:
    """Random strictly positive edge and terminal costs; integer tables provoke exact ties."""
    draw = (lambda: float(rng.randint(1, 4))) if integer else (lambda: rng.uniform(0.1, 10.0))
    table = {e.key: draw() for e in g.edges}
    terminal = [draw() for _ in g.ids]
    return table, terminal


def check_router(grids: Sequence[tuple[int, int]] = SMALL_GRIDS, n_tables: int = 100, seed: int = 7,
                 rtol: float = 1e-9) -> OracleReport:
    """Compare ``router.shortest_path`` with enumeration for every source/sink pair.

    Half of the tables use small integer costs so that ties occur and the
    canonical tie-break is exercised; a mismatch is any difference in cost or
    in the returned segment sequence.
    """
    rep = OracleReport()
    rng = random.Random(seed)
    for rows, cols in grids:
        g = build_grid(GridSpec(rows=rows, cols=cols))
        oracle = PathOracle(g)
        for t in range(n_tables):
            table, terminal = random_cost_table(g, rng, integer=t % 2 == 1)
            provider = router.CostProvider.from_table(g, table, terminal)
            costs = oracle.path_costs(provider.edge_costs, terminal)
            for src in g.sources:
                for snk in g.sinks:
                    pair = (g.index[src], g.index[snk])
                    want_cost, want_path = oracle.best(costs, pair, rtol)
                    got = router.shortest_path(g, provider, src, snk)
                    rep.comparisons += 1
                    rel = abs(got.cost_estimate - want_cost) / want_cost
                    rep.max_rel_error = max(rep.max_rel_error, rel)
                    want = tuple(g.ids[i] for i in want_path)
                    if rel > rtol or got.segments != want:
                        rep.mismatches.append(f"{rows}x{cols} table {t} {src}->{snk}: got {got.segments} "
                                              f"({got.cost_estimate}), expected {want} ({want_cost})")
    return rep


def scan_mean(samples: Sequence[float], n_car: int, fallback: float) -> float:
    """Mean of the last min(k, n_car) samples, by an explicit backwards scan."""
    total, count = 0.0, 0
    i = len(samples) - 1
    while i >= 0 and count < n_car:
        total += samples[i]
        count += 1
        i -= 1
    return total / count if count else fallback


def check_moving_average(n_sequences: int = 10_000, seed: int = 11, rtol: float = 1e-9) -> OracleReport:
    """Feed random sample sequences through Telemetry and compare with :func:`scan_mean`."""
    rep = OracleReport()
    rng = random.Random(seed)
    g = build_grid(GridSpec(rows=2, cols=2))
    keys = [e.key for e in g.edges]
    per_n: dict[int, Telemetry] = {}
    for _ in range(n_sequences):
        n_car = rng.randint(1, 20)
        tel = per_n.get(n_car)
        if tel is None:
            tel = per_n[n_car] = Telemetry(g, n_car)
        k = rng.randrange(len(keys))
        tel.rings[k].clear()
        fb = tel.fallback[k]
        seq = [fb * rng.uniform(1.0, 30.0) for _ in range(rng.randint(0, 3 * n_car))]
        for j, d in enumerate(seq):
            tel.record(k, d, float(j))
        got = tel.moving_average(keys[k])
        want = scan_mean(seq, n_car, fb)
        rel = abs(got - want) / abs(want)
        rep.comparisons += 1
        rep.max_rel_error = max(rep.max_rel_error, rel)
        if not rel <= rtol or math.isnan(got):
            rep.mismatches.append(f"n_car={n_car} len={len(seq)}: got {got!r}, expected {want!r}")
    return rep
