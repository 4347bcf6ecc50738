import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoshare import oracles
from infoshare.netgrid import GridSpec, RoadGraph, RoadSegment, TurnEdge, build_grid, with_edges
from infoshare.router import (
    CostContractError,
    CostProvider,
    RoutingError,
    dynamic_route,
    next_hops,
    route_cost,
    shortest_path,
    static_route,
    walk,
)
from infoshare.telemetry import Telemetry, cold_snapshot


def _seg(sid, kind="interior"):
    return RoadSegment(sid, 100.0, 1, 10.0, kind, (0.0, 0.0), (0.0, 0.0), "E", "H0", None, None)


@pytest.fixture
def diamond():
    segs = {s: _seg(s) for s in "abcd"}
    edges = (TurnEdge("a", "b", "X", "right"), TurnEdge("a", "c", "X", "left"),
             TurnEdge("b", "d", "Y", "left"), TurnEdge("c", "d", "Y", "right"))
    return RoadGraph(segs, edges, ("a",), ("d",), {}, None)


@pytest.fixture(scope="module")
def grid():
    return build_grid(GridSpec())


@pytest.fixture(scope="module")
def grid3():
    return build_grid(GridSpec(rows=3, cols=3))


def test_diamond(diamond):
    table = {("a", "b"): 1.0, ("a", "c"): 2.0, ("b", "d"): 5.0, ("c", "d"): 1.0}
    costs = CostProvider.from_table(diamond, table, terminal=[0.0] * 4)
    r = shortest_path(diamond, costs, "a", "d")
    assert r.segments == ("a", "c", "d")
    assert r.cost_estimate == 3.0


def test_degenerate_route_is_terminal_cost(grid):
    s = grid.sinks[4]
    r = static_route(grid, s, s)
    assert r.segments == (s,)
    assert r.cost_estimate == grid.segments[s].length_m


def test_corner_to_opposite_corner_is_manhattan(grid):
    # S1 enters at the north-west corner heading south; D11 leaves at the south-east corner heading south
    src = grid.sources[0]
    snk = next(s for s in grid.sinks if grid.segments[s].end == (10_000.0, 0.0))
    r = static_route(grid, src, snk)
    a, b = grid.segments[src].start, grid.segments[snk].end
    manhattan = abs(a[0] - b[0]) + abs(a[1] - b[1])
    assert r.cost_estimate == pytest.approx(manhattan)
    assert route_cost(grid, CostProvider.static(grid), r.segments) == pytest.approx(manhattan)


def test_static_route_is_time_invariant(grid):
    a = static_route(grid, grid.sources[2], grid.sinks[13], at_s=0)
    b = static_route(grid, grid.sources[2], grid.sinks[13], at_s=3600)
    assert a.segments == b.segments
    assert b.computed_at_s == 3600


def test_routes_follow_edges(grid):
    for src in grid.sources[:5]:
        for snk in grid.sinks:
            if snk == grid.sinks[0]:
                continue
            r = static_route(grid, src, snk)
            assert r.segments[0] == src and r.segments[-1] == snk
            assert all(k in grid.edge_index for k in zip(r.segments, r.segments[1:]))
            assert len(set(r.segments)) == len(r.segments)


def test_cold_snapshot_matches_static(grid):
    snap = cold_snapshot(grid)
    for src in grid.sources:
        for snk in grid.sinks[::3]:
            assert dynamic_route(grid, snap, src, snk).segments == static_route(grid, src, snk).segments


def test_congested_corridor_is_avoided(grid3):
    src, snk = grid3.sources[0], grid3.sinks[7]
    base = static_route(grid3, src, snk)
    tel = Telemetry(grid3)
    corridor = set(zip(base.segments, base.segments[1:]))
    for k, e in enumerate(grid3.edges):
        tel.record(k, tel.fallback[k] * (10.0 if e.key in corridor else 1.0), 0.0)
    snap = tel.publish_snapshot(60.0)
    r = dynamic_route(grid3, snap, src, snk)
    assert not corridor & set(zip(r.segments, r.segments[1:]))
    oracle = oracles.PathOracle(grid3)
    costs = oracle.path_costs(snap.edge_costs, grid3.free_flow_times())
    want_cost, want = oracle.best(costs, (grid3.index[src], grid3.index[snk]))
    assert r.segments == tuple(grid3.ids[i] for i in want)
    assert r.cost_estimate == pytest.approx(want_cost)
    assert dynamic_route(grid3, snap, src, snk) == r
    assert r.computed_at_s == 60.0


def test_snapshot_missing_edge(grid3):
    snap = cold_snapshot(grid3)
    smaller = with_edges(grid3, list(grid3.edges) + [TurnEdge(grid3.ids[0], grid3.ids[1], "I00", "through")])
    with pytest.raises(CostContractError):
        CostProvider.dynamic(smaller, snap)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_bad_cost_raises(grid3, bad):
    table = {e.key: 1.0 for e in grid3.edges}
    table[grid3.edges[5].key] = bad
    with pytest.raises(CostContractError):
        shortest_path(grid3, CostProvider.from_table(grid3, table), grid3.sources[0], grid3.sinks[5])


def test_incomplete_table_raises(grid3):
    with pytest.raises(CostContractError):
        CostProvider.from_table(grid3, {})


def test_unreachable_raises(grid3):
    snk = grid3.sinks[2]
    g = with_edges(grid3, [e for e in grid3.edges if e.to != snk])
    with pytest.raises(RoutingError, match=snk):
        static_route(g, g.sources[0], snk)


def test_unknown_segment(grid3):
    with pytest.raises(KeyError):
        static_route(grid3, "nope", grid3.sinks[0])


def test_next_hop_tables_agree_with_shortest_path(grid):
    costs = CostProvider.static(grid)
    for snk in grid.sinks[::4]:
        t = grid.index[snk]
        _, nxt = next_hops(grid, costs, t)
        for src in grid.sources:
            path = walk(nxt, grid.index[src], t)
            assert tuple(grid.ids[i] for i in path) == shortest_path(grid, costs, src, snk).segments


def test_router_matches_enumeration_small_sample():
    rep = oracles.check_router(grids=((2, 2), (2, 3)), n_tables=20, seed=3)
    assert rep.ok, rep.mismatches[:3]


def test_random_tie_breaks_stay_optimal(grid):
    costs = CostProvider.static(grid)
    src, snk = grid.sources[0], grid.sinks[12]
    best = shortest_path(grid, costs, src, snk).cost_estimate
    seen = set()
    for s in range(20):
        r = shortest_path(grid, costs, src, snk, rng=random.Random(s))
        assert r.cost_estimate == pytest.approx(best)
        assert route_cost(grid, costs, r.segments) == pytest.approx(best)
        seen.add(r.segments)
    assert len(seen) > 1


# properties ------------------------------------------------------------------

GRID2 = build_grid(GridSpec(rows=2, cols=3))
costs_st = st.lists(st.floats(0.1, 100.0), min_size=len(GRID2.edges), max_size=len(GRID2.edges))
pair_st = st.tuples(st.sampled_from(GRID2.sources), st.sampled_from(GRID2.sinks))


def _provider(g, values, terminal=1.0):
    return CostProvider.from_table(g, {e.key: c for e, c in zip(g.edges, values)}, [terminal] * len(g.ids))


@settings(max_examples=60, deadline=None)
@given(costs_st, pair_st)
def test_suffix_optimality(values, pair):
    p = _provider(GRID2, values)
    r = shortest_path(GRID2, p, *pair)
    for i in range(1, len(r.segments)):
        sub = shortest_path(GRID2, p, r.segments[i], pair[1])
        assert sub.segments == r.segments[i:]


@settings(max_examples=60, deadline=None)
@given(costs_st, pair_st, st.floats(0.01, 1000.0))
def test_scaling_invariance(values, pair, k):
    a = shortest_path(GRID2, _provider(GRID2, values), *pair)
    b = shortest_path(GRID2, _provider(GRID2, [v * k for v in values], k), *pair)
    assert a.segments == b.segments
    assert b.cost_estimate == pytest.approx(a.cost_estimate * k, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=len(GRID2.edges), max_size=len(GRID2.edges)), pair_st, st.randoms())
def test_edge_order_does_not_matter(values, pair, rnd):
    table = {e.key: float(c) for e, c in zip(GRID2.edges, values)}
    shuffled = list(GRID2.edges)
    rnd.shuffle(shuffled)
    g2 = with_edges(GRID2, shuffled)
    a = shortest_path(GRID2, CostProvider.from_table(GRID2, table), *pair)
    b = shortest_path(g2, CostProvider.from_table(g2, table), *pair)
    assert a == b
