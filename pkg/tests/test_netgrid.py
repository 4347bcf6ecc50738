import pytest

from infoshare.netgrid import (
    GridSpec,
    GridSpecError,
    TurnEdge,
    border_side,
    build_grid,
    dump_adjacency,
    reachable_from,
    validate_graph,
    with_edges,
)


@pytest.fixture(scope="module")
def grid():
    return build_grid(GridSpec())


def test_reference_grid_counts(grid):
    assert len(grid.intersections) == 25
    assert len(grid.sources) == 20
    assert len(grid.sinks) == 20
    assert len(grid.segments) == 120
    assert len(grid.edges) == 300


@pytest.mark.parametrize("rows,cols", [(2, 2), (2, 3), (3, 3), (4, 2), (5, 5)])
def test_counts_follow_combinatorics(rows, cols):
    g = build_grid(GridSpec(rows=rows, cols=cols))
    # each highway: (n_cross + 1) segments per direction, two directions
    n_seg = 2 * rows * (cols + 1) + 2 * cols * (rows + 1)
    assert len(g.segments) == n_seg
    assert len(g.edges) == rows * cols * 4 * 3
    assert len(g.sources) == len(g.sinks) == 2 * (rows + cols)


def test_stub_and_interior_lengths(grid):
    stubs = [s for s in grid.segments.values() if s.kind != "interior"]
    interior = [s for s in grid.segments.values() if s.kind == "interior"]
    assert all(s.length_m == pytest.approx(2000.0) for s in stubs)
    assert all(s.length_m == pytest.approx(2000.0) for s in interior)  # (12000 - 2*2000) / 4


def test_uneven_spacing_lengths():
    g = build_grid(GridSpec(rows=3, cols=3, span_m=10_000, highway_margin_m=1_000))
    interior = {round(s.length_m) for s in g.segments.values() if s.kind == "interior"}
    stubs = {round(s.length_m) for s in g.segments.values() if s.kind != "interior"}
    assert interior == {4000}
    assert stubs == {1000}


def test_free_flow_time(grid):
    seg = next(iter(grid.segments.values()))
    assert seg.free_flow_time_s == pytest.approx(2000 / 16.67)


def test_no_u_turns_and_three_movements(grid):
    for node in grid.intersections.values():
        for a in node.incoming:
            outs = grid.out_edges(a)
            assert sorted(e.movement for e in outs) == ["left", "right", "through"]
            for e in outs:
                sa, sb = grid.segments[e.frm], grid.segments[e.to]
                assert not (sa.highway == sb.highway and sa.heading != sb.heading)
                assert sa.downstream == sb.upstream == e.intersection


def test_every_sink_reachable(grid):
    for src in grid.sources:
        assert set(grid.sinks) <= reachable_from(grid, src)
    assert validate_graph(grid) == []


def test_sources_and_sinks_labelled_clockwise(grid):
    sides = [border_side(grid, s) for s in grid.sources]
    assert sides == ["N"] * 5 + ["E"] * 5 + ["S"] * 5 + ["W"] * 5
    sides = [border_side(grid, s) for s in grid.sinks]
    assert sides == ["N"] * 5 + ["E"] * 5 + ["S"] * 5 + ["W"] * 5
    # north border runs west to east
    xs = [grid.segments[s].start[0] for s in grid.sources[:5]]
    assert xs == sorted(xs)


def test_source_and_sink_kinds(grid):
    assert all(grid.segments[s].kind == "source_stub" for s in grid.sources)
    assert all(grid.segments[s].kind == "sink_stub" for s in grid.sinks)
    assert grid.source_label(grid.sources[0]) == "S1"
    assert grid.sink_label(grid.sinks[-1]) == "D20"


def test_indices_follow_id_order(grid):
    assert list(grid.ids) == sorted(grid.ids)
    assert all(grid.index[s] == i for i, s in enumerate(grid.ids))


@pytest.mark.parametrize("changes", [
    {"rows": 1}, {"cols": 0}, {"lanes_per_direction": 0}, {"span_m": 0.0},
    {"highway_margin_m": 6000.0}, {"free_flow_speed_mps": -1.0},
])
def test_invalid_spec_raises(changes):
    spec = GridSpec(**changes)
    assert spec.problems()
    with pytest.raises(GridSpecError):
        build_grid(spec)


def test_missing_sink_edges_give_one_defect(grid):
    sink = grid.sinks[3]
    kept = [e for e in grid.edges if e.to != sink]
    defects = validate_graph(with_edges(grid, kept))
    kinds = [d.kind for d in defects]
    assert kinds.count("unreachable_sink") == 1
    assert sink in next(d.detail for d in defects if d.kind == "unreachable_sink")


def test_u_turn_edge_is_reported(grid):
    a = grid.sources[0]
    seg = grid.segments[a]
    # the opposite carriageway leaving the same intersection
    back = next(s for s in grid.intersections[seg.downstream].outgoing
                if grid.segments[s].highway == seg.highway and grid.segments[s].heading != seg.heading)
    bad = with_edges(grid, [*grid.edges, TurnEdge(a, back, seg.downstream, "through")])
    assert "u_turn" in {d.kind for d in validate_graph(bad)}


def test_dangling_segment_is_reported(grid):
    victim = next(s for s, seg in grid.segments.items() if seg.kind == "interior")
    kept = [e for e in grid.edges if e.frm != victim]
    assert "dangling_segment" in {d.kind for d in validate_graph(with_edges(grid, kept))}


def test_dump_adjacency(grid):
    lines = dump_adjacency(grid).splitlines()
    assert len(lines) == 300
    frm, to, node, mv = lines[0].split(",")
    assert (frm, to) == grid.edges[0].key and mv in {"through", "left", "right"}
