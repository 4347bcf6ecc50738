"""Manhattan-style grid network generator and the segment-level routing graph.

Vertices of the routing graph are directed road segments; edges are turn
movements between a segment entering an intersection and a segment leaving it.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

THROUGH, RIGHT, LEFT = "through", "right", "left"
MOVEMENTS = (THROUGH, RIGHT, LEFT)

_OPPOSITE = {"E": "W", "W": "E", "N": "S", "S": "N"}
_RIGHT_OF = {"E": "S", "S": "W", "W": "N", "N": "E"}
_LEFT_OF = {"E": "N", "N": "W", "W": "S", "S": "E"}
_AXIS = {"E": "EW", "W": "EW", "N": "NS", "S": "NS"}


class GridSpecError(ValueError):
    """Raised when a GridSpec violates one of its invariants."""


@dataclass(frozen=True)
class GridSpec:
    rows: int = 5
    cols: int = 5
    lanes_per_direction: int = 5
    span_m: float = 12_000.0
    highway_margin_m: float = 2_000.0
    free_flow_speed_mps: float = 16.67

    def spacing(self, count: int) -> float:
        """Interior distance between adjacent parallel highways."""
        return (self.span_m - 2 * self.highway_margin_m) / (count - 1)

    def problems(self) -> list[str]:
        out = []
        if self.rows < 2:
            out.append(f"rows >= 2 (got {self.rows})")
        if self.cols < 2:
            out.append(f"cols >= 2 (got {self.cols})")
        if self.lanes_per_direction < 1:
            out.append(f"lanes_per_direction >= 1 (got {self.lanes_per_direction})")
        if not self.span_m > 0:
            out.append(f"span_m > 0 (got {self.span_m})")
        if not self.free_flow_speed_mps > 0:
            out.append(f"free_flow_speed_mps > 0 (got {self.free_flow_speed_mps})")
        if not self.highway_margin_m > 0:
            out.append(f"highway_margin_m > 0 (got {self.highway_margin_m})")
        if not out:
            for name, n in (("rows", self.rows), ("cols", self.cols)):
                if not self.spacing(n) > 0:
                    out.append(
                        f"2*highway_margin_m + ({name}-1)*spacing = span_m needs positive spacing "
                        f"(margin {self.highway_margin_m}, span {self.span_m})"
                    )
        return out


@dataclass(frozen=True)
class RoadSegment:
    id: str
    length_m: float
    lanes: int
    free_flow_speed_mps: float
    kind: str  # interior | source_stub | sink_stub
    start: tuple[float, float]
    end: tuple[float, float]
    heading: str  # E, W, N, S
    highway: str  # e.g. "H2" or "V0"
    upstream: str | None = None  # intersection id
    downstream: str | None = None

    @property
    def free_flow_time_s(self) -> float:
        return self.length_m / self.free_flow_speed_mps

    @property
    def axis(self) -> str:
        return _AXIS[self.heading]


@dataclass(frozen=True)
class TurnEdge:
    frm: str
    to: str
    intersection: str
    movement: str

    @property
    def key(self) -> tuple[str, str]:
        return (self.frm, self.to)


@dataclass(frozen=True)
class Intersection:
    id: str
    row: int
    col: int
    position: tuple[float, float]
    incoming: tuple[str, ...]
    outgoing: tuple[str, ...]


@dataclass(frozen=True)
class Defect:
    kind: str  # unreachable_sink | dangling_segment | u_turn | bad_edge
    detail: str


@dataclass(eq=False)
class RoadGraph:
    """Immutable-by-convention routing graph G(V, E).

    Segments are kept in sorted id order and ``index`` maps each id to its
    position, so integer comparisons on indices agree with id order.
    """

    segments: dict[str, RoadSegment]
    edges: tuple[TurnEdge, ...]
    sources: tuple[str, ...]
    sinks: tuple[str, ...]
    intersections: dict[str, Intersection]
    spec: GridSpec | None = None
    index: dict[str, int] = field(init=False, repr=False)
    ids: tuple[str, ...] = field(init=False, repr=False)
    edge_index: dict[tuple[str, str], int] = field(init=False, repr=False)
    # adjacency over integer ids: succ[u] -> [(v, edge_idx)], pred[v] -> [(u, edge_idx)]
    succ: list[list[tuple[int, int]]] = field(init=False, repr=False)
    pred: list[list[tuple[int, int]]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.segments = {k: self.segments[k] for k in sorted(self.segments)}
        self.ids = tuple(self.segments)
        self.index = {sid: i for i, sid in enumerate(self.ids)}
        self.edge_index = {e.key: i for i, e in enumerate(self.edges)}
        self.succ = [[] for _ in self.ids]
        self.pred = [[] for _ in self.ids]
        for k, e in enumerate(self.edges):
            u, v = self.index.get(e.frm), self.index.get(e.to)
            if u is None or v is None:
                continue  # reported by validate_graph
            self.succ[u].append((v, k))
            self.pred[v].append((u, k))
        for lst in self.succ:
            lst.sort()
        for lst in self.pred:
            lst.sort()

    def out_edges(self, seg: str) -> list[TurnEdge]:
        return [self.edges[k] for _, k in self.succ[self.index[seg]]]

    def in_edges(self, seg: str) -> list[TurnEdge]:
        return [self.edges[k] for _, k in self.pred[self.index[seg]]]

    def source_label(self, seg: str) -> str:
        return f"S{self.sources.index(seg) + 1}"

    def sink_label(self, seg: str) -> str:
        return f"D{self.sinks.index(seg) + 1}"

    def free_flow_times(self) -> list[float]:
        return [self.segments[s].free_flow_time_s for s in self.ids]


def _movement(h_in: str, h_out: str) -> str | None:
    if h_out == h_in:
        return THROUGH
    if h_out == _RIGHT_OF[h_in]:
        return RIGHT
    if h_out == _LEFT_OF[h_in]:
        return LEFT
    return None  # U-turn


def build_grid(spec: GridSpec | None = None) -> RoadGraph:
    """Generate the grid network described by ``spec``.

    Horizontal highway ``r`` (r = 0 northmost) and vertical highway ``c``
    (c = 0 westmost) carry one carriageway per direction. Segment ids are
    ``<H|V><line><heading><k>`` where ``k`` counts segments along the
    direction of travel, so ``k = 0`` is the inbound border stub.

    Sources and sinks are labelled clockwise starting at the west end of the
    north border: north (west to east), east (north to south), south (east to
    west), west (south to north).
    """
    spec = spec or GridSpec()
    bad = spec.problems()
    if bad:
        raise GridSpecError("invalid GridSpec: " + "; ".join(bad))

    R, C = spec.rows, spec.cols
    w = len(str(max(R, C)))
    xs = [spec.highway_margin_m + c * spec.spacing(C) for c in range(C)]
    # y grows northward; row 0 is the northmost highway
    ys = [spec.span_m - spec.highway_margin_m - r * spec.spacing(R) for r in range(R)]
    span = spec.span_m

    def iid(r: int, c: int) -> str:
        return f"I{r:0{w}d}{c:0{w}d}"

    segments: dict[str, RoadSegment] = {}

    def carriageway(prefix: str, line: int, heading: str, pts: list, nodes: list) -> list[str]:
        # pts: border, intersections..., border (in travel order); nodes: intersection ids in travel order
        out = []
        n = len(pts) - 1
        for k in range(n):
            a, b = pts[k], pts[k + 1]
            kind = "source_stub" if k == 0 else "sink_stub" if k == n - 1 else "interior"
            sid = f"{prefix}{line:0{w}d}{heading}{k:0{w}d}"
            segments[sid] = RoadSegment(
                id=sid,
                length_m=math.dist(a, b),
                lanes=spec.lanes_per_direction,
                free_flow_speed_mps=spec.free_flow_speed_mps,
                kind=kind,
                start=a,
                end=b,
                heading=heading,
                highway=f"{prefix}{line}",
                upstream=None if k == 0 else nodes[k - 1],
                downstream=None if k == n - 1 else nodes[k],
            )
            out.append(sid)
        return out

    lines: dict[tuple[str, int, str], list[str]] = {}
    for r in range(R):
        y = ys[r]
        pts = [(0.0, y)] + [(x, y) for x in xs] + [(span, y)]
        nodes = [iid(r, c) for c in range(C)]
        lines["H", r, "E"] = carriageway("H", r, "E", pts, nodes)
        lines["H", r, "W"] = carriageway("H", r, "W", pts[::-1], nodes[::-1])
    for c in range(C):
        x = xs[c]
        pts = [(x, span)] + [(x, y) for y in ys] + [(x, 0.0)]
        nodes = [iid(r, c) for r in range(R)]
        lines["V", c, "S"] = carriageway("V", c, "S", pts, nodes)
        lines["V", c, "N"] = carriageway("V", c, "N", pts[::-1], nodes[::-1])

    incoming: dict[str, list[str]] = {}
    outgoing: dict[str, list[str]] = {}
    for seg in segments.values():
        if seg.downstream:
            incoming.setdefault(seg.downstream, []).append(seg.id)
        if seg.upstream:
            outgoing.setdefault(seg.upstream, []).append(seg.id)

    edges = []
    intersections = {}
    for r in range(R):
        for c in range(C):
            nid = iid(r, c)
            ins, outs = sorted(incoming[nid]), sorted(outgoing[nid])
            intersections[nid] = Intersection(nid, r, c, (xs[c], ys[r]), tuple(ins), tuple(outs))
            for a in ins:
                for b in outs:
                    mv = _movement(segments[a].heading, segments[b].heading)
                    if mv is not None:
                        edges.append(TurnEdge(a, b, nid, mv))
    edges.sort(key=lambda e: (e.frm, e.to))

    sources, sinks = [], []
    for c in range(C):  # north border, west to east
        sources.append(lines["V", c, "S"][0])
        sinks.append(lines["V", c, "N"][-1])
    for r in range(R):  # east border, north to south
        sources.append(lines["H", r, "W"][0])
        sinks.append(lines["H", r, "E"][-1])
    for c in reversed(range(C)):  # south border, east to west
        sources.append(lines["V", c, "N"][0])
        sinks.append(lines["V", c, "S"][-1])
    for r in reversed(range(R)):  # west border, south to north
        sources.append(lines["H", r, "E"][0])
        sinks.append(lines["H", r, "W"][-1])

    return RoadGraph(segments, tuple(edges), tuple(sources), tuple(sinks), intersections, spec)


def border_side(g: RoadGraph, seg: str) -> str:
    """Border side ('N', 'E', 'S', 'W') touched by a source or sink stub."""
    s = g.segments[seg]
    # source stubs start on the border, sink stubs end on it
    x, y = s.start if s.kind == "source_stub" else s.end
    span = g.spec.span_m if g.spec else max(max(p) for p in (s.start, s.end))
    if y >= span:
        return "N"
    if x >= span:
        return "E"
    if y <= 0:
        return "S"
    return "W"


def reachable_from(g: RoadGraph, start: str) -> set[str]:
    seen = {g.index[start]}
    todo = deque(seen)
    while todo:
        u = todo.popleft()
        for v, _ in g.succ[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return {g.ids[i] for i in seen}


def validate_graph(g: RoadGraph) -> list[Defect]:
    """Return one Defect per violated RoadGraph invariant (empty when sound)."""
    defects: list[Defect] = []
    for e in g.edges:
        a, b = g.segments.get(e.frm), g.segments.get(e.to)
        if a is None or b is None or e.frm == e.to:
            defects.append(Defect("bad_edge", f"{e.frm}->{e.to}"))
            continue
        if a.downstream != e.intersection or b.upstream != e.intersection:
            defects.append(Defect("bad_edge", f"{e.frm}->{e.to} does not meet at {e.intersection}"))
        if a.axis == b.axis and a.heading == _OPPOSITE[b.heading]:
            defects.append(Defect("u_turn", f"{e.frm}->{e.to} at {e.intersection}"))
    for sid, seg in g.segments.items():
        i = g.index[sid]
        if seg.kind != "sink_stub" and not g.succ[i]:
            defects.append(Defect("dangling_segment", f"{sid} has no outgoing edge"))
        if seg.kind != "source_stub" and not g.pred[i]:
            defects.append(Defect("dangling_segment", f"{sid} has no incoming edge"))
    reach = {src: reachable_from(g, src) for src in g.sources}
    for snk in g.sinks:
        missing = [src for src in g.sources if snk not in reach[src]]
        if missing:
            defects.append(Defect("unreachable_sink", f"{snk} from {len(missing)} source(s): {', '.join(missing)}"))
    return defects


def with_edges(g: RoadGraph, edges: Iterable[TurnEdge]) -> RoadGraph:
    """Copy of ``g`` with a replaced edge set (for building defective graphs)."""
    return RoadGraph(dict(g.segments), tuple(edges), g.sources, g.sinks, dict(g.intersections), g.spec)


def dump_adjacency(g: RoadGraph) -> str:
    return "".join(f"{e.frm},{e.to},{e.intersection},{e.movement}\n" for e in g.edges)
