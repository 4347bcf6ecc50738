import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoshare import oracles
from infoshare.netgrid import GridSpec, build_grid
from infoshare.telemetry import Telemetry, TelemetryError, TraversalSample, cold_snapshot, dump_snapshots_csv

G = build_grid(GridSpec(rows=2, cols=2))
EDGE = G.edges[0].key
FFT = 2000 / 16.67  # reference grid: every from-segment is 2 km long


@pytest.fixture
def grid():
    return build_grid(GridSpec())


def _sample(d, t, edge=None):
    return TraversalSample(edge or EDGE, d, t)


def test_first_sample():
    tel = Telemetry(G, 10)
    tel.record_traversal(_sample(400.0, 1.0))
    assert tel.samples(EDGE) == [400.0]


def test_eviction_is_fifo(grid):
    tel = Telemetry(grid, 3)
    e = grid.edges[7].key
    for i, d in enumerate([130.0, 140.0, 150.0, 160.0]):
        tel.record_traversal(TraversalSample(e, d, float(i)))
    assert tel.samples(e) == [140.0, 150.0, 160.0]


@pytest.mark.parametrize("n_car,expected", [(3, 20.0), (10, 20.0), (2, 25.0)])
def test_moving_average_capacity(n_car, expected):
    tel = Telemetry(G, n_car)
    k = G.edge_index[EDGE]
    for i, d in enumerate([10.0, 20.0, 30.0]):
        tel.record(k, d, float(i))
    assert tel.moving_average(EDGE) == pytest.approx(expected)


def test_cold_fallback_is_free_flow(grid):
    tel = Telemetry(grid)
    assert tel.moving_average(grid.edges[0].key) == pytest.approx(120.0, abs=0.03)
    assert tel.moving_average(grid.edges[0].key) == pytest.approx(FFT)


def test_snapshot_is_immutable():
    tel = Telemetry(G, 5)
    tel.record_traversal(_sample(300.0, 1.0))
    snap = tel.publish_snapshot(180.0)
    tel.record_traversal(_sample(900.0, 2.0))
    assert snap.cost(*EDGE) == 300.0
    with pytest.raises(TypeError):
        snap.costs[EDGE] = 1.0  # read-only mapping
    assert tel.publish_snapshot(360.0).cost(*EDGE) == 600.0


def test_cold_snapshot_costs(grid):
    snap = cold_snapshot(grid)
    ff = grid.free_flow_times()
    assert all(snap.cost(*e.key) == ff[grid.index[e.frm]] for e in grid.edges)
    assert snap.epoch == 0


def test_snapshots_without_samples_differ_only_in_epoch():
    tel = Telemetry(G)
    tel.record_traversal(_sample(250.0, 0.0))
    a, b = tel.publish_snapshot(0.0), tel.publish_snapshot(180.0)
    assert a.edge_costs == b.edge_costs
    assert (a.epoch, b.epoch) == (0, 1)


def test_time_cannot_run_backwards():
    tel = Telemetry(G)
    tel.publish_snapshot(360.0)
    with pytest.raises(TelemetryError):
        tel.publish_snapshot(180.0)


@pytest.mark.parametrize("sample", [
    TraversalSample(("nope", "nada"), 200.0, 0.0),
    TraversalSample(EDGE, 0.0, 0.0),
    TraversalSample(EDGE, -5.0, 0.0),
    TraversalSample(EDGE, 10.0, 0.0),  # faster than free flow
])
def test_invalid_samples(sample):
    with pytest.raises(TelemetryError):
        Telemetry(G).record_traversal(sample)


def test_out_of_order_sample():
    tel = Telemetry(G)
    tel.record_traversal(_sample(200.0, 50.0))
    with pytest.raises(TelemetryError):
        tel.record_traversal(_sample(200.0, 40.0))


def test_n_car_must_be_positive():
    with pytest.raises(TelemetryError):
        Telemetry(G, 0)


def test_dump_csv(tmp_path):
    tel = Telemetry(G)
    snaps = [tel.publish_snapshot(0.0), tel.publish_snapshot(180.0)]
    path = tmp_path / "snap.csv"
    dump_snapshots_csv(snaps, path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 2 * len(G.edges)
    assert rows[0]["edge"] == f"{EDGE[0]}->{EDGE[1]}"
    assert float(rows[0]["cost_s"]) == pytest.approx(tel.fallback[0])


def test_oracle_small_batch():
    rep = oracles.check_moving_average(500, seed=1)
    assert rep.ok


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 15), st.lists(st.floats(FFT, 5000.0), max_size=40))
def test_moving_average_matches_scan(n_car, seq):
    tel = Telemetry(G, n_car)
    for i, d in enumerate(seq):
        tel.record_traversal(_sample(d, float(i)))
    want = oracles.scan_mean(seq, n_car, tel.fallback[0])
    assert tel.moving_average(EDGE) == pytest.approx(want, rel=1e-9)
    assert len(tel.samples(EDGE)) == min(len(seq), n_car)
