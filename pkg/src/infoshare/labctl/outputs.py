"""CSV persistence and SVG charts.

Charts are always drawn from the parsed CSV rows, so ``plot`` re-emission
from files and direct emission after a sweep produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import TraceRecord  # noqa: E402
from .runner import RESULT_COLUMNS, SUMMARY_COLUMNS, ResultRow, ScenarioResult, SummaryRow  # noqa: E402

TRACE_COLUMNS = ("vehicle_id", "info_class", "source", "sink", "spawned_s", "entered_s", "completed_s",
                 "n_segments", "distance_m")
SERIES_COLUMNS = ("scenario_id", "t_s", "moving_avg_trip_time_s")
CHARTS = ("theta_sweep.svg", "moving_average.svg", "tau_up.svg", "per_class.svg")


class OutputError(OSError):
    pass


def _num(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def results_csv(rows: Sequence[ResultRow]) -> str:
    return _csv_text(RESULT_COLUMNS, (r.as_csv() for r in rows))


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    return _csv_text(SUMMARY_COLUMNS, ([_num(getattr(r, c)) for c in SUMMARY_COLUMNS] for r in rows))


def series_csv(series: Mapping[str, Sequence[tuple[float, float]]]) -> str:
    return _csv_text(SERIES_COLUMNS, ([sid, _num(t), _num(y)] for sid, pts in series.items() for t, y in pts))


def trace_csv(trace: Sequence[TraceRecord]) -> str:
    return _csv_text(TRACE_COLUMNS, ([_num(getattr(r, c)) for c in TRACE_COLUMNS] for r in trace))


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _prepare(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def emit_outputs(results: Sequence[ScenarioResult], out_dir, traces: bool = False,
                 summary: Sequence[SummaryRow] | None = None) -> list[Path]:
    """Write results.csv, series.csv, optional per-scenario traces and the four charts."""
    out = _prepare(out_dir)
    written = []
    rows = [r.row for r in results]
    _write(out / "results.csv", results_csv(rows))
    written.append(out / "results.csv")
    series = {r.row.scenario_id: list(r.metrics.series) for r in results if r.metrics is not None}
    _write(out / "series.csv", series_csv(series))
    written.append(out / "series.csv")
    if summary is not None:
        _write(out / "summary.csv", summary_csv(summary))
        written.append(out / "summary.csv")
    if traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for r in results:
            if r.trace:
                p = tdir / f"{r.row.scenario_id}.csv"
                _write(p, trace_csv(r.trace))
                written.append(p)
    written += plot_from_files(out / "results.csv", out / "series.csv", out)
    return written


# charts -----------------------------------------------------------------------


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _f(x: str) -> float | None:
    return float(x) if x not in ("", None) else None


def _mean(xs) -> float:
    xs = [x for x in xs if x is not None]
    return statistics.fmean(xs) if xs else math.nan


def _save(fig, path: Path) -> Path:
    with plt.rc_context({"svg.hashsalt": "infoshare", "svg.fonttype": "path"}):
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    _write(path, buf.getvalue())
    return path


def _empty(ax, msg="no data") -> None:
    ax.text(0.5, 0.5, msg, ha="center", va="center", transform=ax.transAxes)


def plot_from_files(results_path, series_path, out_dir) -> list[Path]:
    out = _prepare(out_dir)
    rows = [r for r in read_csv(results_path) if not r["status"].startswith("failed")]
    series = read_csv(series_path) if series_path and Path(series_path).exists() else []

    # cell key -> list of rows across seeds
    cells: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        cells[(float(r["lambda_mean"]), float(r["tau_up_s"]), int(r["n_car"]), float(r["theta"]))].append(r)

    paths = []

    # tau_avg vs theta, one line per (lambda, tau_up, n_car)
    fig, ax = plt.subplots(figsize=(6, 4))
    lines = defaultdict(list)
    for (lam, tau, n, th), rs in sorted(cells.items()):
        lines[(lam, tau, n)].append((th, _mean(_f(r["tau_avg_all_s"]) for r in rs)))
    for (lam, tau, n), pts in sorted(lines.items()):
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"λ={lam:g}, τ_up={tau:g}s, N={n}")
    if lines:
        ax.legend(fontsize=7)
    else:
        _empty(ax)
    ax.set_xlabel("informed fraction ϑ")
    ax.set_ylabel("mean trip time τ_avg [s]")
    paths.append(_save(fig, out / "theta_sweep.svg"))

    # moving-average series, averaged across seeds per cell
    meta = {r["scenario_id"]: (float(r["lambda_mean"]), float(r["tau_up_s"]), int(r["n_car"]), float(r["theta"]))
            for r in rows}
    acc: dict[tuple, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for s in series:
        key = meta.get(s["scenario_id"])
        y = _f(s["moving_avg_trip_time_s"])
        if key is not None and y is not None:
            acc[key][float(s["t_s"])].append(y)
    fig, ax = plt.subplots(figsize=(6, 4))
    for (lam, tau, n, th), pts in sorted(acc.items()):
        ts = sorted(pts)
        ax.plot([t / 60 for t in ts], [statistics.fmean(pts[t]) for t in ts], label=f"λ={lam:g}, ϑ={th:g}, τ_up={tau:g}s")
    if acc:
        ax.legend(fontsize=7)
    else:
        _empty(ax)
    ax.set_xlabel("simulation time [min]")
    ax.set_ylabel("moving-average trip time [s]")
    paths.append(_save(fig, out / "moving_average.svg"))

    # tau_avg vs tau_up grouped by theta
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = defaultdict(list)
    for (lam, tau, n, th), rs in sorted(cells.items()):
        if th > 0:
            groups[(lam, n, th)].append((tau, _mean(_f(r["tau_avg_all_s"]) for r in rs)))
    for (lam, n, th), pts in sorted(groups.items()):
        ax.plot([p[0] / 60 for p in pts], [p[1] for p in pts], marker="s", label=f"ϑ={th:g}, λ={lam:g}")
    if groups:
        ax.legend(fontsize=7)
    else:
        _empty(ax)
    ax.set_xlabel("update period τ_up [min]")
    ax.set_ylabel("mean trip time τ_avg [s]")
    paths.append(_save(fig, out / "tau_up.svg"))

    # per-class bars
    fig, ax = plt.subplots(figsize=(7, 4))
    keys = sorted(cells)
    if keys:
        width = 0.27
        for j, (col, name) in enumerate((("tau_avg_uninformed_s", "uninformed"),
                                         ("tau_avg_informed_s", "informed"),
                                         ("tau_avg_all_s", "all"))):
            ys = [_mean(_f(r[col]) for r in cells[k]) for k in keys]
            ax.bar([i + (j - 1) * width for i in range(len(keys))], ys, width, label=name)
        ax.set_xticks(range(len(keys)))
        ax.set_xticklabels([f"ϑ={k[3]:g}\nλ={k[0]:g}\nτ={k[1]:g}" for k in keys], fontsize=6)
        ax.legend(fontsize=7)
    else:
        _empty(ax)
    ax.set_ylabel("mean trip time [s]")
    paths.append(_save(fig, out / "per_class.svg"))
    return paths
