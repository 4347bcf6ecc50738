"""Scenario configuration, demand profile and the OD matrix."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ..flowsim import FlowParams, PoissonSource
from ..netgrid import GridSpec, RoadGraph, border_side

ROUTING_MODES = ("static", "dynamic", "selective")
S1_ROW = {"D5": 0.15, "D8": 0.20, "D10": 0.10, "D12": 0.10, "D14": 0.10, "D15": 0.15, "D17": 0.10, "D18": 0.10}
HEAVY_SOURCES = (1, 4, 8, 11, 15, 18)
OD_SEED = 20_190_401


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid scenario configuration:\n  - " + "\n  - ".join(problems))


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str = ""
    routing: str = "selective"
    grid: GridSpec = field(default_factory=GridSpec)
    lambda_mean_veh_per_h: float = 281.0
    lambda_profile: tuple[float, ...] | None = None
    lambda_rates: tuple[float, ...] | None = None
    od_matrix: str = "default"
    theta: float = 0.0
    tau_up_s: float = 180.0
    n_car: int = 10
    sim_duration_s: float = 7200.0
    measure_window_s: float = 4200.0
    dt_s: float = 1.0
    saturation_flow_veh_per_s_per_lane: float = 0.5
    vehicle_length_m: float = 7.5
    min_green_s: float = 10.0
    max_green_s: float = 60.0
    static_random_ties: bool = False
    signal_gap_out: bool = True
    stability_threshold_s_per_min: float = 1.0
    series_window_s: float = 300.0
    series_step_s: float = 60.0
    seed: int = 0

    @property
    def effective_theta(self) -> float:
        return {"static": 0.0, "dynamic": 1.0}.get(self.routing, self.theta)

    @property
    def label(self) -> str:
        if self.scenario_id:
            return self.scenario_id
        return (f"{self.routing}-lam{self.lambda_mean_veh_per_h:g}-th{self.effective_theta:g}"
                f"-tau{self.tau_up_s:g}-n{self.n_car}-s{self.seed}")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def problems(self) -> list[str]:
        out = [f"grid: {p}" for p in self.grid.problems()]
        n_src = 2 * (self.grid.rows + self.grid.cols)
        if self.routing not in ROUTING_MODES:
            out.append(f"routing must be one of {ROUTING_MODES} (got {self.routing!r})")
        if not 0.0 <= self.theta <= 1.0:
            out.append(f"theta must lie in [0, 1] (got {self.theta})")
        if self.lambda_mean_veh_per_h < 0:
            out.append("lambda_mean_veh_per_h must be >= 0")
        for name in ("lambda_profile", "lambda_rates"):
            vec = getattr(self, name)
            if vec is not None:
                if len(vec) != n_src:
                    out.append(f"{name} needs {n_src} entries (got {len(vec)})")
                if any(x < 0 for x in vec):
                    out.append(f"{name} entries must be >= 0")
        if self.lambda_profile is not None and not sum(self.lambda_profile) > 0:
            out.append("lambda_profile must have a positive entry")
        if not self.sim_duration_s > 0:
            out.append("sim_duration_s must be > 0")
        if not 0 < self.measure_window_s <= self.sim_duration_s:
            out.append("measure_window_s must satisfy 0 < measure_window_s <= sim_duration_s")
        if not self.dt_s > 0:
            out.append("dt_s must be > 0")
        if self.routing != "static":
            if not self.tau_up_s > 0:
                out.append("tau_up_s must be > 0")
            elif self.tau_up_s > self.sim_duration_s - self.measure_window_s:
                out.append("tau_up_s must allow at least one snapshot publication before the measurement window")
        if self.n_car < 1:
            out.append("n_car must be >= 1")
        if not self.saturation_flow_veh_per_s_per_lane > 0:
            out.append("saturation_flow_veh_per_s_per_lane must be > 0")
        if not self.vehicle_length_m > 0:
            out.append("vehicle_length_m must be > 0")
        if not 0 < self.min_green_s <= self.max_green_s:
            out.append("signal bounds must satisfy 0 < min_green_s <= max_green_s")
        if not (self.series_window_s > 0 and self.series_step_s > 0):
            out.append("series_window_s and series_step_s must be > 0")
        if self.od_matrix != "default" and not Path(self.od_matrix).is_file():
            out.append(f"od_matrix file not found: {self.od_matrix}")
        return out

    def validate(self) -> "ScenarioConfig":
        bad = self.problems()
        if bad:
            raise ConfigError(bad)
        return self

    def flow_params(self) -> FlowParams:
        return FlowParams(
            dt_s=self.dt_s,
            saturation_flow_veh_per_s_per_lane=self.saturation_flow_veh_per_s_per_lane,
            vehicle_length_m=self.vehicle_length_m,
            min_green_s=self.min_green_s,
            max_green_s=self.max_green_s,
            theta=self.effective_theta,
            tau_up_s=self.tau_up_s,
            n_car=self.n_car,
            information=self.routing != "static",
            static_random_ties=self.static_random_ties,
            gap_out=self.signal_gap_out,
        )

    def source_rates(self) -> list[float]:
        """Per-source rates lambda_Si (veh/h); their mean equals lambda_mean unless given explicitly."""
        if self.lambda_rates is not None:
            return [float(x) for x in self.lambda_rates]
        n = 2 * (self.grid.rows + self.grid.cols)
        prof = self.lambda_profile or default_profile(n)
        scale = self.lambda_mean_veh_per_h * n / sum(prof)
        return [m * scale for m in prof]

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        for k in ("lambda_profile", "lambda_rates"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def default_profile(n_sources: int = 20) -> tuple[float, ...]:
    """Six designated heavy sources at twice the rate of the others."""
    heavy = {i for i in HEAVY_SOURCES if i <= n_sources}
    return tuple(2.0 if i in heavy else 1.0 for i in range(1, n_sources + 1))


def from_dict(data: dict[str, Any], base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    data = dict(data)
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError([f"unknown configuration key {k!r}" for k in unknown])
    grid = data.pop("grid", None)
    if grid is not None:
        gknown = {f.name for f in dataclasses.fields(GridSpec)}
        bad = sorted(set(grid) - gknown)
        if bad:
            raise ConfigError([f"unknown grid key {k!r}" for k in bad])
        data["grid"] = dataclasses.replace(base.grid, **grid)
    for k in ("lambda_profile", "lambda_rates"):
        if data.get(k) is not None:
            data[k] = tuple(float(x) for x in data[k])
    return dataclasses.replace(base, **data)


def load_defaults() -> ScenarioConfig:
    text = resources.files("infoshare.data").joinpath("defaults.yaml").read_text()
    return from_dict(yaml.safe_load(text) or {}, ScenarioConfig())


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    cfg = from_dict(data, load_defaults())
    if overrides:
        cfg = from_dict(overrides, cfg)
    return cfg


def load_manifest(path: str | Path) -> list[ScenarioConfig]:
    """Expand a sweep manifest into an ordered list of scenario configurations.

    Manifest keys: ``base`` (config file path, relative to the manifest, or an
    inline mapping), ``grid`` (mapping of key -> list of values, expanded as a
    cartesian product in the listed key order) and/or ``runs`` (explicit list
    of override mappings).
    """
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    base_spec = doc.get("base", {})
    if isinstance(base_spec, str):
        base = load_config(path.parent / base_spec)
    else:
        base = from_dict(base_spec, load_defaults())
    plan = []
    axes = doc.get("grid") or {}
    if axes:
        keys = list(axes)
        for combo in itertools.product(*(axes[k] for k in keys)):
            plan.append(from_dict(dict(zip(keys, combo)), base))
    for over in doc.get("runs") or []:
        plan.append(from_dict(over, base))
    return plan


# OD matrix ------------------------------------------------------------------


def generate_od_matrix(g: RoadGraph, seed: int = OD_SEED) -> dict[str, dict[str, float]]:
    """Non-uniform OD rows: the fixed reference S1 row verbatim, the others drawn at random.

    Generated rows give zero weight to sinks on the source's own border side
    and normalise uniform draws over the remaining sinks.
    """
    rng = random.Random(seed)
    labels = {s: g.sink_label(s) for s in g.sinks}
    rows = {}
    for i, src in enumerate(g.sources, start=1):
        if i == 1 and len(g.sinks) == 20:
            rows["S1"] = {labels[s]: S1_ROW.get(labels[s], 0.0) for s in g.sinks}
            continue
        side = border_side(g, src)
        w = {labels[s]: (rng.random() if border_side(g, s) != side else 0.0) for s in g.sinks}
        total = sum(w.values())
        rows[f"S{i}"] = {k: v / total for k, v in w.items()}
    return rows


def od_to_csv(rows: dict[str, dict[str, float]]) -> str:
    sinks = list(next(iter(rows.values())))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", *sinks])
    for src, row in rows.items():
        w.writerow([src, *(repr(row[k]) for k in sinks)])
    return buf.getvalue()


def od_from_csv(text: str) -> dict[str, dict[str, float]]:
    rd = csv.reader(io.StringIO(text))
    header = next(rd)
    return {r[0]: {k: float(v) for k, v in zip(header[1:], r[1:])} for r in rd if r}


def load_od_matrix(cfg: ScenarioConfig, g: RoadGraph) -> dict[str, dict[str, float]]:
    if cfg.od_matrix == "default":
        if (cfg.grid.rows, cfg.grid.cols) == (5, 5):
            text = resources.files("infoshare.data").joinpath("od_matrix.csv").read_text()
            return od_from_csv(text)
        return generate_od_matrix(g)
    return od_from_csv(Path(cfg.od_matrix).read_text())


def build_sources(cfg: ScenarioConfig, g: RoadGraph) -> list[PoissonSource]:
    od = load_od_matrix(cfg, g)
    rates = cfg.source_rates()
    by_label = {g.sink_label(s): s for s in g.sinks}
    out = []
    for i, (src, rate) in enumerate(zip(g.sources, rates), start=1):
        row = od[f"S{i}"]
        out.append(PoissonSource(src, rate, {by_label[k]: p for k, p in row.items()}))
    return out
