"""Batch experiments: specs, presets, parallel execution and CSV/JSON emission.

An experiment runs the cross product of *arms* (estimation mode plus routing
variant), *sweep values* (one scenario parameter) and *seeds*.  Every cell is
an independent simulation, so cells may run in worker processes; results are
collected and written in a fixed order so reruns are byte-identical.

Spec files are YAML (or JSON)::

    name: fig2
    kind: fig2                 # fig2 | fig3 | inaccuracy | batch
    scenario: {...}            # inline scenario mapping, or a path to one
    sweep: {param: traffic.packet_interval, values: [4, 2, 1, 0.5]}
    arms:
      - {mode: Ideal, variant: EOLSR}
      - {mode: Realistic, variant: EOLSR}
    seeds: [1, 2, 3]           # or {start: 1, count: 20}
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import shutil
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import yaml

from . import __version__
from .model import EstimationMode, MetricsRecord, to_s
from .routing import VARIANTS
from .sim.engine import run as run_simulation
from .sim.scenario import ScenarioConfig, ScenarioError, load_scenario, scenario_from_dict

KINDS = ("fig2", "fig3", "inaccuracy", "batch")

DESK_SCENARIO: Dict[str, Any] = {
    "id": "desk",
    "nodes": 30,
    "area": [1000.0, 1000.0],
    "horizon": 300.0,
    "sample_interval": 5.0,
    "radio": {"range": 250.0},
    "traffic": {"random_flows": 5, "min_hops": 2, "packet_interval": 1.0, "payload": 512, "start": 10.0},
}

DEFAULT_SEEDS = tuple(range(1, 21))


@dataclass(frozen=True)
class Arm:
    mode: EstimationMode
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")

    @property
    def label(self) -> str:
        return f"{self.mode.value}/{self.variant}"

    def apply(self, scenario: ScenarioConfig) -> ScenarioConfig:
        v = VARIANTS[self.variant]
        return scenario.with_overrides({
            "protocol.estimation_mode": self.mode.value,
            "protocol.mpr_policy": v.mpr_policy.value,
            "protocol.path_policy": v.path_policy.value,
        })


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: ScenarioConfig
    sweep_param: str
    sweep_values: Tuple[Any, ...]
    arms: Tuple[Arm, ...]
    seeds: Tuple[int, ...]
    kind: str = "batch"
    out: Optional[str] = None

    def __post_init__(self):
        errors = []
        if not self.sweep_values:
            errors.append("sweep values must be non-empty")
        if not self.seeds:
            errors.append("seeds must be non-empty")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            errors.append("seeds must be unsigned integers")
        if len(set(self.seeds)) != len(self.seeds):
            errors.append("seeds must be distinct")
        if not self.arms:
            errors.append("at least one arm (mode, variant) is required")
        if self.kind not in KINDS:
            errors.append(f"kind must be one of {list(KINDS)}")
        if errors:
            raise ScenarioError(errors)
        for value in self.sweep_values:
            # fails early on unknown paths or invalid values
            self.base.with_overrides({self.sweep_param: value})

    @property
    def sweep_column(self) -> str:
        return self.sweep_param.rsplit(".", 1)[-1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "scenario": self.base.to_dict(),
            "sweep": {"param": self.sweep_param, "values": list(self.sweep_values)},
            "arms": [{"mode": a.mode.value, "variant": a.variant} for a in self.arms],
            "seeds": list(self.seeds),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seeds(self, seeds: Sequence[int]) -> "ExperimentSpec":
        return replace(self, seeds=tuple(seeds))

    def cells(self) -> List[Tuple[int, int, int]]:
        """(arm index, sweep index, seed) in output order."""
        return [
            (a, v, seed)
            for a in range(len(self.arms))
            for v in range(len(self.sweep_values))
            for seed in sorted(self.seeds)
        ]

    def scenario_for(self, arm: int, value: int) -> ScenarioConfig:
        cfg = self.base.with_overrides({self.sweep_param: self.sweep_values[value]})
        return self.arms[arm].apply(cfg)


# ------------------------------------------------------------------- presets


def _desk(**top: Any) -> ScenarioConfig:
    d = json.loads(json.dumps(DESK_SCENARIO))
    d.update(top)
    return scenario_from_dict(d)


# Estimation experiments route on raw perceived energy: with energy levels,
# Ideal and Realistic mostly agree on the bucket and the comparison goes flat.
def _raw_desk() -> ScenarioConfig:
    return _desk(energy_level=0.0)


def fig2_spec(seeds: Sequence[int] = DEFAULT_SEEDS) -> ExperimentSpec:
    return ExperimentSpec(
        name="fig2",
        kind="fig2",
        base=_raw_desk(),
        sweep_param="traffic.packet_interval",
        sweep_values=(4.0, 2.0, 1.0, 0.5),
        arms=(Arm(EstimationMode.IDEAL, "EOLSR"), Arm(EstimationMode.REALISTIC, "EOLSR")),
        seeds=tuple(seeds),
    )


def fig3_spec(seeds: Sequence[int] = DEFAULT_SEEDS) -> ExperimentSpec:
    return ExperimentSpec(
        name="fig3",
        kind="fig3",
        base=_desk(),
        sweep_param="traffic.packet_interval",
        sweep_values=(0.25,),
        arms=(Arm(EstimationMode.REALISTIC, "OLSR"), Arm(EstimationMode.REALISTIC, "EOLSR")),
        seeds=tuple(seeds),
    )


def inaccuracy_spec(seeds: Sequence[int] = DEFAULT_SEEDS) -> ExperimentSpec:
    return ExperimentSpec(
        name="inaccuracy",
        kind="inaccuracy",
        base=_raw_desk(),
        sweep_param="traffic.packet_interval",
        sweep_values=(2.0, 0.5, 0.25),
        arms=tuple(Arm(m, "EOLSR") for m in EstimationMode),
        seeds=tuple(seeds),
    )


PRESETS = {"fig2": fig2_spec, "fig3": fig3_spec, "inaccuracy": inaccuracy_spec}


# --------------------------------------------------------------- spec files


def _parse_seeds(raw: Any) -> Tuple[int, ...]:
    if isinstance(raw, dict):
        unknown = set(raw) - {"start", "count"}
        if unknown:
            raise ScenarioError([f"seeds: unknown keys {sorted(unknown)}"])
        start, count = int(raw.get("start", 1)), int(raw["count"])
        return tuple(range(start, start + count))
    if isinstance(raw, list):
        return tuple(raw)
    raise ScenarioError(["seeds: expected a list or {start, count}"])


def spec_from_dict(data: Dict[str, Any], base_dir: Path = Path(".")) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise ScenarioError(["spec: expected a mapping"])
    allowed = {"name", "kind", "scenario", "sweep", "arms", "seeds", "out"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError([f"spec: unknown keys {unknown}"])
    kind = data.get("kind", "batch")
    preset = PRESETS[kind]() if kind in PRESETS else None

    scen = data.get("scenario")
    if scen is None:
        base = preset.base if preset else scenario_from_dict(DESK_SCENARIO)
    elif isinstance(scen, str):
        base = load_scenario(base_dir / scen)
    else:
        base = scenario_from_dict(scen)

    sweep = data.get("sweep")
    if sweep is None:
        if preset is None:
            raise ScenarioError(["spec: sweep is required"])
        param, values = preset.sweep_param, preset.sweep_values
    else:
        if not isinstance(sweep, dict) or set(sweep) != {"param", "values"}:
            raise ScenarioError(["sweep: expected {param, values}"])
        param, values = sweep["param"], tuple(sweep["values"] or ())

    arms_raw = data.get("arms")
    if arms_raw is None:
        if preset is None:
            raise ScenarioError(["spec: arms are required"])
        arms = preset.arms
    else:
        try:
            arms = tuple(Arm(EstimationMode(a["mode"]), a["variant"]) for a in arms_raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError([f"arms: {exc}"]) from exc

    seeds = _parse_seeds(data["seeds"]) if "seeds" in data else DEFAULT_SEEDS
    try:
        return ExperimentSpec(
            name=str(data.get("name", kind)),
            kind=kind,
            base=base,
            sweep_param=param,
            sweep_values=values,
            arms=arms,
            seeds=seeds,
            out=data.get("out"),
        )
    except TypeError as exc:
        raise ScenarioError([str(exc)]) from exc


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    with path.open() as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError([f"{path}: {exc}"]) from exc
    return spec_from_dict(data or {}, path.parent)


# ------------------------------------------------------------------ running


def _run_cell(job: Tuple[Dict[str, Any], int]) -> MetricsRecord:
    scenario, seed = job
    return run_simulation(scenario_from_dict(scenario), seed)


def run_cells(jobs: Sequence[Tuple[ScenarioConfig, int]], workers: int = 1) -> List[MetricsRecord]:
    """Run (scenario, seed) jobs, in parallel when ``workers > 1``; output keeps job order."""
    payload = [(cfg.to_dict(), seed) for cfg, seed in jobs]
    if workers <= 1 or len(payload) <= 1:
        return [_run_cell(p) for p in payload]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, payload))


@dataclass
class CellResult:
    arm: Arm
    value: Any
    seed: int
    record: MetricsRecord
    horizon: float

    @property
    def lifetime(self) -> float:
        """Seconds until the first death, censored at the horizon."""
        fnd = self.record.first_node_death
        return self.horizon if fnd is None else to_s(fnd)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    cells: List[CellResult] = field(default_factory=list)

    def select(self, mode: Optional[EstimationMode] = None, variant: Optional[str] = None,
               value: Any = None) -> List[CellResult]:
        return [
            c for c in self.cells
            if (mode is None or c.arm.mode is mode)
            and (variant is None or c.arm.variant == variant)
            and (value is None or c.value == value)
        ]


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    cells = spec.cells()
    scenarios = {(a, v): spec.scenario_for(a, v) for a, v, _ in cells}
    records = run_cells([(scenarios[a, v], seed) for a, v, seed in cells], workers)
    result = ExperimentResult(spec)
    for (a, v, seed), rec in zip(cells, records):
        cfg = scenarios[a, v]
        result.cells.append(CellResult(spec.arms[a], spec.sweep_values[v], seed, rec, float(cfg.horizon)))
    return result


# ------------------------------------------------------------------ outputs

RAW_METRICS = (
    "packets_sent", "packets_delivered", "mean_inaccuracy", "adjustment_fraction",
    "perceptions", "adjusted", "first_node_death_s", "lifetime_s",
)
AGG_METRICS = (
    "packets_sent", "packets_delivered", "mean_inaccuracy", "adjustment_fraction", "lifetime_s",
)


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _raw_values(c: CellResult) -> Dict[str, Any]:
    rec = c.record
    return {
        "packets_sent": rec.packets_sent,
        "packets_delivered": rec.packets_delivered,
        "mean_inaccuracy": rec.mean_inaccuracy,
        "adjustment_fraction": rec.adjustment_fraction,
        "perceptions": rec.counters.get("perceptions", 0),
        "adjusted": rec.counters.get("adjusted", 0),
        "first_node_death_s": None if rec.first_node_death is None else to_s(rec.first_node_death),
        "lifetime_s": c.lifetime,
    }


def raw_table(result: ExperimentResult) -> str:
    col = result.spec.sweep_column
    header = ("mode", "variant", col, "seed") + RAW_METRICS
    rows = []
    for c in result.cells:
        vals = _raw_values(c)
        rows.append([c.arm.mode.value, c.arm.variant, c.value, c.seed] + [vals[m] for m in RAW_METRICS])
    return csv_text(header, rows)


def aggregate_table(result: ExperimentResult) -> str:
    """Per (arm, sweep value) mean and sample standard deviation of each metric."""
    spec = result.spec
    header = ["mode", "variant", spec.sweep_column, "n"]
    for m in AGG_METRICS:
        header += [f"{m}_mean", f"{m}_std"]
    rows = []
    for arm in spec.arms:
        for value in spec.sweep_values:
            group = [c for c in result.cells if c.arm == arm and c.value == value]
            row: List[Any] = [arm.mode.value, arm.variant, value, len(group)]
            for m in AGG_METRICS:
                xs = [float(_raw_values(c)[m]) for c in group]
                row += [statistics.fmean(xs), statistics.stdev(xs) if len(xs) > 1 else 0.0]
            rows.append(row)
    return csv_text(header, rows)


def series_table(result: ExperimentResult) -> str:
    """Minimum and mean residual energy across all nodes at each sample time."""
    col = result.spec.sweep_column
    header = ("mode", "variant", col, "seed", "time_s", "min_residual", "mean_residual", "alive")
    rows = []
    for c in result.cells:
        by_time: Dict[int, List[float]] = {}
        for r in c.record.rows:
            by_time.setdefault(r.time, []).append(r.actual_energy)
        for t in sorted(by_time):
            es = by_time[t]
            rows.append([
                c.arm.mode.value, c.arm.variant, c.value, c.seed, to_s(t),
                min(es), statistics.fmean(es), sum(1 for e in es if e > 0),
            ])
    return csv_text(header, rows)


def manifest(result: ExperimentResult, files: Dict[str, str]) -> str:
    spec = result.spec
    doc = {
        "name": spec.name,
        "kind": spec.kind,
        "spec_hash": spec.digest(),
        "seeds": sorted(spec.seeds),
        "sweep": {"param": spec.sweep_param, "values": list(spec.sweep_values)},
        "arms": [a.label for a in spec.arms],
        "cells": len(result.cells),
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
        "versions": {
            "eolsr": __version__,
            "python": platform.python_version(),
            "pyyaml": yaml.__version__,
        },
        "spec": spec.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render(result: ExperimentResult) -> Dict[str, str]:
    """All output files of an experiment as {file name: text}."""
    files = {"raw.csv": raw_table(result), "aggregate.csv": aggregate_table(result)}
    if result.spec.kind == "fig3":
        files["series.csv"] = series_table(result)
    files["manifest.json"] = manifest(result, dict(files))
    return files


def write_outputs(out_dir: str | Path, files: Dict[str, str]) -> List[Path]:
    """Write every file or none: stage in a sibling temp dir, then move into place."""
    out = Path(out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for name, text in files.items():
            (stage / name).write_text(text)
        out.mkdir(exist_ok=True)
        written = []
        for name in files:
            os.replace(stage / name, out / name)
            written.append(out / name)
        return written
    finally:
        shutil.rmtree(stage, ignore_errors=True)
