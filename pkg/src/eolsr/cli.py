"""Command-line entry point: ``eolsr run | fig2 | fig3 | inaccuracy``.

Exit codes: 0 ok, 2 I/O error, 3 invalid scenario or spec, 4 simulation
invariant violated.  Output directories default to ``$EOLSR_OUT/<name>``
(``results/<name>`` when the variable is unset).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import yaml

from . import __version__
from .experiments import (
    PRESETS,
    ExperimentSpec,
    csv_text,
    render,
    run_experiment,
    spec_from_dict,
    write_outputs,
)
from .model import EstimationMode, to_s
from .sim.engine import InvariantViolation, Simulator
from .sim.scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3, 4
OUT_ENV = "EOLSR_OUT"

log = logging.getLogger("eolsr")


class UsageError(ScenarioError):
    pass


def parse_seeds(text: str) -> List[int]:
    """``"1-5,9"`` -> [1, 2, 3, 4, 5, 9]."""
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    if any(s < 0 for s in seeds):
        raise ValueError("seeds must be >= 0")
    return sorted(set(seeds))


def default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV) or "results") / name


# ----------------------------------------------------------------------- run


def run_files(sim: Simulator, record, scenario_dict: Dict) -> Dict[str, str]:
    metrics = csv_text(
        ("time_s", "node", "actual_energy", "mean_perceived_error"),
        ([to_s(r.time), r.node, r.actual_energy, r.mean_perceived_error] for r in record.rows),
    )
    samples = csv_text(
        ("time_s", "observer", "subject", "perceived", "actual", "error"),
        ([to_s(s.at), s.observer, s.subject, s.perceived, s.actual, s.error] for s in sim.samples),
    )
    summary = dict(record.summary())
    summary["version"] = __version__
    summary["scenario"] = scenario_dict
    summary["flows"] = [[f.source, f.dest, f.packet_interval] for f in sim.flows]
    summary["energy_audit"] = {str(k): v for k, v in sorted(record.energy_audit.items())}
    files = {
        "metrics.csv": metrics,
        "inaccuracy.csv": samples,
        "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
    }
    if sim.keep_snapshots:
        snaps = [
            {"time_s": to_s(t), "nodes": [s.to_dict() for s in snap]}
            for t, snap in sim.snapshots
        ]
        files["snapshots.json"] = json.dumps(snaps, indent=1) + "\n"
    return files


def cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.scenario)
    if not path.is_file():
        raise FileNotFoundError(f"scenario not found: {path}")
    cfg = load_scenario(path)
    sim = Simulator(cfg, args.seed, keep_samples=True, keep_snapshots=args.snapshots)
    record = sim.run()
    out = Path(args.out) if args.out else default_out(f"run-{cfg.id}-{args.seed}")
    written = write_outputs(out, run_files(sim, record, cfg.to_dict()))
    s = record.summary()
    print(
        f"{cfg.id} seed {args.seed}: sent {s['packets_sent']} delivered {s['packets_delivered']} "
        f"mean_inaccuracy {s['mean_inaccuracy']:.6g} first_node_death "
        f"{'-' if s['first_node_death'] is None else to_s(s['first_node_death'])}"
    )
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# --------------------------------------------------------------- experiments


def _check_kind(spec: ExperimentSpec) -> None:
    modes = {a.mode for a in spec.arms}
    variants = {a.variant for a in spec.arms}
    if spec.kind == "fig2":
        if not {EstimationMode.IDEAL, EstimationMode.REALISTIC} <= modes:
            raise UsageError(["fig2 compares at least the Ideal and Realistic modes"])
    elif spec.kind == "fig3":
        if not {"OLSR", "EOLSR"} <= variants:
            raise UsageError(["fig3 compares at least the OLSR and EOLSR variants"])
    elif spec.kind == "inaccuracy":
        if modes != set(EstimationMode):
            raise UsageError(["inaccuracy compares all four estimation modes"])


def load_experiment(kind: str, spec_path: Optional[str], seeds: Optional[str]) -> ExperimentSpec:
    if spec_path:
        path = Path(spec_path)
        if not path.is_file():
            raise FileNotFoundError(f"spec not found: {path}")
        with path.open() as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ScenarioError([f"{path}: {exc}"]) from exc
        if not isinstance(data, dict):
            raise ScenarioError([f"{path}: expected a mapping"])
        if data.get("kind", kind) != kind:
            raise UsageError([f"spec kind {data['kind']!r} does not match command {kind!r}"])
        spec = spec_from_dict(dict(data, kind=kind), path.parent)
    else:
        spec = PRESETS[kind]()
    if seeds:
        try:
            spec = spec.with_seeds(parse_seeds(seeds))
        except ValueError as exc:
            raise UsageError([f"--seeds: {exc}"]) from exc
    _check_kind(spec)
    return spec


def cmd_experiment(args: argparse.Namespace) -> int:
    spec = load_experiment(args.command, args.spec, args.seeds)
    out = Path(args.out) if args.out else (Path(spec.out) if spec.out else default_out(spec.name))
    if args.jobs < 1:
        raise UsageError(["--jobs must be >= 1"])
    n = len(spec.cells())
    log.info("%s: %d runs (%d arms x %d values x %d seeds), %d worker(s)",
             spec.name, n, len(spec.arms), len(spec.sweep_values), len(spec.seeds), args.jobs)
    result = run_experiment(spec, args.jobs)
    written = write_outputs(out, render(result))
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eolsr", description="Energy-aware OLSR simulator and experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario with one seed")
    r.add_argument("scenario", nargs="?", help="scenario file (YAML or JSON)")
    r.add_argument("--scenario", dest="scenario_opt", metavar="FILE", help="same as the positional argument")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/run-<id>-<seed>)")
    r.add_argument("--snapshots", action="store_true",
                   help="also write neighbor/MPR/route snapshots per sample time")
    r.set_defaults(func=cmd_run)

    helps = {
        "fig2": "Ideal vs Realistic estimation over a packet-interval sweep",
        "fig3": "OLSR vs EOLSR residual energy and network lifetime",
        "inaccuracy": "all four estimation modes over low/medium/high traffic",
    }
    for name, text in helps.items():
        e = sub.add_parser(name, help=text)
        e.add_argument("--spec", help="experiment spec file; defaults to the built-in preset")
        e.add_argument("--seeds", "--seed", dest="seeds", help="override seeds, e.g. 1-20 or 1,4,7")
        e.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name>)")
        e.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        e.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "run":
        args.scenario = args.scenario_opt or args.scenario
        if not args.scenario:
            parser.error("run needs a scenario file")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INVALID
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
