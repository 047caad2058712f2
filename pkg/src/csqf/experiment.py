"""Experiment orchestration: batch runs, replay verification, CSV export."""
from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import mean

import numpy as np

from .errors import ConfigError, MalformedAggregate
from .flow_model import (
    ScheduleConfig,
    config_from_dict,
    config_to_dict,
    flow_to_dict,
    load_flows,
    smallest_valid_cycle,
    validate_config,
)
from .net_model import ValidatedTopology, load_topology
from .scheduler import ALGORITHMS, FlowSolution, new_grid, run_batch
from .tabu import DESK_PARAMS, PAPER_PARAMS, TabuParams, tabu_focs
from .verifier import replay
from .workload import TrafficProfile, gen_er_topology, gen_flows, internet2_topology, rng_for

AGGREGATE_COLUMNS = [
    "algorithm", "seed", "flow_count", "scheduled_count", "scheduled_pct",
    "total_runtime_ms", "p50_per_flow_us", "p90_per_flow_us", "max_per_flow_us",
    "verifier_violations",
]
TIMING_COLUMNS = {"total_runtime_ms", "p50_per_flow_us", "p90_per_flow_us", "max_per_flow_us"}
STABLE_COLUMNS = [c for c in AGGREGATE_COLUMNS if c not in TIMING_COLUMNS]
ALL_ALGORITHMS = ALGORITHMS + ("tabu",)


@dataclass
class Variant:
    """A named set of config overrides; ``t_cycle_us="auto"`` picks the smallest valid cycle."""

    label: str = ""
    overrides: dict = field(default_factory=dict)


@dataclass
class ExperimentSpec:
    topology: dict = field(default_factory=lambda: {"generator": "internet2"})
    traffic: dict = field(default_factory=dict)
    config: ScheduleConfig = field(default_factory=ScheduleConfig)
    algorithms: list[str] = field(default_factory=lambda: ["naive", "fo", "cs", "focs"])
    repetitions: int = 1
    seeds: list[int] = field(default_factory=list)
    master_seed: int = 0
    variants: list[Variant] = field(default_factory=lambda: [Variant()])
    tabu: TabuParams = DESK_PARAMS
    output_dir: str = "results"
    inject_fault: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        bad = [a for a in self.algorithms if a not in ALL_ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {ALL_ALGORITHMS}")
        if self.seeds and len(self.seeds) < self.repetitions:
            raise ConfigError(f"{len(self.seeds)} seeds given for {self.repetitions} repetitions")

    def run_seeds(self) -> list[int]:
        if self.seeds:
            return list(self.seeds[: self.repetitions])
        rng = rng_for(self.master_seed)
        return [int(s) for s in rng.integers(0, 2**31 - 1, size=self.repetitions)]

    def flow_counts(self) -> list[int]:
        if "file" in self.traffic:
            return [-1]
        return list(self.traffic.get("flow_counts", [TrafficProfile().flow_count]))


def spec_from_dict(d: dict, base_dir: str | Path = ".") -> ExperimentSpec:
    d = dict(d)
    base = Path(base_dir)
    for key in ("topology", "traffic"):
        if key in d and "file" in d[key]:
            d[key] = {**d[key], "file": str(base / d[key]["file"])}
    if "config" in d:
        d["config"] = config_from_dict(d["config"])
    if "variants" in d:
        d["variants"] = [
            Variant(v.get("label", ""), {k: x for k, x in v.items() if k != "label"}) for v in d["variants"]
        ]
    if "tabu" in d:
        d["tabu"] = TabuParams(**d["tabu"])
    known = set(ExperimentSpec.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
    return ExperimentSpec(**d)


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return spec_from_dict(data, path.parent)


def apply_preset(spec: ExperimentSpec, preset: str | None) -> ExperimentSpec:
    if preset is None:
        return spec
    cfg = replace(spec.config, t_cycle_us=125, queue_len=10, bandwidth_bps=1_000_000_000)
    if preset == "paper":
        return replace(spec, config=cfg, tabu=PAPER_PARAMS)
    if preset == "desk":
        traffic = dict(spec.traffic)
        if "flow_counts" in traffic:
            traffic["flow_counts"] = [max(10, c // 8) for c in traffic["flow_counts"]]
        return replace(spec, config=cfg, tabu=DESK_PARAMS, traffic=traffic)
    raise ConfigError(f"unknown preset {preset!r}")


def build_topology_for(spec: ExperimentSpec, seed: int) -> ValidatedTopology:
    t = spec.topology
    if "file" in t:
        return load_topology(t["file"])
    gen = t.get("generator", "internet2")
    if gen == "internet2":
        return internet2_topology()
    if gen == "er":
        lo, hi = t.get("delay_us", (100, 2000))
        return gen_er_topology(int(t["n"]), int(t["m"]), (lo, hi), seed=int(t.get("seed", seed)))
    raise ConfigError(f"unknown topology generator {gen!r}")


def profile_for(spec: ExperimentSpec, flow_count: int, seed: int) -> TrafficProfile:
    tr = spec.traffic
    base = TrafficProfile()
    return TrafficProfile(
        period_choices=tuple(tr.get("period_us", base.period_choices)),
        packets_choices=tuple(tr.get("packets", base.packets_choices)),
        deadline_range=tuple(tr.get("deadline_us", base.deadline_range)),
        flow_count=flow_count,
        seed=seed,
    )


def resolve_config(base: ScheduleConfig, variant: Variant, periods) -> ScheduleConfig:
    over = dict(variant.overrides)
    cfg = replace(base, **{k: v for k, v in over.items() if k != "t_cycle_us"})
    t = over.get("t_cycle_us")
    if t == "auto":
        t = smallest_valid_cycle(periods, cfg.queue_len, cfg.mtu_bytes, cfg.bandwidth_bps, cfg.proc_delay_us)
    if t is not None:
        cfg = replace(cfg, t_cycle_us=int(t))
    return cfg


@dataclass(frozen=True)
class RunKey:
    algorithm: str
    variant: Variant
    flow_count: int
    seed: int

    @property
    def label(self) -> str:
        return f"{self.algorithm}-{self.variant.label}" if self.variant.label else self.algorithm

    @property
    def stem(self) -> str:
        n = "file" if self.flow_count < 0 else self.flow_count
        return f"{self.label}_n{n}_s{self.seed}"


def tamper(solutions: list[FlowSolution], queue_num: int) -> list[FlowSolution]:
    """Debug fault: push the first scheduled flow's first shift past the queue budget."""
    if not solutions:
        return solutions
    s = solutions[0]
    extra = queue_num - 1 - s.deltas[0]
    deltas = (queue_num - 1,) + s.deltas[1:]
    tx = tuple(c + extra for c in s.transmit_cycles)
    return [replace(s, deltas=deltas, transmit_cycles=tx)] + solutions[1:]


def execute_run(spec: ExperimentSpec, key: RunKey, out_dir: Path, fault: bool = False) -> dict:
    topo = build_topology_for(spec, key.seed)
    if key.flow_count < 0:
        flows = load_flows(spec.traffic["file"], topo)
    else:
        flows = gen_flows(profile_for(spec, key.flow_count, key.seed), topo)
    periods = sorted({f.period_us for f in flows}) or [spec.config.t_cycle_us]
    cfg = validate_config(flows, resolve_config(spec.config, key.variant, periods))

    best_order = None
    if key.algorithm == "tabu":
        lines = []
        result, best_order, _ = tabu_focs(
            flows, topo, cfg, spec.tabu, key.seed, progress=lambda *row: lines.append(row)
        )
        logs = out_dir / "logs"
        logs.mkdir(exist_ok=True)
        with open(logs / f"{key.stem}.log", "w") as fh:
            for it, cur, best in lines:
                fh.write(f"iteration={it} current={cur} best={best}\n")
    else:
        result = run_batch(flows, new_grid(topo, cfg), key.algorithm, topo, cfg)

    solutions = tamper(result.scheduled, cfg.queue_num) if fault else result.scheduled
    report = replay(topo, flows, solutions, cfg)
    flagged = {v.flow for v in report.violations if v.flow is not None}
    confirmed = [s for s in solutions if s.flow not in flagged]

    times_us = np.array([result.per_flow_runtime[f.id] for f in flows if f.id in result.per_flow_runtime]) * 1e6
    row = {
        "algorithm": key.label,
        "seed": key.seed,
        "flow_count": len(flows),
        "scheduled_count": len(confirmed),
        "scheduled_pct": f"{100.0 * len(confirmed) / len(flows):.4f}" if flows else "0.0000",
        "total_runtime_ms": f"{result.total_runtime * 1000:.3f}",
        "p50_per_flow_us": f"{np.percentile(times_us, 50):.1f}" if times_us.size else "0.0",
        "p90_per_flow_us": f"{np.percentile(times_us, 90):.1f}" if times_us.size else "0.0",
        "max_per_flow_us": f"{times_us.max():.1f}" if times_us.size else "0.0",
        "verifier_violations": len(report.violations),
    }
    run_doc = {
        "run": row,
        "config": config_to_dict(cfg),
        "hyper_us": cfg.hyper_us,
        "beta": cfg.beta,
        "flows": [flow_to_dict(f) for f in flows],
        "solutions": [s.to_dict(cfg.beta) for s in solutions],
        "failed": result.failed,
        "per_flow_runtime_us": [round(float(t), 1) for t in times_us],
        "violations": [v.describe(topo) for v in report.violations],
    }
    if best_order is not None:
        run_doc["best_order"] = best_order
    runs = out_dir / "runs"
    runs.mkdir(exist_ok=True)
    with open(runs / f"{key.stem}.json", "w") as fh:
        json.dump(run_doc, fh)
    return {"row": row, "violations": run_doc["violations"], "reports": report}


def _execute(args):
    spec, key, out_dir, fault = args
    res = execute_run(spec, key, out_dir, fault)
    res.pop("reports")
    return res


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None, jobs: int = 1) -> dict:
    """Run every (variant, algorithm, flow count, seed) and write the aggregate CSVs.

    Returns ``{"rows": [...], "violations": [...], "aggregate": path}``.
    """
    out = Path(out_dir or spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = [
        RunKey(algo, variant, n, seed)
        for variant in spec.variants
        for algo in spec.algorithms
        for n in spec.flow_counts()
        for seed in spec.run_seeds()
    ]
    tasks = [(spec, k, out, spec.inject_fault and i == 0) for i, k in enumerate(keys)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute, tasks))
    else:
        results = [_execute(t) for t in tasks]

    rows = [r["row"] for r in results]
    violations = [v for r in results for v in r["violations"]]
    agg = out / "aggregate.csv"
    write_rows(agg, rows, AGGREGATE_COLUMNS)
    write_rows(out / "aggregate_stable.csv", rows, STABLE_COLUMNS)
    return {"rows": rows, "violations": violations, "aggregate": agg}


def write_rows(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# -- plot data ------------------------------------------------------------

_QUEUE_LABEL = re.compile(r"-(\d+)q$", re.IGNORECASE)
_MEMORY_LABEL = re.compile(r"-L(\d+)N(\d+)$")


def read_aggregate(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MalformedAggregate(f"{path} does not exist")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(AGGREGATE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise MalformedAggregate(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise MalformedAggregate(f"{path}: no runs recorded")
    try:
        for r in rows:
            r["flow_count"] = int(r["flow_count"])
            r["scheduled_count"] = int(r["scheduled_count"])
            r["total_runtime_ms"] = float(r["total_runtime_ms"])
            r["max_per_flow_us"] = float(r["max_per_flow_us"])
    except ValueError as exc:
        raise MalformedAggregate(f"{path}: {exc}") from exc
    return rows


def _means(rows, value):
    groups: dict[tuple[int, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r["flow_count"], r["algorithm"]), []).append(r[value])
    return [(x, s, mean(v)) for (x, s), v in sorted(groups.items())]


def _cdf(samples: dict[str, list[float]]):
    out = []
    for series in sorted(samples):
        xs = np.sort(np.asarray(samples[series], dtype=float))
        n = len(xs)
        out.extend((float(x), series, (i + 1) / n) for i, x in enumerate(xs))
    return out


def _write_series(path: Path, points) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "series", "y"])
        for x, s, y in points:
            w.writerow([x, s, f"{y:.6g}"])
    return path


def emit_plot_data(aggregate: str | Path, out_dir: str | Path) -> list[Path]:
    """Long-format (x, series, y) CSVs for the schedulability and run-time figures."""
    rows = read_aggregate(aggregate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _write_series(out / "scheduled_counts.csv", _means(rows, "scheduled_count")),
        _write_series(out / "total_runtime.csv", _means(rows, "total_runtime_ms")),
    ]

    samples: dict[str, list[float]] = {}
    run_dir = Path(aggregate).parent / "runs"
    if run_dir.is_dir():
        for p in sorted(run_dir.glob("*.json")):
            with open(p) as fh:
                doc = json.load(fh)
            samples.setdefault(doc["run"]["algorithm"], []).extend(doc["per_flow_runtime_us"])
    if not samples:
        for r in rows:
            samples.setdefault(r["algorithm"], []).append(r["max_per_flow_us"])
    written.append(_write_series(out / "exec_time_cdf.csv", _cdf(samples)))

    queue_rows = [r for r in rows if _QUEUE_LABEL.search(r["algorithm"])]
    written.append(_write_series(out / "queue_number.csv", _means(queue_rows, "scheduled_count")))
    memory_rows = [r for r in rows if _MEMORY_LABEL.search(r["algorithm"])]
    written.append(_write_series(out / "memory_allocation.csv", _means(memory_rows, "scheduled_count")))
    return written
