"""Command-line entry point: ``csqf {run,schedule,verify,gen,plot-data}``.

Exit codes: 0 success, 2 invalid input, 3 verifier violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .errors import CsqfError
from .experiment import ALL_ALGORITHMS, apply_preset, emit_plot_data, load_spec, run_experiment
from .flow_model import (
    config_to_dict,
    flow_from_dict,
    flow_to_dict,
    load_config,
    load_flows,
    route_flows,
    save_flows,
    validate_config,
)
from .net_model import load_topology, save_topology
from .scheduler import FlowSolution, new_grid, run_batch
from .tabu import TabuParams, tabu_focs
from .verifier import replay
from .workload import TrafficProfile, gen_er_topology, gen_flows, internet2_topology

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 2, 3


def _algo_list(text: str) -> list[str]:
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALL_ALGORITHMS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALL_ALGORITHMS)}")
    return algos


def cmd_run(args) -> int:
    spec = apply_preset(load_spec(args.spec), args.preset)
    if args.seed is not None:
        spec = replace(spec, master_seed=args.seed, seeds=[])
    if args.algo:
        spec = replace(spec, algorithms=args.algo)
    if args.inject_fault:
        spec = replace(spec, inject_fault=True)
    out = run_experiment(spec, args.out, jobs=args.jobs)
    print(f"wrote {out['aggregate']} ({len(out['rows'])} runs)")
    for line in out["violations"]:
        print(f"VIOLATION {line}")
    return EXIT_VIOLATION if out["violations"] else EXIT_OK


def cmd_schedule(args) -> int:
    topo = load_topology(args.topo)
    flows = load_flows(args.flows, topo)
    cfg = validate_config(flows, load_config(args.config))
    if args.algo == "tabu":
        params = TabuParams(max_iterations=args.tabu_k, max_no_improve=args.tabu_p)
        result, order, _ = tabu_focs(
            flows, topo, cfg, params, args.seed,
            progress=lambda i, c, b: print(f"iteration={i} current={c} best={b}", file=sys.stderr),
        )
    else:
        grid = new_grid(topo, cfg)
        result = run_batch(flows, grid, args.algo, topo, cfg)
        order = [f.id for f in flows]
        if args.dump_grid:
            grid.dump_csv(args.dump_grid, topo)
    doc = {
        "config": config_to_dict(cfg),
        "hyper_us": cfg.hyper_us,
        "beta": cfg.beta,
        "flows": [flow_to_dict(f) for f in flows],
        "solutions": [s.to_dict(cfg.beta) for s in result.scheduled],
        "failed": result.failed,
        "order": order,
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"{args.algo}: scheduled {result.count}/{len(flows)} flows in {result.total_runtime * 1000:.1f} ms")
    return EXIT_OK


def cmd_verify(args) -> int:
    topo = load_topology(args.topo)
    with open(args.schedule) as fh:
        doc = json.load(fh)
    try:
        flows = route_flows([flow_from_dict(d) for d in doc["flows"]], topo)
        solutions = [FlowSolution.from_dict(d) for d in doc["solutions"]]
    except KeyError as exc:
        raise CsqfError(f"{args.schedule}: missing field {exc}") from exc
    cfg = validate_config(flows, load_config(args.config))
    report = replay(topo, flows, solutions, cfg)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    for v in report.violations:
        print(f"VIOLATION {v.describe(topo)}")
    print(f"verified {len(report.per_flow)} flows, {len(report.violations)} violations")
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_gen_topo(args) -> int:
    if args.kind == "internet2":
        topo = internet2_topology()
    else:
        topo = gen_er_topology(args.n, args.m, tuple(args.delay_us), args.seed)
    save_topology(topo, args.out)
    print(f"wrote {args.out}: {len(topo.nodes)} nodes, {topo.num_edges} directed edges")
    return EXIT_OK


def cmd_gen_flows(args) -> int:
    topo = load_topology(args.topo)
    profile = TrafficProfile(
        period_choices=tuple(args.periods_us),
        packets_choices=tuple(args.packets),
        deadline_range=tuple(args.deadline_us),
        flow_count=args.count,
        seed=args.seed,
    )
    save_flows(gen_flows(profile, topo), args.out)
    print(f"wrote {args.out}: {args.count} flows")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    for p in emit_plot_data(args.aggregate, args.out):
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csqf", description="Cycle-tag scheduling for segment-routed CQF networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment spec and write aggregate CSVs")
    run.add_argument("--spec", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, help="master seed; overrides seeds listed in the spec")
    run.add_argument("--algo", type=_algo_list, help="comma-separated subset of " + ",".join(ALL_ALGORITHMS))
    run.add_argument("--preset", choices=("paper", "desk"))
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    run.set_defaults(func=cmd_run)

    sch = sub.add_parser("schedule", help="schedule one flow file")
    sch.add_argument("--topo", required=True)
    sch.add_argument("--flows", required=True)
    sch.add_argument("--config", required=True)
    sch.add_argument("--algo", choices=ALL_ALGORITHMS, default="focs")
    sch.add_argument("--out", required=True)
    sch.add_argument("--seed", type=int, default=0)
    sch.add_argument("--tabu-k", type=int, default=100)
    sch.add_argument("--tabu-p", type=int, default=20)
    sch.add_argument("--dump-grid", help="write (edge, cycle_index, occupancy) CSV")
    sch.set_defaults(func=cmd_schedule)

    ver = sub.add_parser("verify", help="replay a schedule file and report violations")
    ver.add_argument("--schedule", required=True)
    ver.add_argument("--topo", required=True)
    ver.add_argument("--config", required=True)
    ver.add_argument("--report", help="write the JSON verification report here")
    ver.set_defaults(func=cmd_verify)

    gen = sub.add_parser("gen", help="generate topologies or flows")
    gsub = gen.add_subparsers(dest="what", required=True)
    gt = gsub.add_parser("topo")
    gt.add_argument("kind", choices=("internet2", "er"))
    gt.add_argument("--n", type=int, default=15)
    gt.add_argument("--m", type=int, default=18)
    gt.add_argument("--delay-us", type=float, nargs=2, default=(100, 2000))
    gt.add_argument("--seed", type=int, default=0)
    gt.add_argument("--out", required=True)
    gt.set_defaults(func=cmd_gen_topo)
    gf = gsub.add_parser("flows")
    gf.add_argument("--topo", required=True)
    gf.add_argument("--count", type=int, default=1000)
    gf.add_argument("--periods-us", type=int, nargs="+", default=[4000, 8000, 16000, 32000])
    gf.add_argument("--packets", type=int, nargs="+", default=[1, 2, 3])
    gf.add_argument("--deadline-us", type=int, nargs=2, default=[30000, 50000])
    gf.add_argument("--seed", type=int, default=0)
    gf.add_argument("--out", required=True)
    gf.set_defaults(func=cmd_gen_flows)

    pd = sub.add_parser("plot-data", help="turn an aggregate CSV into plot-ready series")
    pd.add_argument("--aggregate", required=True)
    pd.add_argument("--out", required=True)
    pd.set_defaults(func=cmd_plot_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CsqfError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
