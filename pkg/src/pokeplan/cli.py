"""Command line front end.

Subcommands map one-to-one onto the pipeline stages: `reach` classifies
the workspace, `edges` samples a motion bundle from a map, `plan` runs a
single trial, `bench` sweeps a whole suite.  Exit codes: 0 done, 1 task
failure, 2 bad configuration, 3 empty reachable set, 4 bundle provenance
mismatch.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .bench import ASM_BY_NAME, run_suite, write_reports
from .config import (ConfigError, load_chain, load_failure, load_scenario,
                     load_suite)
from .edgebundle import (EmptyReachableSet, ProvenanceError, generate_edges,
                         load_bundle, path_is_json, save_bundle,
                         save_bundle_json)
from .figures import render_bench_figures, render_reach_map
from .npm_sim import perturb
from .planner import ASMMode, plan_and_execute
from .reachability import (WorkspaceGrid, area_change_percent,
                           generate_reachability_map, import_csv, pm_area,
                           reachable_area, export_csv, export_pgm, smooth)

EXIT_OK = 0
EXIT_TASK_FAILURE = 1
EXIT_CONFIG = 2
EXIT_EMPTY = 3
EXIT_PROVENANCE = 4

REACH_SUMMARY_VERSION = 1


def _default_table(chain) -> tuple[float, float, float, float]:
    """Base-centered square covering everything the arm can touch."""
    r = sum(chain.link_lengths)
    cx, cy = chain.base_pose.x, chain.base_pose.y
    return (cx - r, cy - r, cx + r, cy + r)


def _cmd_reach(args) -> int:
    chain = load_chain(args.chain)
    fc = load_failure(args.failure)
    table = tuple(args.table) if args.table else _default_table(chain)
    grid = WorkspaceGrid(*table, cell=args.cell)

    def build(failure):
        rmap = generate_reachability_map(chain, failure, grid, k=args.k,
                                         eps=args.eps, seed=args.seed,
                                         jobs=args.jobs)
        return rmap if args.no_smooth else smooth(rmap)

    rmap = build(fc.failure)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(rmap, out / "map.csv")
    export_pgm(rmap, out / "map.pgm")
    render_reach_map(rmap, out / "map.png",
                     title=f"{args.chain}, failure case {fc.name}")

    pm = pm_area(rmap)
    full = reachable_area(rmap)
    if fc.failure.is_empty():
        datum_pm, datum_full = pm, full
    else:
        datum = build(type(fc.failure).from_dict({}))
        datum_pm, datum_full = pm_area(datum), reachable_area(datum)
    dpm = str(area_change_percent(datum_pm, pm)) if datum_pm else ""
    dfull = str(area_change_percent(datum_full, full)) if datum_full else ""
    lines = [
        f"# pokeplan-reach v{REACH_SUMMARY_VERSION}",
        f"# chain: {args.chain} failure: {fc.name} cell: {args.cell} "
        f"k: {args.k} seed: {args.seed} smoothed: "
        f"{str(not args.no_smooth).lower()}",
        "quantity,area_m2,change_percent_vs_no_failure",
        f"pm,{pm:.4f},{dpm}",
        f"pm_npm,{full:.4f},{dfull}",
    ]
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    print(f"map: {grid.nx}x{grid.ny} cells at {grid.cell} m")
    print(f"pm area {pm:.4f} m^2 ({dpm or '0'}%), "
          f"pm+npm {full:.4f} m^2 ({dfull or '0'}%)")
    if not rmap.reachable_cells():
        print("empty reachable set", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


def _cmd_edges(args) -> int:
    try:
        rmap = import_csv(args.map)
    except (OSError, ValueError) as e:
        print(f"cannot read map: {e}", file=sys.stderr)
        return EXIT_CONFIG
    bundle = generate_edges(rmap.chain, rmap.failure, rmap, args.n,
                            seed=args.seed, dt=args.dt, jobs=args.jobs)
    if path_is_json(args.out):
        save_bundle_json(bundle, args.out)
    else:
        save_bundle(bundle, args.out)
    st = bundle.stats
    attempts = st["attempts"]
    rate = len(bundle.edges) / attempts if attempts else 0.0
    print(f"edges: {len(bundle.edges)} accepted / {attempts} attempts "
          f"({rate:.3f})")
    print(f"ik failures: {st['ik_failures']}")
    for kind, count in st["rejections"].items():
        print(f"rejected {kind}: {count}")
    print(f"bundle: {args.out}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    fc = load_failure(args.failure)
    chain = load_chain(sc.chain)
    bundle = load_bundle(args.bundle, chain=chain, failure=fc.failure)
    env = perturb(sc.build_environment(), args.sigma_mu, seed=args.seed)
    result = plan_and_execute(env, bundle, ASMMode(ASM_BY_NAME[args.asm]),
                              max_actions=args.max_actions, seed=args.seed)
    print("scenario,failure,asm,seed,success,actions,planning_time,"
          "execution_time,simulations")
    print(f"{sc.name},{fc.name},{args.asm},{args.seed},"
          f"{int(result.success)},{result.actions},"
          f"{result.planning_time:.4f},{result.execution_time:.4f},"
          f"{result.simulations}")
    print("action,edge_id,predicted_distance,realized_distance,"
          "realized_displacement")
    for i, rec in enumerate(result.log):
        print(f"{i},{rec.edge_id},{rec.predicted_distance:.6f},"
              f"{rec.realized_distance:.6f},{rec.realized_displacement:.6f}")
    return EXIT_OK if result.success else EXIT_TASK_FAILURE


def _cmd_bench(args) -> int:
    suite = load_suite(args.suite)
    if args.trials is not None:
        suite = replace(suite, trials=args.trials)
    if args.seed is not None:
        suite = replace(suite, master_seed=args.seed)
    log = (lambda m: print(m, flush=True)) if args.verbose else None
    result = run_suite(suite, jobs=args.jobs, log=log)
    paths = write_reports(result, args.out)
    figures = {} if args.no_figures else render_bench_figures(result, args.out)
    for c in result.cells:
        print(f"{c.scenario},{c.failure},{c.asm}: "
              f"{c.successes}/{c.trials} mean_actions={c.mean_actions:.2f}")
    for e in result.errors:
        print(f"trial error: {e}", file=sys.stderr)
    print("reports: " + ", ".join(str(p) for p in paths.values()))
    if figures:
        print("figures: " + ", ".join(str(p) for p in figures.values()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pokeplan",
                                description="workspace coverage, edge "
                                "bundles, and poke planning for partially "
                                "failed planar arms")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reach", help="classify workspace cells")
    r.add_argument("--chain", required=True)
    r.add_argument("--failure", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--k", type=int, default=10)
    r.add_argument("--eps", type=float, default=None)
    r.add_argument("--cell", type=float, default=0.02)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--table", type=float, nargs=4, default=None,
                   metavar=("X0", "Y0", "X1", "Y1"))
    r.add_argument("--no-smooth", action="store_true")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(fn=_cmd_reach)

    e = sub.add_parser("edges", help="sample an edge bundle from a map")
    e.add_argument("--map", required=True)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--dt", type=float, default=0.02)
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(fn=_cmd_edges)

    t = sub.add_parser("plan", help="run one planning trial")
    t.add_argument("--scenario", required=True)
    t.add_argument("--failure", required=True)
    t.add_argument("--bundle", required=True)
    t.add_argument("--asm", required=True, choices=sorted(ASM_BY_NAME))
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-actions", type=int, default=25)
    t.add_argument("--sigma-mu", type=float, default=0.2)
    t.set_defaults(fn=_cmd_plan)

    b = sub.add_parser("bench", help="run a full suite")
    b.add_argument("--suite", required=True)
    b.add_argument("--trials", type=int, default=None)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--no-figures", action="store_true")
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(fn=_cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyReachableSet as e:
        print(f"empty reachable set: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except ProvenanceError as e:
        print(f"provenance mismatch: {e}", file=sys.stderr)
        return EXIT_PROVENANCE


if __name__ == "__main__":
    sys.exit(main())
