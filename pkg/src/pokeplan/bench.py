"""Suite runner: build maps and edge bundles per failure case, run seeded
planner trials over every (scenario, failure, selection mode) cell, and
write delimited reports.

Trials are mutually independent with per-trial derived seeds, so the run
can be spread over worker processes and still reduce to byte-identical
reports at any job count.  The same world seed is shared by all selection
modes in a cell row, giving paired comparisons across modes.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SuiteSpec, load_chain, load_failure, load_scenario
from .edgebundle import EdgeBundle, generate_edges
from .npm_sim import perturb
from .planner import ASMMode, GREEDY, LAZY, RANDOM, plan_and_execute
from .reachability import (ReachabilityMap, WorkspaceGrid, area_change_percent,
                           generate_reachability_map, pm_area, reachable_area,
                           smooth)

BENCH_CSV_VERSION = 1

ASM_BY_NAME = {"random": RANDOM, "lazy": LAZY, "greedy": GREEDY}


def trial_seed(master_seed: int, scenario_idx: int, failure_idx: int,
               trial: int) -> int:
    """One integer per (scenario, failure, trial), shared by every
    selection mode so modes face identical perturbed worlds."""
    ss = np.random.SeedSequence((master_seed, scenario_idx, failure_idx, trial))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class TrialRecord:
    scenario: str
    failure: str
    asm: str
    trial: int
    success: bool
    actions: int
    planning_time: float
    execution_time: float
    simulations: int
    error: str = ""


@dataclass
class CellReport:
    scenario: str
    failure: str
    asm: str
    records: tuple[TrialRecord, ...]

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> int:
        return sum(r.success for r in self.records)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def mean_actions(self) -> float:
        return statistics.fmean(r.actions for r in self.records)

    @property
    def std_actions(self) -> float:
        return statistics.pstdev(r.actions for r in self.records)

    @property
    def mean_planning_time(self) -> float:
        return statistics.fmean(r.planning_time for r in self.records)

    @property
    def mean_execution_time(self) -> float:
        return statistics.fmean(r.execution_time for r in self.records)

    def histogram(self, max_actions: int) -> list[int]:
        counts = [0] * (max_actions + 1)
        for r in self.records:
            counts[min(r.actions, max_actions)] += 1
        return counts


@dataclass
class BenchResult:
    suite: SuiteSpec
    maps: dict[tuple, ReachabilityMap]       # keyed (chain, table, failure)
    bundles: dict[tuple, EdgeBundle]
    cells: list[CellReport] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


# --- artifact stage -------------------------------------------------------

def build_artifacts(suite: SuiteSpec, jobs: int = 1, log=None):
    """Reachability map and edge bundle for every (chain, table, failure)
    the suite touches.  Maps are majority-smoothed before sampling."""
    scenarios = {s: load_scenario(s) for s in suite.scenarios}
    failures = {f: load_failure(f) for f in suite.failures}
    chains = {sc.chain: load_chain(sc.chain) for sc in scenarios.values()}
    surfaces = []
    for sc in scenarios.values():
        key = (sc.chain, sc.table)
        if key not in surfaces:
            surfaces.append(key)

    maps: dict[tuple, ReachabilityMap] = {}
    bundles: dict[tuple, EdgeBundle] = {}
    for chain_name, table in surfaces:
        chain = chains[chain_name]
        grid = WorkspaceGrid(*table, cell=suite.map_cell)
        for fname in suite.failures:
            if log:
                log(f"map+bundle: chain={chain_name} failure={fname}")
            rmap = smooth(generate_reachability_map(
                chain, failures[fname].failure, grid, k=suite.map_attempts,
                seed=suite.master_seed, jobs=jobs))
            bundle = generate_edges(chain, failures[fname].failure, rmap,
                                    suite.bundle_edges, seed=suite.master_seed,
                                    env=None, dt=suite.bundle_dt, jobs=jobs)
            maps[(chain_name, table, fname)] = rmap
            bundles[(chain_name, table, fname)] = bundle
    return scenarios, maps, bundles


# --- trial stage ----------------------------------------------------------

_TRIAL_CTX = None


def _init_trial_worker(ctx):
    global _TRIAL_CTX
    _TRIAL_CTX = ctx


def _run_trial_impl(ctx, job) -> TrialRecord:
    scenarios, bundles, suite = ctx
    si, fi, ai, t = job
    sname = suite.scenarios[si]
    fname = suite.failures[fi]
    aname = suite.asms[ai]
    sc = scenarios[sname]
    bundle = bundles[(sc.chain, sc.table, fname)]
    seed = trial_seed(suite.master_seed, si, fi, t)
    try:
        world = perturb(sc.build_environment(), suite.sigma_mu, seed=seed)
        out = plan_and_execute(world, bundle, ASMMode(ASM_BY_NAME[aname]),
                               max_actions=suite.max_actions, seed=seed)
        return TrialRecord(sname, fname, aname, t, out.success,
                           out.actions, out.planning_time,
                           out.execution_time, out.simulations)
    except Exception as e:     # salvage the run; the cell records a failure
        return TrialRecord(sname, fname, aname, t, False, 0, 0.0, 0.0, 0,
                           error=f"{type(e).__name__}: {e}")


def _trial_worker(job) -> TrialRecord:
    return _run_trial_impl(_TRIAL_CTX, job)


def run_suite(suite: SuiteSpec, jobs: int = 1, log=None) -> BenchResult:
    scenarios, maps, bundles = build_artifacts(suite, jobs=jobs, log=log)
    ctx = (scenarios, bundles, suite)
    jobs_list = [(si, fi, ai, t)
                 for si in range(len(suite.scenarios))
                 for fi in range(len(suite.failures))
                 for ai in range(len(suite.asms))
                 for t in range(suite.trials)]
    if log:
        log(f"trials: {len(jobs_list)}")

    if jobs <= 1:
        records = [_run_trial_impl(ctx, job) for job in jobs_list]
    else:
        import multiprocessing as mp
        mp_ctx = mp.get_context("fork")
        chunk = max(1, len(jobs_list) // (8 * jobs))
        with mp_ctx.Pool(jobs, initializer=_init_trial_worker,
                         initargs=(ctx,)) as pool:
            records = pool.map(_trial_worker, jobs_list, chunksize=chunk)

    result = BenchResult(suite=suite, maps=maps, bundles=bundles)
    i = 0
    for sname in suite.scenarios:
        for fname in suite.failures:
            for aname in suite.asms:
                recs = tuple(records[i:i + suite.trials])
                i += suite.trials
                result.cells.append(CellReport(sname, fname, aname, recs))
    for r in records:
        if r.error:
            result.errors.append(f"{r.scenario}/{r.failure}/{r.asm} "
                                 f"trial {r.trial}: {r.error}")
    return result


# --- reports --------------------------------------------------------------

def _suite_header(suite: SuiteSpec) -> list[str]:
    return [
        f"# pokeplan-bench v{BENCH_CSV_VERSION}",
        f"# suite: {suite.name} trials: {suite.trials} "
        f"max_actions: {suite.max_actions} sigma_mu: {suite.sigma_mu} "
        f"master_seed: {suite.master_seed}",
    ]


def write_bench_report(result: BenchResult, path) -> None:
    lines = _suite_header(result.suite)
    lines.append("scenario,failure,asm,trials,successes,success_rate,"
                 "mean_actions,std_actions,mean_planning_time,"
                 "mean_execution_time")
    for c in result.cells:
        lines.append(f"{c.scenario},{c.failure},{c.asm},{c.trials},"
                     f"{c.successes},{c.success_rate:.4f},"
                     f"{c.mean_actions:.4f},{c.std_actions:.4f},"
                     f"{c.mean_planning_time:.4f},{c.mean_execution_time:.4f}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_actions_histogram(result: BenchResult, path) -> None:
    lines = _suite_header(result.suite)
    lines.append("scenario,failure,asm,actions,count")
    for c in result.cells:
        for k, count in enumerate(c.histogram(result.suite.max_actions)):
            lines.append(f"{c.scenario},{c.failure},{c.asm},{k},{count}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_reach_summary(result: BenchResult, path) -> None:
    """Per-failure coverage table with percent change against the
    no-failure row of the same chain and table, when the suite has one."""
    lines = _suite_header(result.suite)
    lines.append("chain,failure,pm_area,reachable_area,"
                 "pm_change_percent,reachable_change_percent")
    datums: dict[tuple, tuple[float, float]] = {}
    for (chain_name, table, fname), rmap in result.maps.items():
        if rmap.failure.is_empty():
            datums[(chain_name, table)] = (pm_area(rmap), reachable_area(rmap))
    for (chain_name, table, fname), rmap in result.maps.items():
        pm = pm_area(rmap)
        full = reachable_area(rmap)
        datum = datums.get((chain_name, table))
        if datum is None:
            dpm = dfull = ""
        else:
            dpm = str(area_change_percent(datum[0], pm)) if datum[0] else ""
            dfull = str(area_change_percent(datum[1], full)) if datum[1] else ""
        lines.append(f"{chain_name},{fname},{pm:.4f},{full:.4f},{dpm},{dfull}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_reports(result: BenchResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "bench_report": out / "bench_report.csv",
        "actions_hist": out / "actions_hist.csv",
        "reach_summary": out / "reach_summary.csv",
    }
    write_bench_report(result, paths["bench_report"])
    write_actions_histogram(result, paths["actions_hist"])
    write_reach_summary(result, paths["reach_summary"])
    return paths
