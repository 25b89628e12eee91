"""One-step lookahead planning over a precomputed edge bundle.

Each iteration the planner observes the (possibly perturbed) real world,
rebuilds a clean simulation clone from the observed poses, picks an edge by
one of three selection mechanisms, predicts its outcome in simulation, and
executes it for real.  Random picks any intersecting edge, Lazy takes the
first simulated candidate that makes progress, Greedy scores a subset and
takes the best.  Times are modeled, not measured, so reports stay identical
across machines and job counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .edgebundle import EdgeBundle, edges_intersecting
from .npm_sim import execute_edge, sweep_blocked, total_obstacle_displacement
from .scene import Environment, goal_reached, target_goal_distance

RANDOM = "Random"
LAZY = "Lazy"
GREEDY = "Greedy"

GREEDY_SUBSET_DEFAULT = 20
PROGRESS_MIN = 1e-3          # m of simulated goal-distance decrease that
                             # counts as progress for the Lazy rule
MAX_ACTIONS_DEFAULT = 25
ACTION_OVERHEAD_S = 2.0      # modeled approach/retract cost per action
SIM_UNIT_COST_S = 0.05       # modeled cost of one candidate rollout


@dataclass(frozen=True)
class ASMMode:
    """Action selection mechanism and its knobs."""

    mode: str
    greedy_subset_size: int = GREEDY_SUBSET_DEFAULT

    def __post_init__(self):
        if self.mode not in (RANDOM, LAZY, GREEDY):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.greedy_subset_size < 1:
            raise ValueError("greedy subset size must be >= 1")


@dataclass(frozen=True)
class Selection:
    """Outcome of one selection; edge_id None means no candidate existed."""

    edge_id: int | None
    simulations: int = 0


@dataclass(frozen=True)
class ActionRecord:
    edge_id: int
    predicted_distance: float    # simulated post-action target-goal distance
    realized_distance: float
    realized_displacement: float


@dataclass
class TrialResult:
    success: bool
    actions: int
    planning_time: float
    execution_time: float
    log: list[ActionRecord] = field(default_factory=list)
    simulations: int = 0
    env_final: Environment | None = None


def candidate_edges(bundle: EdgeBundle, env: Environment) -> list[int]:
    """Sorted ids of edges that reach the target where it now stands and
    whose sweep is not walled off by this scenario's static obstacles."""
    target = env.target()
    return [i for i in edges_intersecting(bundle, target)
            if not sweep_blocked(bundle.edges[i], env)]


def _simulate(bundle: EdgeBundle, sim: Environment, edge_id: int):
    out = execute_edge(sim, bundle.chain, bundle.failure,
                       bundle.edges[edge_id])
    return out


def select_random(bundle: EdgeBundle, env: Environment, seed) -> Selection:
    """Uniform draw over the candidate set."""
    ids = candidate_edges(bundle, env)
    if not ids:
        return Selection(None)
    rng = np.random.default_rng(seed)
    return Selection(ids[int(rng.integers(len(ids)))])


def select_lazy(bundle: EdgeBundle, env: Environment, sim: Environment,
                seed, delta_prog: float = PROGRESS_MIN) -> Selection:
    """First candidate, in a seeded random order, whose simulated outcome
    moves the target at least delta_prog closer to the goal; if none
    qualifies, the candidate with the best simulated distance."""
    ids = candidate_edges(bundle, env)
    if not ids:
        return Selection(None)
    rng = np.random.default_rng(seed)
    d0 = target_goal_distance(sim)
    best_id = None
    best_d = np.inf
    sims = 0
    for k in rng.permutation(len(ids)):
        eid = ids[int(k)]
        out = _simulate(bundle, sim, eid)
        sims += 1
        d = target_goal_distance(out.env_after)
        if d0 - d >= delta_prog:
            return Selection(eid, sims)
        if d < best_d:
            best_d = d
            best_id = eid
    return Selection(best_id, sims)


def select_greedy(bundle: EdgeBundle, env: Environment, sim: Environment,
                  s: int = GREEDY_SUBSET_DEFAULT, seed=0,
                  penalty: float = 0.0) -> Selection:
    """Best-scoring edge of a uniformly sampled candidate subset.

    score = -(post-action target distance) - penalty * (sum of obstacle
    displacements); candidates are evaluated in edge-id order so a parallel
    evaluation reduces to the same argmax, and ties go to the lowest id.
    """
    ids = candidate_edges(bundle, env)
    if not ids:
        return Selection(None)
    rng = np.random.default_rng(seed)
    take = min(s, len(ids))
    subset = sorted(ids[int(k)] for k in rng.permutation(len(ids))[:take])
    best_id = None
    best_score = -np.inf
    for eid in subset:
        out = _simulate(bundle, sim, eid)
        score = -target_goal_distance(out.env_after)
        if penalty != 0.0:
            score -= penalty * total_obstacle_displacement(sim, out.env_after)
        if score > best_score:
            best_score = score
            best_id = eid
    return Selection(best_id, len(subset))


def plan_and_execute(env_real: Environment, bundle: EdgeBundle, mode: ASMMode,
                     max_actions: int = MAX_ACTIONS_DEFAULT,
                     seed: int = 0) -> TrialResult:
    """Run the selection loop against the real world until the goal, the
    action budget, or two consecutive empty candidate sets.

    The simulation world is rebuilt from the observed real poses before
    every selection, and the chosen edge is also rolled out there so each
    log row carries the prediction the real execution can be held against.
    """
    env = env_real
    log: list[ActionRecord] = []
    sims_total = 0
    exec_time = 0.0
    actions = 0
    no_candidate_streak = 0
    iteration = 0
    success = goal_reached(env)
    while not success and actions < max_actions:
        sim = env.nominal_clone()
        sel_seed = [seed, 4, iteration]
        iteration += 1
        if mode.mode == RANDOM:
            sel = select_random(bundle, env, sel_seed)
        elif mode.mode == LAZY:
            sel = select_lazy(bundle, env, sim, sel_seed)
        else:
            sel = select_greedy(bundle, env, sim, mode.greedy_subset_size,
                                sel_seed)
        sims_total += sel.simulations
        if sel.edge_id is None:
            no_candidate_streak += 1
            if no_candidate_streak >= 2:
                break
            continue
        no_candidate_streak = 0
        predicted = _simulate(bundle, sim, sel.edge_id)
        sims_total += 1
        out = execute_edge(env, bundle.chain, bundle.failure,
                           bundle.edges[sel.edge_id])
        env = out.env_after
        actions += 1
        exec_time += bundle.edges[sel.edge_id].control.duration + ACTION_OVERHEAD_S
        log.append(ActionRecord(
            edge_id=sel.edge_id,
            predicted_distance=target_goal_distance(predicted.env_after),
            realized_distance=target_goal_distance(env),
            realized_displacement=float(np.linalg.norm(out.target_displacement)),
        ))
        success = goal_reached(env)
    return TrialResult(success=success, actions=actions,
                       planning_time=SIM_UNIT_COST_S * sims_total,
                       execution_time=exec_time, log=log,
                       simulations=sims_total, env_final=env)
