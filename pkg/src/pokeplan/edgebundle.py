"""Precomputed motion edges: validated constant-velocity sweeps of one
interaction point, bundled with a spatial index over their swept paths.

Each edge starts from an IK solution inside a reachable map cell and pushes
the chosen point along a straight task-space ray.  The rollout integrates
resolved-rate motion and keeps the edge only if every step clears the joint,
torque, and manipulability gates.  Bundles serialize to a small binary
container (or JSON) with the chain, failure, and provenance embedded, so a
bundle file is self-describing.
"""

from __future__ import annotations

import io
import json
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .chain import (ChainModel, FailureSpec, InteractionMode, NO_FAILURE, NPM,
                    PM, chain_from_dict, chain_to_dict, failure_canonical_text,
                    failure_from_dict, failure_to_dict)
from .dynamics import (check_limits, euler_step, inverse_dynamics,
                       resolve_joint_velocity, resolved_acceleration)
from .kinematics import inverse_kinematics, manipulability, point_position
from .reachability import ReachabilityMap, _STATUS_CODE
from .scene import Environment, SceneObject, segment_surface_gap, surface_gap

EDGE_DT_DEFAULT = 0.02
CONTACT_RADIUS = 0.01       # probe disc radius used for sweep intersection
DURATION_RANGE = (0.2, 1.0)
SPEED_RANGE = (0.05, 0.5)
_EDGE_IK_RESTARTS = 8
_EDGE_IK_ITERS = 150
_ATTEMPT_CAP_FACTOR = 200   # hard stop against pathological rejection rates

BUNDLE_MAGIC = b"EBND"
BUNDLE_VERSION = 1

IK_FAILURE = "IkFailure"
COLLISION = "Collision"
WORKSPACE_BOUND = "WorkspaceBound"


class EmptyReachableSet(RuntimeError):
    """The map offers no reachable cell to seed edges from."""


class ProvenanceError(RuntimeError):
    """A bundle was built against a different chain than the caller's."""


@dataclass(frozen=True)
class EdgeControl:
    """Constant task-space velocity command for one edge."""

    direction: tuple[float, float]
    speed: float
    duration: float
    dt: float

    @property
    def u(self) -> np.ndarray:
        return self.speed * np.array(self.direction)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class Edge:
    edge_id: int
    mode: str                       # PM or NPM, inherited from the source cell
    interaction_point: str
    cell: tuple[int, int]           # (ix, iy) of the seeding map cell
    control: EdgeControl
    trace: np.ndarray = field(repr=False)   # (T+1, n) joint states
    sweep: np.ndarray = field(repr=False)   # (T+1, 2) interaction-point path

    @property
    def start_q(self) -> np.ndarray:
        return self.trace[0]

    @property
    def start_xy(self) -> np.ndarray:
        return self.sweep[0]

    @property
    def end_xy(self) -> np.ndarray:
        return self.sweep[-1]


def rollout(chain: ChainModel, failure: FailureSpec, q0: np.ndarray,
            point_name: str, control: EdgeControl,
            env: Environment | None = None):
    """Integrate one edge; returns (trace, sweep, None) or (None, None, reason).

    Every step is gated on joint position/velocity/acceleration, torque, and
    the manipulability floor; with an environment the swept probe must also
    clear static obstacles and stay inside the table.
    """
    u = control.u
    dt = control.dt
    T = control.n_steps
    statics = env.statics() if env is not None else []
    table = env.table if env is not None else None

    q = np.asarray(q0, dtype=float)
    p = point_position(chain, q, point_name)
    if table is not None and not (table[0] <= p[0] <= table[2]
                                  and table[1] <= p[1] <= table[3]):
        return None, None, WORKSPACE_BOUND
    for s in statics:
        if surface_gap(p, s) <= CONTACT_RADIUS:
            return None, None, COLLISION

    trace = [q]
    sweep = [p]
    for _ in range(T):
        qd = resolve_joint_velocity(chain, q, u, point_name, failure)
        qdd = resolved_acceleration(chain, q, qd, np.zeros(2), point_name, failure)
        tau = inverse_dynamics(chain, q, qd, qdd)
        m = manipulability(chain, q, failure, point_name)
        rep = check_limits(chain, q, qd, qdd, tau, m, failure)
        if rep:
            return None, None, rep.which
        q = euler_step(q, qd, dt)
        p_next = point_position(chain, q, point_name)
        if table is not None and not (table[0] <= p_next[0] <= table[2]
                                      and table[1] <= p_next[1] <= table[3]):
            return None, None, WORKSPACE_BOUND
        for s in statics:
            if segment_surface_gap(sweep[-1], p_next, s) <= CONTACT_RADIUS:
                return None, None, COLLISION
        trace.append(q)
        sweep.append(p_next)
    # the terminal state never ran through the gate above
    lo, hi = chain.limits_lo(), chain.limits_hi()
    if np.any(trace[-1] < lo - 1e-9) or np.any(trace[-1] > hi + 1e-9):
        return None, None, check_limits(chain, trace[-1], np.zeros_like(q),
                                        np.zeros_like(q), np.zeros_like(q),
                                        1.0, failure).which
    return np.array(trace), np.array(sweep), None


@dataclass
class EdgeBundle:
    chain: ChainModel
    failure: FailureSpec
    edges: list[Edge]
    map_hash: str
    seed: int
    dt: float
    index_cell: float
    index_origin: tuple[float, float]
    stats: dict
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            self._build_index()

    def _index_cells_of_bbox(self, x0, y0, x1, y1):
        ox, oy = self.index_origin
        c = self.index_cell
        ix0 = math.floor((x0 - ox) / c)
        ix1 = math.floor((x1 - ox) / c)
        iy0 = math.floor((y0 - oy) / c)
        iy1 = math.floor((y1 - oy) / c)
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                yield ix, iy

    def _build_index(self):
        # superset insert: every cell the inflated segment bbox touches
        self._index = {}
        r = CONTACT_RADIUS
        for e in self.edges:
            seen = set()
            for k in range(len(e.sweep) - 1):
                a = e.sweep[k]
                b = e.sweep[k + 1]
                x0 = min(a[0], b[0]) - r
                x1 = max(a[0], b[0]) + r
                y0 = min(a[1], b[1]) - r
                y1 = max(a[1], b[1]) + r
                for key in self._index_cells_of_bbox(x0, y0, x1, y1):
                    if key not in seen:
                        seen.add(key)
                        self._index.setdefault(key, []).append(e.edge_id)

    def edge(self, edge_id: int) -> Edge:
        return self.edges[edge_id]

    def content_hash(self) -> str:
        import hashlib
        return hashlib.sha256(serialize_bundle(self)).hexdigest()


def edge_touches(edge: Edge, obj: SceneObject,
                 radius: float = CONTACT_RADIUS) -> bool:
    """True when the swept probe disc reaches the object's footprint."""
    sweep = edge.sweep
    for k in range(len(sweep) - 1):
        if segment_surface_gap(sweep[k], sweep[k + 1], obj) <= radius:
            return True
    return False


def edges_intersecting(bundle: EdgeBundle, obj: SceneObject) -> list[int]:
    """Sorted edge ids whose sweep can touch the object where it now stands.

    The grid index over-approximates; candidates are confirmed with the exact
    segment test, so the result equals a brute-force scan.
    """
    r = obj.bounding_radius() + CONTACT_RADIUS
    cand: set[int] = set()
    for key in bundle._index_cells_of_bbox(obj.x - r, obj.y - r,
                                           obj.x + r, obj.y + r):
        cand.update(bundle._index.get(key, ()))
    return sorted(i for i in cand if edge_touches(bundle.edges[i], obj))


def _run_attempt(chain: ChainModel, failure: FailureSpec,
                 rmap: ReachabilityMap, cells, seed: int, dt: float,
                 env: Environment | None, attempt: int):
    """One generation attempt, a pure function of (inputs, attempt index).

    Returns (tag, payload): ("edge", parts), ("ik", None), or a rejection
    reason string with None.
    """
    grid = rmap.grid
    rng = np.random.default_rng([seed, 2, attempt])
    ix, iy = cells[int(rng.integers(len(cells)))]
    if rmap.status[iy, ix] == _STATUS_CODE[PM]:
        mode = InteractionMode(PM)
    else:
        mode = InteractionMode(NPM, interaction_point=rmap.cell_point_name(ix, iy))
    target = np.array([grid.x_min + (ix + rng.random()) * grid.cell,
                       grid.y_min + (iy + rng.random()) * grid.cell])
    duration = DURATION_RANGE[0] + rng.random() * (DURATION_RANGE[1] - DURATION_RANGE[0])
    steps = max(1, int(round(duration / dt)))
    ang = 2.0 * math.pi * rng.random()
    speed = SPEED_RANGE[0] + rng.random() * (SPEED_RANGE[1] - SPEED_RANGE[0])
    control = EdgeControl(direction=(math.cos(ang), math.sin(ang)),
                          speed=speed, duration=steps * dt, dt=dt)
    q0 = inverse_kinematics(chain, failure, target, mode, seed=rng,
                            max_restarts=_EDGE_IK_RESTARTS,
                            max_iters=_EDGE_IK_ITERS)
    if q0 is None:
        return "ik", None
    start = point_position(chain, q0, mode.interaction_point)
    cx, cy = grid.cell_of(start)
    if not (0 <= cx < grid.nx and 0 <= cy < grid.ny) or rmap.status[cy, cx] == 0:
        # solver tolerance landed the start outside the reachable set
        return "ik", None
    trace, sweep, reason = rollout(chain, failure, q0,
                                   mode.interaction_point, control, env)
    if reason is not None:
        return reason, None
    return "edge", (mode.kind, mode.interaction_point, (ix, iy), control,
                    trace, sweep)


_WORKER_ARGS = None


def _init_edge_worker(chain, failure, rmap, cells, seed, dt, env):
    global _WORKER_ARGS
    _WORKER_ARGS = (chain, failure, rmap, cells, seed, dt, env)


def _edge_worker(attempt: int):
    return _run_attempt(*_WORKER_ARGS, attempt)


def generate_edges(chain: ChainModel, failure: FailureSpec,
                   rmap: ReachabilityMap, n: int, seed: int,
                   env: Environment | None = None,
                   dt: float = EDGE_DT_DEFAULT, jobs: int = 1) -> EdgeBundle:
    """Sample n validated edges from the map's reachable cells.

    Each attempt gets its own derived rng and is evaluated independently,
    so the resulting bundle is identical for any job count: successes are
    committed in attempt order until n edges exist.  PM cells yield PM
    edges at the end effector; NPM cells yield edges at the cell's
    recorded interaction point.
    """
    failure.validate(chain.n_joints)
    cells = rmap.reachable_cells()
    if not cells:
        raise EmptyReachableSet("reachability map has no PM or NPM cells")
    grid = rmap.grid
    edges: list[Edge] = []
    rejections: dict[str, int] = {}
    ik_failures = 0
    attempt = 0
    cap = _ATTEMPT_CAP_FACTOR * n

    def commit(result) -> None:
        nonlocal ik_failures
        tag, payload = result
        if tag == "edge":
            if len(edges) < n:
                kind, point, cell, control, trace, sweep = payload
                edges.append(Edge(edge_id=len(edges), mode=kind,
                                  interaction_point=point, cell=cell,
                                  control=control, trace=trace, sweep=sweep))
        elif tag == "ik":
            ik_failures += 1
        else:
            rejections[tag] = rejections.get(tag, 0) + 1

    if jobs <= 1:
        while len(edges) < n:
            if attempt >= cap:
                raise RuntimeError(f"edge generation stalled: {len(edges)}/{n} "
                                   f"after {attempt} attempts")
            commit(_run_attempt(chain, failure, rmap, cells, seed, dt, env,
                                attempt))
            attempt += 1
    else:
        import multiprocessing as mp
        ctx = mp.get_context("fork")
        wave = max(4 * jobs, 32)
        with ctx.Pool(jobs, initializer=_init_edge_worker,
                      initargs=(chain, failure, rmap, cells, seed, dt, env)) as pool:
            while len(edges) < n:
                if attempt >= cap:
                    raise RuntimeError(f"edge generation stalled: {len(edges)}/"
                                       f"{n} after {attempt} attempts")
                batch = list(range(attempt, min(attempt + wave, cap)))
                for result in pool.map(_edge_worker, batch):
                    # commit in attempt order; extra successes past n are
                    # dropped identically at every job count
                    if len(edges) < n:
                        commit(result)
                        attempt += 1
    stats = {"attempts": attempt, "ik_failures": ik_failures,
             "rejections": dict(sorted(rejections.items()))}
    return EdgeBundle(chain=chain, failure=failure, edges=edges,
                      map_hash=rmap.content_hash(), seed=seed, dt=dt,
                      index_cell=grid.cell, index_origin=(grid.x_min, grid.y_min),
                      stats=stats)


# --- serialization --------------------------------------------------------

def _header_dict(bundle: EdgeBundle) -> dict:
    return {
        "chain": chain_to_dict(bundle.chain),
        "failure": failure_to_dict(bundle.failure),
        "map_hash": bundle.map_hash,
        "seed": bundle.seed,
        "dt": bundle.dt,
        "index_cell": bundle.index_cell,
        "index_origin": list(bundle.index_origin),
        "stats": bundle.stats,
        "edges": [{
            "id": e.edge_id,
            "mode": e.mode,
            "point": e.interaction_point,
            "cell": list(e.cell),
            "direction": list(e.control.direction),
            "speed": e.control.speed,
            "duration": e.control.duration,
            "steps": e.control.n_steps,
        } for e in bundle.edges],
    }


def serialize_bundle(bundle: EdgeBundle) -> bytes:
    header = json.dumps(_header_dict(bundle), separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(BUNDLE_MAGIC)
    buf.write(struct.pack("<H", BUNDLE_VERSION))
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    for e in bundle.edges:
        buf.write(np.ascontiguousarray(e.trace, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(e.sweep, dtype="<f8").tobytes())
    return buf.getvalue()


def _bundle_from_parts(header: dict, traces: list[np.ndarray],
                       sweeps: list[np.ndarray]) -> EdgeBundle:
    chain = chain_from_dict(header["chain"])
    failure = failure_from_dict(header["failure"])
    edges = []
    for meta, trace, sweep in zip(header["edges"], traces, sweeps):
        control = EdgeControl(direction=tuple(meta["direction"]),
                              speed=meta["speed"], duration=meta["duration"],
                              dt=header["dt"])
        if control.n_steps != meta["steps"]:
            raise ValueError(f"edge {meta['id']}: inconsistent step count")
        if trace.shape != (meta["steps"] + 1, chain.n_joints):
            raise ValueError(f"edge {meta['id']}: bad trace shape {trace.shape}")
        if sweep.shape != (meta["steps"] + 1, 2):
            raise ValueError(f"edge {meta['id']}: bad sweep shape {sweep.shape}")
        if not (np.isfinite(trace).all() and np.isfinite(sweep).all()):
            raise ValueError(f"edge {meta['id']}: non-finite state")
        if meta["mode"] not in (PM, NPM):
            raise ValueError(f"edge {meta['id']}: unknown mode {meta['mode']!r}")
        chain.point(meta["point"])  # raises for unknown names
        edges.append(Edge(edge_id=meta["id"], mode=meta["mode"],
                          interaction_point=meta["point"],
                          cell=tuple(meta["cell"]), control=control,
                          trace=trace, sweep=sweep))
    if [e.edge_id for e in edges] != list(range(len(edges))):
        raise ValueError("edge ids must be dense and ordered")
    return EdgeBundle(chain=chain, failure=failure, edges=edges,
                      map_hash=header["map_hash"], seed=header["seed"],
                      dt=header["dt"], index_cell=header["index_cell"],
                      index_origin=tuple(header["index_origin"]),
                      stats=header["stats"])


def deserialize_bundle(data: bytes) -> EdgeBundle:
    if data[:4] != BUNDLE_MAGIC:
        raise ValueError("not an edge bundle (bad magic)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {version}")
    (hlen,) = struct.unpack_from("<I", data, 6)
    header = json.loads(data[10:10 + hlen].decode())
    off = 10 + hlen
    n_joints = len(header["chain"]["link_lengths"])
    traces, sweeps = [], []
    for meta in header["edges"]:
        rows = meta["steps"] + 1
        tb = rows * n_joints * 8
        traces.append(np.frombuffer(data, dtype="<f8", count=rows * n_joints,
                                    offset=off).reshape(rows, n_joints).copy())
        off += tb
        sweeps.append(np.frombuffer(data, dtype="<f8", count=rows * 2,
                                    offset=off).reshape(rows, 2).copy())
        off += rows * 2 * 8
    if off != len(data):
        raise ValueError("trailing bytes after edge payload")
    return _bundle_from_parts(header, traces, sweeps)


def save_bundle(bundle: EdgeBundle, path) -> None:
    with open(path, "wb") as f:
        f.write(serialize_bundle(bundle))


def load_bundle(path, chain: ChainModel | None = None,
                failure: FailureSpec | None = None) -> EdgeBundle:
    """Load and structurally validate a bundle.

    A chain mismatch against the caller's expectation is fatal; a failure
    mismatch only warns, since replaying edges under a different failure is
    a legitimate (if lossy) experiment.
    """
    with open(path, "rb") as f:
        data = f.read()
    if data[:1] in (b"{", b" ") or path_is_json(path):
        bundle = bundle_from_json(data.decode())
    else:
        bundle = deserialize_bundle(data)
    if chain is not None and chain.content_hash() != bundle.chain.content_hash():
        raise ProvenanceError("bundle was generated for a different chain")
    if failure is not None and failure_canonical_text(failure) != \
            failure_canonical_text(bundle.failure):
        warnings.warn("bundle failure condition differs from the requested one")
    return bundle


def path_is_json(path) -> bool:
    return str(path).endswith(".json")


def bundle_to_json(bundle: EdgeBundle) -> str:
    doc = _header_dict(bundle)
    doc["arrays"] = [{"trace": e.trace.tolist(), "sweep": e.sweep.tolist()}
                     for e in bundle.edges]
    return json.dumps(doc, separators=(",", ":"))


def bundle_from_json(text: str) -> EdgeBundle:
    doc = json.loads(text)
    traces = [np.array(a["trace"], dtype=float) for a in doc["arrays"]]
    sweeps = [np.array(a["sweep"], dtype=float) for a in doc["arrays"]]
    return _bundle_from_parts(doc, traces, sweeps)


def save_bundle_json(bundle: EdgeBundle, path) -> None:
    with open(path, "w") as f:
        f.write(bundle_to_json(bundle))


# --- revalidation ---------------------------------------------------------

def revalidate_edge(bundle: EdgeBundle, edge: Edge,
                    env: Environment | None = None) -> bool:
    """Recompute the rollout from the stored start state and require the
    stored trace and sweep bit for bit; all gates must still pass."""
    trace, sweep, reason = rollout(bundle.chain, bundle.failure, edge.start_q,
                                   edge.interaction_point, edge.control, env)
    if reason is not None:
        return False
    return (trace.shape == edge.trace.shape
            and np.array_equal(trace, edge.trace)
            and np.array_equal(sweep, edge.sweep))


def revalidate(bundle: EdgeBundle, env: Environment | None = None) -> tuple[int, list[int]]:
    """(count passing, ids failing) over the whole bundle."""
    bad = [e.edge_id for e in bundle.edges if not revalidate_edge(bundle, e, env)]
    return len(bundle.edges) - len(bad), bad
