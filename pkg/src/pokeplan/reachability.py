"""Grid classification of what the impaired arm can still reach, and how.

Every cell of a workspace grid is probed with an escalating schedule of IK
attempts: grasp-mode at the cell center first, then grasp-mode at jittered
targets, then contact-mode cycling through interaction points tip-to-hub.
The first success freezes the cell's label.  Cell evaluations are pure
functions of (master seed, cell index), so any parallel schedule yields the
same map as a serial sweep.

A forward-sampled candidate table prunes hopeless attempts: a seed-derived
batch of random configurations marks which cells lie near any point's image
(and, for grasp mode, near an in-band heading), and attempts elsewhere are
counted as scheduled failures without running the solver.  The same table
warm-starts the first solver restart.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .chain import (NPM, PM, ChainModel, FailureSpec, InteractionMode,
                    chain_from_dict, chain_to_dict, failure_canonical_text,
                    failure_from_dict, failure_to_dict)
from .kinematics import (IK_TOL_ORI, heading_band_error, inverse_kinematics,
                         point_positions_batch)

UNREACHABLE = "Unreachable"
STATUS_NAMES = (UNREACHABLE, NPM, PM)
_STATUS_CODE = {UNREACHABLE: 0, NPM: 1, PM: 2}
PGM_LEVELS = {UNREACHABLE: 0, NPM: 128, PM: 255}

DEFAULT_CELL = 0.02
DEFAULT_ATTEMPTS = 10
MAP_CSV_VERSION = 1

_N_FORWARD_SAMPLES = 20000
_DILATE = 2                 # Chebyshev radius of candidate dilation, in cells
_MAP_IK_RESTARTS = 6        # per-attempt solver budget; the schedule retries anyway
_MAP_IK_ITERS = 120


@dataclass(frozen=True)
class WorkspaceGrid:
    """Axis-aligned cell grid over a rectangular patch of the table."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    cell: float = DEFAULT_CELL

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("degenerate grid bounds")
        if self.cell <= 0:
            raise ValueError("cell size must be positive")

    @property
    def nx(self) -> int:
        return int(math.ceil((self.x_max - self.x_min) / self.cell - 1e-9))

    @property
    def ny(self) -> int:
        return int(math.ceil((self.y_max - self.y_min) / self.cell - 1e-9))

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def center(self, ix: int, iy: int) -> np.ndarray:
        return np.array([self.x_min + (ix + 0.5) * self.cell,
                         self.y_min + (iy + 0.5) * self.cell])

    def cell_of(self, xy) -> tuple[int, int]:
        ix = int(math.floor((xy[0] - self.x_min) / self.cell))
        iy = int(math.floor((xy[1] - self.y_min) / self.cell))
        return ix, iy

    def contains(self, xy) -> bool:
        return (self.x_min <= xy[0] < self.x_max) and (self.y_min <= xy[1] < self.y_max)


@dataclass
class ReachabilityMap:
    """Per-cell status grid plus the generation provenance.

    status[iy, ix] holds 0/1/2 for Unreachable/NPM/PM; point_idx indexes
    point_names (tip-to-hub order) for NPM cells and is -1 elsewhere;
    attempts[iy, ix] is how many schedule attempts the cell consumed.
    """

    grid: WorkspaceGrid
    chain: ChainModel
    failure: FailureSpec
    seed: int
    k: int
    eps: float
    point_names: tuple[str, ...]
    status: np.ndarray = field(repr=False)
    point_idx: np.ndarray = field(repr=False)
    attempts: np.ndarray = field(repr=False)

    def status_name(self, ix: int, iy: int) -> str:
        return STATUS_NAMES[self.status[iy, ix]]

    def cell_point_name(self, ix: int, iy: int) -> str | None:
        idx = self.point_idx[iy, ix]
        return self.point_names[idx] if idx >= 0 else None

    def reachable_cells(self) -> list[tuple[int, int]]:
        """Row-major (ix, iy) list of non-Unreachable cells."""
        iy, ix = np.nonzero(self.status > 0)
        return list(zip(ix.tolist(), iy.tolist()))

    def content_hash(self) -> str:
        """Stable over export/import (attempts excluded: CSV does not carry them)."""
        h = hashlib.sha256()
        h.update(json.dumps([self.grid.x_min, self.grid.y_min, self.grid.x_max,
                             self.grid.y_max, self.grid.cell, self.k, self.eps,
                             self.seed]).encode())
        h.update(self.chain.content_hash().encode())
        h.update(failure_canonical_text(self.failure).encode())
        h.update(",".join(self.point_names).encode())
        h.update(self.status.tobytes())
        h.update(self.point_idx.tobytes())
        return h.hexdigest()


def area(rmap: ReachabilityMap, statuses=(PM, NPM)) -> float:
    """Covered area in m^2: cell count times cell^2."""
    codes = [_STATUS_CODE[s] for s in statuses]
    count = int(np.isin(rmap.status, codes).sum())
    return count * rmap.grid.cell ** 2


def pm_area(rmap: ReachabilityMap) -> float:
    return area(rmap, statuses=(PM,))


def reachable_area(rmap: ReachabilityMap) -> float:
    return area(rmap, statuses=(PM, NPM))


def area_change_percent(datum: float, value: float) -> int:
    """Signed percent change vs a datum area, rounded to the nearest integer."""
    if datum == 0:
        raise ValueError("datum area is zero; percent change undefined")
    pct = 100.0 * (value - datum) / datum
    return int(math.floor(pct + 0.5)) if pct >= 0 else int(math.ceil(pct - 0.5))


# --- generation -----------------------------------------------------------

class _CandidateTables:
    """Forward-sample occupancy per interaction point, with warm starts.

    candidate[name] is a dilated boolean grid of cells worth solving for;
    rep[name] maps a cell to a sample index usable as a warm start (-1 when
    empty; lookups search outward up to the dilation radius).  pm_* are the
    heading-filtered variants used by grasp-mode attempts.
    """

    def __init__(self, chain: ChainModel, failure: FailureSpec,
                 grid: WorkspaceGrid, seed: int, window):
        rng = np.random.default_rng([seed, 0x5A11])
        lo = chain.limits_lo()
        hi = chain.limits_hi()
        n = chain.n_joints
        Q = lo + rng.random((_N_FORWARD_SAMPLES, n)) * (hi - lo)
        free = failure.mask(n)
        for j, a in failure.locked:
            Q[:, j] = a
        self.samples = Q
        self.candidate: dict[str, np.ndarray] = {}
        self.rep: dict[str, np.ndarray] = {}
        base = chain.base_pose.xy
        for name in chain.point_names_distal_first():
            pts = point_positions_batch(chain, Q, name)
            occ, rep = self._scatter(grid, pts)
            self.candidate[name] = self._dilate(occ)
            self.rep[name] = rep
            if name == "end_effector":
                # grasp candidacy additionally needs a heading near the band
                # about the cell's own hub ray; checked per neighborhood cell
                # so no radius-dependent slack is needed
                link = chain.point(name).link
                heading = chain.base_pose.theta + Q[:, :link + 1].sum(axis=1)
                self.pm_candidate, self.pm_rep = self._heading_scatter(
                    grid, pts, heading, base, window)

    _PM_SLACK = 0.06  # covers in-cell target jitter of the hub ray

    def _heading_scatter(self, grid: WorkspaceGrid, pts: np.ndarray,
                         heading: np.ndarray, base: np.ndarray, window):
        lo, hi = window
        cand = np.zeros((grid.ny, grid.nx), dtype=bool)
        rep = np.full((grid.ny, grid.nx), -1, dtype=np.int64)
        ix0 = np.floor((pts[:, 0] - grid.x_min) / grid.cell).astype(np.int64)
        iy0 = np.floor((pts[:, 1] - grid.y_min) / grid.cell).astype(np.int64)
        ids = np.arange(len(pts))
        tol = self._PM_SLACK + IK_TOL_ORI
        for dy in range(-_DILATE, _DILATE + 1):
            for dx in range(-_DILATE, _DILATE + 1):
                ix = ix0 + dx
                iy = iy0 + dy
                ok = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
                cx = grid.x_min + (ix + 0.5) * grid.cell
                cy = grid.y_min + (iy + 0.5) * grid.cell
                ray = np.arctan2(cy - base[1], cx - base[0])
                rel = np.arctan2(np.sin(heading - ray), np.cos(heading - ray))
                err = rel - np.clip(rel, lo, hi)
                # circular wrap: distance through the far side
                err2 = rel - 2.0 * np.pi * np.sign(rel) - np.clip(
                    rel - 2.0 * np.pi * np.sign(rel), lo, hi)
                near = np.minimum(np.abs(err), np.abs(err2)) <= tol
                ok &= near
                cand[iy[ok], ix[ok]] = True
                if dx == 0 and dy == 0:
                    rep[iy[ok], ix[ok]] = ids[ok]
        return cand, rep

    @staticmethod
    def _scatter(grid: WorkspaceGrid, pts: np.ndarray,
                 sample_ids: np.ndarray | None = None):
        occ = np.zeros((grid.ny, grid.nx), dtype=bool)
        rep = np.full((grid.ny, grid.nx), -1, dtype=np.int64)
        if len(pts) == 0:
            return occ, rep
        ix = np.floor((pts[:, 0] - grid.x_min) / grid.cell).astype(np.int64)
        iy = np.floor((pts[:, 1] - grid.y_min) / grid.cell).astype(np.int64)
        ok = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
        ids = sample_ids if sample_ids is not None else np.arange(len(pts))
        occ[iy[ok], ix[ok]] = True
        rep[iy[ok], ix[ok]] = ids[ok]
        return occ, rep

    @staticmethod
    def _dilate(occ: np.ndarray) -> np.ndarray:
        out = np.zeros_like(occ)
        ny, nx = occ.shape
        for dy in range(-_DILATE, _DILATE + 1):
            for dx in range(-_DILATE, _DILATE + 1):
                src = occ[max(0, -dy):ny - max(0, dy), max(0, -dx):nx - max(0, dx)]
                out[max(0, dy):ny - max(0, -dy), max(0, dx):nx - max(0, -dx)] |= src
        return out

    def warm_start(self, table: np.ndarray, ix: int, iy: int) -> np.ndarray | None:
        ny, nx = table.shape
        for radius in range(_DILATE + 1):
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    if max(abs(dx), abs(dy)) != radius:
                        continue
                    x, y = ix + dx, iy + dy
                    if 0 <= x < nx and 0 <= y < ny and table[y, x] >= 0:
                        return self.samples[table[y, x]]
        return None


def _eps_offset(rng: np.random.Generator, eps: float) -> np.ndarray:
    r = eps * math.sqrt(rng.random())
    ang = 2.0 * math.pi * rng.random()
    return np.array([r * math.cos(ang), r * math.sin(ang)])


def evaluate_cell(chain: ChainModel, failure: FailureSpec, grid: WorkspaceGrid,
                  k: int, eps: float, seed: int, ix: int, iy: int,
                  tables: _CandidateTables, cycle: list[str],
                  window) -> tuple[int, int, int]:
    """Classify one cell; returns (status code, point index or -1, attempts).

    Pure function of its arguments; the cell rng derives from
    (seed, cell linear index) alone.
    """
    rng = np.random.default_rng([seed, 1, iy * grid.nx + ix])
    center = grid.center(ix, iy)
    half = k // 2
    for attempt in range(1, k + 1):
        target = center if attempt == 1 else center + _eps_offset(rng, eps)
        if attempt <= half:
            mode = InteractionMode(PM, orientation_window=window)
            candidate = tables.pm_candidate[iy, ix]
            warm = tables.warm_start(tables.pm_rep, ix, iy) if candidate else None
        else:
            name = cycle[(attempt - half - 1) % len(cycle)]
            mode = InteractionMode(NPM, interaction_point=name)
            candidate = tables.candidate[name][iy, ix]
            warm = tables.warm_start(tables.rep[name], ix, iy) if candidate else None
        if not candidate:
            continue
        q = inverse_kinematics(chain, failure, target, mode, seed=rng,
                               start=warm, max_restarts=_MAP_IK_RESTARTS,
                               max_iters=_MAP_IK_ITERS)
        if q is None:
            continue
        if mode.kind == PM:
            return _STATUS_CODE[PM], -1, attempt
        return _STATUS_CODE[NPM], cycle.index(mode.interaction_point), attempt
    return _STATUS_CODE[UNREACHABLE], -1, k


_ROW_WORKER_ARGS = None


def _init_row_worker(chain, failure, grid, k, eps, seed, window):
    global _ROW_WORKER_ARGS
    tables = _CandidateTables(chain, failure, grid, seed, window)
    cycle = chain.point_names_distal_first()
    _ROW_WORKER_ARGS = (chain, failure, grid, k, eps, seed, tables, cycle,
                        window)


def _eval_row(iy: int):
    chain, failure, grid, k, eps, seed, tables, cycle, window = _ROW_WORKER_ARGS
    return [evaluate_cell(chain, failure, grid, k, eps, seed, ix, iy,
                          tables, cycle, window) for ix in range(grid.nx)]


def generate_reachability_map(chain: ChainModel, failure: FailureSpec,
                              grid: WorkspaceGrid, k: int = DEFAULT_ATTEMPTS,
                              eps: float | None = None,
                              seed: int = 0, jobs: int = 1) -> ReachabilityMap:
    """Classify every grid cell as Unreachable / NPM / PM.

    k is the total attempt budget per cell (>= 2); eps is the target jitter
    radius, at most half a cell so jittered targets stay inside their cell.
    Cells are evaluated independently with derived seeds, so the map is
    identical for any job count.
    """
    if k < 2:
        raise ValueError("need at least 2 attempts per cell")
    if eps is None:
        eps = grid.cell / 2.0
    if not 0.0 < eps <= grid.cell / 2.0 + 1e-12:
        raise ValueError("eps must be in (0, cell/2]")
    failure.validate(chain.n_joints)
    window = InteractionMode(PM).orientation_window
    cycle = chain.point_names_distal_first()
    status = np.zeros((grid.ny, grid.nx), dtype=np.int8)
    point_idx = np.full((grid.ny, grid.nx), -1, dtype=np.int8)
    attempts = np.zeros((grid.ny, grid.nx), dtype=np.int16)
    if jobs <= 1:
        tables = _CandidateTables(chain, failure, grid, seed, window)
        rows = ((iy, [evaluate_cell(chain, failure, grid, k, eps, seed, ix, iy,
                                    tables, cycle, window)
                      for ix in range(grid.nx)])
                for iy in range(grid.ny))
    else:
        import multiprocessing as mp
        ctx = mp.get_context("fork")
        with ctx.Pool(jobs, initializer=_init_row_worker,
                      initargs=(chain, failure, grid, k, eps, seed, window)) as pool:
            rows = list(enumerate(pool.map(_eval_row, range(grid.ny))))
    for iy, row in rows:
        for ix, (s, p, a) in enumerate(row):
            status[iy, ix] = s
            point_idx[iy, ix] = p
            attempts[iy, ix] = a
    return ReachabilityMap(grid=grid, chain=chain, failure=failure, seed=seed,
                           k=k, eps=eps, point_names=tuple(cycle),
                           status=status, point_idx=point_idx, attempts=attempts)


def candidate_tables(chain: ChainModel, failure: FailureSpec,
                     grid: WorkspaceGrid, seed: int) -> _CandidateTables:
    """Build the prefilter tables exactly as generate_reachability_map does."""
    return _CandidateTables(chain, failure, grid, seed,
                            InteractionMode(PM).orientation_window)


# --- smoothing ------------------------------------------------------------

def smooth(rmap: ReachabilityMap) -> ReachabilityMap:
    """One 3x3 majority pass: an Unreachable cell with >= 5 reachable
    neighbors adopts the majority neighbor status (grasp beats contact on
    ties); reachable cells are never touched."""
    st = rmap.status
    ny, nx = st.shape
    new_status = st.copy()
    new_point = rmap.point_idx.copy()
    new_attempts = rmap.attempts.copy()
    for iy in range(ny):
        for ix in range(nx):
            if st[iy, ix] != _STATUS_CODE[UNREACHABLE]:
                continue
            pm = npm = 0
            npm_points: list[int] = []
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dx == 0 and dy == 0:
                        continue
                    x, y = ix + dx, iy + dy
                    if not (0 <= x < nx and 0 <= y < ny):
                        continue
                    if st[y, x] == _STATUS_CODE[PM]:
                        pm += 1
                    elif st[y, x] == _STATUS_CODE[NPM]:
                        npm += 1
                        npm_points.append(int(rmap.point_idx[y, x]))
            if pm + npm < 5:
                continue
            if pm >= npm:
                new_status[iy, ix] = _STATUS_CODE[PM]
            else:
                new_status[iy, ix] = _STATUS_CODE[NPM]
                counts = np.bincount([p for p in npm_points if p >= 0])
                new_point[iy, ix] = int(np.argmax(counts))
            new_attempts[iy, ix] = rmap.k
    return ReachabilityMap(grid=rmap.grid, chain=rmap.chain, failure=rmap.failure,
                           seed=rmap.seed, k=rmap.k, eps=rmap.eps,
                           point_names=rmap.point_names, status=new_status,
                           point_idx=new_point, attempts=new_attempts)


# --- export / import ------------------------------------------------------

def export_csv(rmap: ReachabilityMap, path) -> None:
    """Delimited map with the full generation context in header comments,
    so downstream consumers can rebuild chain and failure from the file."""
    lines = [
        f"# pokeplan-reachmap v{MAP_CSV_VERSION}",
        "# chain: " + json.dumps(chain_to_dict(rmap.chain)),
        "# failure: " + json.dumps(failure_to_dict(rmap.failure)),
        "# grid: " + json.dumps([rmap.grid.x_min, rmap.grid.y_min,
                                 rmap.grid.x_max, rmap.grid.y_max,
                                 rmap.grid.cell]),
        "# params: " + json.dumps({"k": rmap.k, "eps": rmap.eps,
                                   "seed": rmap.seed,
                                   "points": list(rmap.point_names)}),
        "x,y,status,interaction_point",
    ]
    for iy in range(rmap.grid.ny):
        for ix in range(rmap.grid.nx):
            c = rmap.grid.center(ix, iy)
            name = rmap.cell_point_name(ix, iy) or ""
            lines.append(f"{c[0]:.6f},{c[1]:.6f},{rmap.status_name(ix, iy)},{name}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def export_pgm(rmap: ReachabilityMap, path) -> None:
    """Binary P5 image; 0 = Unreachable, 128 = contact-only, 255 = graspable.
    Row 0 is the top of the image (max y)."""
    levels = np.zeros_like(rmap.status, dtype=np.uint8)
    levels[rmap.status == _STATUS_CODE[NPM]] = PGM_LEVELS[NPM]
    levels[rmap.status == _STATUS_CODE[PM]] = PGM_LEVELS[PM]
    img = levels[::-1, :]
    with open(path, "wb") as f:
        f.write(f"P5\n{rmap.grid.nx} {rmap.grid.ny}\n255\n".encode())
        f.write(img.tobytes())


def import_csv(path) -> ReachabilityMap:
    """Rebuild a map from export_csv output (attempt counts are not carried
    by the format and come back as zero)."""
    header: dict[str, str] = {}
    rows: list[tuple[float, float, str, str]] = []
    with open(path) as f:
        first = f.readline().strip()
        if not first.startswith("# pokeplan-reachmap v"):
            raise ValueError(f"{path}: not a reach map CSV")
        version = int(first.rsplit("v", 1)[1])
        if version != MAP_CSV_VERSION:
            raise ValueError(f"{path}: unsupported reach map version {version}")
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, val = line[2:].partition(": ")
                header[key] = val
            elif line and not line.startswith("x,"):
                x, y, status, point = line.split(",")
                rows.append((float(x), float(y), status, point))
    chain = chain_from_dict(json.loads(header["chain"]))
    failure = failure_from_dict(json.loads(header["failure"]))
    gx0, gy0, gx1, gy1, cell = json.loads(header["grid"])
    grid = WorkspaceGrid(gx0, gy0, gx1, gy1, cell)
    params = json.loads(header["params"])
    point_names = tuple(params["points"])
    status = np.zeros((grid.ny, grid.nx), dtype=np.int8)
    point_idx = np.full((grid.ny, grid.nx), -1, dtype=np.int8)
    if len(rows) != grid.n_cells:
        raise ValueError(f"{path}: expected {grid.n_cells} cells, found {len(rows)}")
    for x, y, st, point in rows:
        ix, iy = grid.cell_of((x, y))
        status[iy, ix] = _STATUS_CODE[st]
        if point:
            point_idx[iy, ix] = point_names.index(point)
    return ReachabilityMap(grid=grid, chain=chain, failure=failure,
                           seed=int(params["seed"]), k=int(params["k"]),
                           eps=float(params["eps"]), point_names=point_names,
                           status=status, point_idx=point_idx,
                           attempts=np.zeros((grid.ny, grid.nx), dtype=np.int16))
