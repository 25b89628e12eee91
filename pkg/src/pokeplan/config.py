"""Structured-text configuration for chains, failures, scenarios, suites.

One YAML document per file, tagged by an explicit `kind` key.  Bare names
resolve against the config directory (the packaged `data/` tree unless
POKEPLAN_CONFIG_DIR points elsewhere), so experiments can be described by
name on the command line and by path in scripts.  Every parse has an exact
serializer: parse -> serialize -> parse is the identity on the document.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .chain import (ChainModel, FailureSpec, chain_from_dict, chain_to_dict,
                    failure_from_dict, failure_to_dict)
from .scene import (Box, Disc, Environment, GoalRegion, ROLES, SceneObject,
                    TARGET)

CONFIG_DIR_ENV = "POKEPLAN_CONFIG_DIR"
_PACKAGE_DATA = Path(__file__).parent / "data"

KINDS = ("chain", "failure", "scenario", "suite")
ASM_NAMES = ("random", "lazy", "greedy")


class ConfigError(ValueError):
    """A config file is missing, malformed, or inconsistent."""


def config_dir() -> Path:
    return Path(os.environ.get(CONFIG_DIR_ENV, _PACKAGE_DATA))


def resolve(name_or_path, kind: str | None = None) -> Path:
    """Map a bare name to the config directory; pass paths through."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return p
    return config_dir() / f"{name_or_path}.yaml"


def load_document(path, kind: str | None = None) -> dict:
    path = Path(path)
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"no config file at {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    got = doc.get("kind")
    if got not in KINDS:
        raise ConfigError(f"{path}: unknown kind {got!r}")
    if kind is not None and got != kind:
        raise ConfigError(f"{path}: expected kind {kind!r}, found {got!r}")
    return doc


def document_text(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ConfigError(f"{context}: missing key {key!r}")
    return doc[key]


# --- chain ---------------------------------------------------------------

def parse_chain(doc: dict) -> ChainModel:
    try:
        return chain_from_dict(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"chain config: {e}")


def chain_doc(chain: ChainModel) -> dict:
    return {"kind": "chain", **chain_to_dict(chain)}


# --- failure -------------------------------------------------------------

@dataclass(frozen=True)
class FailureCaseSpec:
    name: str
    failure: FailureSpec


def parse_failure(doc: dict) -> FailureCaseSpec:
    name = _require(doc, "name", "failure config")
    try:
        failure = failure_from_dict(doc)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"failure config {name!r}: {e}")
    return FailureCaseSpec(name=str(name), failure=failure)


def failure_doc(spec: FailureCaseSpec) -> dict:
    return {"kind": "failure", "name": spec.name,
            **failure_to_dict(spec.failure)}


# --- scenario ------------------------------------------------------------

@dataclass(frozen=True)
class ObjectSpec:
    obj_id: str
    role: str
    shape: str               # disc | box
    x: float
    y: float
    theta: float
    mass: float
    mu: float
    radius: float = 0.0      # disc only
    width: float = 0.0       # box only
    height: float = 0.0

    def build(self) -> SceneObject:
        shape = Disc(self.radius) if self.shape == "disc" \
            else Box(self.width, self.height)
        return SceneObject(self.obj_id, self.x, self.y, self.theta, shape,
                           self.mass, self.mu, self.role)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    chain: str
    table: tuple[float, float, float, float]
    goal: GoalRegion
    objects: tuple[ObjectSpec, ...]
    notes: str = ""

    def build_environment(self) -> Environment:
        """Fresh mutable world; callers own (and mutate) the result."""
        return Environment(objects=[o.build() for o in self.objects],
                           goal=self.goal, table=self.table)


def _parse_goal(d: dict, context: str) -> GoalRegion:
    shape = _require(d, "shape", context)
    if shape == "disc":
        return GoalRegion.disc(float(d["x"]), float(d["y"]),
                               float(d["radius"]))
    if shape == "rect":
        return GoalRegion.rect(float(d["x_min"]), float(d["y_min"]),
                               float(d["x_max"]), float(d["y_max"]))
    raise ConfigError(f"{context}: unknown goal shape {shape!r}")


def _goal_row(goal: GoalRegion) -> dict:
    if goal.kind == "disc":
        return {"shape": "disc", "x": float(goal.center[0]),
                "y": float(goal.center[1]), "radius": float(goal.radius)}
    x0, y0, x1, y1 = goal.bounds
    return {"shape": "rect", "x_min": float(x0), "y_min": float(y0),
            "x_max": float(x1), "y_max": float(y1)}


def _parse_object(row: dict, context: str) -> ObjectSpec:
    oid = str(_require(row, "id", context))
    role = _require(row, "role", f"{context} object {oid!r}")
    if role not in ROLES:
        raise ConfigError(f"{context} object {oid!r}: unknown role {role!r}")
    shape = _require(row, "shape", f"{context} object {oid!r}")
    common = dict(obj_id=oid, role=role, shape=shape,
                  x=float(row["x"]), y=float(row["y"]),
                  theta=float(row.get("theta", 0.0)),
                  mass=float(row["mass"]), mu=float(row["mu"]))
    if shape == "disc":
        return ObjectSpec(radius=float(row["radius"]), **common)
    if shape == "box":
        return ObjectSpec(width=float(row["width"]),
                          height=float(row["height"]), **common)
    raise ConfigError(f"{context} object {oid!r}: unknown shape {shape!r}")


def _object_row(o: ObjectSpec) -> dict:
    row = {"id": o.obj_id, "role": o.role, "shape": o.shape,
           "x": o.x, "y": o.y, "theta": o.theta, "mass": o.mass, "mu": o.mu}
    if o.shape == "disc":
        row["radius"] = o.radius
    else:
        row["width"] = o.width
        row["height"] = o.height
    return row


def parse_scenario(doc: dict) -> ScenarioSpec:
    name = str(_require(doc, "name", "scenario config"))
    ctx = f"scenario {name!r}"
    table = tuple(float(v) for v in _require(doc, "table", ctx))
    if len(table) != 4:
        raise ConfigError(f"{ctx}: table needs [x_min, y_min, x_max, y_max]")
    goal = _parse_goal(_require(doc, "goal", ctx), ctx)
    objects = tuple(_parse_object(row, ctx)
                    for row in _require(doc, "objects", ctx))
    if sum(o.role == TARGET for o in objects) != 1:
        raise ConfigError(f"{ctx}: exactly one Target object required")
    spec = ScenarioSpec(name=name, chain=str(_require(doc, "chain", ctx)),
                        table=table, goal=goal, objects=objects,
                        notes=str(doc.get("notes", "")))
    try:
        spec.build_environment()
    except ValueError as e:
        raise ConfigError(f"{ctx}: {e}")
    return spec


def scenario_doc(spec: ScenarioSpec) -> dict:
    return {"kind": "scenario", "name": spec.name, "chain": spec.chain,
            "notes": spec.notes, "table": [float(v) for v in spec.table],
            "goal": _goal_row(spec.goal),
            "objects": [_object_row(o) for o in spec.objects]}


# --- suite ---------------------------------------------------------------

@dataclass(frozen=True)
class SuiteSpec:
    name: str
    scenarios: tuple[str, ...]
    failures: tuple[str, ...]
    asms: tuple[str, ...]           # lowercase names
    trials: int
    max_actions: int
    sigma_mu: float
    master_seed: int
    map_cell: float
    map_attempts: int
    bundle_edges: int
    bundle_dt: float


def parse_suite(doc: dict) -> SuiteSpec:
    name = str(_require(doc, "name", "suite config"))
    ctx = f"suite {name!r}"
    asms = tuple(str(a) for a in _require(doc, "asms", ctx))
    for a in asms:
        if a not in ASM_NAMES:
            raise ConfigError(f"{ctx}: unknown asm {a!r}")
    m = doc.get("map", {})
    e = doc.get("edges", {})
    spec = SuiteSpec(
        name=name,
        scenarios=tuple(str(s) for s in _require(doc, "scenarios", ctx)),
        failures=tuple(str(s) for s in _require(doc, "failures", ctx)),
        asms=asms,
        trials=int(_require(doc, "trials", ctx)),
        max_actions=int(doc.get("max_actions", 25)),
        sigma_mu=float(doc.get("sigma_mu", 0.2)),
        master_seed=int(_require(doc, "master_seed", ctx)),
        map_cell=float(m.get("cell", 0.02)),
        map_attempts=int(m.get("attempts", 10)),
        bundle_edges=int(e.get("n", 400)),
        bundle_dt=float(e.get("dt", 0.02)),
    )
    if spec.trials < 1 or spec.max_actions < 0 or spec.bundle_edges < 1:
        raise ConfigError(f"{ctx}: trials/edges must be positive")
    return spec


def suite_doc(spec: SuiteSpec) -> dict:
    return {"kind": "suite", "name": spec.name, "trials": spec.trials,
            "max_actions": spec.max_actions, "sigma_mu": spec.sigma_mu,
            "master_seed": spec.master_seed,
            "map": {"cell": spec.map_cell, "attempts": spec.map_attempts},
            "edges": {"n": spec.bundle_edges, "dt": spec.bundle_dt},
            "scenarios": list(spec.scenarios),
            "failures": list(spec.failures),
            "asms": list(spec.asms)}


# --- loading by name -----------------------------------------------------

def load_chain(name_or_path) -> ChainModel:
    return parse_chain(load_document(resolve(name_or_path), "chain"))


def load_failure(name_or_path) -> FailureCaseSpec:
    return parse_failure(load_document(resolve(name_or_path), "failure"))


def load_scenario(name_or_path) -> ScenarioSpec:
    return parse_scenario(load_document(resolve(name_or_path), "scenario"))


def load_suite(name_or_path) -> SuiteSpec:
    return parse_suite(load_document(resolve(name_or_path), "suite"))
