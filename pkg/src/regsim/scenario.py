"""Scenario description and its JSON file format.

A scenario file is a JSON document with five sections::

    {
      "exosystem": {"S0": [[0, 2], [-2, 0]], "w0": {"uniform": [-1, 1]}},
      "agents": [{"name": "agent1",
                  "nominal": {"A": ..., "B": ..., "C": ..., "D": ..., "P": ..., "Q": ...},
                  "perturbation": {"A": [[0, 0.1], [-0.1, 0]]}}],
      "topology": {"repeat": true, "alpha_min": 0.1,
                   "segments": [{"duration": 1.0,
                                 "edges": [{"from": 0, "to": 1, "weight": 1.0}]}]},
      "sim": {"dt": 0.001, "t_final": 200.0, "integrator": "rk4", "seed": 0,
              "resynth_margin": 0.001, "a4_window": null,
              "learn_eigenvalues": true},
      "init": {"x": {"uniform": [-1, 1]}, "xi": {"uniform": [-1, 1]},
               "w": {"uniform": [-1, 1]}, "S": "nominal_A",
               "beta": {"uniform": [-1, 1]}}
    }

Matrices are row-major nested lists.  Initial values are either explicit
(one vector per agent for the per-agent fields) or ``{"uniform": [lo, hi]}``.
Validation errors carry the JSON path of the offending entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .graphnet import ALPHA_MIN, TopologySchedule, WeightedDigraph
from .linalg import AgentModel, Exosystem

__all__ = [
    "ScenarioError",
    "Uniform",
    "AgentSpec",
    "SimConfig",
    "InitSpec",
    "Scenario",
    "perturb",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "dump_scenario",
    "bundled_scenario_path",
    "section5_scenario",
]

MATRIX_KEYS = ("A", "B", "C", "D", "P", "Q")


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Uniform:
    lo: float = -1.0
    hi: float = 1.0


@dataclass(frozen=True)
class AgentSpec:
    nominal: AgentModel
    perturbation: dict = field(default_factory=dict)
    name: str = ""

    @property
    def true_model(self) -> AgentModel:
        return perturb(self.nominal, self.perturbation)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_final: float = 200.0
    integrator: str = "rk4"
    seed: int = 0
    resynth_margin: float = 1e-3
    a4_window: float | None = None
    learn_eigenvalues: bool = True


@dataclass(frozen=True)
class InitSpec:
    w0: Any = Uniform()
    x: Any = Uniform()
    xi: Any = Uniform()
    w: Any = Uniform()
    S: Any = "nominal_A"
    beta: Any = Uniform()


@dataclass(frozen=True)
class Scenario:
    exosystem: Exosystem
    agents: tuple
    schedule: TopologySchedule
    sim: SimConfig = SimConfig()
    init: InitSpec = InitSpec()

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        r = self.exosystem.r
        for i, a in enumerate(self.agents):
            if a.nominal.r != r:
                raise ScenarioError(f"agents[{i}].nominal.P", f"expected {r} columns (exosystem order)")
        if self.schedule.node_count != len(self.agents) + 1:
            raise ScenarioError("topology", f"graphs must have {len(self.agents) + 1} nodes")
        if self.sim.dt <= 0:
            raise ScenarioError("sim.dt", "must be positive")
        if self.sim.t_final <= 0:
            raise ScenarioError("sim.t_final", "must be positive")
        if self.sim.integrator not in ("euler", "rk4"):
            raise ScenarioError("sim.integrator", "must be 'euler' or 'rk4'")

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return scenario_to_dict(self) == scenario_to_dict(other)

    __hash__ = None

    @property
    def N(self) -> int:
        return len(self.agents)

    def with_sim(self, **kw) -> "Scenario":
        return replace(self, sim=replace(self.sim, **kw))


def perturb(agent: AgentModel, spec: dict) -> AgentModel:
    """Add the entrywise deltas in ``spec`` (keys among A..Q) to ``agent``."""
    parts = {}
    for k in MATRIX_KEYS:
        base = getattr(agent, k)
        delta = spec.get(k)
        if delta is None:
            parts[k] = base
            continue
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        if delta.shape != base.shape:
            raise ValueError(f"perturbation of {k} has shape {delta.shape}, expected {base.shape}")
        parts[k] = base + delta
    unknown = set(spec) - set(MATRIX_KEYS)
    if unknown:
        raise ValueError(f"unknown perturbation keys {sorted(unknown)}")
    return AgentModel(**parts)


# --------------------------------------------------------------------------
# parsing


def _matrix(obj, path):
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, f"not a numeric matrix ({exc})") from None
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ScenarioError(path, "must be a nested list of rows")
    return arr


def _req(d, key, path):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key not in d:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required entry")
    return d[key]


def _init_value(obj, path, per_agent: bool):
    if isinstance(obj, dict):
        if set(obj) != {"uniform"}:
            raise ScenarioError(path, "expected {'uniform': [lo, hi]} or explicit values")
        lo, hi = obj["uniform"]
        if not lo <= hi:
            raise ScenarioError(f"{path}.uniform", "lo must not exceed hi")
        return Uniform(float(lo), float(hi))
    if per_agent:
        return tuple(np.asarray(v, dtype=float).ravel() for v in obj)
    return np.asarray(obj, dtype=float).ravel()


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("$", "top level must be an object")
    exo = _req(doc, "exosystem", "")
    S0 = _matrix(_req(exo, "S0", "exosystem"), "exosystem.S0")
    if S0.shape[0] != S0.shape[1]:
        raise ScenarioError("exosystem.S0", f"must be square, got {S0.shape[0]}x{S0.shape[1]}")
    w0 = _init_value(exo.get("w0", {"uniform": [-1, 1]}), "exosystem.w0", per_agent=False)
    if not isinstance(w0, Uniform) and w0.size != S0.shape[0]:
        raise ScenarioError("exosystem.w0", f"expected length {S0.shape[0]}")
    exosystem = Exosystem(S0, None if isinstance(w0, Uniform) else w0)

    agents_doc = _req(doc, "agents", "")
    if not isinstance(agents_doc, list) or not agents_doc:
        raise ScenarioError("agents", "expected a nonempty list")
    agents = []
    for i, a in enumerate(agents_doc):
        base = f"agents[{i}]"
        nom = _req(a, "nominal", base)
        mats = {k: _matrix(_req(nom, k, f"{base}.nominal"), f"{base}.nominal.{k}") for k in MATRIX_KEYS}
        try:
            model = AgentModel(**mats)
        except ValueError as exc:
            raise ScenarioError(f"{base}.nominal", str(exc)) from None
        pert = {k: _matrix(v, f"{base}.perturbation.{k}") for k, v in (a.get("perturbation") or {}).items()}
        try:
            perturb(model, pert)
        except ValueError as exc:
            raise ScenarioError(f"{base}.perturbation", str(exc)) from None
        agents.append(AgentSpec(model, pert, a.get("name", f"agent{i + 1}")))

    topo = _req(doc, "topology", "")
    alpha_min = float(topo.get("alpha_min", ALPHA_MIN))
    segs = []
    nodes = len(agents) + 1
    for s, seg in enumerate(_req(topo, "segments", "topology")):
        path = f"topology.segments[{s}]"
        edges = []
        for e, edge in enumerate(seg.get("edges", [])):
            epath = f"{path}.edges[{e}]"
            src, dst = int(_req(edge, "from", epath)), int(_req(edge, "to", epath))
            if not (0 <= src < nodes and 0 <= dst < nodes):
                raise ScenarioError(epath, f"node index out of range 0..{nodes - 1}")
            edges.append((src, dst, float(edge.get("weight", 1.0))))
        try:
            g = WeightedDigraph.from_edges(nodes, edges, alpha_min)
        except ValueError as exc:
            raise ScenarioError(path, str(exc)) from None
        segs.append((float(_req(seg, "duration", path)), g))
    try:
        schedule = TopologySchedule(tuple(segs), bool(topo.get("repeat", True)))
    except ValueError as exc:
        raise ScenarioError("topology", str(exc)) from None

    sim_doc = doc.get("sim", {})
    known = set(SimConfig.__dataclass_fields__)
    unknown = set(sim_doc) - known
    if unknown:
        raise ScenarioError("sim", f"unknown keys {sorted(unknown)}")
    sim = SimConfig(**sim_doc)

    init_doc = doc.get("init", {})
    init_kw = {}
    for key in ("x", "xi", "w", "beta"):
        if key in init_doc:
            init_kw[key] = _init_value(init_doc[key], f"init.{key}", per_agent=True)
    if "S" in init_doc:
        S = init_doc["S"]
        if isinstance(S, str):
            if S not in ("nominal_A", "S0"):
                raise ScenarioError("init.S", "expected 'nominal_A', 'S0' or explicit matrices")
            init_kw["S"] = S
        else:
            init_kw["S"] = tuple(_matrix(m, f"init.S[{j}]") for j, m in enumerate(S))
    init = InitSpec(w0=w0, **init_kw)
    return Scenario(exosystem, tuple(agents), schedule, sim, init)


def _json_init(v):
    if isinstance(v, Uniform):
        return {"uniform": [v.lo, v.hi]}
    if isinstance(v, str):
        return v
    if isinstance(v, tuple):
        return [np.asarray(a).tolist() for a in v]
    return np.asarray(v).tolist()


def scenario_to_dict(sc: Scenario) -> dict:
    exo = {"S0": sc.exosystem.S0.tolist(),
           "w0": _json_init(sc.exosystem.w0_init if sc.exosystem.w0_init is not None else sc.init.w0)}
    agents = []
    for a in sc.agents:
        entry = {"name": a.name, "nominal": {k: getattr(a.nominal, k).tolist() for k in MATRIX_KEYS}}
        if a.perturbation:
            entry["perturbation"] = {k: np.asarray(v).tolist() for k, v in a.perturbation.items()}
        agents.append(entry)
    segs = [{"duration": d,
             "edges": [{"from": s, "to": t, "weight": w} for s, t, w in g.edges()]}
            for d, g in sc.schedule.segments]
    topo = {"repeat": sc.schedule.repeat,
            "alpha_min": sc.schedule.segments[0][1].alpha_min,
            "segments": segs}
    sim = dict(sc.sim.__dict__)
    init = {k: _json_init(getattr(sc.init, k)) for k in ("x", "xi", "w", "S", "beta")}
    return {"exosystem": exo, "agents": agents, "topology": topo, "sim": sim, "init": init}


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def dump_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def bundled_scenario_path(name: str = "section5.scenario") -> Path:
    return Path(str(resources.files("regsim") / "data" / name))


def section5_scenario(**sim_overrides) -> Scenario:
    """The bundled four-agent example, optionally with ``sim`` overrides."""
    sc = load_scenario(bundled_scenario_path())
    return sc.with_sim(**sim_overrides) if sim_overrides else sc
