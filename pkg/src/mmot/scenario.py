"""Scenario files: loading, validation and the staged pipeline.

A scenario is one JSON object::

    {
      "name": "monotone_quadratic",
      "marginals": [<measure spec>, ...],        # or "family": {...}
      "cost": {"kind": "builtin", "id": "quadratic"},
      "pipeline": ["solve", "splitting", "twist", "decompose", "verify"],
      "splitting_mode": "full",
      "tolerances": {"grouping_radius": null, "eqtol": null, "proximity_radius": 0.05},
      "entropic": {"epsilon": 0.01, "max_iter": 10000},
      "output": "runs/monotone_quadratic"
    }

A measure spec is an inline measure (``{"dim", "atoms"}``), a file reference
(``{"file": "path.json"}``, relative to the scenario) or a generator
(``{"generator": "random" | "grid", "size", "dim", "seed", "weights"}``).
``family`` names a coupled generator from :mod:`mmot.instances` and replaces
``marginals``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import instances
from .cost import CostOracle
from .decompose import peel, reconstruct, verify_k_bound
from .errors import ConfigurationError, MMOTError
from .measure import DiscreteMeasure, grid_measure, random_measure
from .solver import eqtol, feastol, solve_entropic, solve_exact
from .splitting import extract_splitting_set, fiber_reports
from .twist import accumulation_scan, check_generalized_twist, twist_cardinality

STAGES = ("solve", "entropic", "splitting", "twist", "decompose", "verify")
REQUIRES = {
    "splitting": ("solve",),
    "twist": ("splitting",),
    "decompose": ("solve|entropic",),
    "verify": ("twist", "decompose"),
}
TOLERANCE_KEYS = ("grouping_radius", "eqtol", "proximity_radius")


@dataclass
class Scenario:
    name: str
    marginal_specs: list
    family: dict | None
    cost_spec: dict
    pipeline: list
    splitting_mode: str = "full"
    tolerances: dict = field(default_factory=dict)
    entropic: dict = field(default_factory=dict)
    output: str | None = None
    base_dir: Path = Path(".")

    @property
    def parameterizable(self) -> bool:
        if self.family is not None:
            return True
        return all(isinstance(s, dict) and "generator" in s for s in self.marginal_specs)

    def at_resolution(self, size: int) -> "Scenario":
        if not self.parameterizable:
            raise ConfigurationError(
                "sweep needs generator marginals or a family (field 'marginals')")
        out = copy.deepcopy(self)
        if out.family is not None:
            out.family["size"] = int(size)
        else:
            for spec in out.marginal_specs:
                spec["size"] = int(size)
        return out


def _require(data, key, kind, path):
    if key not in data:
        raise ConfigurationError(f"missing field '{path}{key}'")
    val = data[key]
    if not isinstance(val, kind):
        raise ConfigurationError(f"field '{path}{key}' must be {kind.__name__}")
    return val


def check_pipeline(stages) -> list:
    stages = list(stages)
    for s in stages:
        if s not in STAGES:
            raise ConfigurationError(f"unknown stage {s!r} in field 'pipeline'")
    if len(set(stages)) != len(stages):
        raise ConfigurationError("duplicate stage in field 'pipeline'")
    for pos, s in enumerate(stages):
        earlier = set(stages[:pos])
        for need in REQUIRES.get(s, ()):
            if not earlier & set(need.split("|")):
                raise ConfigurationError(
                    f"stage {s!r} requires {need.replace('|', ' or ')!r} earlier in the pipeline")
    return stages


def parse_scenario(data: dict, base_dir=".") -> Scenario:
    if not isinstance(data, dict):
        raise ConfigurationError("scenario must be a JSON object")
    name = data.get("name", "scenario")
    family = data.get("family")
    if family is not None:
        fname = _require(family, "name", str, "family.")
        if fname not in instances.FAMILIES:
            raise ConfigurationError(f"unknown family {fname!r} in field 'family.name'")
        _require(family, "size", int, "family.")
        specs = []
    else:
        specs = _require(data, "marginals", list, "")
        if len(specs) < 2:
            raise ConfigurationError("field 'marginals' needs at least two entries")
    cost_spec = _require(data, "cost", dict, "")
    pipeline = check_pipeline(_require(data, "pipeline", list, ""))
    mode = data.get("splitting_mode", "full")
    if mode not in ("support", "full"):
        raise ConfigurationError("field 'splitting_mode' must be 'support' or 'full'")
    tol = data.get("tolerances") or {}
    for key in tol:
        if key not in TOLERANCE_KEYS:
            raise ConfigurationError(f"unknown tolerance 'tolerances.{key}'")
    if "entropic" in pipeline and "epsilon" not in (data.get("entropic") or {}):
        raise ConfigurationError("missing field 'entropic.epsilon'")
    return Scenario(name=str(name), marginal_specs=specs, family=family, cost_spec=cost_spec,
                    pipeline=pipeline, splitting_mode=mode, tolerances=dict(tol),
                    entropic=dict(data.get("entropic") or {}), output=data.get("output"),
                    base_dir=Path(base_dir))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from exc
    try:
        return parse_scenario(data, base_dir=path.parent)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def build_measure(spec, base_dir: Path, where: str) -> DiscreteMeasure:
    if not isinstance(spec, dict):
        raise ConfigurationError(f"field '{where}' must be an object")
    try:
        if "generator" in spec:
            gen = spec["generator"]
            size = int(spec["size"])
            seed = int(spec.get("seed", 0))
            weights = spec.get("weights", "uniform")
            if gen == "random":
                return random_measure(size, int(spec.get("dim", 1)), seed, weights)
            if gen == "grid":
                return grid_measure(size, seed, weights, float(spec.get("lo", 0.0)),
                                    float(spec.get("hi", 1.0)))
            raise ConfigurationError(f"unknown generator {gen!r} in field '{where}.generator'")
        if "file" in spec:
            return DiscreteMeasure.from_dict(json.loads((base_dir / spec["file"]).read_text()))
        return DiscreteMeasure.from_dict(spec)
    except KeyError as exc:
        raise ConfigurationError(f"missing field '{where}.{exc.args[0]}'") from exc
    except (MMOTError, OSError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"field '{where}': {exc}") from exc


def materialize(sc: Scenario):
    """Marginals and cost oracle of a scenario."""
    if sc.family is not None:
        params = {k: v for k, v in sc.family.items() if k != "name"}
        try:
            marginals = list(instances.FAMILIES[sc.family["name"]](**params))
        except TypeError as exc:
            raise ConfigurationError(f"field 'family': {exc}") from exc
    else:
        marginals = [build_measure(s, sc.base_dir, f"marginals[{i}]")
                     for i, s in enumerate(sc.marginal_specs)]
    try:
        cost = CostOracle.from_dict(sc.cost_spec)
    except (KeyError, ValueError, MMOTError) as exc:
        raise ConfigurationError(f"field 'cost': {exc}") from exc
    return marginals, cost


def instance_hash(marginals, cost) -> str:
    blob = json.dumps({"marginals": [m.to_dict() for m in marginals], "cost": cost.to_dict()},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def run_pipeline(sc: Scenario) -> dict:
    """Run every stage and return ``{report name: JSON-ready dict}`` plus CSV text.

    The ``"summary"`` entry always exists. CSV payloads are stored under keys
    ending in ``.csv``.
    """
    marginals, cost = materialize(sc)
    C = cost.tensor(marginals)
    tols = {
        "feastol": feastol(C),
        "eqtol": sc.tolerances.get("eqtol") or eqtol(C),
        "grouping_radius": sc.tolerances.get("grouping_radius"),
        "proximity_radius": sc.tolerances.get("proximity_radius"),
    }
    reports: dict = {}
    summary = {"name": sc.name, "instance_hash": instance_hash(marginals, cost),
               "primal": None, "gap": None, "m_observed": None, "k": None,
               "verdict": None, "tolerances": tols}
    plan = potentials = sset = tw = dec = None
    entropic_plan = None

    for stage in sc.pipeline:
        if stage == "solve":
            plan, potentials, cert = solve_exact(cost, marginals)
            reports["solve"] = {"certificate": cert.to_dict(), "nnz": plan.nnz,
                                "marginal_error": plan.marginal_error(),
                                "potentials": potentials.to_list(), "tolerances": tols}
            reports["plan.csv"] = plan.to_csv()
            summary["primal"], summary["gap"] = cert.primal_value, cert.gap
        elif stage == "entropic":
            res = solve_entropic(cost, marginals, float(sc.entropic["epsilon"]),
                                 int(sc.entropic.get("max_iter", 10_000)))
            entropic_plan = res.plan
            reports["entropic"] = {**res.to_dict(), "epsilon": float(sc.entropic["epsilon"]),
                                   "nnz": res.plan.nnz, "tolerances": tols}
            reports["entropic_plan.csv"] = res.plan.to_csv()
        elif stage == "splitting":
            sset = extract_splitting_set(plan, potentials, cost, sc.splitting_mode,
                                         eq_tol=tols["eqtol"])
            fibers = fiber_reports(sset, cost, marginals)
            reports["splitting"] = {**sset.to_dict(), "mode": sc.splitting_mode,
                                    "fibers": [f.to_dict() for f in fibers],
                                    "max_gradient_spread":
                                        max((f.gradient_spread for f in fibers), default=0.0),
                                    "tolerances": tols}
        elif stage == "twist":
            tw = twist_cardinality(sset, cost, marginals, tols["grouping_radius"])
            rep = {**tw.to_dict(), "generalized_twist": check_generalized_twist(tw),
                   "tolerances": tols}
            if tols["proximity_radius"] is not None:
                acc = accumulation_scan(sset, cost, marginals, tols["proximity_radius"],
                                        tw.grouping_radius)
                rep["accumulation"] = acc.to_dict()
            reports["twist"] = rep
            summary["m_observed"] = tw.m_observed
        elif stage == "decompose":
            source = plan if plan is not None else entropic_plan
            dec, trace = peel(source)
            back = reconstruct(dec, source.marginals[0])
            err = float(np.abs(back.todense() - source.todense()).max())
            reports["decompose"] = {**dec.to_dict(), "trace": trace.to_dict(),
                                    "source": "solve" if plan is not None else "entropic",
                                    "roundtrip_error": err, "tolerances": tols}
            summary["k"] = dec.k
        elif stage == "verify":
            v = verify_k_bound(dec, tw)
            reports["verify"] = {**v.to_dict(), "tolerances": tols}
            summary["verdict"] = v.verdict
    reports["summary"] = summary
    return reports


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_reports(reports: dict, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, payload in reports.items():
        if name.endswith(".csv"):
            target, text = out / name, payload
        else:
            target, text = out / f"{name}.json", dumps(payload)
        target.write_text(text)
        written.append(target)
    return written
