"""Experiment configuration: one JSON file describes a ring, an algebra,
generators, a homomorphism, norms, regions, walks and schedules."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .equidist import BoxRegion, Homomorphism, HomomorphismError
from .lattice import GeneratingSet, LatticeError
from .nilgroup import AlgebraError, NilpotentAlgebra
from .quasinorm import LAYER_KINDS, AuditTolerances
from .randomwalk import WalkError, WalkMeasure
from .ring import RingError, RingSpec

KNOWN_SECTIONS = {
    "name", "description", "seed", "workers", "mem_budget_mb", "ring", "algebra", "generators",
    "target", "phi", "norm", "regions", "walk", "experiments",
}


class ConfigError(ValueError):
    """Carries every violated constraint, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  - " + "\n  - ".join(self.problems))


@dataclass
class AlgebraSpec:
    dim: int
    brackets: list = field(default_factory=list)
    layers: list | None = None
    name: str = ""

    def build(self, spec: RingSpec) -> NilpotentAlgebra:
        layers = None
        if self.layers is not None:
            layers = [[[spec.scalar(c).to_fraction() for c in v] for v in m] for m in self.layers]
        return NilpotentAlgebra(self.dim, [tuple(q) for q in self.brackets], layers=layers, name=self.name)


@dataclass
class NormSpec:
    kinds: list
    weights: list
    rescale: bool = False


@dataclass
class WalkSpec:
    support: list
    probs: list
    mode: str = "exact"
    n: list = field(default_factory=list)
    paths: int = 0
    seed: int = 0


@dataclass
class ExperimentConfig:
    name: str
    description: str = ""
    seed: int = 0
    workers: int | None = None
    mem_budget_mb: float = 2048.0
    ring: RingSpec = None
    algebra: AlgebraSpec | None = None
    generators: list | None = None
    target: AlgebraSpec | None = None
    phi: list | None = None
    norm: NormSpec | None = None
    regions: dict = field(default_factory=dict)
    walk: WalkSpec | None = None
    experiments: dict = field(default_factory=dict)
    path: str = ""

    # -- derived objects --------------------------------------------------------------
    def source_algebra(self) -> NilpotentAlgebra:
        return self.algebra.build(self.ring)

    def target_algebra(self) -> NilpotentAlgebra:
        if self.target is not None:
            return self.target.build(self.ring)
        return NilpotentAlgebra.abelian(len(self.phi))

    def generating_set(self) -> GeneratingSet:
        return GeneratingSet.symmetric(self.generators, self.ring)

    def homomorphism(self) -> Homomorphism:
        return Homomorphism(self.phi, self.source_algebra(), self.target_algebra(), self.ring)

    def region(self, name: str) -> BoxRegion:
        r = self.regions[name]
        return BoxRegion(r["boxes"], fold=bool(r.get("fold", False)))

    def walk_measure(self) -> WalkMeasure:
        return WalkMeasure(self.walk.support, [Fraction(p) for p in self.walk.probs], self.ring)

    def params(self, kind: str) -> dict:
        return dict(self.experiments.get(kind, {}))

    def audit_tolerances(self) -> AuditTolerances:
        raw = self.params("volume-audit").get("tolerances", {})
        return AuditTolerances(**raw)

    @property
    def worker_count(self) -> int:
        return self.workers or os.cpu_count() or 1


def _increasing(seq) -> bool:
    return all(b > a for a, b in zip(seq, seq[1:]))


SCHEDULE_KEYS = ("radii", "n", "Ts")


def _check_schedules(where: str, block: Any, problems: list[str]):
    if not isinstance(block, dict):
        return
    for key in SCHEDULE_KEYS:
        if key in block:
            seq = block[key]
            if not isinstance(seq, list) or not seq:
                problems.append(f"{where}.{key} must be a non-empty list")
            elif not _increasing(seq):
                problems.append(f"{where}.{key} must be strictly increasing, got {seq}")


def parse_config(data: dict, path: str = "") -> ExperimentConfig:
    """Validate a config mapping; raises ConfigError listing all problems."""
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a JSON object"])
    for key in data:
        if key not in KNOWN_SECTIONS:
            problems.append(f"unknown section {key!r}")
    name = data.get("name") or (Path(path).stem if path else "experiment")

    try:
        ring = RingSpec.from_config(data.get("ring"))
    except RingError as e:
        problems.append(f"ring: {e}")
        ring = RingSpec()

    algebra = target = None
    alg = None
    if "algebra" in data:
        a = data["algebra"]
        try:
            algebra = AlgebraSpec(int(a["dim"]), list(a.get("brackets", [])), a.get("layers"), a.get("name", ""))
            alg = algebra.build(ring)
        except (KeyError, TypeError) as e:
            problems.append(f"algebra: missing or malformed field {e}")
        except (AlgebraError, ValueError) as e:
            problems.append(f"algebra: {e}")
    if "target" in data:
        t = data["target"]
        try:
            target = AlgebraSpec(int(t["dim"]), list(t.get("brackets", [])), t.get("layers"), t.get("name", ""))
            target.build(ring)
        except (KeyError, TypeError) as e:
            problems.append(f"target: missing or malformed field {e}")
        except (AlgebraError, ValueError) as e:
            problems.append(f"target: {e}")

    for sec in ("generators", "phi", "norm", "walk"):
        if sec in data and algebra is None:
            problems.append(f"{sec}: needs an 'algebra' section")

    generators = data.get("generators")
    if generators is not None and algebra is not None:
        bad = [i for i, g in enumerate(generators) if len(g) != algebra.dim]
        if bad:
            problems.append(f"generators {bad} do not have dimension {algebra.dim}")
        else:
            try:
                GeneratingSet.symmetric(generators, ring)
            except (LatticeError, RingError, ValueError) as e:
                problems.append(f"generators: {e}")

    phi = data.get("phi")
    if phi is not None and alg is not None:
        rows_ok = all(len(row) == algebra.dim for row in phi)
        tdim = target.dim if target else len(phi)
        if not rows_ok:
            problems.append(f"phi rows must have length {algebra.dim} (source dimension)")
        elif len(phi) != tdim:
            problems.append(f"phi has {len(phi)} rows but the target has dimension {tdim}")
        else:
            try:
                tgt = target.build(ring) if target else NilpotentAlgebra.abelian(len(phi))
                Homomorphism(phi, alg, tgt, ring)
            except (HomomorphismError, RingError, AlgebraError, ValueError) as e:
                problems.append(f"phi: {e}")

    norm = None
    if "norm" in data and alg is not None:
        n = data["norm"]
        r = alg.nil_class
        kinds = n.get("kinds", ["sup"] * r)
        weights = n.get("weights", [1] * r)
        if len(kinds) != r or len(weights) != r:
            problems.append(f"norm: need {r} layer kinds and weights")
        if any(k not in LAYER_KINDS for k in kinds):
            problems.append(f"norm: layer kinds must be among {LAYER_KINDS}")
        if not alg.is_layered:
            problems.append("norm: the algebra's coordinate basis is not layered")
        norm = NormSpec(kinds, weights, bool(n.get("rescale", False)))

    regions = data.get("regions", {})
    region_dims = {}
    for rname, r in regions.items():
        try:
            region_dims[rname] = BoxRegion(r["boxes"], fold=bool(r.get("fold", False))).dim
        except (KeyError, TypeError, ValueError) as e:
            problems.append(f"region {rname!r}: {e}")

    walk = None
    if "walk" in data and algebra is not None:
        w = data["walk"]
        try:
            walk = WalkSpec(w["support"], [str(p) for p in w["probs"]], w.get("mode", "exact"),
                            list(w.get("n", [])), int(float(w.get("paths", 0))), int(w.get("seed", 0)))
            if any(len(s) != algebra.dim for s in walk.support):
                problems.append(f"walk support points must have dimension {algebra.dim}")
            else:
                WalkMeasure(walk.support, [Fraction(p) for p in walk.probs], ring)
            if walk.mode not in ("exact", "montecarlo"):
                problems.append(f"walk.mode must be 'exact' or 'montecarlo', got {walk.mode!r}")
            _check_schedules("walk", w, problems)
        except (KeyError, TypeError) as e:
            problems.append(f"walk: missing or malformed field {e}")
        except (WalkError, RingError, ValueError) as e:
            problems.append(f"walk: {e}")

    experiments = data.get("experiments", {})
    from .experiments import KINDS  # local import: experiments imports this module

    for kind, block in experiments.items():
        if kind not in KINDS:
            problems.append(f"experiments: unknown kind {kind!r}")
            continue
        _check_schedules(f"experiments.{kind}", block, problems)
        refs = [block[k] for k in ("region", "numerator", "denominator") if k in block]
        refs += list(block.get("regions", [])) + list(block.get("boxes", []))
        # fiber regions live in G = φ(N); walk boxes live in the walk's group
        want = (algebra.dim if algebra else None) if kind.startswith("llt") else (
            target.dim if target else (len(phi) if phi else None))
        for ref in refs:
            if ref not in regions:
                problems.append(f"experiments.{kind} refers to unknown region {ref!r}")
            elif ref in region_dims and want is not None and region_dims[ref] != want:
                problems.append(f"experiments.{kind}: region {ref!r} has dimension {region_dims[ref]}, expected {want}")
        if kind == "volume-audit" and "tolerances" in block:
            try:
                AuditTolerances(**block["tolerances"])
            except TypeError as e:
                problems.append(f"experiments.volume-audit.tolerances: {e}")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        name=name, description=data.get("description", ""), seed=int(data.get("seed", 0)),
        workers=data.get("workers"), mem_budget_mb=float(data.get("mem_budget_mb", 2048)),
        ring=ring, algebra=algebra, generators=generators, target=target, phi=phi, norm=norm,
        regions=regions, walk=walk, experiments=experiments, path=str(path),
    )


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    if not text.strip():
        raise ConfigError([f"{path}: empty config file"])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}: parse error: {e}"]) from None
    return parse_config(data, str(path))
