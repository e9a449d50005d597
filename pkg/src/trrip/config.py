"""Declarative experiment description, persisted as one JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from os import PathLike

from .core import MemoryAccess
from .hierarchy import ConfigError, HierarchyConfig
from .policies import normalize_policy_name
from .temperature import TemperatureMap
from .traces import PatternSpec, SpecError, generate, read_trace


@dataclass
class ExperimentConfig:
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig.paper_defaults)
    policy: str = "trrip1"
    policy_params: dict = field(default_factory=dict)
    baseline: str = "srrip"
    compare_policies: list = field(default_factory=list)
    trace: str | None = None
    trace_spec: PatternSpec | None = None
    temperature_map: str | None = None
    seed: int = 0
    out_dir: str = "out"
    sweep_axis: str | None = None
    sweep_values: list = field(default_factory=list)

    def __post_init__(self):
        try:
            self.policy = normalize_policy_name(self.policy)
            self.baseline = normalize_policy_name(self.baseline)
            self.compare_policies = [normalize_policy_name(p) for p in self.compare_policies]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.hierarchy.l2 is None:
            raise ConfigError("experiments need an L2 level")

    def to_dict(self) -> dict:
        return {
            "hierarchy": self.hierarchy.to_dict(),
            "policy": self.policy,
            "policy_params": self.policy_params,
            "baseline": self.baseline,
            "compare_policies": self.compare_policies,
            "trace": self.trace,
            "trace_spec": self.trace_spec.to_dict() if self.trace_spec else None,
            "temperature_map": self.temperature_map,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "sweep_axis": self.sweep_axis,
            "sweep_values": self.sweep_values,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        kw = dict(d)
        try:
            if kw.get("hierarchy") is not None:
                kw["hierarchy"] = HierarchyConfig.from_dict(kw["hierarchy"])
            else:
                kw.pop("hierarchy", None)
            if kw.get("trace_spec") is not None:
                kw["trace_spec"] = PatternSpec.from_dict(kw["trace_spec"])
            return cls(**kw)
        except (TypeError, KeyError, SpecError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | PathLike) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_json(f.read())

    def save(self, path: str | PathLike) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    def seeded_hierarchy(self) -> HierarchyConfig:
        h = HierarchyConfig.from_dict(self.hierarchy.to_dict())
        h.seed = self.seed
        return h

    def load_inputs(self) -> tuple[list[MemoryAccess], TemperatureMap]:
        """The trace and temperature map this experiment runs on.

        A trace file wins over a generator spec; an explicit map file wins
        over the generator's map.  With neither, the map is empty.
        """
        tmap = None
        if self.trace is not None:
            trace = read_trace(self.trace)
        elif self.trace_spec is not None:
            spec = PatternSpec.from_dict({**self.trace_spec.to_dict(), "seed": self.seed})
            trace, tmap = generate(spec)
        else:
            raise ConfigError("experiment names neither a trace file nor a trace spec")
        if self.temperature_map is not None:
            tmap = TemperatureMap.load(self.temperature_map)
        return trace, tmap if tmap is not None else TemperatureMap()


def paper_defaults() -> ExperimentConfig:
    text = resources.files("trrip").joinpath("data/paper_defaults.json").read_text()
    return ExperimentConfig.from_json(text)
