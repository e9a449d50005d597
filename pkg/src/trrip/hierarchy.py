"""Functional multi-level cache model.

Instruction fetches walk L1-I -> L2 -> SLC, data accesses walk L1-D -> L2 ->
SLC.  Any level may be left out of the configuration.  A level's
``inclusion`` describes its relation to the levels directly above it:

* ``inclusive``: evicting a line back-invalidates it above
* ``exclusive``: a victim cache; filled only with the upper level's victims,
  and a demand hit moves the line up
* ``noninclusive``: filled on the way up, no back-invalidation

There is no timing.  Writebacks are not modeled: with an inclusive L2 they
would land on a line that is already present and policies treat them as quiet.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, NamedTuple

from .core import (
    AccessKind,
    CacheGeometry,
    ClassCounters,
    MemoryAccess,
    Temperature,
    TrripError,
    mpki,
)
from .policies import Request, make_policy, normalize_policy_name
from .temperature import TemperatureMap

LEVEL_NAMES = ("l1i", "l1d", "l2", "slc")
INCLUSION_MODES = ("inclusive", "exclusive", "noninclusive")
MEMORY = "mem"


class ConfigError(TrripError, ValueError):
    pass


class TraceRecordError(TrripError, ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass
class LevelConfig:
    capacity: int
    assoc: int
    line_size: int = 64
    policy: str = "lru"
    params: dict = field(default_factory=dict)
    inclusion: str = "noninclusive"
    prefetch_degree: int = 0

    def __post_init__(self):
        if self.inclusion not in INCLUSION_MODES:
            raise ConfigError(f"inclusion must be one of {INCLUSION_MODES}, got {self.inclusion!r}")
        if self.prefetch_degree < 0:
            raise ConfigError("prefetch degree must be non-negative")
        try:
            self.policy = normalize_policy_name(self.policy)
            self.geometry
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def geometry(self) -> CacheGeometry:
        return CacheGeometry(self.capacity, self.assoc, self.line_size)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LevelConfig":
        return cls(**d)


@dataclass
class HierarchyConfig:
    l1i: LevelConfig | None = None
    l1d: LevelConfig | None = None
    l2: LevelConfig | None = None
    slc: LevelConfig | None = None
    seed: int = 0

    def __post_init__(self):
        sizes = {lv.line_size for lv in self.levels().values()}
        if len(sizes) > 1:
            raise ConfigError("all levels must share one line size")
        if not self.levels():
            raise ConfigError("hierarchy has no levels")

    def levels(self) -> dict[str, LevelConfig]:
        return {n: getattr(self, n) for n in LEVEL_NAMES if getattr(self, n) is not None}

    @property
    def line_size(self) -> int:
        return next(iter(self.levels().values())).line_size

    def with_level(self, name: str, **changes) -> "HierarchyConfig":
        lv = getattr(self, name)
        if lv is None:
            raise ConfigError(f"level {name} is not configured")
        return replace(self, **{name: replace(lv, **changes)})

    def with_l2_policy(self, policy: str, **params) -> "HierarchyConfig":
        return self.with_level("l2", policy=policy, params=dict(params))

    def to_dict(self) -> dict:
        d = {n: (lv.to_dict() if lv else None) for n, lv in ((n, getattr(self, n)) for n in LEVEL_NAMES)}
        d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HierarchyConfig":
        kw = {n: LevelConfig.from_dict(d[n]) if d.get(n) else None for n in LEVEL_NAMES}
        return cls(**kw, seed=d.get("seed", 0))

    @classmethod
    def paper_defaults(cls, l2_policy: str = "srrip", **params) -> "HierarchyConfig":
        """64kB/4-way LRU L1s, 512kB/8-way inclusive L2, 1MB/16-way LRU exclusive SLC."""
        return cls(
            l1i=LevelConfig(64 * 1024, 4),
            l1d=LevelConfig(64 * 1024, 4),
            l2=LevelConfig(512 * 1024, 8, policy=l2_policy, params=dict(params), inclusion="inclusive"),
            slc=LevelConfig(1024 * 1024, 16, inclusion="exclusive"),
        )

    @classmethod
    def single_level(cls, sets: int, ways: int, policy: str, line_size: int = 64, **params) -> "HierarchyConfig":
        """Just an L2; every trace record goes straight to it."""
        return cls(l2=LevelConfig(sets * ways * line_size, ways, line_size, policy, dict(params)))


class Cache:
    """One set-associative level.  ``where`` maps resident line -> way."""

    def __init__(self, name: str, cfg: LevelConfig, seed: int = 0):
        geo = cfg.geometry
        self.name = name
        self.sets = geo.set_count
        self.ways = geo.associativity
        self.mask = self.sets - 1
        self.inclusion = cfg.inclusion
        self.prefetch_degree = cfg.prefetch_degree
        params = dict(cfg.params)
        if cfg.policy in ("brrip", "drrip", "emissary") and "seed" not in params:
            params["seed"] = seed
        self.policy = make_policy(cfg.policy, self.sets, self.ways, **params)
        self.lines: list[list[int | None]] = [[None] * self.ways for _ in range(self.sets)]
        self.instr = [[False] * self.ways for _ in range(self.sets)]
        self.where: dict[int, int] = {}
        self.counters = ClassCounters()
        self.evictions = {t.label: 0 for t in Temperature}
        self.invalidations = 0
        self.uppers: list[Cache] = []
        self.lower: Cache | None = None
        self.hit_log: list[bool] | None = None
        self.stream: list[tuple[int, bool, Temperature]] | None = None
        self.miss_log: list | None = None

    def __contains__(self, line: int) -> bool:
        return line in self.where

    def invalidate(self, line: int) -> bool:
        way = self.where.pop(line, None)
        if way is None:
            return False
        s = line & self.mask
        self.lines[s][way] = None
        self.policy.on_invalidate(s, way)
        self.invalidations += 1
        return True

    def resident(self) -> set[int]:
        return set(self.where)


class MissRecord(NamedTuple):
    seq: int
    line: int
    service: str
    temperature: Temperature


@dataclass
class SimResult:
    levels: dict[str, ClassCounters]
    evictions: dict[str, dict[str, int]]
    invalidations: dict[str, int]
    service: dict[str, int]
    retired_instructions: int
    miss_log: list[MissRecord] = field(default_factory=list)
    log_level: str | None = None

    def misses(self, level: str, instr: bool) -> int:
        return self.levels[level].for_class(instr).misses

    def mpki(self, level: str, instr: bool) -> float:
        return mpki(self.misses(level, instr), self.retired_instructions)

    def to_dict(self, include_log: bool = False) -> dict:
        d = {
            "retired_instructions": self.retired_instructions,
            "levels": {n: c.as_dict() for n, c in self.levels.items()},
            "evictions": self.evictions,
            "invalidations": self.invalidations,
            "service": self.service,
            "log_level": self.log_level,
        }
        if include_log:
            d["miss_log"] = [[m.seq, m.line, m.service, m.temperature.label] for m in self.miss_log]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimResult":
        log = [MissRecord(a, b, c, Temperature.from_label(t)) for a, b, c, t in d.get("miss_log", [])]
        return cls(
            {n: ClassCounters.from_dict(c) for n, c in d["levels"].items()},
            d["evictions"],
            d["invalidations"],
            d["service"],
            d["retired_instructions"],
            log,
            d.get("log_level"),
        )

    def to_json(self, include_log: bool = False) -> str:
        return json.dumps(self.to_dict(include_log), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "class", "accesses", "hits", "misses", "mpki"])
        for name, c in self.levels.items():
            for cls_name, instr in (("inst", True), ("data", False)):
                ctr = c.for_class(instr)
                rate = mpki(ctr.misses, self.retired_instructions) if self.retired_instructions else ""
                w.writerow([name, cls_name, ctr.accesses, ctr.hits, ctr.misses, f"{rate:.4f}" if rate != "" else ""])
        return buf.getvalue()


class Hierarchy:
    def __init__(self, config: HierarchyConfig, tmap: TemperatureMap | None = None, log_level: str | None = "l2"):
        self.config = config
        self.tmap = tmap if tmap is not None else TemperatureMap()
        self.line_size = config.line_size
        self.caches = {n: Cache(n, lv, config.seed) for n, lv in config.levels().items()}
        self.instr_path = [self.caches[n] for n in ("l1i", "l2", "slc") if n in self.caches]
        self.data_path = [self.caches[n] for n in ("l1d", "l2", "slc") if n in self.caches]
        for path in (self.instr_path, self.data_path):
            for upper, lower in zip(path, path[1:]):
                if upper not in lower.uppers:
                    lower.uppers.append(upper)
                upper.lower = lower
        heads = {self.instr_path[0].name if self.instr_path else None, self.data_path[0].name if self.data_path else None}
        self.service = {n: 0 for n in self.caches if n not in heads}
        self.service[MEMORY] = 0
        self.retired = 0
        self.seq = 0
        self.log_level = log_level if log_level in self.caches else None
        if self.log_level:
            self.caches[self.log_level].miss_log = []

    def temperature(self, line: int) -> Temperature:
        return self.tmap.lookup(line * self.line_size)

    def access(self, acc: MemoryAccess) -> str:
        """Replay one record; returns the name of the level that served it."""
        kind = acc.kind
        line = acc.vaddr // self.line_size
        if kind == AccessKind.INSTR_FETCH:
            self.retired += 1
            req = Request(line, True, self.tmap.lookup(acc.vaddr), True)
            path = self.instr_path
        elif kind == AccessKind.DATA_LOAD or kind == AccessKind.DATA_STORE:
            req = Request(line, False, Temperature.NONE, True)
            path = self.data_path
        else:
            raise TraceRecordError(self.seq, f"invalid access kind {kind!r}")
        served = self._access(path, 0, req)
        if served != path[0].name:
            self.service[served] += 1
        self.seq += 1
        return served

    def _access(self, path, i, req) -> str:
        cache = path[i]
        line = req.line
        s = line & cache.mask
        way = cache.where.get(line)
        demand = req.demand
        if way is not None:
            if demand:
                ctr = cache.counters.instr if req.instr else cache.counters.data
                ctr.accesses += 1
                ctr.hits += 1
                if cache.hit_log is not None:
                    cache.hit_log.append(True)
                if cache.stream is not None:
                    cache.stream.append((line, req.instr, req.temp))
            if i > 0 and cache.inclusion == "exclusive":
                del cache.where[line]
                cache.lines[s][way] = None
                cache.policy.on_invalidate(s, way)
            else:
                cache.policy.on_hit(s, way, req)
            return cache.name

        if demand:
            ctr = cache.counters.instr if req.instr else cache.counters.data
            ctr.accesses += 1
            ctr.misses += 1
            if cache.hit_log is not None:
                cache.hit_log.append(False)
            if cache.stream is not None:
                cache.stream.append((line, req.instr, req.temp))
            cache.policy.on_miss(s, req)
        served = self._access(path, i + 1, req) if i + 1 < len(path) else MEMORY
        if demand and req.instr and cache.miss_log is not None:
            cache.miss_log.append(MissRecord(self.seq, line, served, req.temp))
        if not (i > 0 and cache.inclusion == "exclusive"):
            self._fill(cache, s, req)
        if demand and cache.prefetch_degree:
            for d in range(1, cache.prefetch_degree + 1):
                pf = line + d
                if pf not in cache.where:
                    temp = self.temperature(pf) if req.instr else Temperature.NONE
                    self._access(path, i, Request(pf, req.instr, temp, False))
        return served

    def _fill(self, cache: Cache, s: int, req: Request) -> None:
        row = cache.lines[s]
        try:
            way = row.index(None)
        except ValueError:
            way = cache.policy.choose_victim(s)
            victim = row[way]
            victim_instr = cache.instr[s][way]
            cache.policy.on_evict(s, way)
            del cache.where[victim]
            row[way] = None
            temp = self.temperature(victim) if victim_instr else Temperature.NONE
            cache.evictions[temp.label] += 1
            if cache.inclusion == "inclusive":
                for upper in cache.uppers:
                    upper.invalidate(victim)
            lower = cache.lower
            if lower is not None and lower.inclusion == "exclusive":
                self._fill(lower, victim & lower.mask, Request(victim, victim_instr, Temperature.NONE, False))
        row[way] = req.line
        cache.instr[s][way] = req.instr
        cache.where[req.line] = way
        cache.policy.on_fill(s, way, req)

    def audit(self) -> list[str]:
        """Inclusion/exclusion violations currently present (empty when healthy)."""
        problems = []
        for cache in self.caches.values():
            for upper in cache.uppers:
                if cache.inclusion == "inclusive" and not upper.where.keys() <= cache.where.keys():
                    problems.append(f"{upper.name} holds lines missing from inclusive {cache.name}")
                if cache.inclusion == "exclusive" and not upper.where.keys().isdisjoint(cache.where.keys()):
                    problems.append(f"{upper.name} and exclusive {cache.name} share lines")
        return problems

    def result(self) -> SimResult:
        levels = {}
        for name, cache in self.caches.items():
            c = cache.counters
            levels[name] = ClassCounters(replace(c.instr), replace(c.data), self.retired)
        log = list(self.caches[self.log_level].miss_log) if self.log_level else []
        return SimResult(
            levels,
            {n: dict(c.evictions) for n, c in self.caches.items()},
            {n: c.invalidations for n, c in self.caches.items()},
            dict(self.service),
            self.retired,
            log,
            self.log_level,
        )


def simulate(
    trace: Iterable[MemoryAccess],
    tmap: TemperatureMap | None = None,
    config: HierarchyConfig | None = None,
    log_level: str | None = "l2",
) -> SimResult:
    """Replay ``trace`` through a fresh hierarchy (the default hierarchy if no config)."""
    h = Hierarchy(config or HierarchyConfig.paper_defaults(), tmap, log_level)
    access = h.access
    for acc in trace:
        access(acc)
    if h.seq == 0:
        raise TraceRecordError(0, "trace is empty")
    return h.result()


def hit_sequence(trace: Iterable[MemoryAccess], config: HierarchyConfig, tmap: TemperatureMap | None = None, level: str = "l2") -> list[bool]:
    """Per-demand-access hit flags observed at ``level``."""
    h = Hierarchy(config, tmap, log_level=None)
    h.caches[level].hit_log = []
    for acc in trace:
        h.access(acc)
    return h.caches[level].hit_log


def level_stream(trace: Iterable[MemoryAccess], config: HierarchyConfig, tmap: TemperatureMap | None = None, level: str = "l2") -> list[tuple[int, bool, Temperature]]:
    """(line, is_instr, temperature) of every demand access reaching ``level``."""
    h = Hierarchy(config, tmap, log_level=None)
    h.caches[level].stream = []
    for acc in trace:
        h.access(acc)
    return h.caches[level].stream


def enforce_inclusion(hierarchy: Hierarchy, level: str, evicted_line: int) -> list[str]:
    """Back-invalidate ``evicted_line`` above ``level``; names of caches that dropped it."""
    return [u.name for u in hierarchy.caches[level].uppers if u.invalidate(evicted_line)]
