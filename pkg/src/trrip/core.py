"""Shared domain types: accesses, temperatures, cache geometry and counters."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple


class TrripError(Exception):
    """Base class for all errors raised by this package."""


class UndefinedMetricError(TrripError, ValueError):
    pass


class AccessKind(enum.IntEnum):
    INSTR_FETCH = 0
    DATA_LOAD = 1
    DATA_STORE = 2

    @property
    def is_instr(self) -> bool:
        return self is AccessKind.INSTR_FETCH


class Temperature(enum.IntEnum):
    # values are the 2-bit wire encoding used by the binary map format
    NONE = 0
    HOT = 1
    WARM = 2
    COLD = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Temperature":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown temperature {label!r}") from None


class MemoryAccess(NamedTuple):
    """One trace record.  ``pc`` equals ``vaddr`` for instruction fetches."""

    kind: AccessKind
    vaddr: int
    pc: int

    @classmethod
    def fetch(cls, vaddr: int) -> "MemoryAccess":
        return cls(AccessKind.INSTR_FETCH, vaddr, vaddr)

    @classmethod
    def load(cls, vaddr: int, pc: int = 0) -> "MemoryAccess":
        return cls(AccessKind.DATA_LOAD, vaddr, pc)

    @classmethod
    def store(cls, vaddr: int, pc: int = 0) -> "MemoryAccess":
        return cls(AccessKind.DATA_STORE, vaddr, pc)


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class CacheGeometry:
    capacity_bytes: int
    associativity: int
    line_size_bytes: int = 64

    def __post_init__(self):
        if self.capacity_bytes <= 0 or self.associativity <= 0:
            raise ValueError("capacity and associativity must be positive")
        if not is_power_of_two(self.line_size_bytes):
            raise ValueError(f"line size {self.line_size_bytes} is not a power of two")
        way_bytes = self.associativity * self.line_size_bytes
        if self.capacity_bytes % way_bytes:
            raise ValueError(
                f"capacity {self.capacity_bytes} not divisible by "
                f"associativity x line size ({way_bytes})"
            )
        if not is_power_of_two(self.capacity_bytes // way_bytes):
            raise ValueError(f"set count {self.capacity_bytes // way_bytes} is not a power of two")

    @property
    def set_count(self) -> int:
        return self.capacity_bytes // (self.associativity * self.line_size_bytes)

    @classmethod
    def from_sets(cls, sets: int, ways: int, line_size: int = 64) -> "CacheGeometry":
        return cls(sets * ways * line_size, ways, line_size)


class LineClass(enum.IntEnum):
    INSTRUCTION = 0
    DATA = 1


@dataclass(frozen=True)
class LineId:
    line_number: int
    kind_class: LineClass
    temperature: Temperature = Temperature.NONE

    def __post_init__(self):
        if self.kind_class is LineClass.DATA and self.temperature is not Temperature.NONE:
            raise ValueError("data lines never carry a temperature")


def line_of(vaddr: int, line_size: int = 64) -> int:
    return vaddr // line_size


def set_index(line_number: int, set_count: int) -> int:
    return line_number % set_count


def mpki(misses: int, retired: int) -> float:
    """Misses per thousand retired instructions."""
    if retired <= 0:
        raise UndefinedMetricError("MPKI is undefined with zero retired instructions")
    return misses * 1000 / retired


@dataclass
class Counter:
    accesses: int = 0
    hits: int = 0
    misses: int = 0

    def record(self, hit: bool) -> None:
        self.accesses += 1
        if hit:
            self.hits += 1
        else:
            self.misses += 1

    def as_dict(self) -> dict:
        return {"accesses": self.accesses, "hits": self.hits, "misses": self.misses}


@dataclass
class ClassCounters:
    """Hit/miss counters kept separately for instruction and data requests."""

    instr: Counter = field(default_factory=Counter)
    data: Counter = field(default_factory=Counter)
    retired_instructions: int = 0

    def for_class(self, instr: bool) -> Counter:
        return self.instr if instr else self.data

    def mpki(self, instr: bool) -> float:
        return mpki(self.for_class(instr).misses, self.retired_instructions)

    def as_dict(self) -> dict:
        return {
            "instr": self.instr.as_dict(),
            "data": self.data.as_dict(),
            "retired_instructions": self.retired_instructions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassCounters":
        return cls(Counter(**d["instr"]), Counter(**d["data"]), d["retired_instructions"])
