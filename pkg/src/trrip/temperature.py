"""Profile-driven code temperature: classification, section layout and page maps.

The flow mirrors what a PGO toolchain and loader would do: block execution
counts are classified into hot/warm/cold, blocks are packed into one
contiguous section per temperature, and every page covered by a section is
tagged with that temperature.  The resulting :class:`TemperatureMap` stands in
for the page-table attribute bits that travel with instruction requests.
"""

from __future__ import annotations

import bisect
import json
import math
import struct
from collections import Counter as _Counter
from dataclasses import dataclass, field
from fractions import Fraction
from os import PathLike
from typing import Iterable, Mapping, Sequence

from .core import MemoryAccess, Temperature, TrripError, is_power_of_two

SECTION_ORDER = (Temperature.HOT, Temperature.WARM, Temperature.COLD)
OVERLAP_MODES = ("pad", "unmark")


class DegenerateProfileError(TrripError, ValueError):
    pass


class ProfileFormatError(TrripError, ValueError):
    pass


class MapFormatError(TrripError, ValueError):
    pass


@dataclass(frozen=True)
class ProfiledBlock:
    block_id: str
    size_bytes: int
    count: int

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError(f"block {self.block_id}: size must be positive")
        if self.count < 0:
            raise ValueError(f"block {self.block_id}: count must be non-negative")


@dataclass(frozen=True)
class ThresholdParams:
    percentile_hot: float = 0.99
    percentile_cold: float = 0.9999

    def __post_init__(self):
        for name in ("percentile_hot", "percentile_cold"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.percentile_cold < self.percentile_hot:
            raise ValueError("percentile_cold must be >= percentile_hot")


def _counts(blocks) -> list[int]:
    return [b.count if isinstance(b, ProfiledBlock) else int(b) for b in blocks]


def count_threshold(total: int, percentile: float) -> int:
    # str() round-trips the float to its shortest decimal so 0.07 * 100 stays 7
    return math.ceil(Fraction(str(percentile)) * total)


def hot_count_threshold(blocks: Iterable, percentile: float) -> int:
    """Smallest count inside the shortest descending prefix covering ``percentile`` of the mass.

    ``blocks`` may be ProfiledBlock objects or bare counts.
    """
    if not 0 < percentile <= 1:
        raise ValueError(f"percentile must lie in (0, 1], got {percentile}")
    counts = sorted(_counts(blocks), reverse=True)
    total = sum(counts)
    if total == 0:
        raise DegenerateProfileError("profile has no executed blocks")
    target = count_threshold(total, percentile)
    running = 0
    for c in counts:
        running += c
        if running >= target:
            return c
    raise AssertionError("unreachable: full prefix always reaches the target")


def classify_counts(counts: Sequence[int], params: ThresholdParams = ThresholdParams()) -> list[Temperature]:
    hot_cut = hot_count_threshold(counts, params.percentile_hot)
    cold_cut = hot_count_threshold(counts, params.percentile_cold)
    out = []
    for c in counts:
        if c > 0 and c >= hot_cut:
            out.append(Temperature.HOT)
        elif c == 0 or c < cold_cut:
            out.append(Temperature.COLD)
        else:
            out.append(Temperature.WARM)
    return out


def classify(blocks: Sequence[ProfiledBlock], params: ThresholdParams = ThresholdParams()) -> dict[str, Temperature]:
    temps = classify_counts([b.count for b in blocks], params)
    return {b.block_id: t for b, t in zip(blocks, temps)}


@dataclass
class Section:
    temperature: Temperature
    start: int
    size: int
    block_ids: list[str] = field(default_factory=list)

    @property
    def end(self) -> int:
        return self.start + self.size


@dataclass
class SectionLayout:
    base_vaddr: int
    sections: list[Section]
    block_starts: dict[str, int] = field(default_factory=dict)

    def section(self, temp: Temperature) -> Section | None:
        for s in self.sections:
            if s.temperature is temp:
                return s
        return None

    def size_of(self, temp: Temperature) -> int:
        s = self.section(temp)
        return s.size if s else 0

    @property
    def total_size(self) -> int:
        return sum(s.size for s in self.sections)

    def hot_fraction(self) -> float:
        total = self.total_size
        return self.size_of(Temperature.HOT) / total if total else 0.0


def _align_up(x: int, a: int) -> int:
    return -(-x // a) * a


def layout_sections(
    blocks: Sequence[ProfiledBlock],
    temperatures: Mapping[str, Temperature],
    base_vaddr: int = 0x10000,
    alignment: int = 16,
) -> SectionLayout:
    """Pack blocks into contiguous hot, warm and cold sections.

    Within a section blocks are ordered by descending count (profile order
    breaks ties).  Each section start is aligned to ``alignment``; blocks
    themselves are packed back to back.
    """
    if alignment <= 0:
        raise ValueError("alignment must be positive")
    by_temp: dict[Temperature, list[ProfiledBlock]] = {t: [] for t in SECTION_ORDER}
    for b in blocks:
        t = temperatures[b.block_id]
        if t is Temperature.NONE:
            raise ValueError(f"block {b.block_id} is unclassified")
        by_temp[t].append(b)

    sections = []
    starts: dict[str, int] = {}
    cursor = base_vaddr
    for t in SECTION_ORDER:
        members = sorted(by_temp[t], key=lambda b: -b.count)
        if not members:
            continue
        cursor = _align_up(cursor, alignment)
        sec = Section(t, cursor, 0)
        for b in members:
            starts[b.block_id] = cursor + sec.size
            sec.size += b.size_bytes
            sec.block_ids.append(b.block_id)
        sections.append(sec)
        cursor = sec.end
    return SectionLayout(base_vaddr, sections, starts)


def pad_layout(layout: SectionLayout, page_size: int) -> SectionLayout:
    """Shift sections so each one starts on a fresh page."""
    sections = []
    starts = {}
    cursor = layout.base_vaddr
    for sec in layout.sections:
        new_start = _align_up(max(cursor, sec.start), page_size)
        delta = new_start - sec.start
        sections.append(Section(sec.temperature, new_start, sec.size, list(sec.block_ids)))
        for bid in sec.block_ids:
            starts[bid] = layout.block_starts[bid] + delta
        cursor = new_start + sec.size
    return SectionLayout(layout.base_vaddr, sections, starts)


class TemperatureMap:
    """Page number -> temperature.  Unmapped pages read as NONE."""

    def __init__(self, page_size: int = 4096, pages: Mapping[int, Temperature] | None = None):
        if not is_power_of_two(page_size):
            raise ValueError(f"page size {page_size} is not a power of two")
        self.page_size = page_size
        self.page_shift = page_size.bit_length() - 1
        self.pages: dict[int, Temperature] = {}
        for p, t in (pages or {}).items():
            if t is not Temperature.NONE:
                self.pages[int(p)] = Temperature(t)

    def lookup(self, vaddr: int) -> Temperature:
        return self.pages.get(vaddr >> self.page_shift, Temperature.NONE)

    def mark_range(self, start: int, end: int, temp: Temperature) -> None:
        """Tag every page touching [start, end)."""
        if end <= start:
            return
        for p in range(start >> self.page_shift, ((end - 1) >> self.page_shift) + 1):
            self.pages[p] = temp

    def counts(self) -> dict[Temperature, int]:
        return dict(_Counter(self.pages.values()))

    def __len__(self):
        return len(self.pages)

    def __eq__(self, other):
        if not isinstance(other, TemperatureMap):
            return NotImplemented
        return self.page_size == other.page_size and self.pages == other.pages

    def __repr__(self):
        return f"TemperatureMap(page_size={self.page_size}, pages={len(self.pages)})"

    # serialization

    def to_json(self) -> str:
        doc = {
            "page_size": self.page_size,
            "pages": {str(p): self.pages[p].label for p in sorted(self.pages)},
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TemperatureMap":
        try:
            doc = json.loads(text)
            pages = {int(k): Temperature.from_label(v) for k, v in doc["pages"].items()}
            return cls(int(doc["page_size"]), pages)
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"bad temperature map document: {exc}") from exc

    _HEAD = struct.Struct("<Q")
    _ENTRY = struct.Struct("<QB")

    def to_bytes(self) -> bytes:
        parts = [self._HEAD.pack(self.page_size)]
        parts.extend(self._ENTRY.pack(p, int(self.pages[p])) for p in sorted(self.pages))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TemperatureMap":
        if len(data) < cls._HEAD.size:
            raise MapFormatError("truncated map header")
        (page_size,) = cls._HEAD.unpack_from(data)
        body = memoryview(data)[cls._HEAD.size :]
        if len(body) % cls._ENTRY.size:
            raise MapFormatError(f"truncated map entry at offset {len(data) - len(body) % cls._ENTRY.size}")
        pages = {}
        for i, (page, code) in enumerate(cls._ENTRY.iter_unpack(body)):
            if code > 3:
                raise MapFormatError(f"bad temperature code {code} at offset {cls._HEAD.size + i * cls._ENTRY.size + 8}")
            pages[page] = Temperature(code)
        return cls(page_size, pages)

    def save(self, path: str | PathLike) -> None:
        path = str(path)
        if path.endswith(".json"):
            with open(path, "w") as f:
                f.write(self.to_json() + "\n")
        else:
            with open(path, "wb") as f:
                f.write(self.to_bytes())

    @classmethod
    def load(cls, path: str | PathLike) -> "TemperatureMap":
        path = str(path)
        if path.endswith(".json"):
            with open(path) as f:
                return cls.from_json(f.read())
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def lookup(tmap: TemperatureMap, vaddr: int) -> Temperature:
    return tmap.lookup(vaddr)


def build_page_map(
    layout: SectionLayout, page_size: int = 4096, overlap_mode: str = "pad"
) -> tuple[TemperatureMap, SectionLayout]:
    """Derive a page map from a section layout.

    Returns the map and the layout it describes, which differs from the input
    only in ``pad`` mode where sections are moved onto page boundaries.  In
    ``unmark`` mode pages shared by sections of different temperatures are
    left unmapped.
    """
    if overlap_mode not in OVERLAP_MODES:
        raise ValueError(f"overlap mode must be one of {OVERLAP_MODES}, got {overlap_mode!r}")
    if overlap_mode == "pad":
        layout = pad_layout(layout, page_size)
    tmap = TemperatureMap(page_size)
    seen: dict[int, set] = {}
    for sec in layout.sections:
        if sec.size == 0:
            continue
        for p in range(sec.start // page_size, (sec.end - 1) // page_size + 1):
            seen.setdefault(p, set()).add(sec.temperature)
    for p, temps in seen.items():
        if len(temps) == 1:
            tmap.pages[p] = next(iter(temps))
    return tmap, layout


def page_utilization(layout: SectionLayout, page_size: int) -> tuple[int, int]:
    """(hot pages, warm pages), each section rounded up to whole pages."""
    return (
        -(-layout.size_of(Temperature.HOT) // page_size),
        -(-layout.size_of(Temperature.WARM) // page_size),
    )


# profile files


def parse_profile(lines: Iterable[str]) -> list[ProfiledBlock]:
    blocks = []
    seen = set()
    for n, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ProfileFormatError(f"line {n}: expected block_id,size_bytes,count")
        bid = fields[0].strip()
        try:
            block = ProfiledBlock(bid, int(fields[1]), int(fields[2]))
        except ValueError as exc:
            raise ProfileFormatError(f"line {n}: {exc}") from exc
        if bid in seen:
            raise ProfileFormatError(f"line {n}: duplicate block id {bid!r}")
        seen.add(bid)
        blocks.append(block)
    return blocks


def read_profile(path: str | PathLike) -> list[ProfiledBlock]:
    with open(path) as f:
        return parse_profile(f)


def write_profile(blocks: Iterable[ProfiledBlock], path: str | PathLike) -> None:
    with open(path, "w") as f:
        for b in blocks:
            f.write(f"{b.block_id},{b.size_bytes},{b.count}\n")


# relayout support


def contiguous_starts(blocks: Sequence[ProfiledBlock], base_vaddr: int) -> dict[str, int]:
    """Block start addresses for an unsplit binary: profile order, packed."""
    starts = {}
    cursor = base_vaddr
    for b in blocks:
        starts[b.block_id] = cursor
        cursor += b.size_bytes
    return starts


def profile_from_trace(
    trace: Iterable[MemoryAccess], block_size: int = 64
) -> tuple[list[ProfiledBlock], dict[str, int]]:
    """One block per executed, ``block_size``-aligned code chunk.

    Returns the blocks (in address order) and their original start addresses.
    """
    counts: dict[int, int] = {}
    for acc in trace:
        if acc.kind == 0:
            chunk = acc.vaddr // block_size
            counts[chunk] = counts.get(chunk, 0) + 1
    blocks = []
    starts = {}
    for chunk in sorted(counts):
        bid = f"{chunk * block_size:#x}"
        blocks.append(ProfiledBlock(bid, block_size, counts[chunk]))
        starts[bid] = chunk * block_size
    return blocks, starts


class Relocator:
    """Maps instruction addresses from an original block placement to a new layout."""

    def __init__(self, blocks: Sequence[ProfiledBlock], original_starts: Mapping[str, int], layout: SectionLayout):
        spans = sorted((original_starts[b.block_id], b.size_bytes, b.block_id) for b in blocks)
        self._starts = [s for s, _, _ in spans]
        self._spans = spans
        self._new = layout.block_starts

    def __call__(self, vaddr: int) -> int:
        i = bisect.bisect_right(self._starts, vaddr) - 1
        if i >= 0:
            start, size, bid = self._spans[i]
            if vaddr < start + size:
                return self._new[bid] + (vaddr - start)
        return vaddr

    def relocate(self, trace: Iterable[MemoryAccess]) -> list[MemoryAccess]:
        out = []
        for acc in trace:
            if acc.kind == 0:
                a = self(acc.vaddr)
                out.append(MemoryAccess(acc.kind, a, a))
            else:
                out.append(MemoryAccess(acc.kind, acc.vaddr, self(acc.pc)))
        return out
