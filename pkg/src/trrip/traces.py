"""Trace files and synthetic access-pattern generation.

Text format, one record per line::

    I,0x4000,0x4000        # kind (I/L/S), hex vaddr, hex pc

Binary format: a 16-byte header (``b"TRRP"``, u32 version = 1, u64 record
count) followed by 17-byte records (u8 kind 0/1/2, u64 vaddr, u64 pc), all
little-endian.
"""

from __future__ import annotations

import io
import json
import random
import struct
from dataclasses import asdict, dataclass, field, fields
from os import PathLike
from typing import BinaryIO, Iterable, Sequence

from .core import AccessKind, MemoryAccess, Temperature, TrripError
from .temperature import TemperatureMap

MAGIC = b"TRRP"
VERSION = 1
HEADER = struct.Struct("<4sIQ")
RECORD = struct.Struct("<BQQ")
KIND_CHARS = "ILS"
_KINDS = tuple(AccessKind)


class TraceFormatError(TrripError, ValueError):
    def __init__(self, offset: int, message: str):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


class BadMagicError(TraceFormatError):
    pass


class BadVersionError(TraceFormatError):
    pass


class BadKindError(TraceFormatError):
    pass


class TruncatedRecordError(TraceFormatError):
    pass


class RecordCountError(TraceFormatError):
    pass


class TextRecordError(TraceFormatError):
    def __init__(self, offset: int, line_number: int, message: str):
        super().__init__(offset, f"line {line_number}: {message}")
        self.line_number = line_number


class SpecError(TrripError, ValueError):
    pass


# reading and writing


def decode_binary(data: bytes) -> list[MemoryAccess]:
    if len(data) < HEADER.size:
        if data[:4] != MAGIC[: len(data[:4])]:
            raise BadMagicError(0, "not a binary trace")
        raise TruncatedRecordError(len(data), "truncated header")
    magic, version, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(0, f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(4, f"unsupported version {version}")
    body = len(data) - HEADER.size
    full, rest = divmod(body, RECORD.size)
    if rest:
        raise TruncatedRecordError(HEADER.size + full * RECORD.size, "truncated record")
    if full != count:
        raise RecordCountError(8, f"header declares {count} records, file holds {full}")
    out = []
    offset = HEADER.size
    for kind, vaddr, pc in RECORD.iter_unpack(memoryview(data)[HEADER.size :]):
        if kind > 2:
            raise BadKindError(offset, f"invalid kind byte {kind:#04x}")
        out.append(MemoryAccess(_KINDS[kind], vaddr, pc))
        offset += RECORD.size
    return out


def encode_binary(records: Sequence[MemoryAccess]) -> bytes:
    parts = [HEADER.pack(MAGIC, VERSION, len(records))]
    pack = RECORD.pack
    parts.extend(pack(int(r.kind), r.vaddr, r.pc) for r in records)
    return b"".join(parts)


def decode_text(text: str) -> list[MemoryAccess]:
    out = []
    offset = 0
    for n, line in enumerate(text.splitlines(keepends=True), 1):
        body = line.split("#", 1)[0].strip()
        if body:
            parts = [p.strip() for p in body.split(",")]
            if len(parts) != 3:
                raise TextRecordError(offset, n, "expected kind,vaddr,pc")
            k = KIND_CHARS.find(parts[0].upper()) if len(parts[0]) == 1 else -1
            if k < 0:
                raise TextRecordError(offset, n, f"invalid kind {parts[0]!r}")
            try:
                vaddr, pc = int(parts[1], 16), int(parts[2], 16)
            except ValueError:
                raise TextRecordError(offset, n, "addresses must be hexadecimal") from None
            if not (0 <= vaddr < 1 << 64 and 0 <= pc < 1 << 64):
                raise TextRecordError(offset, n, "address outside 64-bit range")
            out.append(MemoryAccess(_KINDS[k], vaddr, pc))
        offset += len(line.encode())
    return out


def encode_text(records: Iterable[MemoryAccess]) -> str:
    return "".join(f"{KIND_CHARS[r.kind]},{r.vaddr:#x},{r.pc:#x}\n" for r in records)


def _resolve_format(fmt: str | None, path: str | None, head: bytes | None) -> str:
    if fmt in ("text", "binary"):
        return fmt
    if fmt is not None:
        raise ValueError(f"trace format must be 'text' or 'binary', got {fmt!r}")
    if head is not None:
        return "binary" if head.startswith(MAGIC) else "text"
    if path and path.endswith((".txt", ".trace.txt", ".csv")):
        return "text"
    return "binary"


def read_trace(source: str | PathLike | BinaryIO, fmt: str | None = None) -> list[MemoryAccess]:
    """Load a whole trace; the format is sniffed from the magic when not given."""
    if isinstance(source, (str, PathLike)):
        with open(source, "rb") as f:
            data = f.read()
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode()
    fmt = _resolve_format(fmt, None, data[:4])
    if fmt == "binary":
        return decode_binary(data)
    try:
        return decode_text(data.decode("ascii"))
    except UnicodeDecodeError as exc:
        raise TextRecordError(exc.start, 0, "non-ASCII byte in text trace") from None


def write_trace(records: Iterable[MemoryAccess], dest: str | PathLike | BinaryIO, fmt: str | None = None) -> None:
    records = list(records)
    path = str(dest) if isinstance(dest, (str, PathLike)) else None
    fmt = _resolve_format(fmt, path, None)
    payload = encode_binary(records) if fmt == "binary" else encode_text(records).encode()
    if path is not None:
        try:
            with open(path, "wb") as f:
                f.write(payload)
        except OSError as exc:
            raise OSError(f"cannot write trace to {path}: {exc}") from exc
    else:
        dest.write(payload)


# generation

PATTERNS = ("hot_loop", "scan", "thrash", "mixed_temperature")
_PATTERN_ALIASES = {"hotloop": "hot_loop", "mixedtemperature": "mixed_temperature"}

# disjoint, page-aligned address regions, one per generator class
REGION_BASE = {
    "hot": 0x1000_0000,
    "warm": 0x2000_0000,
    "cold": 0x3000_0000,
    "data": 0x4000_0000,
    "plain": 0x5000_0000,
}
REGION_SPAN = 0x1000_0000
CLASS_TEMP = {"hot": Temperature.HOT, "warm": Temperature.WARM, "cold": Temperature.COLD}


@dataclass
class PatternSpec:
    pattern: str = "mixed_temperature"
    hot_lines: int = 8
    warm_lines: int = 0
    cold_lines: int = 4
    data_lines: int = 0
    interleave: dict = field(default_factory=lambda: {"warm": 1, "cold": 1, "data": 1})
    iterations: int = 100
    target_reuse_distance: int = 11
    sets: int = 1
    set_stride: int = 1024
    resident_lines: int = 4
    scan_lines: int = 1000
    scan_burst: int = 0
    scan_warmup: int = 1
    working_set: int = 12
    kind: str = "I"
    line_size: int = 64
    page_size: int = 4096
    seed: int = 0

    def __post_init__(self):
        key = self.pattern.lower().replace("-", "_")
        key = _PATTERN_ALIASES.get(key.replace("_", ""), key)
        if key not in PATTERNS:
            raise SpecError(f"unknown pattern {self.pattern!r}; valid: {', '.join(PATTERNS)}")
        self.pattern = key
        for f in ("hot_lines", "warm_lines", "cold_lines", "data_lines", "iterations",
                  "target_reuse_distance", "resident_lines", "scan_lines", "scan_burst", "scan_warmup", "working_set"):
            if getattr(self, f) < 0:
                raise SpecError(f"{f} must be non-negative")
        if self.sets < 1 or self.set_stride < self.sets:
            raise SpecError("need 1 <= sets <= set_stride")
        if self.kind not in ("I", "L", "S"):
            raise SpecError("kind must be I, L or S")
        for k, v in self.interleave.items():
            if k not in ("warm", "cold", "data") or v < 0:
                raise SpecError(f"bad interleave weight {k}={v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PatternSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown PatternSpec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "PatternSpec":
        return cls.from_dict(json.loads(text))


def _apportion(m: int, weights: dict[str, float], caps: dict[str, int]) -> dict[str, int]:
    """Split ``m`` slots by weight, never giving a class more than its cap."""
    share = {c: 0 for c in weights}
    live = {c for c, w in weights.items() if w > 0 and caps[c] > 0}
    left = m
    while left and live:
        total = sum(weights[c] for c in live)
        ideal = {c: left * weights[c] / total for c in live}
        grant = {c: min(int(ideal[c]), caps[c] - share[c]) for c in live}
        given = sum(grant.values())
        if given == 0:
            # hand out single slots by largest remainder, stable by name
            c = max(sorted(live), key=lambda c: ideal[c] - int(ideal[c]))
            grant = {c: 1}
            given = 1
        for c, g in grant.items():
            share[c] += g
        left -= given
        live = {c for c in live if share[c] < caps[c]}
    if left:
        raise SpecError(f"interferer pools cannot supply {m} distinct lines per round")
    return share


class _Emitter:
    def __init__(self, spec: PatternSpec):
        self.spec = spec
        self.tmap = TemperatureMap(spec.page_size)

    def addr(self, region: str, s: int, k: int) -> int:
        line = s + k * self.spec.set_stride
        a = REGION_BASE[region] + line * self.spec.line_size
        if a - REGION_BASE[region] >= REGION_SPAN:
            raise SpecError(f"{region} region overflows its address span")
        return a

    def instr(self, region: str, s: int, k: int) -> MemoryAccess:
        a = self.addr(region, s, k)
        if region in CLASS_TEMP:
            self.tmap.pages[a // self.spec.page_size] = CLASS_TEMP[region]
        return MemoryAccess(AccessKind.INSTR_FETCH, a, a)

    def plain(self, s: int, k: int) -> MemoryAccess:
        a = self.addr("plain", s, k)
        kind = _KINDS[KIND_CHARS.index(self.spec.kind)]
        return MemoryAccess(kind, a, a if kind == AccessKind.INSTR_FETCH else 0)


def _mixed_round_plan(spec: PatternSpec) -> list[list[str]]:
    """Interferer classes to emit after each hot line of a round."""
    m = spec.target_reuse_distance - (spec.hot_lines - 1)
    if spec.hot_lines < 1:
        raise SpecError("mixed_temperature needs at least one hot line")
    if m < 0:
        raise SpecError(
            f"target reuse distance {spec.target_reuse_distance} is below the "
            f"{spec.hot_lines - 1} other hot lines every round touches"
        )
    caps = {"warm": spec.warm_lines, "cold": spec.cold_lines, "data": spec.data_lines}
    weights = {c: spec.interleave.get(c, 0) for c in caps}
    share = _apportion(m, weights, caps)
    slots = [c for c in ("warm", "cold", "data") for _ in range(share[c])]
    random.Random(spec.seed).shuffle(slots)
    h = spec.hot_lines
    return [slots[g * m // h : (g + 1) * m // h] for g in range(h)]


def _per_set(spec: PatternSpec, em: _Emitter, s: int, plan) -> list[MemoryAccess]:
    out = []
    p = spec.pattern
    if p == "hot_loop":
        for _ in range(spec.iterations):
            out.extend(em.instr("hot", s, k) for k in range(spec.hot_lines))
    elif p == "thrash":
        for _ in range(spec.iterations):
            out.extend(em.plain(s, k) for k in range(spec.working_set))
    elif p == "scan":
        # the first scan_warmup resident passes run without scan traffic
        scanning = max(spec.iterations - spec.scan_warmup, 1)
        burst = spec.scan_burst or -(-spec.scan_lines // scanning)
        next_scan = 0
        for it in range(spec.iterations):
            out.extend(em.plain(s, k) for k in range(spec.resident_lines))
            if it < spec.scan_warmup:
                continue
            for _ in range(min(burst, spec.scan_lines - next_scan)):
                out.append(em.plain(s, spec.resident_lines + next_scan))
                next_scan += 1
    else:
        cursor = {"warm": 0, "cold": 0, "data": 0}
        pool = {"warm": spec.warm_lines, "cold": spec.cold_lines, "data": spec.data_lines}
        for _ in range(spec.iterations):
            for k in range(spec.hot_lines):
                hot = em.instr("hot", s, k)
                out.append(hot)
                for c in plan[k]:
                    idx = cursor[c] % pool[c]
                    cursor[c] += 1
                    if c == "data":
                        out.append(MemoryAccess(AccessKind.DATA_LOAD, em.addr("data", s, idx), hot.vaddr))
                    else:
                        out.append(em.instr(c, s, idx))
    return out


def generate(spec: PatternSpec) -> tuple[list[MemoryAccess], TemperatureMap]:
    """Build a trace and its companion temperature map.

    Each of ``spec.sets`` cache sets receives the same access structure on
    its own lines (line numbers ``s + k * set_stride``); per-set streams are
    interleaved one access at a time.
    """
    em = _Emitter(spec)
    plan = _mixed_round_plan(spec) if spec.pattern == "mixed_temperature" else None
    streams = [_per_set(spec, em, s, plan) for s in range(spec.sets)]
    trace = [acc for group in zip(*streams) for acc in group]
    return trace, em.tmap


def mixed_temperature(hot=8, cold=4, target_rd=11, **kw) -> PatternSpec:
    return PatternSpec("mixed_temperature", hot_lines=hot, cold_lines=cold, target_reuse_distance=target_rd, **kw)


def trace_bytes(records: Sequence[MemoryAccess], fmt: str = "binary") -> bytes:
    buf = io.BytesIO()
    write_trace(records, buf, fmt)
    return buf.getvalue()
