"""Replacement policies for a set-associative cache.

Every policy is bound to one cache (``sets`` x ``ways``) and owns all of its
per-set metadata.  The cache drives it through five hooks:

``on_miss(s, req)``
    a demand miss was observed in set ``s`` (set-dueling bookkeeping)
``choose_victim(s)``
    every way of ``s`` is valid; pick the one to replace
``on_evict(s, way)``
    the line in ``way`` is being replaced
``on_invalidate(s, way)``
    the line in ``way`` was dropped without replacement
``on_fill(s, way, req)`` / ``on_hit(s, way, req)``
    insertion and promotion

Ties are always broken towards the lowest way index.  Policies never store a
line's temperature: it only influences the RRPV chosen when the request that
carries it arrives.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass
from typing import Sequence

from .core import Temperature

HOT = Temperature.HOT
WARM = Temperature.WARM
COLD = Temperature.COLD

SHCT_ENTRIES = 1 << 18
SHCT_MAX = 3
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(slots=True)
class Request:
    """What a cache level sees of one memory request."""

    line: int
    instr: bool
    temp: Temperature = Temperature.NONE
    demand: bool = True


class ReplacementPolicy:
    name = "base"

    def __init__(self, sets: int, ways: int):
        self.sets = sets
        self.ways = ways

    def on_miss(self, s: int, req: Request) -> None:
        pass

    def choose_victim(self, s: int) -> int:
        raise NotImplementedError

    def on_evict(self, s: int, way: int) -> None:
        pass

    def on_invalidate(self, s: int, way: int) -> None:
        pass

    def on_fill(self, s: int, way: int, req: Request) -> None:
        raise NotImplementedError

    def on_hit(self, s: int, way: int, req: Request) -> None:
        raise NotImplementedError


class LRU(ReplacementPolicy):
    name = "lru"

    def __init__(self, sets, ways):
        super().__init__(sets, ways)
        self.stamp = [[0] * ways for _ in range(sets)]
        self._clock = 0

    def _touch(self, s, way):
        self._clock += 1
        self.stamp[s][way] = self._clock

    def on_hit(self, s, way, req):
        self._touch(s, way)

    def on_fill(self, s, way, req):
        self._touch(s, way)

    def choose_victim(self, s):
        row = self.stamp[s]
        return row.index(min(row))

    def recency_ranks(self, s, valid: Sequence[bool]) -> list[int]:
        """Rank of each valid way, 0 = least recent."""
        row = self.stamp[s]
        order = sorted((row[w], w) for w in range(self.ways) if valid[w])
        ranks = [-1] * self.ways
        for r, (_, w) in enumerate(order):
            ranks[w] = r
        return ranks


class SetDueling:
    """Leader-set assignment and a saturating PSEL counter.

    Leader A sets are those with ``s % stride == 0`` and leader B sets those
    with ``s % stride == 1``.  A demand miss in an A leader increments PSEL, a
    miss in a B leader decrements it; followers use policy B while PSEL sits
    in the upper half of its range.
    """

    FOLLOWER, LEADER_A, LEADER_B = 0, 1, 2

    def __init__(self, sets: int, leaders: int = 32, bits: int = 10, initial: int | None = None):
        self.max = (1 << bits) - 1
        self.midpoint = 1 << (bits - 1)
        self.psel = self.midpoint - 1 if initial is None else initial
        if not 0 <= self.psel <= self.max:
            raise ValueError("initial PSEL outside counter range")
        n = leaders if sets >= 2 * leaders else max(1, sets // 4)
        self.leaders = n
        self.stride = sets // n

    def role(self, s: int) -> int:
        r = s % self.stride
        if r == 0:
            return self.LEADER_A
        if r == 1:
            return self.LEADER_B
        return self.FOLLOWER

    def record_miss(self, s: int) -> None:
        r = s % self.stride
        if r == 0:
            if self.psel < self.max:
                self.psel += 1
        elif r == 1:
            if self.psel > 0:
                self.psel -= 1

    def uses_b(self, s: int) -> bool:
        r = s % self.stride
        if r == 0:
            return False
        if r == 1:
            return True
        return self.psel >= self.midpoint


def dueling_update(dueling: SetDueling, s: int, miss_observed: bool = True) -> int:
    if miss_observed:
        dueling.record_miss(s)
    return dueling.psel


class RRIPBase(ReplacementPolicy):
    """Shared RRPV storage and the RRIP eviction search."""

    def __init__(self, sets, ways, rrpv_bits: int = 2):
        super().__init__(sets, ways)
        self.max_rrpv = (1 << rrpv_bits) - 1
        # named levels; for 2 bits these are 0, 1, 2, 3
        self.immediate = 0
        self.near = 1
        self.intermediate = self.max_rrpv - 1
        self.distant = self.max_rrpv
        self.rrpv = [[self.max_rrpv] * ways for _ in range(sets)]

    def choose_victim(self, s):
        row = self.rrpv[s]
        top = self.max_rrpv
        m = max(row)
        if m < top:
            # same result as incrementing every way one step at a time
            delta = top - m
            for i in range(len(row)):
                row[i] += delta
        return row.index(top)

    def insertion(self, s, req) -> int:
        return self.intermediate

    def promotion(self, s, way, req) -> int:
        return self.immediate

    def on_fill(self, s, way, req):
        self.rrpv[s][way] = self.insertion(s, req)

    def on_hit(self, s, way, req):
        self.rrpv[s][way] = self.promotion(s, way, req)


class SRRIP(RRIPBase):
    name = "srrip"


class BRRIP(RRIPBase):
    name = "brrip"

    def __init__(self, sets, ways, rrpv_bits=2, epsilon: float = 1 / 32, seed: int = 0):
        super().__init__(sets, ways, rrpv_bits)
        self.epsilon = epsilon
        self.rng = random.Random(seed)

    def bimodal(self) -> int:
        return self.intermediate if self.rng.random() < self.epsilon else self.distant

    def insertion(self, s, req):
        return self.bimodal()


class DRRIP(BRRIP):
    name = "drrip"

    def __init__(self, sets, ways, rrpv_bits=2, epsilon=1 / 32, seed=0, leaders=32, psel_bits=10, psel_init=None):
        super().__init__(sets, ways, rrpv_bits, epsilon, seed)
        self.dueling = SetDueling(sets, leaders, psel_bits, psel_init)

    def on_miss(self, s, req):
        if req.demand:
            self.dueling.record_miss(s)

    def insertion(self, s, req):
        if self.dueling.uses_b(s):
            return self.bimodal()
        return self.intermediate


class CLIP(RRIPBase):
    """Instruction lines inserted as Immediate.

    Variant ``A`` promotes every hit to Immediate; variant ``B`` never lets a
    data line climb to Immediate (a data hit moves it one step closer, floored
    at Near).  ``dueling`` picks between them per set.
    """

    name = "clip"

    def __init__(self, sets, ways, rrpv_bits=2, variant: str = "dueling", leaders=32, psel_bits=10, psel_init=None):
        super().__init__(sets, ways, rrpv_bits)
        variant = variant.upper() if variant.lower() in ("a", "b") else variant.lower()
        if variant not in ("A", "B", "dueling"):
            raise ValueError(f"CLIP variant must be A, B or dueling, got {variant!r}")
        self.variant = variant
        self.dueling = SetDueling(sets, leaders, psel_bits, psel_init) if variant == "dueling" else None

    def _uses_b(self, s):
        if self.dueling is None:
            return self.variant == "B"
        return self.dueling.uses_b(s)

    def on_miss(self, s, req):
        if self.dueling is not None and req.demand:
            self.dueling.record_miss(s)

    def insertion(self, s, req):
        return self.immediate if req.instr else self.intermediate

    def promotion(self, s, way, req):
        if req.instr or not self._uses_b(s):
            return self.immediate
        cur = self.rrpv[s][way]
        return cur - 1 if cur > self.near else cur


def ship_signature(line: int) -> int:
    """18-bit signature of an instruction line address."""
    h = (line * _GOLDEN) & _MASK64
    h ^= h >> 29
    return h & (SHCT_ENTRIES - 1)


class SHiP(RRIPBase):
    """Signature-based hit prediction applied to instruction lines only.

    The SHCT holds 2^18 two-bit counters (64 kB).  An instruction line whose
    signature counter is zero is inserted as Distant; data lines fall back to
    plain SRRIP.
    """

    name = "ship"

    def __init__(self, sets, ways, rrpv_bits=2, shct_init: int = 1):
        super().__init__(sets, ways, rrpv_bits)
        if not 0 <= shct_init <= SHCT_MAX:
            raise ValueError("shct_init must fit in a 2-bit counter")
        self.shct = bytearray([shct_init]) * SHCT_ENTRIES
        self.sig = [[-1] * ways for _ in range(sets)]
        self.reused = [[False] * ways for _ in range(sets)]

    def on_fill(self, s, way, req):
        self.reused[s][way] = False
        if req.instr:
            sig = ship_signature(req.line)
            self.sig[s][way] = sig
            self.rrpv[s][way] = self.distant if self.shct[sig] == 0 else self.intermediate
        else:
            self.sig[s][way] = -1
            self.rrpv[s][way] = self.intermediate

    def on_hit(self, s, way, req):
        self.rrpv[s][way] = self.immediate
        sig = self.sig[s][way]
        if sig >= 0:
            self.reused[s][way] = True
            if self.shct[sig] < SHCT_MAX:
                self.shct[sig] += 1

    def on_evict(self, s, way):
        sig = self.sig[s][way]
        if sig >= 0:
            shct_on_evict(self.shct, sig, self.reused[s][way])
        self.sig[s][way] = -1

    def on_invalidate(self, s, way):
        self.sig[s][way] = -1


def shct_on_evict(shct: bytearray, signature: int, reused: bool) -> bytearray:
    if not reused and shct[signature] > 0:
        shct[signature] -= 1
    return shct


class Emissary(LRU):
    """LRU with a per-line priority bit protecting costly instruction lines.

    A fill is costly when it comes from a demand instruction miss (optionally
    thinned by ``probability``).  At most ``priority_ways`` lines per set carry
    the bit; victims come from the unprotected ways unless every way is
    protected.
    """

    name = "emissary"

    def __init__(self, sets, ways, priority_ways: int | None = None, probability: float = 1.0, seed: int = 0):
        super().__init__(sets, ways)
        self.quota = ways // 2 if priority_ways is None else priority_ways
        if not 0 <= self.quota <= ways:
            raise ValueError("priority_ways must lie in [0, ways]")
        self.probability = probability
        self.rng = random.Random(seed)
        self.prio = [[False] * ways for _ in range(sets)]

    def costly(self, req) -> bool:
        if not (req.demand and req.instr):
            return False
        return self.probability >= 1.0 or self.rng.random() < self.probability

    def on_fill(self, s, way, req):
        self._touch(s, way)
        row = self.prio[s]
        row[way] = self.costly(req) and sum(row) < self.quota

    def choose_victim(self, s):
        stamps = self.stamp[s]
        prio = self.prio[s]
        best = -1
        for w in range(self.ways):
            if not prio[w] and (best < 0 or stamps[w] < stamps[best]):
                best = w
        if best < 0:
            best = stamps.index(min(stamps))
        return best

    def on_evict(self, s, way):
        self.prio[s][way] = False

    def on_invalidate(self, s, way):
        self.prio[s][way] = False


class TRRIP1(RRIPBase):
    """Hot instruction lines inserted and promoted as Immediate; all else SRRIP."""

    name = "trrip1"

    def insertion(self, s, req):
        if req.instr and req.temp is HOT:
            return self.immediate
        return self.intermediate


class TRRIP2(RRIPBase):
    """TRRIP1 plus Near insertion for warm lines and one-step promotion for warm/cold hits."""

    name = "trrip2"

    def insertion(self, s, req):
        if req.instr:
            if req.temp is HOT:
                return self.immediate
            if req.temp is WARM:
                return self.near
        return self.intermediate

    def promotion(self, s, way, req):
        if req.instr and (req.temp is WARM or req.temp is COLD):
            cur = self.rrpv[s][way]
            return cur - 1 if cur > self.immediate else self.immediate
        return self.immediate


def belady_victim(lines: Sequence[int | None], future: Sequence[int]) -> int:
    """Way whose line is next used farthest in ``future`` (invalid ways first)."""
    best, best_dist = 0, -1
    horizon = len(future) + 1
    for w, line in enumerate(lines):
        if line is None:
            return w
        try:
            dist = future.index(line)
        except ValueError:
            dist = horizon
        if dist > best_dist:
            best, best_dist = w, dist
    return best


class Belady(ReplacementPolicy):
    """Offline optimal replacement for a known access sequence (test oracle).

    ``future`` is the full sequence of line numbers this cache will be asked
    for, in order.  Every demand access must go through ``on_hit`` or
    ``on_miss`` exactly once.
    """

    name = "belady"

    def __init__(self, sets, ways, future: Sequence[int] = ()):
        super().__init__(sets, ways)
        self.uses: dict[int, list[int]] = {}
        for i, line in enumerate(future):
            self.uses.setdefault(line, []).append(i)
        self.lines = [[None] * ways for _ in range(sets)]
        self.now = -1

    def _next_use(self, line):
        uses = self.uses.get(line, ())
        i = bisect.bisect_right(uses, self.now)
        return uses[i] if i < len(uses) else float("inf")

    def on_miss(self, s, req):
        self.now += 1

    def on_hit(self, s, way, req):
        self.now += 1

    def on_fill(self, s, way, req):
        self.lines[s][way] = req.line

    def choose_victim(self, s):
        best, best_next = 0, -1.0
        for w, line in enumerate(self.lines[s]):
            nxt = self._next_use(line)
            if nxt > best_next:
                best, best_next = w, nxt
        return best

    def on_evict(self, s, way):
        self.lines[s][way] = None

    on_invalidate = on_evict


def optimal_misses(lines: Sequence[int], sets: int, ways: int) -> int:
    """Miss count of the Belady policy on one cache fed ``lines`` directly."""
    pol = Belady(sets, ways, lines)
    where: dict[int, tuple[int, int]] = {}
    free = [list(range(ways)) for _ in range(sets)]
    misses = 0
    for line in lines:
        s = line % sets
        req = Request(line, True)
        if line in where:
            pol.on_hit(s, where[line][1], req)
            continue
        misses += 1
        pol.on_miss(s, req)
        if free[s]:
            way = free[s].pop(0)
        else:
            way = pol.choose_victim(s)
            del where[pol.lines[s][way]]
            pol.on_evict(s, way)
        pol.on_fill(s, way, req)
        where[line] = (s, way)
    return misses


POLICIES: dict[str, type[ReplacementPolicy]] = {
    cls.name: cls for cls in (LRU, SRRIP, BRRIP, DRRIP, CLIP, SHiP, Emissary, TRRIP1, TRRIP2)
}


def normalize_policy_name(name: str) -> str:
    key = name.lower().replace("-", "").replace("_", "")
    if key not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; valid names: {', '.join(POLICIES)}")
    return key


def make_policy(name: str, sets: int, ways: int, **params) -> ReplacementPolicy:
    return POLICIES[normalize_policy_name(name)](sets, ways, **params)
