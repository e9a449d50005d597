"""Offline analyses: reuse distances, costly-miss coverage, MPKI tables and sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter as _Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .core import CacheGeometry, MemoryAccess, Temperature, UndefinedMetricError
from .hierarchy import MEMORY, HierarchyConfig, MissRecord, SimResult, level_stream, simulate
from .temperature import (
    OVERLAP_MODES,
    ProfiledBlock,
    Relocator,
    TemperatureMap,
    ThresholdParams,
    build_page_map,
    classify,
    layout_sections,
    profile_from_trace,
)

MODES = ("base", "hot_only")
DEFAULT_BIN_STARTS = (0, 5, 9, 13, 17)
COVERAGE_GRID = (1, 5, 10, 25, 50, 100)
SWEEP_AXES = ("percentile_hot", "l2_capacity", "l2_associativity", "page_size", "overlap_mode")
# axes that change classification or layout, and so need a relocated trace
RELAYOUT_AXES = ("percentile_hot", "page_size", "overlap_mode")


def _norm_mode(mode: str) -> str:
    m = mode.lower().replace("-", "_")
    m = {"hotonly": "hot_only"}.get(m, m)
    if m not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return m


# reuse distance


class _Fenwick:
    __slots__ = ("n", "tree")

    def __init__(self, n: int):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i: int, v: int) -> None:
        i += 1
        while i <= self.n:
            self.tree[i] += v
            i += i & -i

    def prefix(self, i: int) -> int:
        """Sum of positions [0, i)."""
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s


def bin_labels(starts: Sequence[int]) -> list[str]:
    labels = []
    for lo, nxt in zip(starts, starts[1:]):
        labels.append(f"{lo}-{nxt - 1}")
    labels.append(f">{starts[-1] - 1}")
    return labels


@dataclass
class ReuseHistogram:
    mode: str
    bin_starts: tuple[int, ...]
    counts: list[int]
    total: int
    distances: list[int] = field(default_factory=list, repr=False)

    @property
    def labels(self) -> list[str]:
        return bin_labels(self.bin_starts)

    def fractions(self) -> list[float]:
        return [c / self.total if self.total else 0.0 for c in self.counts]

    def dominant_bin(self) -> str | None:
        if not self.total:
            return None
        return self.labels[max(range(len(self.counts)), key=self.counts.__getitem__)]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "bins": self.labels,
            "counts": self.counts,
            "total": self.total,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "reuse_distance", "accesses", "fraction"])
        for label, c, f in zip(self.labels, self.counts, self.fractions()):
            w.writerow([self.mode, label, c, f"{f:.6f}"])
        return buf.getvalue()


def histogram(distances: Sequence[int], mode: str = "base", bin_starts: Sequence[int] = DEFAULT_BIN_STARTS) -> ReuseHistogram:
    starts = tuple(bin_starts)
    if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
        raise ValueError("bin starts must begin at 0 and strictly increase")
    counts = [0] * len(starts)
    for d in distances:
        # bisect on a handful of edges; a linear scan is just as fast here
        i = len(starts) - 1
        while starts[i] > d:
            i -= 1
        counts[i] += 1
    return ReuseHistogram(_norm_mode(mode), starts, counts, len(distances), list(distances))


def stream_reuse_distances(stream: Iterable[tuple[int, bool]], sets: int, mode: str = "base") -> list[int]:
    """Reuse distance of every hot-line re-access in ``stream``.

    ``stream`` yields ``(line, hot)`` pairs.  Distances are counted per set
    (``line % sets``) and listed in stream order.
    """
    mode = _norm_mode(mode)
    hot_only = mode == "hot_only"
    by_set: dict[int, list[tuple[int, int, bool]]] = {}
    for pos, (line, hot) in enumerate(stream):
        by_set.setdefault(line % sets, []).append((pos, line, hot))

    found: list[tuple[int, int]] = []
    for accesses in by_set.values():
        tree = _Fenwick(len(accesses))
        last: dict[int, int] = {}
        # position of each line's latest counted access; the tree holds a 1 there
        marked: dict[int, int] = {}
        for t, (pos, line, hot) in enumerate(accesses):
            prev = last.get(line)
            if prev is not None and hot:
                found.append((pos, tree.prefix(t) - tree.prefix(prev + 1)))
            if hot or not hot_only:
                old = marked.get(line)
                if old is not None:
                    tree.add(old, -1)
                tree.add(t, 1)
                marked[line] = t
            last[line] = t
    found.sort()
    return [d for _, d in found]


def _hot_stream(trace: Iterable[MemoryAccess], tmap: TemperatureMap, line_size: int):
    for acc in trace:
        hot = acc.kind == 0 and tmap.lookup(acc.vaddr) is Temperature.HOT
        yield acc.vaddr // line_size, hot


def reuse_distances(
    trace: Sequence[MemoryAccess],
    tmap: TemperatureMap,
    geometry: CacheGeometry,
    mode: str = "base",
    bin_starts: Sequence[int] = DEFAULT_BIN_STARTS,
    source: str = "l2",
    config: HierarchyConfig | None = None,
) -> ReuseHistogram:
    """Histogram of hot-line reuse distances at the granularity of ``geometry``'s sets.

    With ``source="l2"`` the measured stream is what reaches the L2 of
    ``config`` (the default hierarchy with ``geometry`` as L2 if omitted); with
    ``source="raw"`` it is the trace itself.
    """
    if source == "raw":
        stream = _hot_stream(trace, tmap, geometry.line_size_bytes)
    elif source == "l2":
        if config is None:
            config = HierarchyConfig.paper_defaults().with_level(
                "l2", capacity=geometry.capacity_bytes, assoc=geometry.associativity, line_size=geometry.line_size_bytes
            )
        stream = ((line, instr and temp is Temperature.HOT) for line, instr, temp in level_stream(trace, config, tmap))
    else:
        raise ValueError(f"source must be 'l2' or 'raw', got {source!r}")
    return histogram(stream_reuse_distances(stream, geometry.set_count, mode), mode, bin_starts)


# costly-miss coverage


@dataclass
class CoverageCurve:
    grid: tuple[int, ...]
    coverage: list[float]
    filter: str
    misses: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["filter", "top_percentile", "hot_coverage"])
        for n, c in zip(self.grid, self.coverage):
            w.writerow([self.filter, n, f"{c:.6f}"])
        return buf.getvalue()


SERVICE_RANK = {"slc": 1, MEMORY: 2}


def service_costs(misses: Sequence[MissRecord]) -> list[tuple[int, int]]:
    """Default cost: service level first, then how often the line missed."""
    per_line = _Counter(m.line for m in misses)
    return [(SERVICE_RANK.get(m.service, 0), per_line[m.line]) for m in misses]


def costly_coverage(
    misses: Sequence[MissRecord],
    tmap: TemperatureMap | None = None,
    line_size: int = 64,
    costs: Sequence | Callable[[Sequence[MissRecord]], Sequence] | None = None,
    exclude_external: bool = False,
    grid: Sequence[int] = COVERAGE_GRID,
) -> CoverageCurve:
    """Fraction of the top-N% costliest instruction misses that fall on hot pages.

    Temperatures come from ``tmap`` when given, otherwise from the miss log.
    Equal costs keep log order.  The top N% of k misses is the first
    ceil(N * k / 100).
    """
    misses = list(misses)
    if costs is None:
        costs = service_costs
    if callable(costs):
        costs = costs(misses)
    costs = list(costs)
    if len(costs) != len(misses):
        raise ValueError("need exactly one cost per miss")

    def temp(m):
        return tmap.lookup(m.line * line_size) if tmap is not None else m.temperature

    pairs = [(c, temp(m)) for c, m in zip(costs, misses)]
    if exclude_external:
        pairs = [p for p in pairs if p[1] is not Temperature.NONE]
    label = "exclude_external" if exclude_external else "all"
    if not pairs:
        return CoverageCurve(tuple(grid), [], label, 0)
    order = sorted(range(len(pairs)), key=lambda i: pairs[i][0], reverse=True)
    hot_prefix = [0]
    for i in order:
        hot_prefix.append(hot_prefix[-1] + (pairs[i][1] is Temperature.HOT))
    k = len(pairs)
    coverage = []
    for n in grid:
        top = max(1, math.ceil(n * k / 100))
        coverage.append(hot_prefix[top] / top)
    return CoverageCurve(tuple(grid), coverage, label, k)


# MPKI tables


def percent_reduction(baseline: float, candidate: float) -> float | None:
    """100 * (baseline - candidate) / baseline, or None when the baseline is zero."""
    if baseline == 0:
        return None
    return 100 * (baseline - candidate) / baseline


def mpki_reduction(baseline: SimResult, candidate: SimResult, level: str = "l2") -> dict[str, float | None]:
    if baseline.retired_instructions != candidate.retired_instructions:
        raise ValueError("results come from traces with different retired instruction counts")
    return {
        cls: percent_reduction(baseline.mpki(level, instr), candidate.mpki(level, instr))
        for cls, instr in (("inst", True), ("data", False))
    }


def geomean_reduction(reductions: Iterable[float | None]) -> float | None:
    """Geometric mean of percent reductions taken over (1 + r/100) multipliers.

    Entries that are None (undefined reductions) are skipped.
    """
    factors = [1 + r / 100 for r in reductions if r is not None]
    if not factors:
        return None
    if any(f <= 0 for f in factors):
        raise UndefinedMetricError("a reduction of -100% or below has no geometric mean")
    return 100 * (math.exp(sum(map(math.log, factors)) / len(factors)) - 1)


# sweeps


@dataclass
class SweepRow:
    axis: str
    value: object
    policy: str
    baseline: str
    inst_misses: int
    data_misses: int
    inst_mpki: float
    data_mpki: float
    baseline_inst_mpki: float
    baseline_data_mpki: float
    inst_mpki_reduction: float | None
    data_mpki_reduction: float | None
    hot_line_misses: int
    hot_fraction: float | None


@dataclass
class SweepTable:
    rows: list[SweepRow]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in SweepRow.__dataclass_fields__.values()]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.rows:
            out = []
            for n in names:
                v = getattr(r, n)
                out.append("" if v is None else f"{v:.6f}" if isinstance(v, float) else v)
            w.writerow(out)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=1)


def _point_config(config: HierarchyConfig, axis: str, value) -> HierarchyConfig:
    l2 = config.l2
    if l2 is None:
        raise ValueError("sweeps need an L2 level")
    if axis == "l2_capacity":
        return config.with_level("l2", capacity=int(value))
    if axis == "l2_associativity":
        # capacity stays fixed, so sets shrink as ways grow
        return config.with_level("l2", assoc=int(value))
    return config


def _run_point(job) -> SweepRow:
    axis, value, config, trace, tmap, hot_fraction, policy, params, baseline = job
    cand = simulate(trace, tmap, config.with_l2_policy(policy, **params))
    base = simulate(trace, tmap, config.with_l2_policy(baseline))
    red = mpki_reduction(base, cand)
    return SweepRow(
        axis,
        value,
        policy,
        baseline,
        cand.misses("l2", True),
        cand.misses("l2", False),
        cand.mpki("l2", True),
        cand.mpki("l2", False),
        base.mpki("l2", True),
        base.mpki("l2", False),
        red["inst"],
        red["data"],
        sum(1 for m in cand.miss_log if m.temperature is Temperature.HOT),
        hot_fraction,
    )


def sweep(
    axis: str,
    values: Sequence,
    config: HierarchyConfig,
    trace: Sequence[MemoryAccess],
    tmap: TemperatureMap | None = None,
    profile: tuple[Sequence[ProfiledBlock], dict[str, int]] | None = None,
    params: ThresholdParams = ThresholdParams(),
    page_size: int = 4096,
    overlap_mode: str = "pad",
    policy: str = "trrip1",
    policy_params: dict | None = None,
    baseline: str = "srrip",
    workers: int = 1,
) -> SweepTable:
    """One candidate and one baseline simulation per sweep value.

    Classification-affecting axes re-derive the map from ``profile``
    (``(blocks, original_starts)``, by default profiled from the trace
    itself), lay the code out again and relocate the trace.  The other axes
    reuse ``tmap``, or a map derived once from ``profile`` if ``tmap`` is
    None.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    trace = list(trace)
    needs_layout = axis in RELAYOUT_AXES or tmap is None
    if needs_layout and profile is None:
        profile = profile_from_trace(trace, config.line_size)

    def relayout(p: ThresholdParams, psize: int, mode: str):
        blocks, starts = profile
        layout = layout_sections(blocks, classify(blocks, p))
        pmap, placed = build_page_map(layout, psize, mode)
        return Relocator(blocks, starts, placed).relocate(trace), pmap, placed.hot_fraction()

    jobs = []
    fixed = None
    for v in values:
        cfg = _point_config(config, axis, v)
        if axis in RELAYOUT_AXES:
            p, psize, mode = params, page_size, overlap_mode
            if axis == "percentile_hot":
                p = replace(params, percentile_hot=float(v), percentile_cold=max(float(v), params.percentile_cold))
            elif axis == "page_size":
                psize = int(v)
            elif v not in OVERLAP_MODES:
                raise ValueError(f"overlap mode must be one of {OVERLAP_MODES}, got {v!r}")
            else:
                mode = v
            t, m, hf = relayout(p, psize, mode)
        elif tmap is not None:
            t, m, hf = trace, tmap, None
        else:
            if fixed is None:
                fixed = relayout(params, page_size, overlap_mode)
            t, m, hf = fixed
        jobs.append((axis, v, cfg, t, m, hf, policy, policy_params or {}, baseline))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    return SweepTable(rows)
