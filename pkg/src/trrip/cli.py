"""``trrip`` command line: classify, gen-trace, simulate, compare, sweep, reuse.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
Every command writes into an output directory (``--out``, else ``$TRRIP_OUT``,
else the config's ``out_dir``) and leaves an ``experiment.json`` there that
re-runs it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis
from .config import ExperimentConfig, paper_defaults
from .core import Temperature, TrripError
from .hierarchy import ConfigError, HierarchyConfig, TraceRecordError, simulate
from .policies import POLICIES, normalize_policy_name
from .temperature import (
    DegenerateProfileError,
    MapFormatError,
    ProfileFormatError,
    TemperatureMap,
    ThresholdParams,
    build_page_map,
    classify,
    layout_sections,
    page_utilization,
    read_profile,
)
from .traces import PatternSpec, SpecError, TraceFormatError, generate, write_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
DATA_ERRORS = (TraceFormatError, TraceRecordError, ProfileFormatError, MapFormatError, DegenerateProfileError)


class UsageError(Exception):
    pass


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    out = args.out or os.environ.get("TRRIP_OUT") or (cfg.out_dir if cfg else "out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _spec_from_args(args) -> PatternSpec | None:
    if getattr(args, "spec", None):
        try:
            return PatternSpec.from_json(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: not valid JSON ({exc})") from exc
    if getattr(args, "pattern", None) is None:
        return None
    kw = {"pattern": args.pattern}
    for name in ("hot_lines", "warm_lines", "cold_lines", "data_lines", "iterations", "target_reuse_distance",
                 "sets", "set_stride", "resident_lines", "scan_lines", "scan_burst", "working_set"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return PatternSpec(**kw)


def _experiment(args) -> ExperimentConfig:
    """Config file (or bundled defaults) overlaid with explicit flags."""
    cfg = ExperimentConfig.load(args.config) if args.config else paper_defaults()
    d = cfg.to_dict()
    spec = _spec_from_args(args)
    if args.trace:
        d["trace"] = args.trace
        d["trace_spec"] = None
    elif spec is not None:
        d["trace"] = None
        d["trace_spec"] = spec.to_dict()
    if args.map:
        d["temperature_map"] = args.map
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "policy", None):
        d["policy"] = args.policy
    if getattr(args, "baseline", None):
        d["baseline"] = args.baseline
    if getattr(args, "policies", None):
        d["compare_policies"] = [p for p in args.policies.split(",") if p]
    if getattr(args, "axis", None):
        d["sweep_axis"] = args.axis
    if getattr(args, "values", None):
        d["sweep_values"] = [_parse_value(v) for v in args.values.split(",") if v]
    for name, attr in (("l2_capacity", "capacity"), ("l2_assoc", "assoc")):
        v = getattr(args, name, None)
        if v is not None:
            d["hierarchy"]["l2"][attr] = v
    return ExperimentConfig.from_dict(d)


def _parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _persist(out: Path, cfg: ExperimentConfig) -> None:
    # the resolved output path is left out so that reruns elsewhere stay byte-identical
    _write(out, "experiment.json", _dumps(cfg.to_dict()))


# commands


def cmd_classify(args) -> int:
    if not Path(args.profile).is_file():
        raise UsageError(f"profile file not found: {args.profile}")
    blocks = read_profile(args.profile)
    params = ThresholdParams(args.percentile_hot, max(args.percentile_cold, args.percentile_hot))
    temps = classify(blocks, params)
    layout = layout_sections(blocks, temps, base_vaddr=args.base_vaddr)
    tmap, placed = build_page_map(layout, args.page_size, args.overlap_mode)
    out = _out_dir(args)
    tmap.save(out / "temperature_map.json")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["block_id", "size_bytes", "count", "temperature", "vaddr"])
    for b in blocks:
        w.writerow([b.block_id, b.size_bytes, b.count, temps[b.block_id].label, f"{placed.block_starts[b.block_id]:#x}"])
    _write(out, "classification.csv", buf.getvalue())

    hot_pages, warm_pages = page_utilization(placed, args.page_size)
    lines = ["section  start       size  pages"]
    for sec in placed.sections:
        pages = -(-sec.size // args.page_size)
        lines.append(f"{sec.temperature.label:<8} {sec.start:#010x} {sec.size:>6} {pages:>6}")
    lines.append(f"hot/warm pages: {hot_pages}/{warm_pages}")
    lines.append(f"hot fraction: {placed.hot_fraction():.4f}")
    report = "\n".join(lines) + "\n"
    _write(out, "layout.txt", report)
    _write(out, "classify.json", _dumps({
        "percentile_hot": params.percentile_hot,
        "percentile_cold": params.percentile_cold,
        "page_size": args.page_size,
        "overlap_mode": args.overlap_mode,
        "sections": [{"temperature": s.temperature.label, "start": s.start, "size": s.size} for s in placed.sections],
        "hot_pages": hot_pages,
        "warm_pages": warm_pages,
    }))
    print(report, end="")
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    spec = _spec_from_args(args) or PatternSpec()
    if args.seed is not None:
        spec.seed = args.seed
    trace, tmap = generate(spec)
    out = _out_dir(args)
    name = "trace.txt" if args.format == "text" else "trace.bin"
    write_trace(trace, out / name, args.format)
    tmap.save(out / "temperature_map.json")
    _write(out, "trace_spec.json", _dumps(spec.to_dict()))
    counts = tmap.counts()
    _write(out, "gen_trace.csv", "records,hot_pages,warm_pages,cold_pages\n"
           f"{len(trace)},{counts.get(Temperature.HOT, 0)},{counts.get(Temperature.WARM, 0)},{counts.get(Temperature.COLD, 0)}\n")
    print(f"wrote {len(trace)} records to {out / name}")
    return EXIT_OK


def _summary(name: str, res) -> str:
    l2 = res.levels["l2"]
    return (
        f"{name}: retired={res.retired_instructions} "
        f"L2 inst misses={l2.instr.misses} ({res.mpki('l2', True):.3f} MPKI) "
        f"data misses={l2.data.misses} ({res.mpki('l2', False):.3f} MPKI)"
    )


def cmd_simulate(args) -> int:
    cfg = _experiment(args)
    trace, tmap = cfg.load_inputs()
    hcfg = cfg.seeded_hierarchy().with_l2_policy(cfg.policy, **cfg.policy_params)
    res = simulate(trace, tmap, hcfg)
    out = _out_dir(args, cfg)
    _write(out, "result.json", res.to_json(include_log=args.miss_log) + "\n")
    _write(out, "result.csv", res.to_csv())
    _persist(out, cfg)
    print(_summary(cfg.policy, res))
    return EXIT_OK


def _simulate_policy(job):
    trace, tmap, hcfg = job
    return simulate(trace, tmap, hcfg, log_level=None)


def _pool_map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def cmd_compare(args) -> int:
    if args.configs:
        cfgs = [ExperimentConfig.load(p) for p in args.configs]
        sources = {(c.trace, json.dumps(c.trace_spec.to_dict(), sort_keys=True) if c.trace_spec else None,
                    c.temperature_map, c.seed) for c in cfgs}
        if len(sources) > 1:
            raise ConfigError("compared configs do not share one trace and temperature map")
        base = cfgs[0]
        entries = [(c.policy, c.seeded_hierarchy().with_l2_policy(c.policy, **c.policy_params)) for c in cfgs]
        inputs = [(base.trace or "generated", *base.load_inputs())]
        cfg = base
    else:
        cfg = _experiment(args)
        policies = cfg.compare_policies or [cfg.baseline, cfg.policy]
        hier = cfg.seeded_hierarchy()
        entries = [(p, hier.with_l2_policy(p, **(cfg.policy_params if p == cfg.policy else {}))) for p in policies]
        inputs = []
        if args.trace_list:
            maps = args.map_list or []
            if maps and len(maps) != len(args.trace_list):
                raise ConfigError("give one --maps entry per --traces entry, or none")
            for i, t in enumerate(args.trace_list):
                c = ExperimentConfig.from_dict({**cfg.to_dict(), "trace": t, "temperature_map": maps[i] if maps else None})
                inputs.append((t, *c.load_inputs()))
        else:
            inputs.append((cfg.trace or "generated", *cfg.load_inputs()))

    names = [n for n, _ in entries]
    if len(set(names)) != len(names):
        raise ConfigError(f"policy listed twice: {names}")
    jobs = [(trace, tmap, h) for _, trace, tmap in inputs for _, h in entries]
    results = _pool_map(_simulate_policy, jobs, args.workers)

    baseline = names[0]
    header = ["trace", "class", f"{baseline}_mpki"] + [f"{n}_reduction_pct" for n in names[1:]]
    rows = []
    per_policy: dict[str, dict[str, list]] = {n: {"inst": [], "data": []} for n in names[1:]}
    k = len(entries)
    for ti, (label, _, _) in enumerate(inputs):
        res = results[ti * k:(ti + 1) * k]
        for cls, instr in (("inst", True), ("data", False)):
            row = [label, cls, f"{res[0].mpki('l2', instr):.4f}"]
            for n, r in zip(names[1:], res[1:]):
                red = analysis.mpki_reduction(res[0], r)[cls]
                per_policy[n][cls].append(red)
                row.append(_fmt(red))
            rows.append(row)
    if len(inputs) > 1 and len(names) > 1:
        for cls in ("inst", "data"):
            row = ["geomean", cls, ""]
            for n in names[1:]:
                row.append(_fmt(analysis.geomean_reduction(per_policy[n][cls])))
            rows.append(row)

    out = _out_dir(args, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write(out, "compare.csv", buf.getvalue())
    _write(out, "compare.json", _dumps({
        "baseline": baseline,
        "policies": names,
        "rows": [dict(zip(header, r)) for r in rows],
        "raw": [{"trace": inputs[i // k][0], "policy": names[i % k], **results[i].to_dict()} for i in range(len(results))],
    }))
    if not args.configs:
        _persist(out, cfg)
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    for r in [header, *rows]:
        print("  ".join(str(x).rjust(wd) for x, wd in zip(r, widths)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment(args)
    if not cfg.sweep_axis or not cfg.sweep_values:
        raise UsageError("sweep needs --axis and --values (or sweep_axis/sweep_values in the config)")
    trace, tmap = cfg.load_inputs()
    table = analysis.sweep(
        cfg.sweep_axis,
        cfg.sweep_values,
        cfg.seeded_hierarchy(),
        trace,
        tmap if tmap.pages else None,
        policy=cfg.policy,
        policy_params=cfg.policy_params,
        baseline=cfg.baseline,
        workers=args.workers,
    )
    out = _out_dir(args, cfg)
    _write(out, "sweep.csv", table.to_csv())
    _write(out, "sweep.json", table.to_json() + "\n")
    _persist(out, cfg)
    print(table.to_csv(), end="")
    return EXIT_OK


def cmd_reuse(args) -> int:
    cfg = _experiment(args)
    trace, tmap = cfg.load_inputs()
    hcfg = cfg.seeded_hierarchy().with_l2_policy(cfg.baseline)
    geo = hcfg.l2.geometry
    modes = analysis.MODES if args.mode == "both" else (args.mode,)
    hists = [analysis.reuse_distances(trace, tmap, geo, m, source=args.source, config=hcfg) for m in modes]
    out = _out_dir(args, cfg)
    _write(out, "reuse.csv", hists[0].to_csv() + "".join(h.to_csv().split("\n", 1)[1] for h in hists[1:]))
    _write(out, "reuse.json", _dumps({"source": args.source, "histograms": [h.to_dict() for h in hists]}))
    _persist(out, cfg)
    for h in hists:
        print(f"{h.mode}: " + ", ".join(f"{lab}={c}" for lab, c in zip(h.labels, h.counts)) + f" (dominant {h.dominant_bin()})")
    return EXIT_OK


# parser


def _policy_arg(text: str) -> str:
    try:
        return normalize_policy_name(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_pattern_flags(p):
    g = p.add_argument_group("generated trace")
    g.add_argument("--spec", help="PatternSpec JSON file")
    g.add_argument("--pattern", choices=["hot_loop", "scan", "thrash", "mixed_temperature"])
    for flag, dest in (("--hot-lines", "hot_lines"), ("--warm-lines", "warm_lines"), ("--cold-lines", "cold_lines"),
                       ("--data-lines", "data_lines"), ("--iterations", "iterations"),
                       ("--target-rd", "target_reuse_distance"), ("--sets", "sets"), ("--set-stride", "set_stride"),
                       ("--resident-lines", "resident_lines"), ("--scan-lines", "scan_lines"),
                       ("--scan-burst", "scan_burst"), ("--working-set", "working_set")):
        g.add_argument(flag, dest=dest, type=int)


def _add_experiment_flags(p, policy=True):
    p.add_argument("--config", help="ExperimentConfig JSON (default: the bundled default experiment)")
    p.add_argument("--trace", help="trace file (binary or text)")
    p.add_argument("--map", help="temperature map file (.json or binary)")
    p.add_argument("--seed", type=int)
    p.add_argument("--l2-capacity", type=int)
    p.add_argument("--l2-assoc", type=int)
    if policy:
        p.add_argument("--policy", type=_policy_arg, help=f"one of {', '.join(POLICIES)}")
        p.add_argument("--baseline", type=_policy_arg)
    _add_pattern_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trrip", description="Temperature-aware cache replacement experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides $TRRIP_OUT and the config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="classify a block profile and build a page temperature map")
    p.add_argument("profile")
    p.add_argument("--percentile-hot", type=float, default=0.99)
    p.add_argument("--percentile-cold", type=float, default=0.9999)
    p.add_argument("--page-size", type=int, default=4096)
    p.add_argument("--overlap-mode", choices=["pad", "unmark"], default="pad")
    p.add_argument("--base-vaddr", type=lambda s: int(s, 0), default=0x10000)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gen-trace", parents=[common], help="generate a synthetic trace and its temperature map")
    _add_pattern_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["binary", "text"], default="binary")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("simulate", parents=[common], help="run one policy through the hierarchy")
    _add_experiment_flags(p)
    p.add_argument("--miss-log", action="store_true", help="include the L2 instruction miss log in result.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", parents=[common], help="MPKI reductions of several policies against the first")
    _add_experiment_flags(p)
    p.add_argument("--policies", help="comma-separated, baseline first")
    p.add_argument("--configs", nargs="+", help="one ExperimentConfig per policy, all on the same trace")
    p.add_argument("--traces", dest="trace_list", nargs="+", help="several traces; adds a geomean row")
    p.add_argument("--maps", dest="map_list", nargs="+", help="temperature maps matching --traces")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    _add_experiment_flags(p)
    p.add_argument("--axis", choices=analysis.SWEEP_AXES)
    p.add_argument("--values", help="comma-separated")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reuse", parents=[common], help="hot-line reuse distance histogram")
    _add_experiment_flags(p, policy=False)
    p.add_argument("--mode", choices=["base", "hot_only", "both"], default="both")
    p.add_argument("--source", choices=["l2", "raw"], default="l2")
    p.set_defaults(func=cmd_reuse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"trrip: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"trrip: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ConfigError, SpecError, ValueError, TrripError) as exc:
        print(f"trrip: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
