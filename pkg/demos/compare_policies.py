"""
Comparing replacement policies on a mixed-temperature trace
============================================================

"""

# the bundled default experiment: a full-size hierarchy and a synthetic
# trace where hot code lines compete with cold code and data in every set
from trrip.analysis import mpki_reduction
from trrip.config import paper_defaults
from trrip.hierarchy import simulate
from trrip.traces import PatternSpec, generate

cfg = paper_defaults()
print(cfg.trace_spec)

# with 8 hot lines per 8-way set every way is spoken for
trace, tmap = generate(cfg.trace_spec)
print(len(trace), "accesses,", {t.label: n for t, n in tmap.counts().items()}, "pages")

base = simulate(trace, tmap, cfg.hierarchy.with_l2_policy("srrip"))
for policy in cfg.compare_policies:
    res = simulate(trace, tmap, cfg.hierarchy.with_l2_policy(policy))
    red = mpki_reduction(base, res)
    print(f"{policy:9s} inst {res.mpki('l2', True):8.2f}  data {res.mpki('l2', False):8.2f}  "
          f"inst reduction {red['inst']:6.2f}%")

# give the hot lines some room: 6 hot lines leave two ways for interferers
spec = PatternSpec(**{**cfg.trace_spec.to_dict(), "hot_lines": 6})
trace, tmap = generate(spec)
base = simulate(trace, tmap, cfg.hierarchy.with_l2_policy("srrip"))
res = simulate(trace, tmap, cfg.hierarchy.with_l2_policy("trrip1"))
print("hot=6 trrip1 inst reduction", round(mpki_reduction(base, res)["inst"], 2), "%")
