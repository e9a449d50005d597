"""
How many hot lines can a set protect?
=====================================

"""

# sweep the number of hot lines sharing an 8-way set, everything else fixed
from trrip.analysis import mpki_reduction
from trrip.hierarchy import HierarchyConfig, simulate
from trrip.traces import PatternSpec, generate

cfg = HierarchyConfig.paper_defaults()

for hot in range(2, 10):
    spec = PatternSpec(hot_lines=hot, cold_lines=16, data_lines=16, target_reuse_distance=11, sets=32, iterations=60)
    trace, tmap = generate(spec)
    base = simulate(trace, tmap, cfg.with_l2_policy("srrip"))
    t1 = simulate(trace, tmap, cfg.with_l2_policy("trrip1"))
    red = mpki_reduction(base, t1)
    print(f"hot={hot}  srrip {base.mpki('l2', True):7.1f}  trrip1 {t1.mpki('l2', True):7.1f}  "
          f"reduction {red['inst']:6.1f}%")

# once hot lines fill the set, the victim search ages every way to distant
# and a hot line goes, whatever its insertion position was
