"""
Reuse distance of hot lines
===========================

"""

# distances are unique lines seen in the same set between two hot accesses
from trrip.analysis import reuse_distances
from trrip.core import CacheGeometry
from trrip.traces import PatternSpec, generate

spec = PatternSpec(hot_lines=6, warm_lines=4, cold_lines=8, data_lines=8, target_reuse_distance=11,
                   sets=16, set_stride=1024, iterations=40)
trace, tmap = generate(spec)
geo = CacheGeometry(1024 * 8 * 64, 8, 64)

# on the raw trace every hot reuse lands on the target distance
for mode in ("base", "hot_only"):
    h = reuse_distances(trace, tmap, geo, mode, source="raw")
    print(mode, dict(zip(h.labels, h.counts)), "dominant", h.dominant_bin())

# at the L2 the L1s have filtered the stream, so the picture shifts
h = reuse_distances(trace, tmap, geo, "base", source="l2")
print("l2 base", dict(zip(h.labels, h.counts)))
