"""
From a block profile to a temperature map
=========================================

"""

# a small profile: block id, size in bytes, execution count
import io

from trrip.temperature import (ThresholdParams, build_page_map, classify, layout_sections,
                               page_utilization, parse_profile)

text = """# id,size,count
main,96,900
loop,64,5000
helper,128,700
init,512,1
error,256,0
log,192,40
"""
blocks = parse_profile(io.StringIO(text))

# hot blocks cover 99% of the execution mass, cold ones the last 0.01%
temps = classify(blocks, ThresholdParams(0.99, 0.9999))
for b in blocks:
    print(f"{b.block_id:7s} {b.count:5d} {temps[b.block_id].label}")

# sections are grouped by temperature, then pages are marked
layout = layout_sections(blocks, temps)
tmap, placed = build_page_map(layout, page_size=256, overlap_mode="pad")
for page, temp in sorted(tmap.pages.items()):
    print(hex(page * 256), temp.label)
print("hot, warm pages", page_utilization(placed, 256))

# unmark mode leaves pages shared by two temperatures unlabelled instead
tmap_u, _ = build_page_map(layout, page_size=256, overlap_mode="unmark")
print(len(tmap.pages), "pages in pad mode,", len(tmap_u.pages), "labelled in unmark mode")
