import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reference_model import threshold_oracle
from trrip.core import MemoryAccess, Temperature
from trrip.temperature import (
    DegenerateProfileError,
    MapFormatError,
    ProfiledBlock,
    ProfileFormatError,
    Relocator,
    Section,
    SectionLayout,
    TemperatureMap,
    ThresholdParams,
    build_page_map,
    classify,
    classify_counts,
    hot_count_threshold,
    layout_sections,
    page_utilization,
    parse_profile,
    profile_from_trace,
    read_profile,
    write_profile,
)

H, W, C, N = Temperature.HOT, Temperature.WARM, Temperature.COLD, Temperature.NONE


def blocks(counts, size=64):
    return [ProfiledBlock(f"b{i}", size, c) for i, c in enumerate(counts)]


def test_threshold_examples():
    assert hot_count_threshold([500, 300, 150, 50], 0.9) == 150
    assert hot_count_threshold([100], 0.5) == 100
    assert hot_count_threshold([10, 10, 10, 10], 1.0) == 10


def test_threshold_is_exact_for_decimal_percentiles():
    # 0.99 * 100 must be 99, not 99.00000000000001 rounded up to 100
    assert hot_count_threshold([1] * 100, 0.99) == 1
    assert hot_count_threshold([50, 49, 1], 0.99) == 49


def test_all_zero_profile_is_degenerate():
    with pytest.raises(DegenerateProfileError):
        classify(blocks([0, 0]))


def test_classify_examples():
    bs = [ProfiledBlock(n, 64, c) for n, c in zip("ABCDE", [500, 300, 150, 50, 0])]
    got = classify(bs, ThresholdParams(0.9, 0.9999))
    assert got == {"A": H, "B": H, "C": H, "D": W, "E": C}
    assert classify([ProfiledBlock("A", 8, 1)], ThresholdParams(0.1, 0.2)) == {"A": H}
    assert classify([ProfiledBlock("A", 8, 100), ProfiledBlock("B", 8, 0)]) == {"A": H, "B": C}


def test_threshold_params_validation():
    with pytest.raises(ValueError):
        ThresholdParams(0.0)
    with pytest.raises(ValueError):
        ThresholdParams(0.99, 0.5)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=15).filter(any), st.sampled_from([0.1, 0.5, 0.9, 0.99, 1.0]))
def test_threshold_matches_candidate_oracle(counts, p):
    assert hot_count_threshold(counts, p) == threshold_oracle(counts, p)


@given(st.lists(st.integers(0, 100), min_size=1, max_size=20).filter(any))
def test_hot_set_grows_with_percentile(counts):
    prev = 0
    for p in [i / 10 for i in range(1, 11)]:
        n = sum(t is H for t in classify_counts(counts, ThresholdParams(p, 1.0)))
        assert n >= prev
        prev = n


@given(st.lists(st.integers(0, 100), min_size=1, max_size=20).filter(any))
def test_percentile_one_makes_every_executed_block_hot(counts):
    temps = classify_counts(counts, ThresholdParams(1.0, 1.0))
    assert all((t is H) == (c > 0) for c, t in zip(counts, temps))


def test_layout_packs_hot_then_warm():
    bs = [ProfiledBlock("X", 4096, 9), ProfiledBlock("Y", 100, 1)]
    lay = layout_sections(bs, {"X": H, "Y": W}, 0x10000, 16)
    assert lay.block_starts == {"X": 0x10000, "Y": 0x11000}
    assert [s.temperature for s in lay.sections] == [H, W]


def test_layout_single_hot_section():
    bs = blocks([5, 7])
    lay = layout_sections(bs, {"b0": H, "b1": H})
    assert len(lay.sections) == 1 and lay.sections[0].size == 128
    # descending count inside the section
    assert lay.sections[0].block_ids == ["b1", "b0"]
    assert lay.hot_fraction() == 1.0


def test_layout_aligns_section_starts():
    bs = [ProfiledBlock("a", 10, 5), ProfiledBlock("b", 10, 0)]
    lay = layout_sections(bs, {"a": H, "b": C}, 0x1000, 16)
    assert lay.block_starts["b"] == 0x1010


def _layout(hot_end, warm_end):
    return SectionLayout(0, [Section(H, 0, hot_end, ["h"]), Section(W, hot_end, warm_end - hot_end, ["w"])], {"h": 0, "w": hot_end})


def test_page_map_on_page_boundaries():
    m, _ = build_page_map(_layout(0x2000, 0x3000), 4096, "unmark")
    assert m.pages == {0: H, 1: H, 2: W}


def test_page_map_unmark_overlap():
    m, _ = build_page_map(_layout(0x1800, 0x3000), 4096, "unmark")
    assert m.pages == {0: H, 2: W}
    assert m.lookup(0x1000) is N


def test_page_map_pad_overlap():
    m, placed = build_page_map(_layout(0x1800, 0x3000), 4096, "pad")
    assert placed.block_starts["w"] == 0x2000
    # the 0x1800-byte warm section now spans 0x2000-0x37ff
    assert m.pages == {0: H, 1: H, 2: W, 3: W}


def test_page_map_rejects_unknown_mode():
    with pytest.raises(ValueError):
        build_page_map(_layout(64, 128), 4096, "merge")


def test_lookup():
    m = TemperatureMap(4096, {3: H})
    assert m.lookup(0x3000) is H
    assert m.lookup(0x5000) is N
    assert TemperatureMap(4096, {0: C}).lookup(0xFFF) is C


def test_page_utilization():
    lay = SectionLayout(0, [Section(H, 0, 100 * 1024), Section(W, 100 * 1024, 25 * 1024)])
    assert page_utilization(lay, 4096) == (25, 7)
    assert page_utilization(lay, 2 * 1024 * 1024) == (1, 1)
    empty = SectionLayout(0, [Section(W, 0, 10)])
    assert page_utilization(empty, 4096)[0] == 0


def test_map_json_and_binary_round_trip(tmp_path):
    m = TemperatureMap(4096, {0: H, 7: W, 2**40: C})
    assert TemperatureMap.from_json(m.to_json()).pages == m.pages
    assert TemperatureMap.from_bytes(m.to_bytes()).pages == m.pages
    for name in ("m.json", "m.bin"):
        m.save(tmp_path / name)
        assert TemperatureMap.load(tmp_path / name).pages == m.pages


@pytest.mark.parametrize("text", ['{"page_size": 4096, "pages": {"1": "lukewarm"}}', "[1]", '{"pages": {}}'])
def test_map_json_errors(text):
    with pytest.raises(MapFormatError):
        TemperatureMap.from_json(text)


def test_map_binary_errors():
    good = TemperatureMap(4096, {1: H}).to_bytes()
    with pytest.raises(MapFormatError):
        TemperatureMap.from_bytes(good[:-1])
    with pytest.raises(MapFormatError):
        TemperatureMap.from_bytes(good[:-1] + bytes([9]))


def test_profile_round_trip(tmp_path):
    bs = blocks([3, 0, 9])
    write_profile(bs, tmp_path / "p.csv")
    assert read_profile(tmp_path / "p.csv") == bs


@pytest.mark.parametrize("text", ["a,64\n", "a,64,x\n", "a,0,5\n", "a,64,1\na,64,2\n", "a,64,-1\n"])
def test_profile_errors(text):
    with pytest.raises(ProfileFormatError):
        parse_profile(text.splitlines())


def test_profile_comments_and_blanks():
    assert parse_profile(["# header", "", "x, 64, 3"]) == [ProfiledBlock("x", 64, 3)]


def test_relocation_moves_hot_code_together():
    trace = [MemoryAccess.fetch(a) for a in [0x0, 0x40, 0x1000, 0x0, 0x1000]] + [MemoryAccess.load(0x9000, 0x1000)]
    bs, starts = profile_from_trace(trace)
    assert [b.count for b in bs] == [2, 1, 2]
    lay = layout_sections(bs, classify(bs, ThresholdParams(0.5)), 0x10000)
    moved = Relocator(bs, starts, lay).relocate(trace)
    assert moved[0].vaddr == 0x10000 and moved[2].vaddr == 0x10040
    # data addresses stay, their pc follows the code
    assert moved[-1].vaddr == 0x9000 and moved[-1].pc == 0x10040


def test_percentile_sweep_on_random_profiles_is_monotone():
    rng = random.Random(5)
    for _ in range(50):
        bs = blocks([rng.randrange(0, 1000) for _ in range(30)] + [1])
        fracs = []
        for p in (0.1, 0.5, 0.9, 0.99, 1.0):
            lay = layout_sections(bs, classify(bs, ThresholdParams(p, 1.0)))
            fracs.append(lay.hot_fraction())
        assert fracs == sorted(fracs)
