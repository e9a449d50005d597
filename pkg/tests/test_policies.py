import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reference_model import replay
from trrip.core import Temperature
from trrip.policies import (
    BRRIP,
    CLIP,
    DRRIP,
    LRU,
    POLICIES,
    SHCT_ENTRIES,
    SHCT_MAX,
    SRRIP,
    TRRIP1,
    TRRIP2,
    Belady,
    Emissary,
    Request,
    SetDueling,
    SHiP,
    belady_victim,
    dueling_update,
    make_policy,
    normalize_policy_name,
    optimal_misses,
    ship_signature,
    shct_on_evict,
)

H, W, C, N = Temperature.HOT, Temperature.WARM, Temperature.COLD, Temperature.NONE


def ireq(temp=N, line=1):
    return Request(line, True, temp)


DATA = Request(2, False)


def test_named_levels():
    p = SRRIP(1, 4)
    assert (p.immediate, p.near, p.intermediate, p.distant) == (0, 1, 2, 3)


def test_victim_with_max_present_leaves_rrpvs():
    p = SRRIP(1, 4)
    p.rrpv[0] = [2, 1, 3, 0]
    assert p.choose_victim(0) == 2
    assert p.rrpv[0] == [2, 1, 3, 0]


def test_victim_ages_whole_set():
    p = SRRIP(1, 4)
    p.rrpv[0] = [0, 1, 2, 2]
    assert p.choose_victim(0) == 2
    assert p.rrpv[0] == [1, 2, 3, 3]


def test_victim_from_all_immediate_takes_three_rounds():
    p = SRRIP(1, 4)
    p.rrpv[0] = [0, 0, 0, 0]
    assert p.choose_victim(0) == 0
    assert p.rrpv[0] == [3, 3, 3, 3]


@pytest.mark.parametrize("cls", [SRRIP, TRRIP1, TRRIP2])
def test_trrip_does_not_change_victim_selection(cls):
    rng = random.Random(1)
    for _ in range(200):
        row = [rng.randrange(4) for _ in range(8)]
        a, b = SRRIP(1, 8), cls(1, 8)
        a.rrpv[0], b.rrpv[0] = list(row), list(row)
        assert a.choose_victim(0) == b.choose_victim(0)
        assert a.rrpv == b.rrpv


def test_srrip_insertion_and_hit():
    p = SRRIP(1, 2)
    for r in (ireq(H), ireq(W), DATA):
        p.on_fill(0, 0, r)
        assert p.rrpv[0][0] == 2
    p.rrpv[0][0] = 3
    p.on_hit(0, 0, DATA)
    assert p.rrpv[0][0] == 0


def test_trrip1_rules():
    p = TRRIP1(1, 2)
    p.on_fill(0, 0, ireq(H))
    assert p.rrpv[0][0] == 0
    p.on_fill(0, 1, ireq(W))
    assert p.rrpv[0][1] == 2
    p.rrpv[0][0] = 3
    p.on_hit(0, 0, ireq(H))
    assert p.rrpv[0][0] == 0
    # a hot request from a data access does not exist; data follows SRRIP
    p.on_fill(0, 1, DATA)
    assert p.rrpv[0][1] == 2


def test_trrip2_rules():
    p = TRRIP2(1, 2)
    p.on_fill(0, 0, ireq(W))
    assert p.rrpv[0][0] == 1
    p.on_fill(0, 1, ireq(C))
    assert p.rrpv[0][1] == 2
    p.rrpv[0][0] = 2
    p.on_hit(0, 0, ireq(W))
    assert p.rrpv[0][0] == 1
    p.rrpv[0][0] = 0
    p.on_hit(0, 0, ireq(W))
    assert p.rrpv[0][0] == 0
    p.rrpv[0][1] = 3
    p.on_hit(0, 1, ireq(C))
    assert p.rrpv[0][1] == 2
    p.on_hit(0, 1, ireq(N))
    assert p.rrpv[0][1] == 0
    p.on_fill(0, 0, ireq(H))
    assert p.rrpv[0][0] == 0


def test_policies_store_no_temperature():
    for name in POLICIES:
        p = make_policy(name, 4, 4)
        for w in range(4):
            p.on_fill(0, w, ireq(H, line=w * 4))
            p.on_hit(0, w, ireq(W, line=w * 4))
        for attr, val in vars(p).items():
            cells = [x for row in val for x in row] if isinstance(val, list) and val and isinstance(val[0], list) else []
            assert not any(isinstance(x, Temperature) for x in cells), (name, attr)


def test_brrip_insertion_is_bimodal():
    p = BRRIP(1, 1, seed=3)
    got = []
    for _ in range(32000):
        p.on_fill(0, 0, DATA)
        got.append(p.rrpv[0][0])
    assert set(got) == {2, 3}
    assert abs(got.count(2) / len(got) - 1 / 32) < 0.005


def test_brrip_epsilon_zero_always_distant():
    p = BRRIP(1, 1, epsilon=0.0)
    p.on_fill(0, 0, DATA)
    assert p.rrpv[0][0] == 3


def test_dueling_leaders_for_large_cache():
    d = SetDueling(1024)
    roles = [d.role(s) for s in range(1024)]
    assert roles.count(SetDueling.LEADER_A) == 32 and roles.count(SetDueling.LEADER_B) == 32
    assert d.role(0) == SetDueling.LEADER_A and d.role(1) == SetDueling.LEADER_B and d.role(2) == SetDueling.FOLLOWER


def test_dueling_small_cache_has_one_leader_each():
    d = SetDueling(4)
    assert [d.role(s) for s in range(4)] == [1, 2, 0, 0]


def test_psel_updates():
    d = SetDueling(1024)
    assert d.psel == 511 and not d.uses_b(2)
    assert dueling_update(d, 0) == 512
    assert d.uses_b(2)
    d.psel = 0
    assert dueling_update(d, 1) == 0
    d.psel = 512
    for s in range(2, 32):
        dueling_update(d, s)
    assert d.psel == 512
    assert dueling_update(d, 5, miss_observed=False) == 512
    d.psel = 1023
    assert dueling_update(d, 0) == 1023


def test_drrip_followers_switch_with_psel():
    p = DRRIP(1024, 1, epsilon=0.0)
    p.on_fill(2, 0, DATA)
    assert p.rrpv[2][0] == 2
    p.on_miss(0, DATA)
    p.on_fill(2, 0, DATA)
    assert p.rrpv[2][0] == 3
    # leaders keep their own policy
    p.on_fill(0, 0, DATA)
    assert p.rrpv[0][0] == 2
    p.on_fill(1, 0, DATA)
    assert p.rrpv[1][0] == 3


def test_drrip_ignores_prefetch_misses():
    p = DRRIP(1024, 1)
    p.on_miss(0, Request(1, False, N, False))
    assert p.dueling.psel == 511


def test_clip_variants():
    a, b = CLIP(1, 2, variant="A"), CLIP(1, 2, variant="b")
    for p in (a, b):
        p.on_fill(0, 0, ireq())
        assert p.rrpv[0][0] == 0
        p.on_fill(0, 1, DATA)
        assert p.rrpv[0][1] == 2
    a.on_hit(0, 1, DATA)
    assert a.rrpv[0][1] == 0
    b.rrpv[0][1] = 3
    seen = []
    for _ in range(3):
        b.on_hit(0, 1, DATA)
        seen.append(b.rrpv[0][1])
    assert seen == [2, 1, 1]
    b.rrpv[0][0] = 3
    b.on_hit(0, 0, ireq())
    assert b.rrpv[0][0] == 0
    with pytest.raises(ValueError):
        CLIP(1, 2, variant="C")


def test_clip_dueling_uses_leaders():
    p = CLIP(1024, 1)
    p.rrpv[1][0] = 3
    p.on_hit(1, 0, DATA)
    assert p.rrpv[1][0] == 2
    p.rrpv[0][0] = 3
    p.on_hit(0, 0, DATA)
    assert p.rrpv[0][0] == 0


def test_ship_table_size_is_64kb():
    assert SHCT_ENTRIES * 2 // 8 == 64 * 1024
    assert len(SHiP(1, 1).shct) == SHCT_ENTRIES


def test_ship_signature_range():
    sigs = {ship_signature(x) for x in range(10000)}
    assert all(0 <= s < SHCT_ENTRIES for s in sigs)
    # birthday bound: about n*n/2m = 190 collisions expected
    assert len(sigs) > 9700


def test_shct_training():
    t = bytearray([2])
    assert shct_on_evict(t, 0, False)[0] == 1
    t = bytearray([0])
    assert shct_on_evict(t, 0, False)[0] == 0
    p = SHiP(1, 1)
    sig = ship_signature(1)
    p.on_fill(0, 0, ireq())
    p.on_hit(0, 0, ireq())
    p.on_evict(0, 0)
    assert p.shct[sig] == 2


def test_ship_distant_insertion_after_no_reuse():
    p = SHiP(1, 1)
    p.on_fill(0, 0, ireq())
    assert p.rrpv[0][0] == 2
    p.on_evict(0, 0)
    p.on_fill(0, 0, ireq())
    assert p.rrpv[0][0] == 3
    # data lines never consult the table
    p.on_fill(0, 0, DATA)
    assert p.rrpv[0][0] == 2


def test_ship_counters_saturate():
    p = SHiP(1, 1)
    p.on_fill(0, 0, ireq())
    for _ in range(10):
        p.on_hit(0, 0, ireq())
    assert p.shct[ship_signature(1)] == SHCT_MAX


def test_lru_order():
    p = LRU(1, 4)
    for w in range(4):
        p.on_fill(0, w, DATA)
    p.on_hit(0, 0, DATA)
    assert p.choose_victim(0) == 1
    assert p.recency_ranks(0, [True] * 4) == [3, 0, 1, 2]


def test_emissary_skips_priority_lines():
    p = Emissary(1, 4)
    p.on_fill(0, 0, ireq())
    for w in (1, 2, 3):
        p.on_fill(0, w, DATA)
    assert p.prio[0] == [True, False, False, False]
    assert p.choose_victim(0) == 1


def test_emissary_quota_and_fallback():
    p = Emissary(1, 8)
    for w in range(8):
        p.on_fill(0, w, ireq(line=w))
    assert sum(p.prio[0]) == 4
    q = Emissary(1, 2, priority_ways=2)
    q.on_fill(0, 0, ireq())
    q.on_fill(0, 1, ireq())
    assert q.choose_victim(0) == 0


def test_emissary_prefetch_fill_not_costly():
    p = Emissary(1, 2)
    p.on_fill(0, 0, Request(5, True, N, False))
    assert p.prio[0] == [False, False]


def test_belady_victim_examples():
    A, B, C_ = 10, 11, 12
    assert belady_victim([A, B], [A, A, A]) == 1
    assert belady_victim([A, B], [B, A]) == 0
    assert belady_victim([A, B, C_], [C_, B]) == 0
    assert belady_victim([A, None], [A]) == 1


def test_belady_policy_tracks_time():
    p = Belady(1, 2, future=[1, 2, 3, 1])
    p.on_miss(0, ireq(line=1)); p.on_fill(0, 0, ireq(line=1))
    p.on_miss(0, ireq(line=2)); p.on_fill(0, 1, ireq(line=2))
    p.on_miss(0, ireq(line=3))
    assert p.choose_victim(0) == 1


def test_policy_names():
    assert normalize_policy_name("TRRIP-1") == "trrip1"
    assert normalize_policy_name("S_RRIP") == "srrip"
    with pytest.raises(ValueError, match="valid names"):
        normalize_policy_name("mru")


line_lists = st.lists(st.integers(0, 23), min_size=1, max_size=64)


@settings(max_examples=150, deadline=None)
@given(line_lists, st.lists(st.booleans(), min_size=64, max_size=64), st.sampled_from(sorted(POLICIES)))
def test_single_cache_matches_reference(lines, instr, policy):
    from trrip.hierarchy import Hierarchy, HierarchyConfig
    from trrip.core import MemoryAccess
    from trrip.temperature import TemperatureMap

    # line k lives on page k // 4; pages cycle hot, warm, cold, none
    temps = [H, W, C, N]
    tmap = TemperatureMap(256, {p: temps[p % 4] for p in range(6) if p % 4 != 3})
    label = {H: "hot", W: "warm", C: "cold", N: None}
    trace, acc = [], []
    for ln, k in zip(lines, instr):
        trace.append(MemoryAccess(0 if k else 1, ln * 64, 0))
        acc.append((ln, k, label[tmap.lookup(ln * 64)] if k else None))
    h = Hierarchy(HierarchyConfig.single_level(4, 4, policy), tmap, log_level=None)
    h.caches["l2"].hit_log = []
    for a in trace:
        h.access(a)
    assert h.caches["l2"].hit_log == replay(acc, 4, 4, policy, seed=0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 15), min_size=1, max_size=64))
def test_optimal_is_a_lower_bound(lines):
    from reference_model import RefCache, belady_misses

    best = optimal_misses(lines, 2, 2)
    assert best == belady_misses(lines, 2, 2)
    for name in POLICIES:
        c = RefCache(2, 2, name)
        assert sum(not c.access(x, True, None) for x in lines) >= best
