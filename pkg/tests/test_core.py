import pytest

from trrip.core import (
    AccessKind,
    CacheGeometry,
    ClassCounters,
    Counter,
    LineClass,
    LineId,
    MemoryAccess,
    Temperature,
    UndefinedMetricError,
    line_of,
    mpki,
    set_index,
)


@pytest.mark.parametrize("vaddr,expected", [(0, 0), (64, 1), (127, 1)])
def test_line_of(vaddr, expected):
    assert line_of(vaddr, 64) == expected


@pytest.mark.parametrize("line,expected", [(0, 0), (256, 0), (257, 1)])
def test_set_index(line, expected):
    assert set_index(line, 256) == expected


def test_mpki_values():
    assert mpki(16680, 1_000_000) == pytest.approx(16.68)
    assert mpki(0, 1000) == 0.0
    assert mpki(5, 1000) == 5.0


def test_mpki_zero_retired_is_undefined():
    with pytest.raises(UndefinedMetricError):
        mpki(3, 0)


def test_temperature_wire_encoding():
    assert [int(t) for t in (Temperature.NONE, Temperature.HOT, Temperature.WARM, Temperature.COLD)] == [0, 1, 2, 3]
    assert Temperature.from_label("warm") is Temperature.WARM
    with pytest.raises(ValueError):
        Temperature.from_label("tepid")


def test_access_constructors():
    f = MemoryAccess.fetch(0x4000)
    assert f.kind is AccessKind.INSTR_FETCH and f.pc == 0x4000
    assert MemoryAccess.load(0x100, 0x4000) == (AccessKind.DATA_LOAD, 0x100, 0x4000)
    assert not MemoryAccess.store(8).kind.is_instr


def test_geometry_set_count():
    assert CacheGeometry(512 * 1024, 8).set_count == 1024
    assert CacheGeometry.from_sets(4, 4).capacity_bytes == 1024


@pytest.mark.parametrize("cap,assoc,line", [(1000, 4, 64), (3 * 64 * 4, 4, 64), (4096, 4, 48), (0, 4, 64)])
def test_geometry_rejects_bad_shapes(cap, assoc, line):
    with pytest.raises(ValueError):
        CacheGeometry(cap, assoc, line)


def test_data_lines_carry_no_temperature():
    LineId(5, LineClass.INSTRUCTION, Temperature.HOT)
    with pytest.raises(ValueError):
        LineId(5, LineClass.DATA, Temperature.HOT)


def test_counters_balance():
    c = Counter()
    for hit in (True, False, False):
        c.record(hit)
    assert (c.accesses, c.hits, c.misses) == (3, 1, 2)
    cc = ClassCounters(c, Counter(2, 0, 2), 1000)
    assert cc.mpki(True) == 2.0 and cc.mpki(False) == 2.0
    assert ClassCounters.from_dict(cc.as_dict()) == cc
