import json

import pytest

from cqednet.cavity_physics import DelayProfile, PulseParams
from cqednet.code_layout import (
    ColoringError,
    StructureKind,
    assign_cavities,
    build_layout,
    build_schedule,
    cycle_time,
    estimate_accumulation,
)
from cqednet.noise_channels import NoiseBudget


def _anticommute(a, b):
    (ka, sa), (kb, sb) = a, b
    return ka != kb and len(set(sa) & set(sb)) % 2 == 1


@pytest.mark.parametrize("d", range(2, 16))
def test_counts(d):
    lay = build_layout(d)
    assert lay.n_data == 2 * d * d - 2 * d + 1
    assert lay.n_stabilizers == 2 * d * (d - 1)
    w = [s.weight for s in lay.stabilizers]
    assert w.count(4) == 2 * (d - 1) * (d - 2)
    assert w.count(3) == 4 * (d - 1)


def test_small_examples():
    assert (build_layout(2).n_data, build_layout(2).n_stabilizers) == (5, 4)
    assert (build_layout(3).n_data, build_layout(3).n_stabilizers) == (13, 12)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 7])
def test_commutation_by_symplectic_product(d):
    lay = build_layout(d)
    ops = [(s.kind, s.support) for s in lay.stabilizers]
    for i, a in enumerate(ops):
        for b in ops[i + 1:]:
            assert not _anticommute(a, b)
    lx, lz = ("X", lay.logical_x), ("Z", lay.logical_z)
    for s in ops:
        assert not _anticommute(s, lx) and not _anticommute(s, lz)
    assert _anticommute(lx, lz)
    assert len(lay.logical_x) == d and len(lay.logical_z) == d


def test_visit_order_is_north_west_east_south():
    lay = build_layout(3)
    for s in lay.stabilizers:
        coords = [lay.coords[q] for q in s.support]
        r0, c0 = s.position
        offsets = [(r - r0, c - c0) for r, c in coords]
        order = [(-1, 0), (0, -1), (0, 1), (1, 0)]
        assert offsets == [o for o in order if o in offsets]


@pytest.mark.parametrize("d", range(2, 16))
@pytest.mark.parametrize("kind", ["4", "d", "n"])
def test_structure_invariants(d, kind):
    st = assign_cavities(build_layout(d), kind)
    lay = st.layout
    for s in lay.stabilizers:
        cavs = [st.cavity_of[q] for q in s.support]
        assert len(set(cavs)) == len(cavs)
    seen = []
    for rnd in st.schedule:
        used = [st.cavity_of[q] for s in rnd for q in lay.stabilizers[s].support]
        assert len(used) == len(set(used))
        seen += rnd
    assert sorted(seen) == list(range(lay.n_stabilizers))
    n_cav, _, n_cir = st.path_totals()
    assert n_cav == 4 * (d - 1) * (2 * d - 1)
    assert all(p.n_cav == s.weight for p, s in zip(st.paths, lay.stabilizers))
    if kind == "n":
        assert st.n_cavities == lay.n_data
        assert st.depth <= 8
        assert n_cir == 2 * (d - 1) * (5 * d - 2)
    elif kind == "4":
        # the 5-qubit d=2 patch only reaches three of the four colors
        assert st.n_cavities == (3 if d == 2 else 4)
        assert st.depth == 2 * d * (d - 1)
    else:
        assert d <= st.n_cavities <= max(5, 2 * d)


def test_structure_examples():
    n3 = assign_cavities(build_layout(3), "n")
    assert n3.n_cavities == 13 and len(set(n3.cavity_of)) == 13
    four3 = assign_cavities(build_layout(3), StructureKind.FOUR)
    assert [len(r) for r in four3.schedule] == [1] * 12
    d5 = assign_cavities(build_layout(5), "d")
    assert 5 <= d5.n_cavities <= 10


def test_single_check_schedule_has_depth_one():
    lay = build_layout(2)
    one = type(lay)(lay.d, lay.coords, lay.stabilizers[:1], lay.logical_x, lay.logical_z)
    assert len(build_schedule(one, list(range(lay.n_data)))) == 1


def test_schedule_is_deterministic():
    a = assign_cavities(build_layout(7), "d")
    b = assign_cavities(build_layout(7), "d")
    assert a.schedule == b.schedule and a.to_json() == b.to_json()


def test_bad_coloring_is_reported():
    import cqednet.code_layout as cl

    original = cl._coloring
    cl._coloring = lambda layout, kind: [0] * layout.n_data
    try:
        with pytest.raises(ColoringError):
            assign_cavities(build_layout(3), "4")
    finally:
        cl._coloring = original


def test_layout_json_dump():
    doc = json.loads(assign_cavities(build_layout(3), "n").to_json())
    assert doc["d"] == 3 and len(doc["stabilizers"]) == 12 and len(doc["qubits"]) == 13


BUDGET = NoiseBudget(p_cav=0.011, p_del=0.003, p_sw=0.005, p_cir=0.007, p_dep=0.0002)
PULSE = PulseParams(10.0)


def test_accumulation_coefficients_at_d2():
    n = estimate_accumulation(assign_cavities(build_layout(2), "n"), BUDGET, PULSE)
    expected_n = 10.0 * 0.0002 + 12 / 5 * (0.011 + 0.003 + 0.005) + 16 / 5 * 0.007
    assert n == pytest.approx(expected_n, rel=1e-12)
    four = estimate_accumulation(assign_cavities(build_layout(2), "4"), BUDGET, PULSE)
    expected_4 = 4 * 10.0 * 0.0002 + 12 / 5 * (0.011 + 0.003 + 0.007) + 16 / 5 * 0.005
    assert four == pytest.approx(expected_4, rel=1e-12)


@pytest.mark.parametrize("d", [3, 5, 9])
def test_accumulation_general_d(d):
    n = 2 * d * d - 2 * d + 1
    got = estimate_accumulation(assign_cavities(build_layout(d), "n"), BUDGET, PULSE)
    expected = (
        10.0 * 0.0002
        + 4 * (d - 1) * (2 * d - 1) / n * (0.011 + 0.003 + 0.005)
        + 2 * (d - 1) * (5 * d - 2) / n * 0.007
    )
    assert got == pytest.approx(expected, rel=1e-12)


def test_dephasing_term_scaling():
    dep_only = NoiseBudget(0.0, 0.0, p_dep=1e-4, profile=DelayProfile.ideal())
    n_vals = [estimate_accumulation(assign_cavities(build_layout(d), "n"), dep_only, PULSE) for d in (3, 5, 7)]
    assert n_vals[0] == n_vals[1] == n_vals[2]
    for d in (3, 5):
        four = estimate_accumulation(assign_cavities(build_layout(d), "4"), dep_only, PULSE)
        assert four == pytest.approx(2 * d * (d - 1) * 10.0 * 1e-4)
    assert estimate_accumulation(assign_cavities(build_layout(3), "d"), NoiseBudget.noiseless(), PULSE) == 0.0


def test_cycle_time():
    st4 = assign_cavities(build_layout(3), "4")
    assert cycle_time(st4, PulseParams(1.0, 6.0)) == pytest.approx(12 * 6.0)
    lay = build_layout(2)
    one = type(lay)(lay.d, lay.coords, lay.stabilizers[:1], lay.logical_x, lay.logical_z)
    single = assign_cavities(one, "n")
    assert cycle_time(single, PulseParams(1.0, 6.0)) == 6.0
    stn = assign_cavities(build_layout(5), "n")
    assert cycle_time(stn, PulseParams(20.0)) == pytest.approx(2 * cycle_time(stn, PulseParams(10.0)))
    assert cycle_time(stn, PulseParams(10.0), latency=1.0) == pytest.approx(stn.depth * 61.0)
