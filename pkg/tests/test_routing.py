import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from abutcheck.abutment import (InstancePlacement, Orientation, Testcell, TestcellKind,
                                enumerate_library, make_type_aa)
from abutcheck.drc import Rule, check_geometry, layout_shapes, net_components
from abutcheck.geometry import Rect, closer_than
from abutcheck.library import Cell, Direction, Pin, PinKind, Shape
from abutcheck.routing import (BLOCKAGE, NO_ACCESS, PIN_BLOCKED, Net, RouteGrid, RouteOptions, Via,
                               _chunk, assign_pin_nets, build_grid, generate_straps, net_order,
                               pad_rect, preroute_power, route, route_testcell, strap_parameters,
                               via_geometry)


def one_instance(cell):
    inst = InstancePlacement("U1", cell.name, (0, 0), Orientation.R0, 0, cell.width, cell.height)
    return Testcell("t", TestcellKind.TYPE_AA, (inst,), Rect(0, 0, cell.width, cell.height), 1, cell.height)


def two_pin_cell(a, b, obs=()):
    pins = (Pin("A", PinKind.SIGNAL, (Shape("M1", Rect(*a)),)),
            Pin("B", PinKind.SIGNAL, (Shape("M1", Rect(*b)),)))
    return Cell("T", 1000, 1200, pins, tuple(Shape("M1", Rect(*r)) for r in obs))


def route_pair(tech, cell):
    tc = one_instance(cell)
    cells = {cell.name: cell}
    nets = [Net("n1", PinKind.SIGNAL, (("U1", "A"), ("U1", "B")))]
    opts = RouteOptions(straps="off")
    rails = preroute_power(tc, tech, opts.min_layer)
    grid = build_grid(tc, cells, tech, opts, nets, rails, [])
    return route(tc, nets, grid, opts, cells, rails), cells


def test_chunk():
    assert _chunk([1], 2) == []
    assert _chunk([1, 2, 3], 2) == [[1, 2, 3]]
    assert _chunk([1, 2, 3, 4], 2) == [[1, 2], [3, 4]]
    assert _chunk([1, 2, 3, 4, 5], 3) == [[1, 2, 3, 4, 5]]
    assert _chunk([1, 2], 3) == [[1, 2]]


def test_random_pairing_uses_every_signal_pin_once(toy_cells):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["NAND2X1"])
    nets = assign_pin_nets(tc, cells, seed=3)
    signal = [t for n in nets if n.kind is PinKind.SIGNAL for t in n.terminals]
    want = [(i.instance_name, p.name) for i in tc.instances for p in cells["NAND2X1"].signal_pins]
    assert sorted(signal) == sorted(want)
    assert [n.name for n in nets] == ["n1", "n2", "n3", "n4", "n5", "n6", "VDD", "VSS"]
    assert nets == assign_pin_nets(tc, cells, seed=3)
    assert any(assign_pin_nets(tc, cells, seed=s) != nets for s in range(4, 10))


def test_aligned_pairing_joins_same_pins(toy_cells):
    cells = {c.name: c for c in toy_cells}
    nets = assign_pin_nets(make_type_aa(cells["INVX1"]), cells, seed=1, pairing="aligned")
    assert nets[0].terminals == (("U1", "A"), ("U2", "A"))
    assert nets[2].terminals == (("U1", "Y"), ("U2", "Y"))


def test_pairing_errors(toy_cells):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["INVX1"])
    with pytest.raises(ValueError):
        assign_pin_nets(tc, cells, 1, net_degree=1)
    with pytest.raises(ValueError):
        assign_pin_nets(tc, cells, 1, pairing="nearest")


def test_few_signal_pins_warns():
    cell = Cell("P", 400, 1200, (Pin("A", PinKind.SIGNAL, (Shape("M1", Rect(0, 0, 50, 50)),)),))
    tc = one_instance(cell)
    warnings = []
    assert assign_pin_nets(tc, {"P": cell}, 1, warnings=warnings) == []
    assert warnings


def test_rails(tech, toy_cells):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["INVX1"])
    rails = preroute_power(tc, tech, "M2")
    assert [w.net for w in rails] == ["VSS", "VDD"]
    assert rails[0].rect == Rect(0, 0, 1600, 50)
    assert rails[1].rect == Rect(0, 1150, 1600, 1200)


class FixedRandom:
    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_strap_parameters_formula():
    assert strap_parameters(FixedRandom(0.5, 0.25), 1000) == (100, 500)
    assert strap_parameters(FixedRandom(0.009, 0.999), 1000) == (0, 1980)
    assert strap_parameters(FixedRandom(0.999, 0.0), 2000) == (396, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_straps_keep_clear_of_power_geometry(tech, toy_cells, seed):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["DFFX1"])
    rails = preroute_power(tc, tech, "M2")
    straps = generate_straps(tc, tech, ["M2", "M3"], seed, rails)
    assert straps == generate_straps(tc, tech, ["M2", "M3"], seed, rails)
    for s in straps:
        rule = tech.layer(s.layer)
        assert tc.die.contains(s.rect)
        if rule.direction is Direction.HORIZONTAL:
            assert s.rect.width == tc.die.width
        else:
            assert s.rect.height == tc.die.height
        for o in rails + straps:
            if o is s or o.layer != s.layer:
                continue
            if o.net != s.net:
                assert not s.rect.intersects(o.rect)
                assert not closer_than(s.rect, o.rect, rule.min_spacing)


def test_via_geometry(tech):
    shapes = via_geometry(tech, Via("n", "V1", (150, 450)))
    assert [(l, role) for l, _, role in shapes] == [("M1", "pad"), ("V1", "via"), ("M2", "pad")]
    m1, cut, m2 = (r for _, r, _ in shapes)
    assert cut == Rect(125, 425, 175, 475)
    assert m1 == Rect(125, 415, 175, 485)  # vertical layer: enclosure along y
    assert m2 == Rect(115, 425, 185, 475)
    assert pad_rect(tech.layer("M2"), tech.layer("V1"), 0, 0).width == 70


def test_grid_tracks_and_window(tech, toy_cells):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["INVX1"])
    grid = RouteGrid(tc, tech, "M2", "M3")
    assert grid.xs[:3] == [50, 150, 250] and grid.xs[-1] == 1550
    assert grid.ys[0] == 50 and grid.ys[-1] == 1150
    assert grid.pin_layer.name == "M1" and grid.pin_cut.name == "V1"
    with pytest.raises(ValueError):
        RouteGrid(tc, tech, "M3", "M2")
    with pytest.raises(ValueError):
        RouteGrid(tc, tech, "M2", "M2")


def test_node_states(tech, toy_cells):
    cells = {c.name: c for c in toy_cells}
    grid = RouteGrid(make_type_aa(cells["INVX1"]), tech, "M2", "M3")
    node = (0, 3, 5)  # M2 at (350, 550)
    assert grid.state(node) == "FREE"
    # a foreign shape 40 away on M2 is closer than the 50 spacing
    grid.add_blockage("VDD", "M2", Rect(300, 615, 400, 700))
    assert grid.state(node) == "BLOCKED(VDD)"
    assert grid.state(node, "VDD") == "FREE"
    grid.occupancy[node] = {"n1"}
    assert grid.state(node, "VDD") == "USED(n1)"


def test_straight_connection(tech):
    cell = two_pin_cell((125, 430, 175, 470), (825, 430, 875, 470))
    routed, cells = route_pair(tech, cell)
    assert routed.unrouted == []
    assert [(w.layer, w.rect) for w in routed.wires] == [("M2", Rect(125, 425, 875, 475))]
    assert [(v.cut_layer, v.center) for v in routed.vias] == [("V1", (150, 450)), ("V1", (850, 450))]


def test_bent_connection_uses_upper_layer(tech):
    cell = two_pin_cell((125, 430, 175, 470), (825, 730, 875, 770))
    routed, cells = route_pair(tech, cell)
    assert routed.unrouted == []
    assert {w.layer for w in routed.wires} == {"M2", "M3"}
    assert sum(1 for v in routed.vias if v.cut_layer == "V2") >= 1
    shapes = layout_shapes(routed, cells, tech)
    assert len(net_components(shapes, tech, "n1")) == 1


def test_pin_without_access_is_pin_blocked(tech):
    # the obstruction touches the only possible landing pad of pin A
    cell = two_pin_cell((125, 430, 175, 470), (825, 430, 875, 470), obs=[(125, 480, 175, 530)])
    routed, _ = route_pair(tech, cell)
    assert routed.unrouted == [("n1", PIN_BLOCKED)]
    assert routed.causes == {"n1": NO_ACCESS}
    assert routed.wires == [] and routed.vias == []


def test_walled_in_pin_is_pin_blocked(tech):
    # M2 walls above and below pin A's only track leave no way out
    cell = two_pin_cell((125, 430, 175, 470), (825, 430, 875, 470))
    tc = one_instance(cell)
    cells = {"T": cell}
    nets = [Net("n1", PinKind.SIGNAL, (("U1", "A"), ("U1", "B")))]
    opts = RouteOptions(straps="off")
    grid = build_grid(tc, cells, tech, opts, nets, [], [])
    grid.add_blockage("VSS", "M2", Rect(250, 0, 300, 1200))
    grid.add_blockage("VSS", "M3", Rect(0, 0, 1000, 1200))
    routed = route(tc, nets, grid, opts, cells)
    assert routed.unrouted == [("n1", PIN_BLOCKED)]
    assert routed.causes["n1"] == BLOCKAGE


def test_net_order_by_half_perimeter(tech):
    cell = two_pin_cell((125, 430, 175, 470), (825, 730, 875, 770))
    tc = one_instance(cell)
    nets = [Net("z", PinKind.SIGNAL, (("U1", "A"), ("U1", "B"))),
            Net("a", PinKind.SIGNAL, (("U1", "A"),)),
            Net("b", PinKind.SIGNAL, (("U1", "B"),))]
    assert net_order(nets, tc, {"T": cell}) == ["a", "b", "z"]


def test_unknown_strap_mode(tech, toy_cells):
    cells = {c.name: c for c in toy_cells}
    with pytest.raises(ValueError):
        route_testcell(make_type_aa(cells["INVX1"]), cells, tech, RouteOptions(straps="dense"))


TOY_TESTCELLS = None


def toy_testcell(toy_cells, k):
    global TOY_TESTCELLS
    if TOY_TESTCELLS is None:
        TOY_TESTCELLS = enumerate_library(toy_cells, "all")
    return TOY_TESTCELLS[k % len(TOY_TESTCELLS)]


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 35), st.integers(0, 10 ** 6), st.sampled_from(["random", "off"]))
def test_routing_is_deterministic_short_free_and_connected(tech, toy_cells, k, seed, straps):
    cells = {c.name: c for c in toy_cells}
    tc = toy_testcell(toy_cells, k)
    opts = RouteOptions(seed=seed, straps=straps)
    routed = route_testcell(tc, cells, tech, opts)
    assert routed.dump() == route_testcell(tc, cells, tech, opts).dump()
    shapes = layout_shapes(routed, cells, tech)
    assert not [v for v in check_geometry(routed, tech, cells, shapes) if v.rule is Rule.SHORT]
    blocked = routed.unrouted_nets
    assert all(reason == PIN_BLOCKED for _, reason in routed.unrouted)
    for net in routed.nets:
        if net.kind is PinKind.SIGNAL and net.name not in blocked:
            assert len(net_components(shapes, tech, net.name)) == 1
    hist = routed.repair_history
    assert hist and all(a >= b for a, b in zip(hist, hist[1:]))


def test_straps_off_routes_every_toy_net(tech, toy_cells):
    cells = {c.name: c for c in toy_cells}
    for tc in enumerate_library(toy_cells, "all"):
        routed = route_testcell(tc, cells, tech, RouteOptions(straps="off"))
        assert routed.unrouted == [], tc.name


def test_dump_lists_geometry(tech):
    cell = two_pin_cell((125, 430, 175, 470), (825, 430, 875, 470))
    routed, _ = route_pair(tech, cell)
    lines = routed.dump().splitlines()
    assert lines[0] == "DESIGN t"
    assert "NEWNET n1 M2 125 425 875 475" in lines
    assert "VIA n1 V1 150 450" in lines


def test_remainder_joins_last_net():
    cell = Cell("F", 1000, 1200, tuple(Pin(n, PinKind.SIGNAL, (Shape("M1", Rect(0, 0, 50, 50)),))
                                     for n in "ABCDE"))
    nets = assign_pin_nets(one_instance(cell), {"F": cell}, seed=1)
    assert sorted(len(n.terminals) for n in nets) == [2, 3]


def test_two_row_testcell_has_three_rails(tech):
    cell = Cell("M", 400, 2400, (Pin("A", PinKind.SIGNAL, (Shape("M1", Rect(0, 0, 50, 50)),)),), (), 2)
    tc = make_type_aa(cell)
    rails = preroute_power(tc, tech, "M2")
    assert [(w.net, w.rect.y_lo) for w in rails] == [("VSS", 0), ("VDD", 1150), ("VSS", 2350)]


def test_strap_width_set():
    widths = {strap_parameters(FixedRandom((u + 0.5) / 100, 0.0), 1000)[0] for u in range(100)}
    assert widths == set(range(0, 200, 2))
    assert strap_parameters(FixedRandom(0.5, 0.5), 1000) == (100, 1000)


def test_open_violations_match_unrouted_nets(tech, toy_cells):
    cells = {c.name: c for c in toy_cells}
    for tc in enumerate_library(toy_cells, "all")[:12]:
        routed = route_testcell(tc, cells, tech, RouteOptions(seed=2))
        opens = {v.nets[0] for v in check_geometry(routed, tech, cells) if v.rule is Rule.OPEN}
        assert opens == routed.unrouted_nets, tc.name
