import itertools

import pytest
from hypothesis import given, settings, strategies as st

from conftest import empty_testcell, fixture_path, load_cells
from abutcheck.abutment import make_type_aa, make_type_ab
from abutcheck.drc import (DptOption, LayoutShape, Rule, Violation, attribute, check_dp,
                           check_geometry, check_testcell, components, conflict_graph,
                           default_margin, filter_boundary, inflate_rules, is_bipartite,
                           net_components, odd_cycle)
from abutcheck.geometry import Rect
from abutcheck.library import PinKind
from abutcheck.routing import Net, RouteOptions, RoutedDesign, route_testcell

DIE = Rect(-5000, -5000, 5000, 5000)


def design(nets=()):
    return RoutedDesign(empty_testcell(DIE), [Net(n, PinKind.SIGNAL, ()) for n in nets])


def wire(layer, rect, net, role="wire", **kw):
    return LayoutShape(layer, Rect(*rect), net, role, **kw)


def geometry(tech, shapes, nets=()):
    return check_geometry(design(nets), tech, {}, shapes)


def rules(vs):
    return sorted(v.rule.value for v in vs)


def test_spacing_threshold_is_strict(tech):
    near = geometry(tech, [wire("M2", (0, 0, 500, 50), "a"), wire("M2", (0, 99, 500, 149), "b")])
    assert rules(near) == ["DIFF_NET_SPACING"]
    assert near[0].location == Rect(0, 50, 500, 99)
    assert near[0].nets == ("a", "b")
    exact = geometry(tech, [wire("M2", (0, 0, 500, 50), "a"), wire("M2", (0, 100, 500, 150), "b")])
    assert exact == []


def test_diagonal_spacing_uses_euclidean_distance(tech):
    # corner gap (30, 40) is exactly 50 away: legal; (30, 39) is not
    ok = geometry(tech, [wire("M2", (0, 0, 50, 50), "a"), wire("M2", (80, 90, 130, 140), "b")])
    bad = geometry(tech, [wire("M2", (0, 0, 50, 50), "a"), wire("M2", (80, 89, 130, 139), "b")])
    assert ok == [] and rules(bad) == ["DIFF_NET_SPACING"]


def test_short(tech):
    vs = geometry(tech, [wire("M2", (0, 0, 500, 50), "a"), wire("M2", (400, 0, 900, 50), "b")])
    assert rules(vs) == ["SHORT"]
    assert vs[0].location == Rect(400, 0, 500, 50)


def test_same_net_spacing_between_separate_pieces(tech):
    apart = [wire("M2", (0, 0, 500, 50), "a"), wire("M2", (0, 90, 500, 140), "a")]
    assert rules(geometry(tech, apart)) == ["SAME_NET_SPACING"]
    joined = apart + [wire("M2", (0, 0, 50, 140), "a")]
    assert geometry(tech, joined) == []


def test_cut_layer_spacing_is_flagged_as_cut(tech):
    vs = geometry(tech, [wire("V1", (0, 0, 50, 50), "a", "via"), wire("V1", (110, 0, 160, 50), "b", "via"),
                         wire("M1", (-10, -10, 60, 60), "a"), wire("M2", (-10, -10, 60, 60), "a"),
                         wire("M1", (100, -10, 170, 60), "b"), wire("M2", (100, -10, 170, 60), "b")])
    cut = [v for v in vs if v.layer == "V1"]
    assert rules(cut) == ["DIFF_NET_SPACING"] and cut[0].cut_layer


def test_min_width_applies_to_new_metal_only(tech):
    thin = geometry(tech, [wire("M2", (0, 0, 500, 40), "a")])
    assert rules(thin) == ["MIN_WIDTH"]
    assert geometry(tech, [wire("M2", (0, 0, 500, 40), "a", "pin", instance="U1", pin="A")]) == []


def test_same_instance_cell_geometry_is_not_checked(tech):
    a = wire("M1", (0, 0, 50, 500), "U1/A", "pin", instance="U1", pin="A")
    b = wire("M1", (60, 0, 110, 500), "U1/B", "pin", instance="U1", pin="B")
    assert geometry(tech, [a, b]) == []
    c = wire("M1", (60, 0, 110, 500), "U2/B", "pin", instance="U2", pin="B")
    assert rules(geometry(tech, [a, c])) == ["DIFF_NET_SPACING"]


def test_via_enclosure_and_enclosed_width(tech):
    cut = wire("V1", (0, 0, 50, 50), "a", "via")
    good = [cut, wire("M1", (0, -10, 50, 60), "a"), wire("M2", (-10, 0, 60, 50), "a")]
    assert geometry(tech, good) == []
    flush = [cut, wire("M1", (0, 0, 50, 50), "a"), wire("M2", (-10, 0, 60, 50), "a")]
    assert rules(geometry(tech, flush)) == ["VIA_ENCLOSURE"]
    missing = [cut, wire("M2", (-10, 0, 60, 50), "a")]
    assert rules(geometry(tech, missing)) == ["MIN_ENCLOSED_WIDTH", "VIA_ENCLOSURE"]
    foreign = [cut, wire("M1", (0, -10, 50, 60), "b"), wire("M2", (-10, 0, 60, 50), "a")]
    assert "VIA_ENCLOSURE" in rules(geometry(tech, foreign))


def test_open_net(tech):
    pieces = [wire("M2", (0, 0, 500, 50), "n1"), wire("M2", (0, 1000, 500, 1050), "n1")]
    vs = geometry(tech, pieces, nets=["n1"])
    opens = [v for v in vs if v.rule is Rule.OPEN]
    assert len(opens) == 1 and opens[0].layer == "*" and opens[0].location == Rect(0, 0, 500, 1050)


def test_net_components_through_vias(tech):
    shapes = [wire("M1", (0, -10, 50, 60), "a"), wire("V1", (0, 0, 50, 50), "a", "via"),
              wire("M2", (-10, 0, 500, 50), "a"), wire("M3", (0, 0, 50, 50), "a")]
    comps = net_components(shapes, tech, "a")
    # M3 overlaps M2 but has no V2 cut: separate
    assert sorted(len(c) for c in comps) == [1, 3]


def test_pin_shapes_form_one_terminal(tech):
    shapes = [wire("M1", (0, 0, 50, 50), "a", "pin", instance="U1", pin="A"),
              wire("M1", (500, 0, 550, 50), "a", "pin", instance="U1", pin="A")]
    assert len(net_components(shapes, tech, "a")) == 1


shape_lists = st.lists(
    st.tuples(st.sampled_from(["M1", "M2"]), st.integers(0, 40), st.integers(0, 40),
              st.integers(1, 12), st.integers(1, 12), st.sampled_from(["a", "b", "c"])),
    min_size=1, max_size=10)


def build(specs, dx=0, dy=0):
    return [wire(layer, (x * 10 + dx, y * 10 + dy, (x + w) * 10 + dx, (y + h) * 10 + dy), net)
            for layer, x, y, w, h, net in specs]


@settings(max_examples=60, deadline=None)
@given(shape_lists, st.randoms())
def test_geometry_is_order_independent(tech, specs, rnd):
    shapes = build(specs)
    shuffled = list(shapes)
    rnd.shuffle(shuffled)
    assert geometry(tech, shapes) == geometry(tech, shuffled)


@settings(max_examples=60, deadline=None)
@given(shape_lists, st.integers(-300, 300), st.integers(-300, 300))
def test_geometry_is_translation_invariant(tech, specs, dx, dy):
    base = geometry(tech, build(specs))
    moved = geometry(tech, build(specs, dx, dy))
    assert [(v.rule, v.layer, v.nets, v.location.translate(dx, dy)) for v in base] == \
        [(v.rule, v.layer, v.nets, v.location) for v in moved]


@settings(max_examples=60, deadline=None)
@given(shape_lists)
def test_inflating_rules_never_removes_violations(tech, specs):
    shapes = build(specs)
    lo = geometry(inflate_rules(tech, 1.0), shapes)
    hi = check_geometry(design(), inflate_rules(tech, 1.5), {}, shapes)
    for v in lo:
        assert any(w.rule is v.rule and w.layer == v.layer and w.nets == v.nets
                   and w.location.contains(v.location) for w in hi)


def test_inflate_rules_rounds_up(tech):
    t = inflate_rules(tech, 1.25)
    m2 = t.layer("M2")
    assert (m2.min_spacing, m2.min_width, m2.min_enclosed_width) == (63, 63, 63)
    assert m2.pitch == 100 and m2.dp_spacing == 80
    assert inflate_rules(tech, 1.0) is tech
    assert t.digest() != tech.digest()
    with pytest.raises(ValueError):
        inflate_rules(tech, 0.9)


# -- double patterning -------------------------------------------------------

def squares(rects, masks=None):
    masks = masks or [0] * len(rects)
    return [wire("M1", r, f"s{i}", mask=m) for i, (r, m) in enumerate(zip(rects, masks))]


TRIANGLE = [(0, 0, 50, 50), (90, 0, 140, 50), (45, 90, 95, 140)]


def test_odd_cycle_location_is_the_conflict_gaps(tech):
    (v,) = check_dp(design(), tech, DptOption.RECOLOR, shapes=squares(TRIANGLE))
    assert v.rule is Rule.DP_ODD_CYCLE and v.layer == "M1"
    assert v.location == Rect(45, 0, 95, 90)
    assert v.nets == ("s0", "s1", "s2")


def test_precolored_modes(tech):
    same = squares([(0, 0, 50, 500), (110, 0, 160, 500)], [1, 1])
    diff = squares([(0, 0, 50, 500), (110, 0, 160, 500)], [1, 2])
    mixed = squares([(0, 0, 50, 500), (0, 500, 50, 900)], [1, 2])
    got = check_dp(design(), tech, DptOption.PRECOLORED, shapes=same)
    assert rules(got) == ["DP_PRECOLOR_CONFLICT"] and got[0].location == Rect(50, 0, 110, 500)
    assert check_dp(design(), tech, DptOption.PRECOLORED, shapes=diff) == []
    assert rules(check_dp(design(), tech, DptOption.PRECOLORED, shapes=mixed)) == ["DP_PRECOLOR_CONFLICT"]
    # recolouring ignores the masks: two lines are always two-colourable
    assert check_dp(design(), tech, DptOption.RECOLOR, shapes=same) == []
    assert check_dp(design(), tech, DptOption.OFF, shapes=same) == []


def test_precolored_falls_back_for_uncolored(tech):
    diags = []
    got = check_dp(design(), tech, DptOption.PRECOLORED, shapes=squares(TRIANGLE), diagnostics=diags)
    assert rules(got) == ["DP_ODD_CYCLE"]
    assert diags and "uncolored" in diags[0]


def test_dp_radius_limits_search(tech):
    assert len(check_dp(design(), tech, DptOption.RECOLOR, shapes=squares(TRIANGLE), radius=1000)) == 1
    # a tiny window holds no neighbour, so no cycle can close
    assert check_dp(design(), tech, DptOption.RECOLOR, shapes=squares(TRIANGLE), radius=10) == []


def test_check_dp_needs_geometry(tech):
    with pytest.raises(ValueError):
        check_dp(design(), tech, DptOption.RECOLOR)


def test_conflict_graph_clusters_touching_shapes(tech):
    shapes = squares([(0, 0, 50, 50), (50, 0, 100, 50), (160, 0, 210, 50)])
    graph, gaps = conflict_graph(shapes, "M1", 80)
    assert len(graph.clusters) == 2 and graph.edges == {(0, 1)}
    assert gaps[(0, 1)] == [Rect(100, 0, 160, 50)]


def brute_bipartite(n, edges):
    return any(all(((m >> a) & 1) != ((m >> b) & 1) for a, b in edges) for m in range(1 << n))


graphs = st.integers(1, 9).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                        .filter(lambda e: e[0] < e[1]), max_size=20)))


@given(graphs)
def test_bipartite_matches_exhaustive_colouring(g):
    n, edges = g
    assert is_bipartite(n, edges) == brute_bipartite(n, edges)


@given(graphs)
def test_odd_cycle_is_a_real_odd_cycle(g):
    n, edges = g
    adj = [[] for _ in range(n)]
    for a, b in sorted(edges):
        adj[a].append(b)
        adj[b].append(a)
    for comp in components(n, adj):
        cyc = odd_cycle(adj, comp)
        if cyc is None:
            continue
        assert len(cyc) % 2 == 1 and len(set(cyc)) == len(cyc)
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            assert b in adj[a]


# -- boundary filter and attribution ----------------------------------------

def test_boundary_filter(toy_cells, tech):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["INVX1"])  # edges at 400, 800, 1200, die 0..1600
    margin = default_margin(tech, "M2")
    assert margin == 100
    vs = [Violation(Rule.SHORT, "M2", Rect(x, 500, x + 10, 510), ("a", "b")) for x in (310, 280, 520, 1495)]
    marked = [v.at_boundary for v in filter_boundary(vs, tc, margin)]
    assert marked == [True, False, False, True]
    with pytest.raises(ValueError):
        filter_boundary(vs, tc, -1)


def test_attribution(toy_cells):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_ab(cells["INVX1"], cells["BUFX2"])  # B A B A B
    v = Violation(Rule.SHORT, "M2", Rect(490, 0, 510, 10), ("a", "b"))
    assert attribute(v, tc) == ("BUFX2", "INVX1")
    inside = Violation(Rule.SHORT, "M2", Rect(100, 0, 110, 10), ("a", "b"))
    assert attribute(inside, tc) == ("BUFX2",)


def test_check_testcell_on_odd_cycle_fixture(tech):
    cells = load_cells(fixture_path("dp_triangle.lef"), tech)
    lookup = {c.name: c for c in cells}
    routed = route_testcell(make_type_aa(cells[0]), lookup, tech, RouteOptions(straps="off"))
    res = check_testcell(routed, tech, lookup, DptOption.RECOLOR)
    odd = [v for v in res.violations if v.rule is Rule.DP_ODD_CYCLE]
    assert len(odd) == 1 and odd[0].at_boundary
    assert odd[0].location.x_lo < 400 < odd[0].location.x_hi
    assert res.deck_digest == tech.digest()
    assert all(masters == ("DPTRI",) for _, masters in res.attribution)


def test_boundary_filter_examples(toy_cells):
    cells = {c.name: c for c in toy_cells}
    tc = make_type_aa(cells["DFFX1"])  # 14 tracks wide, edges at 1400, 2800, 4200
    on_edge = Violation(Rule.SHORT, "M2", Rect(1400, 500, 1400, 510), ("a", "b"))
    middle = Violation(Rule.SHORT, "M2", Rect(700, 500, 700, 510), ("a", "b"))
    touching = Violation(Rule.SHORT, "M2", Rect(1390, 500, 1400, 510), ("a", "b"))
    assert [v.at_boundary for v in filter_boundary([on_edge, middle], tc, 200)] == [True, False]
    assert filter_boundary([touching], tc, 0)[0].at_boundary


def test_inflation_example(tech):
    from dataclasses import replace
    deck = replace(tech, layers=tuple(replace(r, min_spacing=64) for r in tech.layers))
    assert inflate_rules(deck, 1.25).layer("M2").min_spacing == 80
