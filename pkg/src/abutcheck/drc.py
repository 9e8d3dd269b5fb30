"""Rule-based geometry checks and double-patterning analysis over routed
testcells, plus boundary filtering and rule-deck inflation.

All distances are exact Euclidean edge-to-edge in database units; shapes
that touch (closed intervals) are electrically connected.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .abutment import Testcell
from .geometry import Rect, SpatialIndex, bbox_of, closer_than, gap_region
from .library import Cell, LayerKind, PinKind, TechRules
from .routing import RoutedDesign, floating_net, obstruction_owner, pin_net_map, via_geometry


class Rule(str, enum.Enum):
    DIFF_NET_SPACING = "DIFF_NET_SPACING"
    SAME_NET_SPACING = "SAME_NET_SPACING"
    MIN_WIDTH = "MIN_WIDTH"
    VIA_ENCLOSURE = "VIA_ENCLOSURE"
    MIN_ENCLOSED_WIDTH = "MIN_ENCLOSED_WIDTH"
    SHORT = "SHORT"
    OPEN = "OPEN"
    DP_PRECOLOR_CONFLICT = "DP_PRECOLOR_CONFLICT"
    DP_ODD_CYCLE = "DP_ODD_CYCLE"


SPACING_RULES = (Rule.DIFF_NET_SPACING, Rule.SAME_NET_SPACING)


class DptOption(str, enum.Enum):
    PRECOLORED = "precolored"
    RECOLOR = "recolor"
    OFF = "off"


INTRINSIC = ("pin", "obs")


@dataclass(frozen=True)
class LayoutShape:
    layer: str
    rect: Rect
    net: str  # net name, floating-pin id or obstruction owner
    role: str  # pin | obs | wire | via | pad | rail | strap
    instance: str = ""
    pin: str = ""
    mask: int = 0

    @property
    def intrinsic(self) -> bool:
        return self.role in INTRINSIC


@dataclass(frozen=True)
class Violation:
    rule: Rule
    layer: str
    location: Rect
    nets: Tuple[str, ...]
    at_boundary: bool = False
    cut_layer: bool = False

    def sort_key(self):
        return (self.layer, tuple(self.location), self.rule.value, self.nets)

    def to_dict(self) -> dict:
        r = self.location
        return {
            "rule": self.rule.value,
            "layer": self.layer,
            "location": [r.x_lo, r.y_lo, r.x_hi, r.y_hi],
            "nets": list(self.nets),
            "at_boundary": self.at_boundary,
        }


@dataclass
class DrcResult:
    testcell: str
    violations: List[Violation]
    attribution: List[Tuple[Violation, Tuple[str, ...]]] = field(default_factory=list)
    deck_digest: str = ""
    diagnostics: List[str] = field(default_factory=list)


# --------------------------------------------------------------------------
# Merged geometry

def layout_shapes(routed: RoutedDesign, cells: Mapping[str, Cell], tech: TechRules) -> List[LayoutShape]:
    """Every shape of the routed testcell at its placed position."""
    owner = pin_net_map(routed.nets)
    out: List[LayoutShape] = []
    for inst in routed.testcell.instances:
        cell = cells[inst.cell_name]
        for pin in cell.pins:
            net = owner.get((inst.instance_name, pin.name), floating_net(inst.instance_name, pin.name))
            for s in pin.shapes:
                out.append(LayoutShape(s.layer, inst.place(s.rect), net, "pin",
                                       inst.instance_name, pin.name, s.mask))
        for s in cell.obstructions:
            out.append(LayoutShape(s.layer, inst.place(s.rect), obstruction_owner(inst.instance_name),
                                   "obs", inst.instance_name, "", s.mask))
    for w in routed.rails:
        out.append(LayoutShape(w.layer, w.rect, w.net, "rail"))
    for w in routed.straps:
        out.append(LayoutShape(w.layer, w.rect, w.net, "strap"))
    for w in routed.wires:
        out.append(LayoutShape(w.layer, w.rect, w.net, "wire"))
    for v in routed.vias:
        for layer, rect, role in via_geometry(tech, v):
            out.append(LayoutShape(layer, rect, v.net, role))
    return out


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _by_layer(shapes: Sequence[LayoutShape]) -> Dict[str, List[LayoutShape]]:
    out: Dict[str, List[LayoutShape]] = {}
    for s in shapes:
        out.setdefault(s.layer, []).append(s)
    return out


def _index(shapes: Sequence[LayoutShape], bucket: int) -> SpatialIndex:
    idx: SpatialIndex = SpatialIndex(bucket=max(bucket, 1))
    for s in shapes:
        idx.insert(s.rect, s)
    return idx


def _net_clusters(shapes: Sequence[LayoutShape], idx: SpatialIndex) -> List[int]:
    """Cluster id per shape: same net, same layer, touching."""
    uf = _UnionFind(len(shapes))
    for a, b in idx.candidate_pairs(0):
        if shapes[a].net == shapes[b].net and shapes[a].rect.intersects(shapes[b].rect):
            uf.union(a, b)
    return [uf.find(i) for i in range(len(shapes))]


def _merge_regions(rects: Iterable[Rect]) -> List[Rect]:
    """Union touching rectangles into bounding boxes until stable."""
    merged = sorted(rects, key=tuple)
    changed = True
    while changed:
        changed = False
        out: List[Rect] = []
        for r in merged:
            for k, o in enumerate(out):
                if o.intersects(r):
                    out[k] = o.union(r)
                    changed = True
                    break
            else:
                out.append(r)
        merged = sorted(out, key=tuple)
    return merged


def _same_instance_intrinsic(a: LayoutShape, b: LayoutShape) -> bool:
    return a.intrinsic and b.intrinsic and a.instance == b.instance


def _bucket(tech: TechRules, layer: str) -> int:
    try:
        return tech.layer(layer).pitch * 4
    except KeyError:
        return 400


# --------------------------------------------------------------------------
# Geometry checks

def check_geometry(routed: RoutedDesign, tech: TechRules, cells: Mapping[str, Cell],
                   shapes: Optional[Sequence[LayoutShape]] = None,
                   die_margin: int = 0) -> List[Violation]:
    """Spacing, short, width, enclosure and open checks.

    Pairs of shapes that both belong to the same placed cell (pins and
    obstructions of one instance) are skipped: cells are taken as clean
    on their own, and the interest is in what abutment and routing add.
    """
    if shapes is None:
        shapes = layout_shapes(routed, cells, tech)
    die = routed.testcell.die.bloat(die_margin)
    layers = _by_layer(shapes)
    found: Dict[tuple, List[Rect]] = {}

    def note(rule, layer, rect, nets, key_extra=()):
        found.setdefault((rule, layer, tuple(nets), key_extra), []).append(rect.clip(die) if rect.intersects(die) else rect)

    for name in sorted(layers):
        try:
            rule = tech.layer(name)
        except KeyError:
            continue
        group = layers[name]
        idx = _index(group, _bucket(tech, name))
        cluster = _net_clusters(group, idx)
        reach = max(rule.min_spacing, rule.same_net_spacing)
        for a, b in idx.candidate_pairs(reach):
            sa, sb = group[a], group[b]
            if _same_instance_intrinsic(sa, sb):
                continue
            touching = sa.rect.intersects(sb.rect)
            if sa.net != sb.net:
                nets = tuple(sorted((sa.net, sb.net)))
                pair = tuple(sorted((cluster[a], cluster[b])))
                if touching:
                    note(Rule.SHORT, name, sa.rect.clip(sb.rect), nets, pair)
                elif closer_than(sa.rect, sb.rect, rule.min_spacing):
                    note(Rule.DIFF_NET_SPACING, name, gap_region(sa.rect, sb.rect), nets, pair)
            elif cluster[a] != cluster[b] and not touching:
                if closer_than(sa.rect, sb.rect, rule.same_net_spacing):
                    pair = tuple(sorted((cluster[a], cluster[b])))
                    note(Rule.SAME_NET_SPACING, name, gap_region(sa.rect, sb.rect), (sa.net,), pair)
        if rule.is_routing and rule.min_width > 0:
            for s in group:
                if s.role in ("wire", "pad") and s.rect.min_dim < rule.min_width:
                    note(Rule.MIN_WIDTH, name, s.rect, (s.net,), (tuple(s.rect),))

    _check_vias(shapes, layers, tech, note)

    out: List[Violation] = []
    for (rule_id, layer, nets, _), rects in found.items():
        cut = _is_cut(tech, layer)
        for r in _merge_regions(rects):
            out.append(Violation(rule_id, layer, r, nets, cut_layer=cut))
    out.extend(_check_open(routed, shapes, tech, die))
    return sorted(set(out), key=Violation.sort_key)


def _is_cut(tech: TechRules, layer: str) -> bool:
    try:
        return tech.layer(layer).kind is LayerKind.CUT
    except KeyError:
        return False


def _check_vias(shapes, layers, tech: TechRules, note) -> None:
    indexes: Dict[str, SpatialIndex] = {}
    for cut in (s for s in shapes if s.role == "via"):
        try:
            below, above = tech.adjacent_routing(cut.layer)
            enc = tech.layer(cut.layer).via_enclosure
        except (KeyError, IndexError):
            continue
        for metal in (below, above):
            idx = indexes.get(metal.name)
            if idx is None:
                idx = indexes[metal.name] = _index(layers.get(metal.name, []), _bucket(tech, metal.name))
            covering = [idx.item(i)[1] for i in idx.query(cut.rect)]
            covering = [s for s in covering if s.net == cut.net and s.rect.contains(cut.rect)]
            c = cut.rect
            enclosed = any(
                (c.x_lo - s.rect.x_lo >= enc and s.rect.x_hi - c.x_hi >= enc)
                or (c.y_lo - s.rect.y_lo >= enc and s.rect.y_hi - c.y_hi >= enc)
                for s in covering)
            if not enclosed:
                note(Rule.VIA_ENCLOSURE, metal.name, c, (cut.net,), (tuple(c),))
            if metal.min_enclosed_width > 0:
                widest = max((s.rect.min_dim for s in covering), default=0)
                if widest < metal.min_enclosed_width:
                    note(Rule.MIN_ENCLOSED_WIDTH, metal.name, c, (cut.net,), (tuple(c),))


def net_components(shapes: Sequence[LayoutShape], tech: TechRules, net: str) -> List[List[LayoutShape]]:
    """Connected components of one net: same-layer touching shapes, cuts
    joining the routing layers on either side, and all shapes of one pin
    treated as a single terminal."""
    mine = [s for s in shapes if s.net == net]
    uf = _UnionFind(len(mine))
    pins: Dict[Tuple[str, str], int] = {}
    for i, s in enumerate(mine):
        if s.role == "pin":
            key = (s.instance, s.pin)
            if key in pins:
                uf.union(pins[key], i)
            else:
                pins[key] = i
    for i in range(len(mine)):
        for j in range(i + 1, len(mine)):
            a, b = mine[i], mine[j]
            if not a.rect.intersects(b.rect):
                continue
            if a.layer == b.layer:
                uf.union(i, j)
                continue
            for cut, metal in ((a, b), (b, a)):
                if _is_cut(tech, cut.layer):
                    try:
                        adj = {r.name for r in tech.adjacent_routing(cut.layer)}
                    except IndexError:
                        adj = set()
                    if metal.layer in adj:
                        uf.union(i, j)
    groups: Dict[int, List[LayoutShape]] = {}
    for i, s in enumerate(mine):
        groups.setdefault(uf.find(i), []).append(s)
    return [groups[k] for k in sorted(groups)]


def _check_open(routed: RoutedDesign, shapes, tech: TechRules, die: Rect) -> List[Violation]:
    out = []
    for net in routed.nets:
        if net.kind is not PinKind.SIGNAL:
            continue
        comps = net_components(shapes, tech, net.name)
        if len(comps) > 1:
            box = bbox_of(s.rect for comp in comps for s in comp)
            out.append(Violation(Rule.OPEN, "*", box.clip(die) if box.intersects(die) else box, (net.name,)))
    return out


# --------------------------------------------------------------------------
# Double patterning

@dataclass
class ConflictGraph:
    layer: str
    clusters: List[List[LayoutShape]]
    edges: Set[Tuple[int, int]]
    colors: List[int]  # 0 uncolored, 1/2 mask, -1 mixed

    def neighbours(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in self.clusters]
        for a, b in sorted(self.edges):
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def bbox(self, k: int) -> Rect:
        return bbox_of(s.rect for s in self.clusters[k])


def conflict_graph(shapes: Sequence[LayoutShape], layer: str, dp_spacing: int,
                   bucket: int = 400) -> Tuple[ConflictGraph, Dict[Tuple[int, int], List[Rect]]]:
    """Clusters of touching shapes on `layer` and edges between clusters
    closer than `dp_spacing`; also returns the gap regions per edge."""
    group = [s for s in shapes if s.layer == layer]
    idx = _index(group, bucket)
    uf = _UnionFind(len(group))
    for a, b in idx.candidate_pairs(0):
        if group[a].rect.intersects(group[b].rect):
            uf.union(a, b)
    roots = sorted({uf.find(i) for i in range(len(group))})
    number = {r: k for k, r in enumerate(roots)}
    clusters: List[List[LayoutShape]] = [[] for _ in roots]
    of = [number[uf.find(i)] for i in range(len(group))]
    for i, s in enumerate(group):
        clusters[of[i]].append(s)
    colors = []
    for c in clusters:
        masks = {s.mask for s in c}
        if masks == {0}:
            colors.append(0)
        elif len(masks - {0}) == 1 and 0 not in masks:
            colors.append(next(iter(masks)))
        else:
            colors.append(-1)
    edges: Set[Tuple[int, int]] = set()
    gaps: Dict[Tuple[int, int], List[Rect]] = {}
    for a, b in idx.candidate_pairs(dp_spacing):
        ca, cb = of[a], of[b]
        if ca == cb:
            continue
        if closer_than(group[a].rect, group[b].rect, dp_spacing):
            e = (min(ca, cb), max(ca, cb))
            edges.add(e)
            gaps.setdefault(e, []).append(gap_region(group[a].rect, group[b].rect))
    return ConflictGraph(layer, clusters, edges, colors), gaps


def components(n: int, adj: Sequence[Sequence[int]], allowed: Optional[Set[int]] = None) -> List[List[int]]:
    seen: Set[int] = set()
    out = []
    for start in range(n):
        if start in seen or (allowed is not None and start not in allowed):
            continue
        comp = [start]
        seen.add(start)
        q = deque([start])
        while q:
            u = q.popleft()
            for w in adj[u]:
                if w not in seen and (allowed is None or w in allowed):
                    seen.add(w)
                    comp.append(w)
                    q.append(w)
        out.append(sorted(comp))
    return out


def odd_cycle(adj: Sequence[Sequence[int]], comp: Sequence[int]) -> Optional[List[int]]:
    """Parity-labelled BFS over one component; returns an odd cycle (as a
    vertex list) or None when the component is bipartite."""
    members = set(comp)
    root = comp[0]
    depth = {root: 0}
    parent = {root: root}
    q = deque([root])
    while q:
        u = q.popleft()
        for w in adj[u]:
            if w not in members:
                continue
            if w not in depth:
                depth[w] = depth[u] + 1
                parent[w] = u
                q.append(w)
            elif depth[w] % 2 == depth[u] % 2:
                # climb to the lowest common ancestor
                a, b = u, w
                left, right = [a], [b]
                while a != b:
                    if depth[a] >= depth[b]:
                        a = parent[a]
                        left.append(a)
                    else:
                        b = parent[b]
                        right.append(b)
                lca = a
                path = left[:left.index(lca) + 1]
                path += right[:right.index(lca)][::-1]
                return path
    return None


def is_bipartite(n: int, edges: Iterable[Tuple[int, int]]) -> bool:
    adj: List[List[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return all(odd_cycle(adj, c) is None for c in components(n, adj))


def check_dp(routed: RoutedDesign, tech: TechRules, option: DptOption = DptOption.PRECOLORED,
             cells: Optional[Mapping[str, Cell]] = None,
             shapes: Optional[Sequence[LayoutShape]] = None,
             radius: Optional[int] = None,
             diagnostics: Optional[List[str]] = None,
             die_margin: int = 0) -> List[Violation]:
    """Double-patterning checks on every layer with dp_spacing > 0.

    PRECOLORED: same-mask clusters closer than dp_spacing conflict, and a
    cluster mixing masks conflicts with itself; components that contain
    uncolored clusters fall back to the odd-cycle test. RECOLOR: masks
    are ignored and every non-bipartite component yields one odd cycle.
    `radius` restricts the odd-cycle search to clusters whose boxes lie
    within that distance of each other.
    """
    option = DptOption(option)
    if option is DptOption.OFF:
        return []
    if diagnostics is None:
        diagnostics = []
    if shapes is None:
        if cells is None:
            raise ValueError("check_dp needs either cells or shapes")
        shapes = layout_shapes(routed, cells, tech)
    die = routed.testcell.die.bloat(die_margin)
    out: List[Violation] = []
    for rule in tech.layers:
        if rule.dp_spacing <= 0:
            continue
        graph, gaps = conflict_graph(shapes, rule.name, rule.dp_spacing, _bucket(tech, rule.name))
        adj = graph.neighbours()
        n = len(graph.clusters)
        cut = rule.kind is LayerKind.CUT
        check_cycles: Optional[Set[int]] = None
        if option is DptOption.PRECOLORED:
            for k, color in enumerate(graph.colors):
                if color == -1:
                    box = graph.bbox(k)
                    out.append(Violation(Rule.DP_PRECOLOR_CONFLICT, rule.name, box.clip(die),
                                         _nets_of(graph.clusters[k]), cut_layer=cut))
            for (a, b), regions in sorted(gaps.items()):
                if graph.colors[a] > 0 and graph.colors[a] == graph.colors[b]:
                    nets = tuple(sorted(set(_nets_of(graph.clusters[a]) + _nets_of(graph.clusters[b]))))
                    for r in _merge_regions(regions):
                        out.append(Violation(Rule.DP_PRECOLOR_CONFLICT, rule.name, r.clip(die), nets,
                                             cut_layer=cut))
            uncolored = [k for k in range(n) if graph.colors[k] == 0]
            if uncolored:
                diagnostics.append(f"{routed.testcell.name}: {len(uncolored)} uncolored {rule.name} "
                                   "clusters checked for odd cycles")
            check_cycles = set()
            for comp in components(n, adj):
                if any(graph.colors[k] == 0 for k in comp):
                    check_cycles.update(comp)
        out.extend(_odd_cycles(graph, adj, gaps, rule.name, cut, die, check_cycles, radius))
    return sorted(set(out), key=Violation.sort_key)


def _nets_of(cluster: Sequence[LayoutShape]) -> Tuple[str, ...]:
    return tuple(sorted({s.net for s in cluster}))


def _odd_cycles(graph: ConflictGraph, adj, gaps, layer: str, cut: bool, die: Rect,
                allowed: Optional[Set[int]], radius: Optional[int]) -> List[Violation]:
    n = len(graph.clusters)
    cycles: List[List[int]] = []
    if radius is None:
        for comp in components(n, adj, allowed):
            cyc = odd_cycle(adj, comp)
            if cyc is not None:
                cycles.append(cyc)
    else:
        boxes = [graph.bbox(k) for k in range(n)]
        seen: Set[FrozenSet[int]] = set()
        for v in range(n):
            if allowed is not None and v not in allowed:
                continue
            local = {w for w in range(n) if closer_than(boxes[v], boxes[w], radius + 1)
                     and (allowed is None or w in allowed)}
            for comp in components(n, adj, local):
                if v not in comp:
                    continue
                cyc = odd_cycle(adj, comp)
                if cyc is not None and frozenset(cyc) not in seen:
                    seen.add(frozenset(cyc))
                    cycles.append(cyc)
    out = []
    for cyc in cycles:
        # the cycle sits where its conflict edges are, not across whole clusters
        ring = list(zip(cyc, cyc[1:] + cyc[:1]))
        box = bbox_of(r for a, b in ring for r in gaps[(min(a, b), max(a, b))])
        nets = tuple(sorted({net for k in cyc for net in _nets_of(graph.clusters[k])}))
        out.append(Violation(Rule.DP_ODD_CYCLE, layer, box.clip(die) if box.intersects(die) else box,
                             nets, cut_layer=cut))
    return out


# --------------------------------------------------------------------------
# Boundary filter and rule inflation

def default_margin(tech: TechRules, pin_access_layer: str) -> int:
    return 2 * tech.layer(pin_access_layer).min_spacing


def filter_boundary(violations: Sequence[Violation], testcell: Testcell, margin: int) -> List[Violation]:
    """Mark violations whose box meets a band of width 2*margin centred on
    an abutment edge or on the die's left/right edge."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    die = testcell.die
    xs = sorted(set(testcell.abutment_edges()) | {die.x_lo, die.x_hi})
    bands = [Rect(x - margin, die.y_lo - margin, x + margin, die.y_hi + margin) for x in xs]
    return [replace(v, at_boundary=any(v.location.intersects(b) for b in bands)) for v in violations]


def inflate_rules(tech: TechRules, factor: float) -> TechRules:
    """Scale min_spacing, min_width and min_enclosed_width by `factor`,
    rounding up to whole database units."""
    if factor < 1.0:
        raise ValueError("inflation factor must be at least 1.0")
    if factor == 1.0:
        return tech

    def up(v: int) -> int:
        return int(math.ceil(round(v * factor, 9)))

    layers = tuple(replace(r, min_spacing=up(r.min_spacing), min_width=up(r.min_width),
                           min_enclosed_width=up(r.min_enclosed_width)) for r in tech.layers)
    return replace(tech, layers=layers)


# --------------------------------------------------------------------------
# One-stop check

def attribute(violation: Violation, testcell: Testcell) -> Tuple[str, ...]:
    """Master cells whose placed instance the violation touches."""
    return tuple(sorted({i.cell_name for i in testcell.instances if i.bbox.intersects(violation.location)}))


def check_testcell(routed: RoutedDesign, tech: TechRules, cells: Mapping[str, Cell],
                   dpt: DptOption = DptOption.PRECOLORED, margin: Optional[int] = None,
                   inflation: float = 1.0, pin_access_layer: Optional[str] = None,
                   dp_radius: Optional[int] = None, die_margin: int = 0) -> DrcResult:
    deck = inflate_rules(tech, inflation)
    shapes = layout_shapes(routed, cells, tech)
    diagnostics: List[str] = []
    found = check_geometry(routed, deck, cells, shapes, die_margin)
    found += check_dp(routed, deck, dpt, shapes=shapes, radius=dp_radius,
                      diagnostics=diagnostics, die_margin=die_margin)
    if margin is None:
        layer = pin_access_layer or _first_routing(tech)
        margin = default_margin(tech, layer)
    found = filter_boundary(sorted(set(found), key=Violation.sort_key), routed.testcell, margin)
    attribution = [(v, attribute(v, routed.testcell)) for v in found]
    return DrcResult(routed.testcell.name, found, attribution, deck.digest(), diagnostics)


def _first_routing(tech: TechRules) -> str:
    return tech.routing_layers[0].name
