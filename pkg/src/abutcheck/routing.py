"""Routing fabric: randomized pin nets, power rails, random straps and a
two-layer negotiated-congestion maze router.

The router treats shorts and opens as the only hard constraints. Spacing
is left to the DRC pass, so any pin that can only be reached through a
rule-violating via shows up there rather than being silently avoided.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .abutment import InstancePlacement, Testcell
from .geometry import Rect, SpatialIndex, closer_than
from .library import Cell, Direction, LayerRule, PinKind, TechRules
from .prng import Xorshift64Star

log = logging.getLogger(__name__)

Node = Tuple[int, int, int]  # (window layer index, x track, y track)

PIN_BLOCKED = "PIN_BLOCKED"

# Why a PIN_BLOCKED net could not be connected.
NO_ACCESS = "no_access"      # some pin has no legal access point
BLOCKAGE = "blockage"        # static blockage separates the pins
CONGESTION = "congestion"    # routable alone, lost the negotiation


@dataclass(frozen=True)
class Net:
    name: str
    kind: PinKind
    terminals: Tuple[Tuple[str, str], ...]  # (instance, pin)


@dataclass(frozen=True)
class RouteOptions:
    seed: int = 1
    min_layer: str = "M2"
    max_layer: str = "M3"
    via_cost: int = 5
    max_ripup_iterations: int = 20
    straps: str = "random"  # "random" | "off"
    net_degree: int = 2
    pin_pairing: str = "random"  # "random" | "aligned"
    die_margin: int = 0


@dataclass(frozen=True)
class Wire:
    net: str
    layer: str
    rect: Rect


@dataclass(frozen=True)
class Via:
    net: str
    cut_layer: str
    center: Tuple[int, int]


@dataclass
class RoutedDesign:
    testcell: Testcell
    nets: List[Net]
    wires: List[Wire] = field(default_factory=list)
    vias: List[Via] = field(default_factory=list)
    rails: List[Wire] = field(default_factory=list)
    straps: List[Wire] = field(default_factory=list)
    unrouted: List[Tuple[str, str]] = field(default_factory=list)
    causes: Dict[str, str] = field(default_factory=dict)
    repair_history: List[int] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def unrouted_nets(self) -> Set[str]:
        return {n for n, _ in self.unrouted}

    def dump(self) -> str:
        """Plain-text geometry dump for inspection (not a stable format)."""
        out = [f"DESIGN {self.testcell.name}"]
        for kind, items in (("RAIL", self.rails), ("STRAP", self.straps), ("NEWNET", self.wires)):
            for w in items:
                r = w.rect
                out.append(f"{kind} {w.net} {w.layer} {r.x_lo} {r.y_lo} {r.x_hi} {r.y_hi}")
        for v in self.vias:
            out.append(f"VIA {v.net} {v.cut_layer} {v.center[0]} {v.center[1]}")
        for net, reason in self.unrouted:
            out.append(f"UNROUTED {net} {reason} {self.causes.get(net, '')}".rstrip())
        return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Pin nets

def _chunk(items: list, degree: int) -> List[list]:
    if len(items) < 2:
        return []
    if len(items) < degree:
        return [items]
    groups = [items[i:i + degree] for i in range(0, len(items) - len(items) % degree, degree)]
    groups[-1] = groups[-1] + items[len(groups) * degree:]
    return groups


def assign_pin_nets(testcell: Testcell, cells: Mapping[str, Cell], seed: int,
                    net_degree: int = 2, pairing: str = "random",
                    warnings: Optional[List[str]] = None) -> List[Net]:
    """Group signal pins into nets; power/ground pins go to VDD/VSS.

    Random pairing shuffles every signal pin of the testcell with a seeded
    stream, then cuts the shuffled list into nets of `net_degree`; the
    last net absorbs a short remainder. Aligned pairing joins the same pin
    of successive instances of a cell instead.
    """
    if net_degree < 2:
        raise ValueError("net_degree must be at least 2")
    if warnings is None:
        warnings = []
    signal: List[Tuple[str, str]] = []
    power: List[Tuple[str, str]] = []
    ground: List[Tuple[str, str]] = []
    for inst in testcell.instances:
        cell = cells[inst.cell_name]
        for pin in cell.pins:
            ref = (inst.instance_name, pin.name)
            {PinKind.SIGNAL: signal, PinKind.POWER: power, PinKind.GROUND: ground}[pin.kind].append(ref)

    groups: List[list] = []
    if pairing == "random":
        rng = Xorshift64Star.stream(seed, f"pins:{testcell.name}")
        shuffled = list(signal)
        rng.shuffle(shuffled)
        groups = _chunk(shuffled, net_degree)
    elif pairing == "aligned":
        by_pin: Dict[Tuple[str, str], list] = {}
        for ref in signal:
            key = (testcell.instance(ref[0]).cell_name, ref[1])
            by_pin.setdefault(key, []).append(ref)
        for key in sorted(by_pin):
            groups.extend(_chunk(by_pin[key], net_degree))
    else:
        raise ValueError(f"unknown pin pairing '{pairing}'")
    if len(signal) < 2:
        warnings.append(f"{testcell.name}: fewer than 2 signal pins, no signal nets")

    nets = [Net(f"n{i + 1}", PinKind.SIGNAL, tuple(g)) for i, g in enumerate(groups)]
    if power:
        nets.append(Net("VDD", PinKind.POWER, tuple(power)))
    if ground:
        nets.append(Net("VSS", PinKind.GROUND, tuple(ground)))
    return nets


def pin_net_map(nets: Iterable[Net]) -> Dict[Tuple[str, str], str]:
    return {t: n.name for n in nets for t in n.terminals}


def floating_net(instance: str, pin: str) -> str:
    return f"{instance}/{pin}"


def obstruction_owner(instance: str) -> str:
    return f"OBS:{instance}"


# --------------------------------------------------------------------------
# Power

def preroute_power(testcell: Testcell, tech: TechRules, layer: str,
                   cells: Optional[Mapping[str, Cell]] = None,
                   warnings: Optional[List[str]] = None) -> List[Wire]:
    """Horizontal rails along every row boundary, VSS on row 0's bottom edge
    and alternating upward, one pitch wide and clipped to the die."""
    rule = tech.layer(layer)
    if cells is not None and warnings is not None:
        for name in testcell.cell_names:
            kinds = {p.kind for p in cells[name].pins}
            if PinKind.POWER not in kinds or PinKind.GROUND not in kinds:
                warnings.append(f"{testcell.name}: cell {name} lacks power or ground pins")
    die = testcell.die
    half_lo = rule.pitch // 2
    half_hi = rule.pitch - half_lo
    rails = []
    for r in range(testcell.rows + 1):
        y = die.y_lo + r * testcell.row_height
        rect = Rect(die.x_lo, y - half_lo, die.x_hi, y + half_hi).clip(die)
        rails.append(Wire("VSS" if r % 2 == 0 else "VDD", layer, rect))
    return rails


def _strap_conflict(rule: LayerRule, rect: Rect, net: str, existing: Sequence[Wire]) -> bool:
    for w in existing:
        if w.layer != rule.name:
            continue
        if w.net != net:
            if closer_than(rect, w.rect, rule.min_spacing) or rect.intersects(w.rect):
                return True
        elif not rect.intersects(w.rect) and closer_than(rect, w.rect, rule.same_net_spacing):
            return True
    return False


def strap_parameters(rng: Xorshift64Star, units: int) -> Tuple[int, int]:
    """(width, step) in database units: int(rand()*100)/500 and
    int(rand()*100)/50 microns."""
    u = int(rng.random() * 100)
    u_step = int(rng.random() * 100)
    return u * units // 500, u_step * units // 50


def generate_straps(testcell: Testcell, tech: TechRules, layers: Sequence[str], seed: int,
                    existing: Sequence[Wire] = (),
                    warnings: Optional[List[str]] = None) -> List[Wire]:
    """Random VDD/VSS straps acting as routing blockage.

    One (width, step) draw per layer; straps run in the layer's preferred
    direction across the die from coordinate 0 in `step` increments. A
    strap that would short or crowd existing power geometry is dropped.
    """
    if warnings is None:
        warnings = []
    rng = Xorshift64Star.stream(seed, f"straps:{testcell.name}")
    die = testcell.die
    placed: List[Wire] = list(existing)
    straps: List[Wire] = []
    for name in layers:
        rule = tech.layer(name)
        width, step = strap_parameters(rng, tech.units_per_micron)
        if width == 0:
            continue
        if step < width + rule.min_spacing:
            warnings.append(f"{testcell.name}: {name} strap step {step} raised to {width + rule.min_spacing}")
            step = width + rule.min_spacing
        horizontal = rule.direction is Direction.HORIZONTAL
        stop = die.y_hi if horizontal else die.x_hi
        pos, k = 0, 0
        dropped = 0
        while pos <= stop:
            lo = pos - width // 2
            if horizontal:
                rect = Rect(die.x_lo, lo, die.x_hi, lo + width).clip(die)
            else:
                rect = Rect(lo, die.y_lo, lo + width, die.y_hi).clip(die)
            net = "VDD" if k % 2 == 0 else "VSS"
            k += 1
            pos += step
            if rect.width == 0 or rect.height == 0:
                continue
            if _strap_conflict(rule, rect, net, placed):
                dropped += 1
                continue
            w = Wire(net, name, rect)
            placed.append(w)
            straps.append(w)
        if dropped:
            warnings.append(f"{testcell.name}: dropped {dropped} {name} straps clashing with power geometry")
    return straps


# --------------------------------------------------------------------------
# Grid

def _half(w: int) -> Tuple[int, int]:
    return w // 2, w - w // 2


def _around(x: int, y: int, along_x: Tuple[int, int], along_y: Tuple[int, int]) -> Rect:
    return Rect(x - along_x[0], y - along_y[0], x + along_x[1], y + along_y[1])


def pad_rect(layer: LayerRule, cut: LayerRule, x: int, y: int) -> Rect:
    """Via landing metal: cut plus enclosure along the layer's direction,
    max(cut, wire) wide across it."""
    along = _half(cut.min_width + 2 * cut.via_enclosure)
    across = _half(max(cut.min_width, layer.min_width))
    if layer.direction is Direction.HORIZONTAL:
        return _around(x, y, along, across)
    if layer.direction is Direction.VERTICAL:
        return _around(x, y, across, along)
    return _around(x, y, along, along)


def cut_rect(cut: LayerRule, x: int, y: int) -> Rect:
    hw = _half(cut.min_width)
    return _around(x, y, hw, hw)


def via_geometry(tech: TechRules, via: Via) -> List[Tuple[str, Rect, str]]:
    """(layer, rect, role) for the cut and both landing pads of a via."""
    cut = tech.layer(via.cut_layer)
    below, above = tech.adjacent_routing(via.cut_layer)
    x, y = via.center
    return [(below.name, pad_rect(below, cut, x, y), "pad"),
            (cut.name, cut_rect(cut, x, y), "via"),
            (above.name, pad_rect(above, cut, x, y), "pad")]


@dataclass
class _Blockage:
    owner: str
    layer: str
    rect: Rect


class RouteGrid:
    """Track grid over the routing window with static blockage owners.

    Nodes sit at intersections of the vertical layer's x tracks and the
    horizontal layer's y tracks. A node (or edge, or via site) is BLOCKED
    for a net when some foreign-owned shape lies closer than the layer's
    spacing to the metal the router would drop there.
    """

    def __init__(self, testcell: Testcell, tech: TechRules, min_layer: str, max_layer: str,
                 die_margin: int = 0):
        self.testcell = testcell
        self.tech = tech
        lo, hi = tech.index(min_layer), tech.index(max_layer)
        if lo >= hi:
            raise ValueError(f"min layer {min_layer} must lie below max layer {max_layer}")
        self.layers: List[LayerRule] = [r for r in tech.layers[lo:hi + 1] if r.is_routing]
        self.cuts: List[LayerRule] = [r for r in tech.layers[lo:hi + 1] if not r.is_routing]
        if len(self.layers) < 2:
            raise ValueError("routing window needs at least two routing layers")
        h = [r for r in self.layers if r.direction is Direction.HORIZONTAL]
        v = [r for r in self.layers if r.direction is Direction.VERTICAL]
        if not h or not v:
            raise ValueError("routing window needs one horizontal and one vertical layer")
        self.pin_layer: Optional[LayerRule] = tech.routing_below(min_layer)
        self.pin_cut: Optional[LayerRule] = (tech.cut_between(self.pin_layer.name, min_layer)
                                             if self.pin_layer else None)
        die = testcell.die
        self.die = die
        self.bounds = die.bloat(die_margin)
        self.xs = self._tracks(die.x_lo, die.x_hi, v[0].pitch)
        self.ys = self._tracks(die.y_lo, die.y_hi, h[0].pitch)
        self._blockages: Dict[str, SpatialIndex] = {}
        self._cache: Dict[tuple, FrozenSet[str]] = {}
        self.occupancy: Dict[Node, Set[str]] = {}

    @staticmethod
    def _tracks(lo: int, hi: int, pitch: int) -> List[int]:
        out = []
        t = lo + pitch // 2
        while t < hi:
            out.append(t)
            t += pitch
        return out

    def layer_name(self, l: int) -> str:
        return self.layers[l].name

    def xy(self, node: Node) -> Tuple[int, int]:
        return self.xs[node[1]], self.ys[node[2]]

    def in_grid(self, node: Node) -> bool:
        l, j, i = node
        return 0 <= l < len(self.layers) and 0 <= j < len(self.xs) and 0 <= i < len(self.ys)

    def add_blockage(self, owner: str, layer: str, rect: Rect) -> None:
        idx = self._blockages.get(layer)
        if idx is None:
            rule = self.tech.layer(layer.split(":", 1)[-1])
            idx = self._blockages[layer] = SpatialIndex(bucket=max(rule.pitch * 4, 1))
        idx.insert(rect, _Blockage(owner, layer, rect))
        self._cache.clear()

    def owners_near(self, layer: str, rect: Rect, spacing: int) -> FrozenSet[str]:
        idx = self._blockages.get(layer)
        if idx is None:
            return frozenset()
        hits = idx.query(rect, spacing) if spacing > 0 else idx.query(rect)
        return frozenset(idx.item(h)[1].owner for h in hits)

    def touching(self, layer: str, rect: Rect) -> FrozenSet[str]:
        return self.owners_near(layer, rect, 0)

    # metal footprints ----------------------------------------------------
    def wire_rect(self, l: int, a: Tuple[int, int], b: Tuple[int, int]) -> Rect:
        rule = self.layers[l]
        hw = _half(rule.min_width)
        (x1, y1), (x2, y2) = sorted((a, b))
        return Rect(x1 - hw[0], y1 - hw[0], x2 + hw[1], y2 + hw[1])

    def pad_rect(self, layer: LayerRule, cut: LayerRule, x: int, y: int) -> Rect:
        return pad_rect(layer, cut, x, y)

    def cut_rect(self, cut: LayerRule, x: int, y: int) -> Rect:
        return cut_rect(cut, x, y)

    # blocking queries --------------------------------------------------
    def _blockers(self, key, layer: LayerRule, rect: Rect) -> FrozenSet[str]:
        got = self._cache.get(key)
        if got is None:
            got = self.owners_near(layer.name, rect, layer.min_spacing)
            self._cache[key] = got
        return got

    def node_blockers(self, node: Node) -> FrozenSet[str]:
        x, y = self.xy(node)
        return self._blockers(("n", node), self.layers[node[0]], self.wire_rect(node[0], (x, y), (x, y)))

    def edge_blockers(self, a: Node, b: Node) -> FrozenSet[str]:
        key = ("e",) + tuple(sorted((a, b)))
        return self._blockers(key, self.layers[a[0]], self.wire_rect(a[0], self.xy(a), self.xy(b)))

    def via_blockers(self, lower: Node) -> FrozenSet[str]:
        """Owners crowding a via between window layers l and l+1 at this site."""
        key = ("v", lower)
        got = self._cache.get(key)
        if got is None:
            l = lower[0]
            x, y = self.xy(lower)
            cut = self.cuts[l]
            got = (self.owners_near(self.layers[l].name, self.pad_rect(self.layers[l], cut, x, y),
                                    self.layers[l].min_spacing)
                   | self.owners_near(self.layers[l + 1].name, self.pad_rect(self.layers[l + 1], cut, x, y),
                                      self.layers[l + 1].min_spacing)
                   | self.touching(cut.name, self.cut_rect(cut, x, y)))
            self._cache[key] = got
        return got

    def state(self, node: Node, net: Optional[str] = None) -> str:
        blockers = self.node_blockers(node) - ({net} if net else set())
        if blockers:
            return f"BLOCKED({','.join(sorted(blockers))})"
        users = self.occupancy.get(node)
        if users:
            return f"USED({','.join(sorted(users))})"
        return "FREE"

    def neighbours(self, node: Node) -> Iterable[Tuple[Node, bool]]:
        l, j, i = node
        if self.layers[l].direction is Direction.HORIZONTAL:
            steps = ((l, j - 1, i), (l, j + 1, i))
        else:
            steps = ((l, j, i - 1), (l, j, i + 1))
        for n in steps:
            if self.in_grid(n):
                yield n, False
        for dl in (-1, 1):
            n = (l + dl, j, i)
            if self.in_grid(n):
                yield n, True


# --------------------------------------------------------------------------
# Pin access

@dataclass(frozen=True)
class Terminal:
    instance: str
    pin: str
    access: Tuple[Node, ...]
    via: bool  # pin sits one layer below the window and needs a cut


def placed_pin_shapes(inst: InstancePlacement, cell: Cell, pin: str) -> List[Tuple[str, Rect]]:
    return [(s.layer, inst.place(s.rect)) for s in cell.pin(pin).shapes]


def access_points(grid: RouteGrid, inst: InstancePlacement, cell: Cell, pin: str,
                  net: str) -> Terminal:
    """Grid nodes where `pin` can be picked up without a short.

    For a pin one layer below the window: every track intersection inside
    a pin shape whose cut and landing metal stay inside the die, whose
    window-layer node and landing pad are not blocked for `net`, and whose
    pin-layer landing pad touches no foreign shape.
    """
    nodes: Set[Node] = set()
    needs_via = False
    min_layer = grid.layers[0]
    for layer, rect in placed_pin_shapes(inst, cell, pin):
        on_window = layer == min_layer.name
        below = grid.pin_layer is not None and layer == grid.pin_layer.name
        if not (on_window or below):
            continue
        needs_via = needs_via or below
        for j, x in enumerate(grid.xs):
            if not rect.x_lo <= x <= rect.x_hi:
                continue
            for i, y in enumerate(grid.ys):
                if not rect.y_lo <= y <= rect.y_hi:
                    continue
                node = (0, j, i)
                if grid.node_blockers(node) - {net}:
                    continue
                if below:
                    cut = grid.pin_cut
                    top_pad = grid.pad_rect(min_layer, cut, x, y)
                    low_pad = grid.pad_rect(grid.pin_layer, cut, x, y)
                    if not (grid.bounds.contains(top_pad) and grid.bounds.contains(low_pad)
                            and grid.bounds.contains(grid.cut_rect(cut, x, y))):
                        continue
                    if grid.owners_near(min_layer.name, top_pad, min_layer.min_spacing) - {net}:
                        continue
                    if grid.touching(f"pin:{grid.pin_layer.name}", low_pad) - {net}:
                        continue
                nodes.add(node)
    return Terminal(inst.instance_name, pin, tuple(sorted(nodes)), needs_via)


# --------------------------------------------------------------------------
# Router

@dataclass
class _NetRoute:
    nodes: List[Node]
    edges: List[Tuple[Node, Node]]
    taps: List[Tuple[Terminal, Node]]


class MazeRouter:
    """Negotiated-congestion (PathFinder-style) router over a RouteGrid.

    Each pass reroutes every net, pricing nodes
    at 1 + history + present_factor * foreign_users and vias at `via_cost`
    extra. Passes stop once nothing is shared or the iteration budget is
    spent; the best pass seen so far is kept, so the recorded
    opens + shorts never increase. Remaining conflicts are cleared by
    rerouting losers against hard blockage and, failing that, dropping
    them with cause `congestion`.
    """

    def __init__(self, grid: RouteGrid, via_cost: int = 5, max_iterations: int = 20):
        self.grid = grid
        self.via_cost = via_cost
        self.max_iterations = max_iterations
        self.history: Dict[Node, int] = {}

    def _cost(self, node: Node, net: str, present: int, hard: Mapping[Node, Set[str]]) -> Optional[int]:
        users = self.grid.occupancy.get(node)
        others = len(users - {net}) if users else 0
        if hard is not None and others:
            return None
        return 1 + self.history.get(node, 0) + present * others

    def _search(self, net: str, sources: Set[Node], targets: Dict[Node, int],
                present: int, hard) -> Optional[List[Node]]:
        g = self.grid
        tx = [(n[1], n[2]) for n in targets]

        def h(n):
            return min(abs(n[1] - a) + abs(n[2] - b) for a, b in tx)

        best: Dict[Node, int] = {}
        prev: Dict[Node, Optional[Node]] = {}
        heap = []
        for s in sorted(sources):
            best[s] = 0
            prev[s] = None
            heapq.heappush(heap, (h(s), 0, s))
        while heap:
            f, cost, node = heapq.heappop(heap)
            if cost != best.get(node):
                continue
            if node in targets:
                path = [node]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for nxt, is_via in g.neighbours(node):
                if g.node_blockers(nxt) - {net}:
                    continue
                if is_via:
                    if g.via_blockers(min(node, nxt)) - {net}:
                        continue
                elif g.edge_blockers(node, nxt) - {net}:
                    continue
                step = self._cost(nxt, net, present, hard)
                if step is None:
                    continue
                c = cost + step + (self.via_cost if is_via else 0)
                if c < best.get(nxt, 1 << 62):
                    best[nxt] = c
                    prev[nxt] = node
                    heapq.heappush(heap, (c + h(nxt), c, nxt))
        return None

    def route_net(self, net: str, terminals: Sequence[Terminal], present: int = 1,
                  hard=None) -> Optional[_NetRoute]:
        tree: Set[Node] = set()
        edges: List[Tuple[Node, Node]] = []
        taps: List[Tuple[Terminal, Node]] = []
        order: List[Node] = []
        remaining = list(terminals[1:])
        first = terminals[0]
        sources: Set[Node] = set(first.access)
        first_tap: Optional[Node] = None
        while remaining:
            targets: Dict[Node, int] = {}
            for k, t in enumerate(remaining):
                for n in t.access:
                    targets.setdefault(n, k)
            path = self._search(net, sources if not tree else tree, targets, present, hard)
            if path is None:
                return None
            if first_tap is None:
                first_tap = path[0]
                taps.append((first, first_tap))
            reached = remaining.pop(targets[path[-1]])
            taps.append((reached, path[-1]))
            for a, b in zip(path, path[1:]):
                edges.append((a, b))
            for n in path:
                if n not in tree:
                    tree.add(n)
                    order.append(n)
        if first_tap is None:
            # single-terminal net: just drop the tap
            first_tap = first.access[0]
            taps.append((first, first_tap))
            tree.add(first_tap)
            order.append(first_tap)
        return _NetRoute(order, edges, taps)

    def _occupy(self, net: str, route: _NetRoute) -> None:
        for n in route.nodes:
            self.grid.occupancy.setdefault(n, set()).add(net)

    def _release(self, net: str, route: _NetRoute) -> None:
        for n in route.nodes:
            users = self.grid.occupancy.get(n)
            if users:
                users.discard(net)
                if not users:
                    del self.grid.occupancy[n]

    def _overused(self) -> List[Node]:
        return sorted(n for n, users in self.grid.occupancy.items() if len(users) > 1)

    def run(self, order: Sequence[str], terminals: Mapping[str, Sequence[Terminal]]
            ) -> Tuple[Dict[str, _NetRoute], Dict[str, str], List[int]]:
        routes: Dict[str, _NetRoute] = {}
        failed: Dict[str, str] = {}
        for name in order:
            if any(not t.access for t in terminals[name]):
                failed[name] = NO_ACCESS
        live = [n for n in order if n not in failed]

        history_counts: List[int] = []
        best: Optional[Tuple[int, Dict[str, _NetRoute], Dict[str, str]]] = None
        present = 1
        to_route = list(live)
        for _ in range(max(1, self.max_iterations)):
            for name in to_route:
                if name in routes:
                    self._release(name, routes.pop(name))
                failed.pop(name, None)
                r = self.route_net(name, terminals[name], present)
                if r is None:
                    failed[name] = BLOCKAGE
                else:
                    routes[name] = r
                    self._occupy(name, r)
            overused = self._overused()
            count = len(overused) + len(failed)
            if best is None or count <= best[0]:
                best = (count, dict(routes), dict(failed))
            history_counts.append(best[0])
            if not overused:
                break
            for n in overused:
                self.history[n] = self.history.get(n, 0) + 1
            present = present * 3 // 2 + 1
            to_route = list(live)

        _, routes, failed = best
        self.grid.occupancy.clear()
        for name in live:
            if name in routes:
                self._occupy(name, routes[name])
        # Clear leftover sharing: keep nets in priority order, reroute the rest
        # against hard blockage.
        if self._overused():
            kept: List[str] = []
            losers: List[str] = []
            taken: Set[Node] = set()
            for name in live:
                r = routes.get(name)
                if r is None:
                    continue
                if taken.isdisjoint(r.nodes):
                    kept.append(name)
                    taken.update(r.nodes)
                else:
                    losers.append(name)
            for name in losers:
                self._release(name, routes.pop(name))
            for name in losers:
                r = self.route_net(name, terminals[name], 0, hard=self.grid.occupancy)
                if r is None:
                    failed[name] = CONGESTION
                else:
                    routes[name] = r
                    self._occupy(name, r)
            history_counts.append(len(self._overused()) + len(failed))
        return routes, failed, history_counts


# --------------------------------------------------------------------------
# Driver

def _hpbb(points: Sequence[Tuple[int, int]]) -> int:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def net_order(nets: Sequence[Net], testcell: Testcell, cells: Mapping[str, Cell]) -> List[str]:
    """Ascending half-perimeter of the terminal bounding box, ties by name."""
    keyed = []
    for net in nets:
        pts = []
        for inst_name, pin in net.terminals:
            inst = testcell.instance(inst_name)
            for _, r in placed_pin_shapes(inst, cells[inst.cell_name], pin):
                pts.append(((r.x_lo + r.x_hi) // 2, (r.y_lo + r.y_hi) // 2))
        keyed.append((_hpbb(pts) if pts else 0, net.name))
    return [name for _, name in sorted(keyed)]


def build_grid(testcell: Testcell, cells: Mapping[str, Cell], tech: TechRules, options: RouteOptions,
               nets: Sequence[Net], rails: Sequence[Wire], straps: Sequence[Wire]) -> RouteGrid:
    grid = RouteGrid(testcell, tech, options.min_layer, options.max_layer, options.die_margin)
    window = {r.name for r in grid.layers} | {c.name for c in grid.cuts}
    owner = pin_net_map(nets)
    for w in list(rails) + list(straps):
        grid.add_blockage(w.net, w.layer, w.rect)
    pin_layer = grid.pin_layer.name if grid.pin_layer else None
    for inst in testcell.instances:
        cell = cells[inst.cell_name]
        for pin in cell.pins:
            net = owner.get((inst.instance_name, pin.name), floating_net(inst.instance_name, pin.name))
            for s in pin.shapes:
                rect = inst.place(s.rect)
                if s.layer in window:
                    grid.add_blockage(net, s.layer, rect)
                elif s.layer == pin_layer:
                    grid.add_blockage(net, f"pin:{pin_layer}", rect)
        for s in cell.obstructions:
            rect = inst.place(s.rect)
            who = obstruction_owner(inst.instance_name)
            if s.layer in window:
                grid.add_blockage(who, s.layer, rect)
            elif s.layer == pin_layer:
                grid.add_blockage(who, f"pin:{pin_layer}", rect)
    return grid


def route(testcell: Testcell, nets: Sequence[Net], grid: RouteGrid, options: RouteOptions,
          cells: Mapping[str, Cell], rails: Sequence[Wire] = (), straps: Sequence[Wire] = (),
          warnings: Optional[List[str]] = None) -> RoutedDesign:
    """Connect every signal net on `grid`; nets that cannot be connected are
    reported in `unrouted` as PIN_BLOCKED, with the finer cause (no access
    point, static blockage, lost negotiation) kept in `causes`."""
    signal = [n for n in nets if n.kind is PinKind.SIGNAL]
    terminals: Dict[str, List[Terminal]] = {}
    for net in signal:
        terms = []
        for inst_name, pin in net.terminals:
            inst = testcell.instance(inst_name)
            terms.append(access_points(grid, inst, cells[inst.cell_name], pin, net.name))
        terminals[net.name] = terms
    order = net_order(signal, testcell, cells)

    router = MazeRouter(grid, options.via_cost, options.max_ripup_iterations)
    routes, failed, history = router.run(order, terminals)

    design = RoutedDesign(testcell, list(nets), rails=list(rails), straps=list(straps),
                          repair_history=history, warnings=list(warnings or []))
    for name in order:
        if name in failed:
            design.unrouted.append((name, PIN_BLOCKED))
            design.causes[name] = failed[name]
            continue
        r = routes[name]
        design.wires.extend(_wires(grid, name, r))
        design.vias.extend(_vias(grid, name, r))
    return design


def _wires(grid: RouteGrid, net: str, r: _NetRoute) -> List[Wire]:
    """Merge collinear path steps into maximal on-track segments."""
    steps: Dict[Tuple[int, int, int], List[int]] = {}
    for a, b in r.edges:
        if a[0] != b[0]:
            continue
        l = a[0]
        if a[2] == b[2]:  # along x on track i
            key = (l, 0, a[2])
            steps.setdefault(key, []).append(min(a[1], b[1]))
        else:
            key = (l, 1, a[1])
            steps.setdefault(key, []).append(min(a[2], b[2]))
    out: List[Wire] = []
    for (l, axis, track), starts in sorted(steps.items()):
        starts = sorted(set(starts))
        runs = []
        for s in starts:
            if runs and runs[-1][1] == s:
                runs[-1][1] = s + 1
            else:
                runs.append([s, s + 1])
        for lo, hi in runs:
            if axis == 0:
                a, b = (grid.xs[lo], grid.ys[track]), (grid.xs[hi], grid.ys[track])
            else:
                a, b = (grid.xs[track], grid.ys[lo]), (grid.xs[track], grid.ys[hi])
            out.append(Wire(net, grid.layer_name(l), grid.wire_rect(l, a, b)))
    return out


def _vias(grid: RouteGrid, net: str, r: _NetRoute) -> List[Via]:
    out = set()
    for a, b in r.edges:
        if a[0] != b[0]:
            lower = min(a, b)
            out.add(Via(net, grid.cuts[lower[0]].name, grid.xy(lower)))
    for term, node in r.taps:
        if term.via:
            out.add(Via(net, grid.pin_cut.name, grid.xy(node)))
    return sorted(out, key=lambda v: (v.cut_layer, v.center))


def route_testcell(testcell: Testcell, cells: Mapping[str, Cell], tech: TechRules,
                   options: RouteOptions = RouteOptions()) -> RoutedDesign:
    """Nets, rails, straps, grid and routing for one testcell."""
    warnings: List[str] = []
    nets = assign_pin_nets(testcell, cells, options.seed, options.net_degree,
                           options.pin_pairing, warnings)
    rails = preroute_power(testcell, tech, options.min_layer, cells, warnings)
    straps: List[Wire] = []
    if options.straps == "random":
        lo, hi = tech.index(options.min_layer), tech.index(options.max_layer)
        window = [r.name for r in tech.layers[lo:hi + 1] if r.is_routing]
        straps = generate_straps(testcell, tech, window, options.seed, rails, warnings)
    elif options.straps != "off":
        raise ValueError(f"unknown strap mode '{options.straps}'")
    grid = build_grid(testcell, cells, tech, options, nets, rails, straps)
    return route(testcell, nets, grid, options, cells, rails, straps, warnings)
