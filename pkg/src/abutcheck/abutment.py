"""Abutment topology enumeration with the area-efficient testcell patterns.

A testcell is one row (or a k-row stack) of abutted instances. Three
patterns cover every side-to-side abutment of a library:

* ``scell_<A>``      four copies of A, oriented N FN FN N;
* ``scell_<A>_<B>``  B A B A B with B_R0 A_R0 B_MY A_MY B_R0;
* ``mcell_<A>_<B>``  a k-row cell A between three k-high stacks of B.

Coverage is judged against `coverage_classes`, a brute-force enumeration
of every ordered pair of same-row-legal orientations, quotiented by the
mirror involution (flipping a whole pair about the y axis yields the same
abutment seen from the other side).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Sequence, Set, Tuple

from .geometry import Rect
from .library import Cell


class Orientation(enum.Enum):
    # value = (mirror x -> w - x, mirror y -> h - y)
    R0 = (False, False)
    MY = (True, False)
    MX = (False, True)
    R180 = (True, True)

    @property
    def def_code(self) -> str:
        return _DEF_CODES[self]

    @classmethod
    def from_def(cls, code: str) -> "Orientation":
        try:
            return _FROM_DEF[code]
        except KeyError:
            raise ValueError(f"unsupported DEF orientation '{code}'") from None

    @property
    def sort_key(self) -> int:
        return _ORDER[self]


_DEF_CODES = {Orientation.R0: "N", Orientation.R180: "S",
              Orientation.MX: "FS", Orientation.MY: "FN"}
_FROM_DEF = {v: k for k, v in _DEF_CODES.items()}
_ORDER = {o: i for i, o in enumerate((Orientation.R0, Orientation.R180,
                                       Orientation.MX, Orientation.MY))}


def compose(a: Orientation, b: Orientation) -> Orientation:
    """Group product in {R0, R180, MX, MY} (the Klein four-group)."""
    return Orientation((a.value[0] ^ b.value[0], a.value[1] ^ b.value[1]))


def apply_orientation(r: Rect, o: Orientation, cell_w: int, cell_h: int) -> Rect:
    flip_x, flip_y = o.value
    x_lo, x_hi = (cell_w - r.x_hi, cell_w - r.x_lo) if flip_x else (r.x_lo, r.x_hi)
    y_lo, y_hi = (cell_h - r.y_hi, cell_h - r.y_lo) if flip_y else (r.y_lo, r.y_hi)
    return Rect(x_lo, y_lo, x_hi, y_hi)


def row_orientations(row: int) -> Tuple[Orientation, Orientation]:
    """Orientations that keep a single-height cell rail-aligned on `row`."""
    if row % 2 == 0:
        return Orientation.R0, Orientation.MY
    return Orientation.MX, Orientation.R180


class TestcellKind(str, enum.Enum):
    __test__ = False

    TYPE_AA = "TYPE_AA"
    TYPE_AB = "TYPE_AB"
    TYPE_MULTI = "TYPE_MULTI"


MODES = ("single_cell_only", "cell_by_cell_only", "all_combo_in_one_cell_only", "all")


@dataclass(frozen=True)
class InstancePlacement:
    instance_name: str
    cell_name: str
    origin: Tuple[int, int]
    orientation: Orientation
    row_index: int
    width: int
    height: int
    height_rows: int = 1

    @property
    def bbox(self) -> Rect:
        x, y = self.origin
        return Rect(x, y, x + self.width, y + self.height)

    def place(self, r: Rect) -> Rect:
        """Map a rect from cell coordinates into testcell coordinates."""
        x, y = self.origin
        return apply_orientation(r, self.orientation, self.width, self.height).translate(x, y)


@dataclass(frozen=True)
class Testcell:
    __test__ = False

    name: str
    kind: TestcellKind
    instances: Tuple[InstancePlacement, ...]
    die: Rect
    rows: int
    row_height: int

    def instance(self, name: str) -> InstancePlacement:
        for inst in self.instances:
            if inst.instance_name == name:
                return inst
        raise KeyError(name)

    @property
    def cell_names(self) -> Tuple[str, ...]:
        return tuple(sorted({i.cell_name for i in self.instances}))

    def abutment_edges(self) -> List[int]:
        """x coordinates where two instances meet side to side."""
        xs = set()
        for a in self.instances:
            for b in self.instances:
                if a.bbox.x_hi == b.bbox.x_lo and a.bbox.y_lo < b.bbox.y_hi and b.bbox.y_lo < a.bbox.y_hi:
                    xs.add(a.bbox.x_hi)
        return sorted(xs)


Element = Tuple[str, Orientation]


def mirror(pair: Tuple[Element, Element]) -> Tuple[Element, Element]:
    (left, o_left), (right, o_right) = pair
    return (right, compose(Orientation.MY, o_right)), (left, compose(Orientation.MY, o_left))


def _pair_key(pair):
    (a, oa), (b, ob) = pair
    return (a, oa.sort_key, b, ob.sort_key)


@dataclass(frozen=True, order=True)
class AdjacencyClass:
    """Mirror-canonical ordered oriented pair.

    `row` is the offset, inside a multiple-height cell, of the row where a
    single-height neighbour abuts it; it is 0 for all other pairs.
    """
    key: Tuple[str, int, str, int]
    row: int
    left: Element
    right: Element

    @classmethod
    def of(cls, left: Element, right: Element, row: int = 0) -> "AdjacencyClass":
        pair = (left, right)
        other = mirror(pair)
        canon = min(pair, other, key=_pair_key)
        return cls(_pair_key(canon), row, canon[0], canon[1])


# --------------------------------------------------------------------------
# Testcell constructors

def _place(name, cell: Cell, x, y, o, row) -> InstancePlacement:
    return InstancePlacement(name, cell.name, (x, y), o, row, cell.width, cell.height, cell.height_rows)


def make_type_aa(cell: Cell) -> Testcell:
    """Four copies of `cell` in one row, oriented N FN FN N.

    Also used for multiple-height cells, which tile the same way.
    """
    R0, MY = Orientation.R0, Orientation.MY
    w = cell.width
    insts = tuple(_place(f"U{i + 1}", cell, i * w, 0, o, 0)
                  for i, o in enumerate((R0, MY, MY, R0)))
    row_h = cell.height // cell.height_rows
    return Testcell(f"scell_{cell.name}", TestcellKind.TYPE_AA, insts,
                    Rect(0, 0, 4 * w, cell.height), cell.height_rows, row_h)


def make_type_ab(cell_a: Cell, cell_b: Cell) -> Testcell:
    if cell_a.height_rows != 1 or cell_b.height_rows != 1:
        raise ValueError("make_type_ab needs two single-height cells")
    R0, MY = Orientation.R0, Orientation.MY
    seq = ((cell_b, R0), (cell_a, R0), (cell_b, MY), (cell_a, MY), (cell_b, R0))
    insts = []
    x = 0
    for i, (cell, o) in enumerate(seq):
        insts.append(_place(f"U{i + 1}", cell, x, 0, o, 0))
        x += cell.width
    height = max(cell_a.height, cell_b.height)
    return Testcell(f"scell_{cell_a.name}_{cell_b.name}", TestcellKind.TYPE_AB,
                    tuple(insts), Rect(0, 0, x, height), 1, height)


def make_multi(cell_a: Cell, cell_b: Cell) -> Testcell:
    """Multiple-height `cell_a` between three stacks of single-height `cell_b`.

    Columns are [B-stack, A(R0), B-stack, A(MY), B-stack]; 2 + 3k instances
    for a k-row A. Each stack alternates the row-legal orientations so that
    the stack beside A_R0 mirrors the ones on the outside.
    """
    k = cell_a.height_rows
    if k < 2:
        raise ValueError("make_multi needs a multiple-height cell; use make_type_ab")
    if cell_b.height_rows != 1:
        raise ValueError("make_multi pairs a multiple-height cell with a single-height one")
    row_h = cell_b.height
    if cell_a.height != k * row_h:
        raise ValueError(f"{cell_a.name} height is not {k} x {cell_b.name} height")
    insts: List[InstancePlacement] = []
    x = 0
    n = 0

    def add(cell, y, o, row):
        nonlocal n
        n += 1
        insts.append(_place(f"U{n}", cell, x, y, o, row))

    for col in range(5):
        if col in (1, 3):
            add(cell_a, 0, Orientation.R0 if col == 1 else Orientation.MY, 0)
            x += cell_a.width
            continue
        for r in range(k):
            plain, flipped = row_orientations(r)
            add(cell_b, r * row_h, flipped if col == 2 else plain, r)
        x += cell_b.width
    return Testcell(f"mcell_{cell_a.name}_{cell_b.name}", TestcellKind.TYPE_MULTI,
                    tuple(insts), Rect(0, 0, x, k * row_h), k, row_h)


# --------------------------------------------------------------------------
# Coverage

def realized_classes(testcell: Testcell) -> Set[AdjacencyClass]:
    """Adjacency classes exercised by the side-to-side abutments of a testcell."""
    out: Set[AdjacencyClass] = set()
    for r in range(testcell.rows):
        in_row = sorted((i for i in testcell.instances
                         if i.row_index <= r < i.row_index + i.height_rows),
                        key=lambda i: i.origin[0])
        for left, right in zip(in_row, in_row[1:]):
            if left.bbox.x_hi != right.bbox.x_lo:
                continue
            slot = 0
            if (left.height_rows > 1) != (right.height_rows > 1):
                multi = left if left.height_rows > 1 else right
                slot = r - multi.row_index
            out.add(AdjacencyClass.of((left.cell_name, left.orientation),
                                      (right.cell_name, right.orientation), slot))
    return out


def coverage_classes(cells: Sequence[Cell]) -> Set[AdjacencyClass]:
    """Brute force: every mirror class of every ordered, same-row-legal
    oriented pair a library can produce (multi-vs-multi pairs excluded)."""
    out: Set[AdjacencyClass] = set()
    singles = [c for c in cells if c.height_rows == 1]
    multis = [c for c in cells if c.height_rows > 1]
    base = row_orientations(0)
    for c in cells:
        for oa, ob in itertools.product(base, base):
            out.add(AdjacencyClass.of((c.name, oa), (c.name, ob)))
    for a, b in itertools.combinations(singles, 2):
        for oa, ob in itertools.product(base, base):
            out.add(AdjacencyClass.of((a.name, oa), (b.name, ob)))
            out.add(AdjacencyClass.of((b.name, ob), (a.name, oa)))
    for m in multis:
        for s in singles:
            for r in range(m.height_rows):
                for om, os_ in itertools.product(base, row_orientations(r)):
                    out.add(AdjacencyClass.of((m.name, om), (s.name, os_), r))
                    out.add(AdjacencyClass.of((s.name, os_), (m.name, om), r))
    return out


def ordered_pair_count(kind: TestcellKind) -> int:
    """Ordered oriented pairs a conventional testcell places one by one."""
    base = row_orientations(0)
    if kind is TestcellKind.TYPE_AA:
        return len(list(itertools.product(base, base)))
    if kind is TestcellKind.TYPE_AB:
        return 2 * len(list(itertools.product(base, base)))
    raise ValueError(kind)


def instance_count(kind: TestcellKind, rows: int = 1) -> int:
    return {TestcellKind.TYPE_AA: 4, TestcellKind.TYPE_AB: 5}.get(kind, 2 + 3 * rows)


def reduction_ratio(kind: TestcellKind) -> float:
    """Cells in a conventional pair-by-pair testcell over cells in ours."""
    return 2 * ordered_pair_count(kind) / instance_count(kind)


# --------------------------------------------------------------------------
# Library-level enumeration

def enumerate_library(cells: Sequence[Cell], mode: str = "all") -> List[Testcell]:
    if mode not in MODES:
        raise ValueError(f"unknown mode '{mode}'; expected one of {', '.join(MODES)}")
    if not cells:
        raise ValueError("empty library")
    ordered = sorted(cells, key=lambda c: c.name)
    singles = [c for c in ordered if c.height_rows == 1]
    multis = [c for c in ordered if c.height_rows > 1]
    out: List[Testcell] = []
    if mode != "cell_by_cell_only":
        out.extend(make_type_aa(c) for c in ordered)
    if mode != "single_cell_only":
        out.extend(make_type_ab(a, b) for a, b in itertools.combinations(singles, 2))
        out.extend(make_multi(m, s) for m in multis for s in singles)
    return out


PREDICTED = {
    "conventional": lambda n: 8 * n + 8 * (n - 1) * n,
    "synopsys": lambda n: 6 * n + 6 * (n - 1) * n,
    # 4N + 2.5 (N-1) N, kept in integers: N (N-1) is always even
    "ours": lambda n: 4 * n + 5 * (n - 1) * n // 2,
}


def predicted_cell_count(n: int, method: str) -> int:
    if n < 1:
        raise ValueError("N must be at least 1")
    try:
        return PREDICTED[method](n)
    except KeyError:
        raise ValueError(f"unknown method '{method}'") from None


def total_instances(testcells: Iterable[Testcell]) -> int:
    return sum(len(t.instances) for t in testcells)


def classes_by_testcell(testcells: Iterable[Testcell]) -> Dict[str, FrozenSet[AdjacencyClass]]:
    return {t.name: frozenset(realized_classes(t)) for t in testcells}
