"""Cell-library and technology-rule models, their text parsers and the
library profiler.

The cell format is a small LEF subset (MACRO/SIZE/PIN/PORT/RECT/USE/OBS
plus MASK for pre-colored shapes); the rule deck is a line-oriented
format, one LAYER directive per line.
"""

from __future__ import annotations

import enum
import fnmatch
import hashlib
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .geometry import Rect

log = logging.getLogger(__name__)

DEFAULT_UNITS = 1000
DEFAULT_POWER_PATTERNS = ("VDD",)
DEFAULT_GROUND_PATTERNS = ("VSS",)


class LibraryError(Exception):
    """Malformed cell or rule text. Carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class PinKind(str, enum.Enum):
    SIGNAL = "SIGNAL"
    POWER = "POWER"
    GROUND = "GROUND"


class LayerKind(str, enum.Enum):
    ROUTING = "ROUTING"
    CUT = "CUT"


class Direction(str, enum.Enum):
    HORIZONTAL = "HORIZONTAL"
    VERTICAL = "VERTICAL"
    NONE = "NONE"


@dataclass(frozen=True)
class Shape:
    layer: str
    rect: Rect
    mask: int = 0  # 0 = uncolored


@dataclass(frozen=True)
class Pin:
    name: str
    kind: PinKind
    shapes: Tuple[Shape, ...]

    def __post_init__(self):
        if not self.shapes:
            raise ValueError(f"pin {self.name} has no shapes")


@dataclass(frozen=True)
class Cell:
    name: str
    width: int
    height: int
    pins: Tuple[Pin, ...]
    obstructions: Tuple[Shape, ...] = ()
    height_rows: int = 1

    @property
    def bbox(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def pin(self, name: str) -> Pin:
        for p in self.pins:
            if p.name == name:
                return p
        raise KeyError(f"{self.name} has no pin {name}")

    @property
    def signal_pins(self) -> Tuple[Pin, ...]:
        return tuple(p for p in self.pins if p.kind is PinKind.SIGNAL)


@dataclass(frozen=True)
class Diagnostic:
    code: str  # REJECTED_CELL | NO_OBSTRUCTIONS | PG_PIN_OFF_RAIL | PITCH_TOO_SMALL
    subject: str
    message: str
    line: Optional[int] = None


@dataclass(frozen=True)
class LayerRule:
    name: str
    kind: LayerKind
    direction: Direction
    pitch: int
    min_width: int
    min_spacing: int
    same_net_spacing: int
    dp_spacing: int = 0
    via_enclosure: int = 0
    min_enclosed_width: int = 0

    @property
    def is_routing(self) -> bool:
        return self.kind is LayerKind.ROUTING


@dataclass(frozen=True)
class TechRules:
    layers: Tuple[LayerRule, ...]
    site_row_height: int
    units_per_micron: int = DEFAULT_UNITS

    def layer(self, name: str) -> LayerRule:
        for rule in self.layers:
            if rule.name == name:
                return rule
        raise KeyError(f"unknown layer {name}")

    def index(self, name: str) -> int:
        for i, rule in enumerate(self.layers):
            if rule.name == name:
                return i
        raise KeyError(f"unknown layer {name}")

    @property
    def routing_layers(self) -> Tuple[LayerRule, ...]:
        return tuple(r for r in self.layers if r.is_routing)

    def cut_between(self, lower: str, upper: str) -> LayerRule:
        i, j = self.index(lower), self.index(upper)
        if j != i + 2 or self.layers[i + 1].kind is not LayerKind.CUT:
            raise KeyError(f"no cut layer between {lower} and {upper}")
        return self.layers[i + 1]

    def routing_below(self, name: str) -> Optional[LayerRule]:
        i = self.index(name)
        for rule in reversed(self.layers[:i]):
            if rule.is_routing:
                return rule
        return None

    def adjacent_routing(self, cut: str) -> Tuple[LayerRule, LayerRule]:
        i = self.index(cut)
        return self.layers[i - 1], self.layers[i + 1]

    def digest(self) -> str:
        return hashlib.sha256(emit_tech_rules(self).encode()).hexdigest()


# --------------------------------------------------------------------------
# Tokenizing

def _tokens(text: str) -> Iterator[Tuple[str, int]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for tok in line.replace(";", " ; ").split():
            yield tok, lineno


class _Stream:
    def __init__(self, text: str):
        self._toks = list(_tokens(text))
        self._pos = 0

    def peek(self, ahead: int = 0) -> Optional[str]:
        i = self._pos + ahead
        return self._toks[i][0] if i < len(self._toks) else None

    @property
    def line(self) -> Optional[int]:
        if self._pos < len(self._toks):
            return self._toks[self._pos][1]
        return self._toks[-1][1] if self._toks else None

    def next(self) -> str:
        if self._pos >= len(self._toks):
            raise LibraryError("unexpected end of input", self.line)
        tok = self._toks[self._pos][0]
        self._pos += 1
        return tok

    def expect(self, want: str) -> None:
        line = self.line
        got = self.next()
        if got != want:
            raise LibraryError(f"expected '{want}', got '{got}'", line)

    def skip_statement(self) -> None:
        while self.next() != ";":
            pass

    def number(self, units: int) -> int:
        line = self.line
        tok = self.next()
        try:
            value = Decimal(tok) * units
        except InvalidOperation:
            raise LibraryError(f"expected a number, got '{tok}'", line) from None
        return int(value.to_integral_value())


# --------------------------------------------------------------------------
# Cells

def _classify(name: str, use: Optional[str], power_patterns, ground_patterns, line) -> PinKind:
    if use is not None:
        if use in ("POWER", "GROUND", "SIGNAL"):
            return PinKind(use)
        if use in ("CLOCK", "ANALOG", "SCAN", "TIEOFF"):
            return PinKind.SIGNAL
        raise LibraryError(f"unknown USE '{use}' on pin {name}", line)
    if any(fnmatch.fnmatchcase(name, p) for p in power_patterns):
        return PinKind.POWER
    if any(fnmatch.fnmatchcase(name, p) for p in ground_patterns):
        return PinKind.GROUND
    return PinKind.SIGNAL


def _parse_geometry(ts: _Stream, units: int) -> List[Shape]:
    """LAYER/RECT statements up to (and including) the closing END."""
    shapes: List[Shape] = []
    layer: Optional[str] = None
    mask = 0
    while True:
        line = ts.line
        tok = ts.next()
        if tok == "END":
            return shapes
        if tok == "LAYER":
            layer = ts.next()
            mask = 0
            if ts.peek() == "MASK":
                ts.next()
                mask = int(ts.next())
            ts.expect(";")
        elif tok == "RECT":
            if layer is None:
                raise LibraryError("RECT before LAYER", line)
            rect_mask = mask
            if ts.peek() == "MASK":
                ts.next()
                rect_mask = int(ts.next())
            x1, y1, x2, y2 = (ts.number(units) for _ in range(4))
            ts.expect(";")
            if rect_mask not in (0, 1, 2):
                raise LibraryError(f"MASK must be 1 or 2, got {rect_mask}", line)
            shapes.append(Shape(layer, Rect(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)), rect_mask))
        elif tok == "CLASS":
            ts.skip_statement()
        else:
            raise LibraryError(f"unexpected '{tok}' in geometry", line)


def _parse_pin(ts: _Stream, units, power_patterns, ground_patterns) -> Pin:
    name = ts.next()
    pin_line = ts.line
    use = None
    shapes: List[Shape] = []
    while True:
        line = ts.line
        tok = ts.next()
        if tok == "USE":
            use = ts.next()
            ts.expect(";")
        elif tok == "PORT":
            shapes.extend(_parse_geometry(ts, units))
            # "END PORT" closes the port unless PORT starts the next port.
            if ts.peek() == "PORT" and ts.peek(1) not in ("LAYER", "CLASS"):
                ts.next()
        elif tok == "END":
            end = ts.next()
            if end != name:
                raise LibraryError(f"END {end} does not close pin {name}", line)
            break
        else:
            ts.skip_statement()
    if not shapes:
        raise LibraryError(f"pin {name} has no shapes", pin_line)
    kind = _classify(name, use, power_patterns, ground_patterns, pin_line)
    return Pin(name, kind, tuple(shapes))


def parse_cells(text: str, row_height: Optional[int] = None,
                units: int = DEFAULT_UNITS,
                diagnostics: Optional[List[Diagnostic]] = None,
                power_patterns: Sequence[str] = DEFAULT_POWER_PATTERNS,
                ground_patterns: Sequence[str] = DEFAULT_GROUND_PATTERNS) -> List[Cell]:
    """Parse every MACRO in `text` into a Cell.

    Syntax errors raise LibraryError. Cells that parse but break a model
    invariant (pin outside the bbox, height not a row multiple) are left
    out and reported as REJECTED_CELL diagnostics. When `row_height` is not
    given, the smallest cell height is taken as the row height.
    """
    if diagnostics is None:
        diagnostics = []
    ts = _Stream(text)
    raw: List[Tuple[Cell, int]] = []
    while ts.peek() is not None:
        tok = ts.next()
        if tok != "MACRO":
            continue
        line = ts.line
        name = ts.next()
        width = height = None
        pins: List[Pin] = []
        obs: List[Shape] = []
        while True:
            stmt_line = ts.line
            tok = ts.next()
            if tok == "SIZE":
                width = ts.number(units)
                ts.expect("BY")
                height = ts.number(units)
                ts.expect(";")
            elif tok == "PIN":
                pins.append(_parse_pin(ts, units, power_patterns, ground_patterns))
            elif tok == "OBS":
                obs.extend(_parse_geometry(ts, units))
            elif tok == "END":
                end = ts.next()
                if end != name:
                    raise LibraryError(f"END {end} does not close MACRO {name}", stmt_line)
                break
            elif tok == "MACRO":
                raise LibraryError(f"MACRO {name} is not closed", stmt_line)
            else:
                ts.skip_statement()
        if width is None or height is None:
            raise LibraryError(f"MACRO {name} has no SIZE", line)
        if width <= 0 or height <= 0:
            raise LibraryError(f"MACRO {name} has non-positive size", line)
        if any(c.name == name for c, _ in raw):
            raise LibraryError(f"duplicate MACRO {name}", line)
        raw.append((Cell(name, width, height, tuple(pins), tuple(obs)), line))

    if row_height is None and raw:
        row_height = min(c.height for c, _ in raw)

    cells: List[Cell] = []
    for cell, line in raw:
        reason = _rejection(cell, row_height)
        if reason:
            diagnostics.append(Diagnostic("REJECTED_CELL", cell.name, reason, line))
            log.warning("rejected cell %s: %s", cell.name, reason)
            continue
        cell = replace(cell, height_rows=cell.height // row_height)
        for d in _cell_warnings(cell, row_height, line):
            diagnostics.append(d)
            log.warning("%s: %s", cell.name, d.message)
        cells.append(cell)
    return cells


def _rejection(cell: Cell, row_height: int) -> Optional[str]:
    if cell.height % row_height:
        return f"height {cell.height} is not a multiple of row height {row_height}"
    box = cell.bbox
    for pin in cell.pins:
        for s in pin.shapes:
            if not box.contains(s.rect):
                return f"pin {pin.name} shape {tuple(s.rect)} lies outside the cell"
    return None


def _cell_warnings(cell: Cell, row_height: int, line: int) -> List[Diagnostic]:
    out = []
    if cell.pins and not cell.obstructions:
        out.append(Diagnostic(
            "NO_OBSTRUCTIONS", cell.name,
            "cell has pins but no obstructions; an abstract-only view can hide "
            "spacing errors introduced by via enclosure metal", line))
    boundaries = {r * row_height for r in range(cell.height_rows + 1)}
    for pin in cell.pins:
        if pin.kind is PinKind.SIGNAL:
            continue
        if not any(s.rect.y_lo in boundaries or s.rect.y_hi in boundaries for s in pin.shapes):
            out.append(Diagnostic("PG_PIN_OFF_RAIL", cell.name,
                                  f"{pin.kind.value.lower()} pin {pin.name} does not touch a rail", line))
    return out


def _microns(value: int, units: int) -> str:
    q = Decimal(value) / Decimal(units)
    s = format(q.normalize(), "f")
    return s


def emit_cells(cells: Sequence[Cell], units: int = DEFAULT_UNITS) -> str:
    """Write cells back out in the LEF subset accepted by parse_cells."""
    m = lambda v: _microns(v, units)  # noqa: E731
    out: List[str] = []

    def geometry(shapes, indent):
        layer = None
        for s in shapes:
            key = (s.layer, s.mask)
            if key != layer:
                mask = f" MASK {s.mask}" if s.mask else ""
                out.append(f"{indent}LAYER {s.layer}{mask} ;")
                layer = key
            r = s.rect
            out.append(f"{indent}  RECT {m(r.x_lo)} {m(r.y_lo)} {m(r.x_hi)} {m(r.y_hi)} ;")

    for cell in cells:
        out.append(f"MACRO {cell.name}")
        out.append(f"  SIZE {m(cell.width)} BY {m(cell.height)} ;")
        for pin in cell.pins:
            out.append(f"  PIN {pin.name}")
            out.append(f"    USE {pin.kind.value} ;")
            out.append("    PORT")
            geometry(pin.shapes, "      ")
            out.append("    END PORT")
            out.append(f"  END {pin.name}")
        if cell.obstructions:
            out.append("  OBS")
            geometry(cell.obstructions, "    ")
            out.append("  END")
        out.append(f"END {cell.name}")
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


# --------------------------------------------------------------------------
# Technology rules

_LAYER_KEYS = {
    "PITCH": "pitch",
    "WIDTH": "min_width",
    "SPACING": "min_spacing",
    "SAMENETSPACING": "same_net_spacing",
    "DPSPACING": "dp_spacing",
    "ENCLOSURE": "via_enclosure",
    "MINENCLOSEDWIDTH": "min_enclosed_width",
}


def parse_tech_rules(text: str, diagnostics: Optional[List[Diagnostic]] = None) -> TechRules:
    if diagnostics is None:
        diagnostics = []
    lines = [(n, ln.split("#", 1)[0].split()) for n, ln in enumerate(text.splitlines(), start=1)]
    lines = [(n, toks) for n, toks in lines if toks]

    units = DEFAULT_UNITS
    for n, toks in lines:
        if toks[0] == "UNITS":
            if len(toks) != 2 or not toks[1].isdigit() or int(toks[1]) <= 0:
                raise LibraryError("UNITS takes one positive integer", n)
            units = int(toks[1])

    def scaled(tok, n):
        try:
            return int((Decimal(tok) * units).to_integral_value())
        except InvalidOperation:
            raise LibraryError(f"expected a number, got '{tok}'", n) from None

    row_height = 0
    layers: List[LayerRule] = []
    seen = set()
    for n, toks in lines:
        head = toks[0]
        if head == "UNITS":
            continue
        if head == "SITEROW":
            if len(toks) != 2:
                raise LibraryError("SITEROW takes one value", n)
            row_height = scaled(toks[1], n)
            continue
        if head != "LAYER":
            raise LibraryError(f"unknown directive '{head}'", n)
        if len(toks) < 3:
            raise LibraryError("LAYER needs a name and a kind", n)
        name, kind_tok = toks[1], toks[2]
        if kind_tok not in ("ROUTING", "CUT"):
            raise LibraryError(f"unknown layer kind '{kind_tok}'", n)
        if name in seen:
            raise LibraryError(f"duplicate layer '{name}'", n)
        seen.add(name)
        kind = LayerKind(kind_tok)
        rest = toks[3:]
        direction = Direction.NONE
        if rest and rest[0] in ("HORIZONTAL", "VERTICAL"):
            direction = Direction(rest[0])
            rest = rest[1:]
        if kind is LayerKind.ROUTING and direction is Direction.NONE:
            raise LibraryError(f"routing layer {name} needs a preferred direction", n)
        if len(rest) % 2:
            raise LibraryError("layer attributes must be KEY VALUE pairs", n)
        values: Dict[str, int] = {}
        for key, val in zip(rest[::2], rest[1::2]):
            if key not in _LAYER_KEYS:
                raise LibraryError(f"unknown layer attribute '{key}'", n)
            values[_LAYER_KEYS[key]] = scaled(val, n)
        for required in ("pitch", "min_width", "min_spacing"):
            if required not in values:
                raise LibraryError(f"layer {name} is missing {required.upper()}", n)
        if values["min_spacing"] < 0:
            raise LibraryError(f"layer {name} has negative spacing", n)
        values.setdefault("same_net_spacing", values["min_spacing"])
        values.setdefault("min_enclosed_width", values["min_width"])
        rule = LayerRule(name=name, kind=kind, direction=direction, **values)
        if rule.is_routing and rule.pitch < rule.min_width + rule.min_spacing:
            msg = f"pitch {rule.pitch} < width + spacing ({rule.min_width + rule.min_spacing})"
            diagnostics.append(Diagnostic("PITCH_TOO_SMALL", name, msg, n))
            log.warning("layer %s: %s", name, msg)
        layers.append(rule)

    for a, b in zip(layers, layers[1:]):
        if a.kind is b.kind:
            raise LibraryError(f"layers {a.name} and {b.name} do not alternate routing/cut")
    return TechRules(tuple(layers), row_height, units)


def emit_tech_rules(tech: TechRules) -> str:
    m = lambda v: _microns(v, tech.units_per_micron)  # noqa: E731
    out = [f"UNITS {tech.units_per_micron}"]
    if tech.site_row_height:
        out.append(f"SITEROW {m(tech.site_row_height)}")
    for r in tech.layers:
        parts = ["LAYER", r.name, r.kind.value]
        if r.direction is not Direction.NONE:
            parts.append(r.direction.value)
        parts += ["PITCH", m(r.pitch), "WIDTH", m(r.min_width), "SPACING", m(r.min_spacing),
                  "SAMENETSPACING", m(r.same_net_spacing), "DPSPACING", m(r.dp_spacing),
                  "ENCLOSURE", m(r.via_enclosure), "MINENCLOSEDWIDTH", m(r.min_enclosed_width)]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Profiling

@dataclass(frozen=True)
class ProfileEntry:
    width: int
    height: int
    height_rows: int
    pins: Tuple[str, ...]


@dataclass
class LibraryProfile:
    entries: Dict[str, ProfileEntry]
    min_width: int
    histogram: Dict[int, float] = field(default_factory=dict)

    @property
    def multi_height_fraction(self) -> float:
        multi = sum(1 for e in self.entries.values() if e.height_rows > 1)
        return multi / len(self.entries)

    def cumulative(self, bucket: int) -> float:
        """Fraction of cells whose normalized width falls in a bucket <= `bucket`."""
        return math.fsum(f for b, f in self.histogram.items() if b <= bucket)


def profile_library(cells: Sequence[Cell]) -> LibraryProfile:
    if not cells:
        raise ValueError("cannot profile an empty library")
    entries = {
        c.name: ProfileEntry(c.width, c.height, c.height_rows, tuple(p.name for p in c.pins))
        for c in sorted(cells, key=lambda c: c.name)
    }
    min_width = min(c.width for c in cells)
    counts = Counter(c.width // min_width for c in cells)
    total = len(cells)
    histogram = {b: counts[b] / total for b in sorted(counts)}
    return LibraryProfile(entries, min_width, histogram)
