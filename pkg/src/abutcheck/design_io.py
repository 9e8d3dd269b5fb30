"""Structural Verilog and DEF 5.6 placement files for testcells.

Only the subsets this tool writes are read back; the readers exist so that
every emitted file can be checked by a round trip.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .abutment import Orientation, Testcell
from .geometry import Rect

DEF_ORIENTS = ("N", "S", "FN", "FS")


class DesignFormatError(Exception):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class NetlistModule:
    name: str
    instances: List[Tuple[str, str]] = field(default_factory=list)  # (instance, cell)
    submodule_instances: List[Tuple[str, str]] = field(default_factory=list)  # (instance, module)


@dataclass
class DefComponent:
    name: str
    cell: str
    x: int
    y: int
    orient: str


@dataclass
class DefDesign:
    design_name: str
    units_per_micron: int
    die: Rect
    components: List[DefComponent] = field(default_factory=list)


# --------------------------------------------------------------------------
# Verilog

def testcell_module(tc: Testcell) -> NetlistModule:
    return NetlistModule(tc.name, [(i.instance_name, i.cell_name) for i in tc.instances])


def top_module(testcells: Sequence[Testcell], top_name: str = "TOP") -> NetlistModule:
    return NetlistModule(top_name, submodule_instances=[
        (f"U{i + 1}", tc.name) for i, tc in enumerate(testcells)])


def emit_verilog(testcells: Sequence[Testcell], top_name: str = "TOP") -> str:
    names = [tc.name for tc in testcells]
    if len(set(names)) != len(names):
        raise ValueError("testcell names must be unique")
    out: List[str] = []
    for tc in testcells:
        out.append(f"module {tc.name} ();")
        for inst in tc.instances:
            out.append(f"  {inst.cell_name} {inst.instance_name} (. *);")
        out.append("endmodule")
        out.append("")
    out.append(f"module {top_name} ();")
    for inst, module in top_module(testcells, top_name).submodule_instances:
        out.append(f"  {module} {inst} ();")
    out.append("endmodule")
    return "\n".join(out) + "\n"


_IDENT = r"[A-Za-z_\\][A-Za-z0-9_$\[\]\\./]*"
_MODULE_RE = re.compile(rf"^module\s+({_IDENT})\s*\(\s*\)\s*;$")
_LEAF_RE = re.compile(rf"^({_IDENT})\s+({_IDENT})\s*\(\s*\.\s*\*\s*\)\s*;$")
_SUB_RE = re.compile(rf"^({_IDENT})\s+({_IDENT})\s*\(\s*\)\s*;$")


def parse_verilog(text: str) -> List[NetlistModule]:
    """Read back the module/instance/endmodule subset.

    Leaf instances use the `(. *)` wildcard body; instances of other
    testcell modules use an empty port list.
    """
    modules: List[NetlistModule] = []
    current: Optional[NetlistModule] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        if line == "endmodule":
            if current is None:
                raise DesignFormatError("endmodule without module", lineno)
            modules.append(current)
            current = None
            continue
        m = _MODULE_RE.match(line)
        if m:
            if current is not None:
                raise DesignFormatError(f"module {m.group(1)} opened inside {current.name}", lineno)
            current = NetlistModule(m.group(1))
            continue
        if current is None:
            raise DesignFormatError(f"unexpected text outside a module: '{line}'", lineno)
        m = _LEAF_RE.match(line)
        if m:
            current.instances.append((m.group(2), m.group(1)))
            continue
        m = _SUB_RE.match(line)
        if m:
            current.submodule_instances.append((m.group(2), m.group(1)))
            continue
        raise DesignFormatError(f"syntax error: '{line}'", lineno)
    if current is not None:
        raise DesignFormatError(f"module {current.name} has no endmodule")
    for mod in modules:
        seen = set()
        for inst, _ in mod.instances + mod.submodule_instances:
            if inst in seen:
                raise DesignFormatError(f"duplicate instance {inst} in module {mod.name}")
            seen.add(inst)
    return modules


# --------------------------------------------------------------------------
# DEF

def testcell_def(tc: Testcell, units: int = 1000, die_margin: int = 0) -> DefDesign:
    comps = [DefComponent(i.instance_name, i.cell_name, i.origin[0], i.origin[1],
                          i.orientation.def_code) for i in tc.instances]
    return DefDesign(tc.name, units, tc.die.bloat(die_margin), comps)


def top_def(testcells: Sequence[Testcell], units: int = 1000, top_name: str = "TOP",
            die_margin: int = 0) -> DefDesign:
    """Stack testcells bottom to top in one design.

    Each testcell starts on an even row so its rails keep their polarity;
    hierarchical component names follow the top module's instance names.
    """
    comps: List[DefComponent] = []
    y = 0
    width = 0
    for (inst_name, _), tc in zip(top_module(testcells, top_name).submodule_instances, testcells):
        for i in tc.instances:
            comps.append(DefComponent(f"{inst_name}/{i.instance_name}", i.cell_name,
                                      i.origin[0], i.origin[1] + y, i.orientation.def_code))
        rows = tc.rows + (tc.rows % 2)
        y += rows * tc.row_height
        width = max(width, tc.die.x_hi)
    return DefDesign(top_name, units, Rect(0, 0, width, y).bloat(die_margin), comps)


def emit_def(design: DefDesign) -> str:
    d = design.die
    out = [
        "VERSION 5.6 ;",
        f"DESIGN {design.design_name};",
        "TECHNOLOGY ROUTE ;",
        f"UNITS DISTANCE MICRONS {design.units_per_micron} ;",
        f"COMPONENTS {len(design.components)};",
    ]
    for c in design.components:
        if c.orient not in DEF_ORIENTS:
            raise ValueError(f"component {c.name} has orientation {c.orient}")
        out.append(f"- {c.name} {c.cell} + PLACED ( {c.x} {c.y} ) {c.orient} ;")
    out.append("END COMPONENTS")
    out.append(f"DIEAREA ( {d.x_lo} {d.y_lo} ) ( {d.x_hi} {d.y_hi} ) ;")
    out.append("END DESIGN")
    return "\n".join(out) + "\n"


def emit_testcell_def(tc: Testcell, units: int = 1000, die_margin: int = 0) -> str:
    return emit_def(testcell_def(tc, units, die_margin))


def _statements(text: str):
    """Yield (tokens, line) per ';'-terminated statement; END lines stand alone."""
    buf: List[str] = []
    start = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = line.replace(";", " ; ").split()
        for tok in toks:
            if start is None:
                start = lineno
            if tok == ";":
                yield buf, start
                buf, start = [], None
                continue
            buf.append(tok)
            if buf[0] == "END" and len(buf) == 2:
                yield buf, start
                buf, start = [], None
    if buf:
        raise DesignFormatError("unterminated statement", start)


def _int(tok: str, line: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise DesignFormatError(f"expected an integer, got '{tok}'", line) from None


def parse_def(text: str) -> DefDesign:
    name = None
    units = 1000
    die = None
    declared = None
    comps: List[DefComponent] = []
    in_comps = False
    for toks, line in _statements(text):
        head = toks[0]
        if in_comps:
            if toks == ["END", "COMPONENTS"]:
                in_comps = False
                if len(comps) != declared:
                    raise DesignFormatError(
                        f"COMPONENTS declares {declared} but lists {len(comps)}", line)
                continue
            if head != "-" or len(toks) < 3:
                raise DesignFormatError(f"bad component statement: {' '.join(toks)}", line)
            cname, cell = toks[1], toks[2]
            rest = toks[3:]
            try:
                i = rest.index("PLACED") if "PLACED" in rest else rest.index("FIXED")
            except ValueError:
                raise DesignFormatError(f"component {cname} is not placed", line) from None
            seg = rest[i + 1:]
            if len(seg) < 5 or seg[0] != "(" or seg[3] != ")":
                raise DesignFormatError(f"bad placement for {cname}", line)
            orient = seg[4]
            if orient not in DEF_ORIENTS:
                raise DesignFormatError(f"unknown orientation '{orient}'", line)
            comps.append(DefComponent(cname, cell, _int(seg[1], line), _int(seg[2], line), orient))
            continue
        if head == "DESIGN":
            name = toks[1]
        elif head == "UNITS":
            units = _int(toks[-1], line)
        elif head == "COMPONENTS":
            declared = _int(toks[1], line)
            in_comps = True
        elif head == "DIEAREA":
            nums = [t for t in toks[1:] if t not in ("(", ")")]
            if len(nums) != 4:
                raise DesignFormatError("DIEAREA needs two points", line)
            x1, y1, x2, y2 = (_int(t, line) for t in nums)
            die = Rect(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))
        elif head in ("VERSION", "TECHNOLOGY", "DIVIDERCHAR", "BUSBITCHARS"):
            pass
        elif toks == ["END", "DESIGN"]:
            break
        else:
            raise DesignFormatError(f"unsupported statement '{head}'", line)
    if in_comps:
        raise DesignFormatError("COMPONENTS section is not closed")
    if name is None:
        raise DesignFormatError("missing DESIGN statement")
    return DefDesign(name, units, die if die is not None else Rect(0, 0, 0, 0), comps)


def orientation_of(component: DefComponent) -> Orientation:
    return Orientation.from_def(component.orient)
