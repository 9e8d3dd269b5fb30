"""DRC summary text, JSON report, per-cell verdicts and width histograms."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .drc import DrcResult, Rule, Violation
from .library import LibraryProfile

EXIT_CLEAN = 0
EXIT_VIOLATIONS = 1
EXIT_ERROR = 2

_DISPLAY = {
    Rule.DIFF_NET_SPACING: "Diff net spacing",
    Rule.SAME_NET_SPACING: "Same net spacing",
    Rule.SHORT: "Short",
    Rule.OPEN: "Open",
    Rule.MIN_WIDTH: "Less than minimum width",
    Rule.VIA_ENCLOSURE: "Via enclosure",
    Rule.MIN_ENCLOSED_WIDTH: "Minimum enclosed width",
    Rule.DP_PRECOLOR_CONFLICT: "DP precolor conflict",
    Rule.DP_ODD_CYCLE: "Local double pattern cycle",
}

TYPES_COLUMN = 52


def display_name(v: Violation) -> str:
    """Report vocabulary; spacing on a cut layer reads 'via-cut spacing'."""
    name = _DISPLAY[v.rule]
    if v.cut_layer and v.rule in (Rule.DIFF_NET_SPACING, Rule.SAME_NET_SPACING):
        name = name.replace("spacing", "via-cut spacing")
    return name


@dataclass
class CellVerdict:
    name: str
    drc_count: int = 0
    rule_types: Tuple[str, ...] = ()
    shared: int = 0  # how many of the counted violations also touch another master

    @property
    def problematic(self) -> bool:
        return self.drc_count > 0


def cell_verdicts(results: Iterable[DrcResult], cell_names: Iterable[str] = ()) -> List[CellVerdict]:
    """Roll boundary violations up to master cells.

    A violation touching two masters counts once for each of them and is
    marked shared; a master touched several times by the same violation
    still counts it once.
    """
    counts: Dict[str, int] = {n: 0 for n in cell_names}
    types: Dict[str, set] = {n: set() for n in counts}
    shared: Dict[str, int] = {n: 0 for n in counts}
    for res in results:
        for v, masters in res.attribution:
            for m in masters:
                counts.setdefault(m, 0)
                types.setdefault(m, set())
                shared.setdefault(m, 0)
            if not v.at_boundary:
                continue
            for m in masters:
                counts[m] += 1
                types[m].add(display_name(v))
                if len(masters) > 1:
                    shared[m] += 1
    return [CellVerdict(n, counts[n], tuple(sorted(types[n])), shared[n]) for n in sorted(counts)]


def drc_summary(verdicts: Sequence[CellVerdict]) -> str:
    clean = [v for v in verdicts if not v.problematic]
    dirty = [v for v in verdicts if v.problematic]
    out = [
        "=====",
        "SCRIPT-Info: Printing DRC Summary ...",
        "=====",
        f"##### {len(clean)} cells without DRC errors #####",
        "-----",
        "Cell                DRC count  Master Cells with DRC                DRC Types",
        "-----",
    ]
    for v in clean:
        out.append(_row(v.name, 0))
    out.append(f"##### {len(dirty)} cells with DRC errors #####")
    for v in dirty:
        out.append(_row(v.name, v.drc_count))
        out.append(" " * TYPES_COLUMN + " ".join("{" + t + "}" for t in v.rule_types))
    return "\n".join(out) + "\n"


def _row(name: str, count: int) -> str:
    return f"{name:<18} {count}"


@dataclass
class RunManifest:
    tool_version: str
    seed: int
    mode: str
    layer_window: Tuple[str, str]
    deck_digest: str
    options: Dict[str, object] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    timing: Dict[str, float] = field(default_factory=dict)

    def to_dict(self, with_timing: bool = False) -> dict:
        d = {
            "tool_version": self.tool_version,
            "seed": self.seed,
            "mode": self.mode,
            "layer_window": list(self.layer_window),
            "deck_digest": self.deck_digest,
            "options": dict(self.options),
            "inputs": dict(self.inputs),
        }
        if with_timing:
            d["timing"] = dict(self.timing)
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def json_report(results: Sequence[DrcResult], verdicts: Sequence[CellVerdict],
                manifest: Optional[RunManifest] = None,
                unrouted: Optional[Mapping[str, Sequence[Tuple[str, str, str]]]] = None) -> str:
    """Structured report: manifest, per-testcell violations, per-cell verdicts.
    Key order is fixed by construction; coordinates are database units."""
    doc: Dict[str, object] = {}
    if manifest is not None:
        doc["manifest"] = manifest.to_dict()
        doc["manifest_hash"] = manifest.digest()
    tcs = []
    for res in results:
        entry = {
            "name": res.testcell,
            "deck_digest": res.deck_digest,
            "violation_count": len(res.violations),
            "boundary_violation_count": sum(1 for v in res.violations if v.at_boundary),
            "violations": [],
        }
        for v, masters in res.attribution:
            d = v.to_dict()
            d["type"] = display_name(v)
            d["masters"] = list(masters)
            d["shared"] = len(masters) > 1
            d["key"] = f"{res.testcell}:{v.rule.value}:{v.layer}:{','.join(map(str, v.location))}"
            entry["violations"].append(d)
        if unrouted is not None:
            entry["unrouted"] = [{"net": n, "reason": r, "cause": c} for n, r, c in unrouted.get(res.testcell, ())]
        if res.diagnostics:
            entry["diagnostics"] = list(res.diagnostics)
        tcs.append(entry)
    doc["testcells"] = tcs
    doc["cells"] = [
        {"name": v.name, "drc_count": v.drc_count, "rule_types": list(v.rule_types),
         "problematic": v.problematic, "shared": v.shared}
        for v in verdicts
    ]
    doc["problematic_cells"] = sum(1 for v in verdicts if v.problematic)
    return json.dumps(doc, indent=2) + "\n"


def width_histogram_csv(profile: LibraryProfile) -> str:
    rows = ["bucket,fraction"]
    for bucket in sorted(profile.histogram):
        rows.append(f"{bucket},{profile.histogram[bucket]!r}")
    return "\n".join(rows) + "\n"


def profile_listing(profile: LibraryProfile) -> str:
    out = [f"# min width {profile.min_width}, {len(profile.entries)} cells, "
           f"multi-height fraction {profile.multi_height_fraction:.3f}",
           "cell width height rows bucket pins"]
    for name, e in profile.entries.items():
        out.append(f"{name} {e.width} {e.height} {e.height_rows} {e.width // profile.min_width} "
                   f"{','.join(e.pins)}")
    return "\n".join(out) + "\n"


def exit_code(verdicts: Sequence[CellVerdict]) -> int:
    return EXIT_VIOLATIONS if any(v.problematic for v in verdicts) else EXIT_CLEAN
