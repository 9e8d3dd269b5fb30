"""Run orchestration: profile, generate, route and check, write outputs.

Testcells fan out to a process pool; results are merged back in
enumeration order so the worker count never changes an output byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import __version__
from .abutment import Testcell, enumerate_library, total_instances
from .design_io import emit_def, emit_testcell_def, emit_verilog, top_def
from .drc import DptOption, DrcResult, check_testcell, inflate_rules
from .library import Cell, Diagnostic, TechRules, parse_cells, parse_tech_rules, profile_library
from .reporting import (CellVerdict, RunManifest, cell_verdicts, drc_summary, exit_code, json_report,
                        profile_listing, width_histogram_csv)
from .routing import RouteOptions, RoutedDesign, route_testcell

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    cells_path: str
    tech_path: str
    mode: str = "all"
    seed: int = 1
    min_layer: str = "M2"
    max_layer: str = "M3"
    dpt: str = "precolored"
    rule_inflation: float = 1.0
    boundary_margin: Optional[int] = None
    pin_pairing: str = "random"
    jobs: int = 1
    out_dir: str = "abutcheck_out"
    die_margin: int = 0
    straps: str = "random"
    net_degree: int = 2
    via_cost: int = 5
    max_ripup_iterations: int = 20
    dp_radius: Optional[int] = None
    dump_routes: bool = False
    top_name: str = "TOP"

    def route_options(self) -> RouteOptions:
        return RouteOptions(seed=self.seed, min_layer=self.min_layer, max_layer=self.max_layer,
                            via_cost=self.via_cost, max_ripup_iterations=self.max_ripup_iterations,
                            straps=self.straps, net_degree=self.net_degree,
                            pin_pairing=self.pin_pairing, die_margin=self.die_margin)

    def reproducible_options(self) -> Dict[str, object]:
        d = asdict(self)
        for k in ("cells_path", "tech_path", "out_dir", "jobs"):
            d.pop(k)
        return d


class InputError(Exception):
    pass


@dataclass
class Inputs:
    cells: List[Cell]
    tech: TechRules
    diagnostics: List[Diagnostic] = field(default_factory=list)
    digests: Dict[str, str] = field(default_factory=dict)


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    return p.read_text()


def load_inputs(cfg: RunConfig) -> Inputs:
    cell_text = _read(cfg.cells_path)
    tech_text = _read(cfg.tech_path)
    diags: List[Diagnostic] = []
    tech = parse_tech_rules(tech_text, diags)
    for layer in (cfg.min_layer, cfg.max_layer):
        tech.layer(layer)
    cells = parse_cells(cell_text, row_height=tech.site_row_height or None,
                        units=tech.units_per_micron, diagnostics=diags)
    if not cells:
        raise InputError(f"{cfg.cells_path}: no usable cells")
    digests = {
        "cells": hashlib.sha256(cell_text.encode()).hexdigest(),
        "tech": hashlib.sha256(tech_text.encode()).hexdigest(),
    }
    return Inputs(cells, tech, diags, digests)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run_profile(cfg: RunConfig, inputs: Inputs) -> Path:
    out = Path(cfg.out_dir)
    profile = profile_library(inputs.cells)
    _write(out / "profile.txt", profile_listing(profile))
    _write(out / "histogram.csv", width_histogram_csv(profile))
    return out


def run_generate(cfg: RunConfig, inputs: Inputs) -> List[Testcell]:
    out = Path(cfg.out_dir)
    testcells = enumerate_library(inputs.cells, cfg.mode)
    units = inputs.tech.units_per_micron
    _write(out / "testcells.v", emit_verilog(testcells, cfg.top_name))
    for tc in testcells:
        _write(out / "def" / f"{tc.name}.def", emit_testcell_def(tc, units, cfg.die_margin))
    if cfg.mode == "all_combo_in_one_cell_only":
        _write(out / "top.def", emit_def(top_def(testcells, units, cfg.top_name, cfg.die_margin)))
    log.info("generated %d testcells, %d instances", len(testcells), total_instances(testcells))
    return testcells


@dataclass
class TestcellOutcome:
    __test__ = False

    result: DrcResult
    unrouted: List[Tuple[str, str, str]]
    dump: str
    seconds: float
    error: Optional[str] = None


def check_one(testcell: Testcell, cells: Mapping[str, Cell], tech: TechRules, cfg: RunConfig) -> TestcellOutcome:
    start = time.perf_counter()
    try:
        routed: RoutedDesign = route_testcell(testcell, cells, tech, cfg.route_options())
        result = check_testcell(routed, tech, cells, DptOption(cfg.dpt), cfg.boundary_margin,
                                cfg.rule_inflation, cfg.min_layer, cfg.dp_radius, cfg.die_margin)
        result.diagnostics = list(routed.warnings) + result.diagnostics
        unrouted = [(n, r, routed.causes.get(n, "")) for n, r in routed.unrouted]
        dump = routed.dump() if cfg.dump_routes else ""
        return TestcellOutcome(result, unrouted, dump, time.perf_counter() - start)
    except Exception as exc:  # isolate the failing testcell
        log.exception("testcell %s failed", testcell.name)
        return TestcellOutcome(DrcResult(testcell.name, []), [], "", time.perf_counter() - start,
                               f"{type(exc).__name__}: {exc}")


def _check_star(args):
    return check_one(*args)


def run_checks(cfg: RunConfig, inputs: Inputs, testcells: Sequence[Testcell]) -> List[TestcellOutcome]:
    cells = {c.name: c for c in inputs.cells}
    jobs = [(tc, {n: cells[n] for n in tc.cell_names}, inputs.tech, cfg) for tc in testcells]
    if cfg.jobs <= 1 or len(jobs) <= 1:
        return [_check_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(_check_star, jobs, chunksize=max(1, len(jobs) // (cfg.jobs * 4))))


@dataclass
class RunSummary:
    verdicts: List[CellVerdict]
    outcomes: List[TestcellOutcome]
    manifest: RunManifest
    exit_code: int


def run_check(cfg: RunConfig, inputs: Inputs, testcells: Sequence[Testcell]) -> RunSummary:
    out = Path(cfg.out_dir)
    outcomes = run_checks(cfg, inputs, testcells)
    results = [o.result for o in outcomes]
    names = sorted({n for tc in testcells for n in tc.cell_names})
    verdicts = cell_verdicts(results, names)
    manifest = RunManifest(
        tool_version=__version__, seed=cfg.seed, mode=cfg.mode,
        layer_window=(cfg.min_layer, cfg.max_layer),
        deck_digest=inflate_rules(inputs.tech, cfg.rule_inflation).digest(),
        options=cfg.reproducible_options(), inputs=dict(inputs.digests),
        timing={o.result.testcell: round(o.seconds, 6) for o in outcomes})
    unrouted = {o.result.testcell: o.unrouted for o in outcomes}
    _write(out / "drc_summary.txt", drc_summary(verdicts))
    _write(out / "report.json", json_report(results, verdicts, manifest, unrouted))
    doc = manifest.to_dict()
    doc["manifest_hash"] = manifest.digest()
    doc["errors"] = {o.result.testcell: o.error for o in outcomes if o.error}
    _write(out / "manifest.json", json.dumps(doc, indent=2) + "\n")
    _write(out / "timing.json", json.dumps({"jobs": cfg.jobs, "testcells": manifest.timing}, indent=2) + "\n")
    if cfg.dump_routes:
        for o in outcomes:
            _write(out / "routes" / f"{o.result.testcell}.txt", o.dump)
    code = exit_code(verdicts)
    if outcomes and all(o.error for o in outcomes):
        code = 2
    return RunSummary(verdicts, outcomes, manifest, code)


def run_all(cfg: RunConfig) -> RunSummary:
    inputs = load_inputs(cfg)
    run_profile(cfg, inputs)
    testcells = run_generate(cfg, inputs)
    return run_check(cfg, inputs, testcells)


def data_path(name: str) -> str:
    """Absolute path of a bundled fixture file."""
    return os.path.join(os.path.dirname(__file__), "data", name)
