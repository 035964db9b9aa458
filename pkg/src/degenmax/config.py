"""Problem configs: JSON documents describing a domain, operator and data.

Syntax errors carry the JSON line/column. Schema violations are located by
walking the offending key path through the source text, which is exact for
ordinary documents with unique keys.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import coefficients
from .expr import Expr, ExprError, parse
from .operator_core import BoundaryClassification, CoefficientField, Grid, SpatialDomain

NUM = {"type": "number"}
EXPR = {"type": ["string", "number"]}
PAIR = {"type": "array", "items": NUM, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["domain", "grid", "operator"],
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object",
            "minProperties": 1,
            "maxProperties": 1,
            "additionalProperties": False,
            "properties": {
                "interval": PAIR,
                "rectangle": {"type": "array", "items": PAIR, "minItems": 2, "maxItems": 2},
                "half_graph": {
                    "type": "object",
                    "required": ["gamma", "x", "y"],
                    "additionalProperties": False,
                    "properties": {"gamma": EXPR, "x": PAIR, "y": PAIR},
                },
            },
        },
        "grid": {
            "type": "object",
            "required": ["cells"],
            "additionalProperties": False,
            "properties": {
                "cells": {
                    "oneOf": [
                        {"type": "integer", "minimum": 2},
                        {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1, "maxItems": 2},
                    ]
                }
            },
        },
        "operator": {
            "type": "object",
            "required": ["builtin"],
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": sorted(coefficients.BUILTINS)},
                "params": {"type": "object"},
            },
        },
        "bc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dirichlet": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["region", "value"],
                        "additionalProperties": False,
                        "properties": {
                            "region": {"enum": ["left", "right", "bottom", "top", "graph", "all"]},
                            "value": EXPR,
                        },
                    },
                }
            },
        },
        "f": EXPR,
        "mode": {"enum": ["elliptic", "parabolic"]},
        "time": {
            "type": "object",
            "required": ["T", "steps"],
            "additionalProperties": False,
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0}, "steps": {"type": "integer", "minimum": 1}},
        },
        "terminal": EXPR,
        "tol_zero": {"type": "number", "exclusiveMinimum": 0},
        "psi": EXPR,
        "obstacle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "perturb": {
            "type": "object",
            "required": ["u", "ell", "rho0"],
            "additionalProperties": False,
            "properties": {
                "u": EXPR,
                "ell": {"type": "number", "exclusiveMinimum": 0},
                "rho0": {"type": "number", "exclusiveMinimum": 0},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "K": {"type": "number", "exclusiveMinimum": 0},
                "Lambda0": {"type": "number", "minimum": 0},
                "grid_density": {"type": "integer", "minimum": 2},
            },
        },
        "transform": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None, source: str | None = None):
        where = f" (line {line}, column {col})" if line is not None else ""
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{message}{where}")
        self.line = line
        self.col = col


def _locate(text: str, path) -> tuple[int, int]:
    """Line/column of the deepest key on a JSON key path that occurs in the text.

    Only string keys are tracked. With no key found (errors about the document
    itself, such as a missing top-level field) the opening brace is reported.
    """
    pos = len(text) - len(text.lstrip())
    for key in path:
        if isinstance(key, str):
            k = text.find(json.dumps(key), pos)
            if k < 0:
                break
            pos = k
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


@dataclass
class ProblemConfig:
    raw: dict
    domain: SpatialDomain
    cells: int | tuple[int, ...]
    coeffs: CoefficientField
    dirichlet: list[tuple[str, Expr]]
    f: Expr
    mode: str
    T: float | None = None
    steps: int | None = None
    terminal: Expr | None = None
    psi: Expr | None = None
    tol_zero: float | None = None
    obstacle: dict = field(default_factory=dict)
    perturb: dict = field(default_factory=dict)
    transform: dict = field(default_factory=dict)
    source: str | None = None
    text: str = ""

    def error(self, message: str, *path) -> ConfigError:
        line, col = _locate(self.text, path)
        return ConfigError(message, line, col, self.source)

    # ---- boundary data

    def _on_region(self, grid: Grid, node: int, region: str) -> bool:
        x = grid.nodes[node]
        (xlo, xhi) = self.domain.bounds[0]
        tol = [0.5 * h for h in grid.h]
        if region == "all":
            return True
        if region == "left":
            return abs(x[0] - xlo) <= tol[0]
        if region == "right":
            return abs(x[0] - xhi) <= tol[0]
        if grid.dim < 2:
            return False
        (ylo, yhi) = self.domain.bounds[1]
        if region == "top":
            return abs(x[1] - yhi) <= tol[1]
        if region == "bottom":
            return abs(x[1] - ylo) <= tol[1]
        if region == "graph":
            return self.domain.kind == "half_graph" and abs(x[1] - self.domain.lower_y(x[0])) <= tol[1]
        return False

    def boundary_data(self, grid: Grid, classification: BoundaryClassification):
        """Per-node Dirichlet expression (or None) for every grid node.

        The first listed region covering a node wins. Degenerate nodes never
        take data; a region that only touches degenerate nodes is an error, as
        is a non-degenerate node that no region covers.
        """
        assigned: list[Expr | None] = [None] * grid.size
        for k, (region, value) in enumerate(self.dirichlet):
            touched = [n for n in grid.boundary_nodes if self._on_region(grid, int(n), region)]
            if not touched:
                raise self.error(f"region {region!r} contains no boundary nodes", "bc", "dirichlet")
            usable = [n for n in touched if not classification.is_degenerate(int(n))]
            if not usable:
                raise self.error(
                    f"region {region!r} lies on the degenerate boundary, where no data is accepted", "bc", "dirichlet"
                )
            for n in usable:
                if assigned[n] is None:
                    assigned[n] = value
        for n in classification.nondegenerate:
            if assigned[n] is None:
                raise self.error(
                    f"non-degenerate boundary node {n} at {tuple(float(z) for z in grid.nodes[n])} has no Dirichlet data",
                    "bc",
                )
        return assigned

    def g_values(self, grid: Grid, classification: BoundaryClassification, t: float | None = None) -> np.ndarray:
        assigned = self.boundary_data(grid, classification)
        g = np.zeros(grid.size)
        for n, e in enumerate(assigned):
            if e is not None:
                g[n] = e(grid.nodes[n], t)
        return g

    def g_callable(self, grid: Grid, classification: BoundaryClassification):
        """Per-node g(t, x) for time-dependent data."""
        assigned = self.boundary_data(grid, classification)
        lookup = {tuple(grid.nodes[n]): e for n, e in enumerate(assigned) if e is not None}

        def g(t, x):
            e = lookup.get(tuple(x))
            return 0.0 if e is None else e(x, t)

        return g


def _expr(value, *path, cfg_text: str, source: str | None) -> Expr:
    try:
        return parse(value)
    except ExprError as exc:
        line, col = _locate(cfg_text, path)
        raise ConfigError(
            f"{'/'.join(map(str, path))}: {exc.reason} at expression column {exc.col}", line, col, source
        ) from None


def _domain(spec: dict, text: str, source) -> SpatialDomain:
    if "interval" in spec:
        lo, hi = spec["interval"]
        return SpatialDomain.interval(lo, hi)
    if "rectangle" in spec:
        xb, yb = spec["rectangle"]
        return SpatialDomain.rectangle(xb, yb)
    hg = spec["half_graph"]
    gamma = _expr(hg["gamma"], "domain", "half_graph", "gamma", cfg_text=text, source=source)
    return SpatialDomain.half_graph(lambda s: float(gamma([s])), hg["x"], hg["y"])


def loads(text: str, source: str | None = None) -> ProblemConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, exc.colno, source) from None
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = list(exc.absolute_path)
        line, col = _locate(text, path)
        where = "/".join(map(str, path)) or "<root>"
        raise ConfigError(f"{where}: {exc.message}", line, col, source) from None

    def ex(value, *path):
        return _expr(value, *path, cfg_text=text, source=source)

    def fail(message, *path):
        line, col = _locate(text, path)
        return ConfigError(message, line, col, source)

    try:
        domain = _domain(raw["domain"], text, source)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise fail(str(exc), "domain") from None
    cells = raw["grid"]["cells"]
    cells = cells if isinstance(cells, int) else tuple(cells)
    if not isinstance(cells, int) and len(cells) != domain.dim:
        raise fail(f"grid/cells needs {domain.dim} entries", "grid", "cells")
    op = raw["operator"]
    try:
        coeffs = coefficients.builtin(op["builtin"], op.get("params"))
    except (TypeError, ValueError) as exc:
        raise fail(f"operator: {exc}", "operator") from None
    if coeffs.dim != domain.dim:
        raise fail(f"operator is {coeffs.dim}-dimensional but the domain is {domain.dim}-dimensional", "operator")

    mode = raw.get("mode", "elliptic")
    dirichlet = [
        (item["region"], ex(item["value"], "bc", "dirichlet", k, "value"))
        for k, item in enumerate(raw.get("bc", {}).get("dirichlet", []))
    ]
    cfg = ProblemConfig(
        raw=raw,
        domain=domain,
        cells=cells,
        coeffs=coeffs,
        dirichlet=dirichlet,
        f=ex(raw.get("f", 0.0), "f"),
        mode=mode,
        psi=ex(raw["psi"], "psi") if "psi" in raw else None,
        tol_zero=raw.get("tol_zero"),
        obstacle=dict(raw.get("obstacle", {})),
        perturb=dict(raw.get("perturb", {})),
        transform=dict(raw.get("transform", {})),
        source=source,
        text=text,
    )
    if mode == "parabolic":
        if "time" not in raw:
            raise fail("parabolic mode needs a 'time' block", "mode")
        if "terminal" not in raw:
            raise fail("parabolic mode needs 'terminal' data", "mode")
        cfg.T = float(raw["time"]["T"])
        cfg.steps = int(raw["time"]["steps"])
        cfg.terminal = ex(raw["terminal"], "terminal")
    else:
        for key in ("f", "psi"):
            e = getattr(cfg, key)
            if e is not None and e.time_dependent:
                raise fail(f"{key} uses t in an elliptic problem", key)
        for k, (_, e) in enumerate(dirichlet):
            if e.time_dependent:
                raise fail("boundary data uses t in an elliptic problem", "bc", "dirichlet", k, "value")
    if cfg.perturb:
        cfg.perturb["u"] = ex(cfg.perturb["u"], "perturb", "u")
        if mode == "parabolic" and "tau" not in cfg.perturb:
            raise fail("parabolic perturbation needs perturb/tau", "perturb")
    return cfg


def load(path: str | Path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc.strerror}", source=str(path)) from None
    return loads(text, source=str(path))


def dump_example() -> dict[str, Any]:
    """The bundled Kummer problem as a dict."""
    from importlib import resources

    return json.loads(resources.files("degenmax").joinpath("data/kummer.json").read_text())
