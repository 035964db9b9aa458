import json

import numpy as np
import pytest

from degenmax import config
from degenmax.operator_core import classify_boundary, make_grid

BASE = {
    "domain": {"rectangle": [[0.0, 1.0], [0.0, 1.0]]},
    "grid": {"cells": 4},
    "operator": {"builtin": "linear-in-distance", "params": {"A0": 1.0, "b": [0.0, 1.0], "c": 1.0}},
    "bc": {"dirichlet": [{"region": "left", "value": 1.0}, {"region": "all", "value": "x + y"}]},
}


def text_of(obj):
    return json.dumps(obj, indent=2)


def build(obj):
    cfg = config.loads(text_of(obj))
    grid = make_grid(cfg.domain, cfg.cells)
    return cfg, grid, classify_boundary(cfg.domain, grid, cfg.coeffs)


def test_bundled_example_loads():
    cfg = config.loads(json.dumps(config.dump_example()))
    assert cfg.mode == "elliptic" and cfg.cells == 128


def test_first_region_wins_and_degenerate_nodes_take_no_data():
    cfg, grid, cls = build(BASE)
    assigned = cfg.boundary_data(grid, cls)
    g = cfg.g_values(grid, cls)
    for n in grid.boundary_nodes:
        x, y = grid.nodes[n]
        if cls.is_degenerate(int(n)):
            assert assigned[n] is None
        elif x == 0.0:
            assert g[n] == 1.0
        else:
            assert g[n] == pytest.approx(x + y)


def test_region_only_on_degenerate_boundary_is_rejected():
    obj = dict(BASE, bc={"dirichlet": [{"region": "bottom", "value": 0.0}, {"region": "all", "value": 0.0}]})
    cfg, grid, cls = build(obj)
    with pytest.raises(config.ConfigError, match="degenerate boundary"):
        cfg.boundary_data(grid, cls)


def test_uncovered_nondegenerate_node_is_rejected():
    obj = dict(BASE, bc={"dirichlet": [{"region": "top", "value": 0.0}]})
    cfg, grid, cls = build(obj)
    with pytest.raises(config.ConfigError, match="has no Dirichlet data"):
        cfg.boundary_data(grid, cls)


def test_schema_error_has_position():
    obj = dict(BASE, grid={"cells": "many"})
    with pytest.raises(config.ConfigError) as info:
        config.loads(text_of(obj))
    text = text_of(obj)
    line = text.splitlines()[info.value.line - 1]
    assert '"cells"' in line[info.value.col - 1:]


def test_missing_top_level_key_still_has_position():
    obj = {k: v for k, v in BASE.items() if k != "operator"}
    with pytest.raises(config.ConfigError) as info:
        config.loads(text_of(obj))
    assert (info.value.line, info.value.col) == (1, 1)
    assert "operator" in str(info.value)


def test_json_syntax_error_position():
    with pytest.raises(config.ConfigError) as info:
        config.loads('{\n  "grid": {"cells": 4,}\n}')
    assert info.value.line == 2


def test_bad_expression_reports_its_key():
    obj = dict(BASE, f="x +* 2")
    text = text_of(obj)
    with pytest.raises(config.ConfigError) as info:
        config.loads(text)
    assert text.splitlines()[info.value.line - 1].lstrip().startswith('"f"')
    assert "expression column" in str(info.value)


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(config.ConfigError, match="cannot read"):
        config.load(tmp_path / "nope.json")


def test_parabolic_needs_time_and_terminal():
    with pytest.raises(config.ConfigError, match="time"):
        config.loads(text_of(dict(BASE, mode="parabolic")))
    with pytest.raises(config.ConfigError, match="terminal"):
        config.loads(text_of(dict(BASE, mode="parabolic", time={"T": 1.0, "steps": 4})))


def test_time_in_elliptic_data_is_rejected():
    with pytest.raises(config.ConfigError, match="uses t"):
        config.loads(text_of(dict(BASE, f="t")))


def test_dimension_mismatch():
    obj = dict(BASE, operator={"builtin": "kummer", "params": {"a_param": 1.0, "b_param": 1.0}})
    with pytest.raises(config.ConfigError, match="dimensional"):
        config.loads(text_of(obj))


def test_unknown_builtin():
    obj = dict(BASE, operator={"builtin": "nonsense"})
    with pytest.raises(config.ConfigError):
        config.loads(text_of(obj))


def test_time_dependent_boundary_callable():
    obj = dict(
        BASE,
        mode="parabolic",
        time={"T": 1.0, "steps": 4},
        terminal=0.0,
        bc={"dirichlet": [{"region": "all", "value": "t * x"}]},
    )
    cfg, grid, cls = build(obj)
    g = cfg.g_callable(grid, cls)
    right = next(n for n in cls.nondegenerate if grid.nodes[n][0] == 1.0)
    assert g(0.5, grid.nodes[right]) == 0.5
