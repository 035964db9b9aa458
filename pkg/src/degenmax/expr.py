"""Value expressions used in problem configs.

The grammar is arithmetic over the names ``x``, ``y``, ``t`` with ``+ - * / ^``,
parentheses, numeric literals and the functions ``sin cos exp sqrt``. Parsing
goes through :mod:`ast` with a node whitelist, so nothing else can execute.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

NAMES = ("x", "y", "t")
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class ExprError(ValueError):
    """Bad expression; ``line`` and ``col`` are 1-based positions in the source text."""

    def __init__(self, message: str, text: str, line: int = 1, col: int = 1):
        super().__init__(f"{message} at line {line}, column {col}: {text!r}")
        self.reason = message
        self.text = text
        self.line = line
        self.col = col


def _rewrite_power(text: str) -> tuple[str, list[int]]:
    """Replace ``^`` with ``**`` and return a map from new offsets to old ones."""
    out, where = [], []
    for i, ch in enumerate(text):
        if ch == "^":
            out.append("**")
            where += [i, i]
        else:
            out.append(ch)
            where.append(i)
    where.append(len(text))
    return "".join(out), where


def _position(text: str, offset: int) -> tuple[int, int]:
    before = text[:offset]
    line = before.count("\n") + 1
    return line, offset - (before.rfind("\n") + 1) + 1


@dataclass(frozen=True)
class Expr:
    text: str
    names: frozenset = field(compare=False)
    _code: object = field(repr=False, compare=False)

    def __call__(self, x=None, t: float | None = None):
        """Evaluate at a point (or an array whose first axis is the coordinate)."""
        env = dict(FUNCTIONS)
        pt = np.asarray(x if x is not None else [], dtype=float)
        for k, name in enumerate(("x", "y")):
            if name in self.names:
                if pt.ndim == 0 or pt.shape[0] <= k:
                    raise ExprError(f"name {name!r} is not a coordinate of this domain", self.text)
                env[name] = pt[k]
        if "t" in self.names:
            if t is None:
                raise ExprError("name 't' used outside a time-dependent problem", self.text)
            env["t"] = float(t)
        with np.errstate(all="ignore"):
            value = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - whitelisted AST
        return value if np.ndim(value) else float(value)

    def on_nodes(self, nodes: np.ndarray, t: float | None = None) -> np.ndarray:
        """Vectorized evaluation at every row of ``nodes``."""
        nodes = np.asarray(nodes, dtype=float)
        return np.broadcast_to(np.asarray(self(nodes.T, t), dtype=float), (nodes.shape[0],)).copy()

    @property
    def time_dependent(self) -> bool:
        return "t" in self.names


def parse(text) -> Expr:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ExprError("expression must be a string or a number", str(text))
    src, where = _rewrite_power(text)

    starts = np.cumsum([0] + [len(s) + 1 for s in src.split("\n")])

    def fail(msg, node=None, offset=None):
        if node is not None:
            # the source is wrapped as "(\n" + src + "\n)", so line 2 is the first real line
            offset = int(starts[max(node.lineno - 2, 0)]) + node.col_offset
        if offset is not None:
            offset = where[min(max(offset, 0), len(where) - 1)]
        line, col = _position(text, offset or 0)
        raise ExprError(msg, text, line, col)

    if not src.strip():
        fail("empty expression", offset=0)
    try:
        tree = ast.parse("(\n" + src + "\n)", mode="eval")
    except SyntaxError as exc:
        row = min(max((exc.lineno or 2) - 2, 0), len(starts) - 1)
        fail(f"syntax error ({exc.msg})", offset=int(starts[row]) + (exc.offset or 1) - 1)

    names = set()
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)) or isinstance(node, _BINOPS + _UNARY):
            continue
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, _BINOPS):
                fail("unsupported operator", node)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, _UNARY):
                fail("unsupported operator", node)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                fail("only numeric literals are allowed", node)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                fail("unknown function", node)
            if len(node.args) != 1 or node.keywords:
                fail(f"{node.func.id} takes exactly one argument", node)
        elif isinstance(node, ast.Name):
            if node.id in FUNCTIONS:
                continue
            if node.id not in NAMES:
                fail(f"unknown name {node.id!r}", node)
            names.add(node.id)
        else:
            fail("unsupported syntax", node)
    # Function names used bare (e.g. "sin + 1") slip through the walk above.
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id in FUNCTIONS:
            parent_ok = any(isinstance(p, ast.Call) and p.func is node for p in ast.walk(tree))
            if not parent_ok:
                fail(f"{node.id} must be called", node)
    return Expr(text, frozenset(names), compile(tree, "<expr>", "eval"))


def scalar_field(e: Expr, dim: int, parabolic: bool = False, shift=None):
    """A ScalarField with exact derivatives of ``e``, optionally in coordinates shifted by ``shift``.

    Differentiation is symbolic (sympy), imported only when this is called.
    """
    import sympy

    from .operator_core import ScalarField

    coords = sympy.symbols("x y")[:dim]
    t = sympy.Symbol("t")
    src, _ = _rewrite_power(e.text)
    table = {"x": sympy.Symbol("x"), "y": sympy.Symbol("y"), "t": t,
             "sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "sqrt": sympy.sqrt}
    body = sympy.sympify(src, locals=table)  # safe: the text passed the whitelist in parse()
    extra = set(body.free_symbols) - set(coords) - {t}
    if extra:
        raise ExprError(f"name {sorted(map(str, extra))[0]!r} is not a coordinate of this domain", e.text)
    grad = [sympy.diff(body, c) for c in coords]
    hess = [[sympy.diff(g, c) for c in coords] for g in grad]
    args = (t, *coords)
    f_val = sympy.lambdify(args, body, "numpy")
    f_grad = sympy.lambdify(args, grad, "numpy")
    f_hess = sympy.lambdify(args, hess, "numpy")
    f_dt = sympy.lambdify(args, sympy.diff(body, t), "numpy")
    off = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float)

    def unpack(x):
        x = np.asarray(x, dtype=float)
        return [x[k] + off[k] for k in range(dim)]

    def value(tt, x):
        return f_val(tt, *unpack(x))

    def grad_at(tt, x):
        return np.array(f_grad(tt, *unpack(x)), dtype=float)

    def hess_at(tt, x):
        return np.array(f_hess(tt, *unpack(x)), dtype=float)

    def dt_at(tt, x):
        return float(f_dt(tt, *unpack(x)))

    if parabolic:
        return ScalarField(value, grad_at, hess_at, dt=dt_at, parabolic=True)
    return ScalarField(
        lambda x: value(0.0, x), lambda x: grad_at(0.0, x), lambda x: hess_at(0.0, x)
    )
