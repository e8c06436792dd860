"""Coefficient expressions in ``t`` and ``x`` read from config files.

Only arithmetic, comparisons and a fixed set of numpy functions are accepted;
the expression is checked on its AST before it is compiled.
"""

from __future__ import annotations

import ast

import numpy as np

from ..errors import ConfigError

FUNCTIONS = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("t", "x")

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


class Expression:
    """Vectorized ``f(t, x)`` compiled from a restricted expression string."""

    def __init__(self, source: str | float | int):
        self.source = str(source)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ConfigError(f"{type(node).__name__} is not allowed in expression {self.source!r}")
            if isinstance(node, ast.Name) and node.id not in FUNCTIONS and node.id not in CONSTANTS \
                    and node.id not in VARIABLES:
                raise ConfigError(f"unknown name {node.id!r} in expression {self.source!r}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS):
                raise ConfigError(f"only {sorted(FUNCTIONS)} may be called in {self.source!r}")
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ConfigError(f"non-numeric literal in expression {self.source!r}")
        self._code = compile(tree, "<expression>", "eval")
        self.uses_t = any(isinstance(n, ast.Name) and n.id == "t" for n in ast.walk(tree))

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        scope = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS, "t": float(t), "x": x}
        value = eval(self._code, scope)  # names and node types are whitelisted above
        return np.broadcast_to(np.asarray(value, dtype=float), x.shape)

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __reduce__(self):
        return (Expression, (self.source,))
