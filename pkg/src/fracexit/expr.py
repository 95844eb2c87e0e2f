"""A tiny expression language for coefficient functions in configuration files.

Expressions are ordinary arithmetic in the variables ``x`` (and ``y`` for
kernel densities) using ``+ - * / **``, numeric constants, ``pi``, ``e`` and
the functions ``exp``, ``sin``, ``cos``, ``abs``. Nothing else is accepted,
so configs never execute arbitrary code.

    >>> f = Expr("x*(1 - x)")
    >>> float(f(0.5))
    0.25
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .errors import ConfigError

_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


class Expr:
    """Compiled expression in a fixed set of variables, vectorised over numpy arrays."""

    def __init__(self, source: str | float | int, variables: tuple[str, ...] = ("x",)):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ConfigError(f"expected an expression string or number, got {type(source).__name__}")
        self.source = source
        self.variables = variables
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body
        self.is_constant = not any(
            isinstance(n, ast.Name) and n.id in variables for n in ast.walk(tree)
        )

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"non-numeric constant in {self.source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ConfigError(f"operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ConfigError(f"function not allowed in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"functions take exactly one argument in {self.source!r}")
            self._check(node.args[0])
        else:
            raise ConfigError(f"construct {type(node).__name__} not allowed in {self.source!r}")

    def _eval(self, node: ast.AST, env: dict):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        return _FUNCS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, *args):
        env = dict(zip(self.variables, (np.asarray(a, dtype=float) for a in args)))
        out = self._eval(self._tree, env)
        # constants must still broadcast against the arguments
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
        return float(out) if out.ndim == 0 else out.copy()

    def __repr__(self) -> str:
        return f"Expr({self.source!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and (self.source, self.variables) == (
            other.source,
            other.variables,
        )

    def __hash__(self) -> int:
        return hash((self.source, self.variables))


def as_function(value, variables: tuple[str, ...] = ("x",)):
    """Turn numbers and expression strings into :class:`Expr`; pass callables through."""
    if isinstance(value, Expr) or (callable(value) and not isinstance(value, str)):
        return value
    return Expr(value, variables)


def is_zero_function(f, a: float, b: float, n: int = 33) -> bool:
    """True when ``f`` vanishes identically on a sample of ``[a, b]``."""
    if isinstance(f, Expr) and f.is_constant:
        return float(f(0.0)) == 0.0
    xs = np.linspace(a, b, n)
    return bool(np.all(np.asarray(f(xs), dtype=float) == 0.0))
