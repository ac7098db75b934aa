"""Closed-form member expressions over features ``x`` and lead time ``t``.

Grammar: numeric literals, ``x[i]`` (bare ``x`` means ``x[0]``), ``t``,
``+ - * /``, unary minus, ``sin``, ``cos``, ``exp`` and parentheses.
Expressions are parsed with :mod:`ast` and anything outside this grammar is
rejected before evaluation.
"""

from __future__ import annotations

import ast

import numpy as np

from .core import ParseError

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}


def _check(node):
    if isinstance(node, ast.Expression):
        return _check(node.body)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ParseError(f"unsupported literal {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id not in ("x", "t"):
            raise ParseError(f"unknown name {node.id!r}")
        return
    if isinstance(node, ast.Subscript):
        if not (isinstance(node.value, ast.Name) and node.value.id == "x"):
            raise ParseError("only x may be indexed")
        idx = node.slice
        if not (isinstance(idx, ast.Constant) and type(idx.value) is int and idx.value >= 0):
            raise ParseError("feature index must be a nonnegative integer literal")
        return
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ParseError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left)
        _check(node.right)
        return
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ParseError("unsupported unary operator")
        _check(node.operand)
        return
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ParseError("only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            raise ParseError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0])
        return
    raise ParseError(f"unsupported syntax: {type(node).__name__}")


def _eval(node, X, t):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return X[:, 0] if node.id == "x" else t
    if isinstance(node, ast.Subscript):
        i = node.slice.value
        if i >= X.shape[1]:
            raise IndexError(f"x[{i}] but only {X.shape[1]} features")
        return X[:, i]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, X, t), _eval(node.right, X, t))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, X, t)
        return -v if isinstance(node.op, ast.USub) else v
    return _FUNCS[node.func.id](_eval(node.args[0], X, t))


class Expression:
    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ParseError(f"cannot parse {source!r}: {exc.msg}") from None
        _check(tree)
        self._tree = tree.body

    def __call__(self, X, t=0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        with np.errstate(all="ignore"):
            out = _eval(self._tree, X, float(t))
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"
