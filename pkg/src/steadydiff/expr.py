"""A tiny arithmetic expression language for rate functions and test functions.

Expressions are ordinary infix arithmetic over numbers, named constants, the scale
``n`` and the state coordinates ``x1..xd`` (``x`` is an alias of ``x1``), with the
functions ``min``, ``max``, ``pos`` (positive part), ``neg`` (negative part),
``abs`` and ``sqrt``.  Evaluation is vectorised with numpy, so a state array of
shape ``(..., d)`` yields values of shape ``(...)``.

    >>> e = compile_expr("mu*min(x1, N) + theta*pos(x1 - N)", dim=1, constants={"mu": 1.0, "theta": 0.5})
    >>> float(e(100, np.array([120.0]), N=100))
    110.0
"""

import ast
import operator

import numpy as np

from .errors import ModelSpecError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "min": np.minimum,
    "max": np.maximum,
    "pos": lambda v: np.maximum(v, 0.0),
    "neg": lambda v: np.maximum(-v, 0.0),
    "abs": np.abs,
    "sqrt": np.sqrt,
}


class Expression:
    """A parsed expression; call with ``(n, x, **extra)``."""

    def __init__(self, source, dim, constants=None):
        self.source = source
        self.dim = dim
        self.constants = dict(constants or {})
        try:
            tree = ast.parse(str(source), mode="eval")
        except SyntaxError as exc:
            raise ModelSpecError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._tree = tree.body
        self.names = set()
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ModelSpecError(f"operator {type(node.op).__name__} not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ModelSpecError(f"unary operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ModelSpecError(f"unknown function call in {self.source!r}")
            if node.func.id in ("min", "max") and len(node.args) < 2:
                raise ModelSpecError(f"{node.func.id} needs at least two arguments")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            self.names.add(node.id)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ModelSpecError(f"only numeric literals allowed in {self.source!r}")
        else:
            raise ModelSpecError(f"syntax element {type(node).__name__} not allowed in {self.source!r}")

    def __call__(self, n, x=None, **extra):
        env = dict(self.constants)
        env.update(extra)
        env["n"] = n
        if x is not None:
            x = np.asarray(x, dtype=float)
            for i in range(self.dim):
                env[f"x{i + 1}"] = x[..., i]
            env["x"] = x[..., 0]
        missing = self.names - env.keys()
        if missing:
            raise ModelSpecError(f"undefined names {sorted(missing)} in {self.source!r}")
        return self._eval(self._tree, env)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            fn = _FUNCS[node.func.id]
            args = [self._eval(a, env) for a in node.args]
            if node.func.id in ("min", "max"):
                out = args[0]
                for a in args[1:]:
                    out = fn(out, a)
                return out
            return fn(*args)
        if isinstance(node, ast.Name):
            return env[node.id]
        return float(node.value)

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expr(source, dim=1, constants=None):
    return Expression(source, dim, constants)


def state_function(source, dim):
    """Compile an expression in ``x1..xd`` into a vectorised callable ``f(x)``.

    The result broadcasts to ``x.shape[:-1]`` even for constant expressions.
    """
    expr = Expression(source, dim)

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(expr(0, x), dtype=float), x.shape[:-1]).copy()

    f.source = source
    return f
