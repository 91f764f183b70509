"""Polynomial right-hand sides for ODE systems.

A :class:`PolynomialOdeSystem` stores, for every variable, a normalized map from
exponent vectors to real coefficients. Monomials with equal exponent vectors are
merged and zero coefficients are dropped, so two systems describing the same
vector field compare equal term by term.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponents = tuple[int, ...]
Terms = dict[Exponents, float]


def _normalize(terms: Iterable[tuple[Exponents, float]], n: int) -> tuple[tuple[Exponents, float], ...]:
    acc: dict[Exponents, float] = {}
    for exps, coef in terms:
        exps = tuple(int(e) for e in exps)
        if len(exps) != n:
            raise ValueError(f"exponent vector {exps} has length {len(exps)}, expected {n}")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in {exps}")
        coef = float(coef)
        if not math.isfinite(coef):
            raise ValueError(f"non-finite coefficient {coef} for monomial {exps}")
        acc[exps] = acc.get(exps, 0.0) + coef
    # descending exponent order puts high-degree terms of the own variable first
    return tuple((e, c) for e, c in sorted(acc.items(), reverse=True) if c != 0.0)


@dataclass(frozen=True)
class PolynomialOdeSystem:
    """dx_i/dt = sum_k c_k prod_j x_j**a_kj for each variable i.

    Attributes:
        variables: Variable names, dense-indexed in this order.
        equations: One tuple of ``(exponents, coefficient)`` per variable.
    """

    variables: tuple[str, ...]
    equations: tuple[tuple[tuple[Exponents, float], ...], ...]

    def __init__(self, variables: Sequence[str], equations: Sequence[Iterable[tuple[Exponents, float]]]):
        variables = tuple(variables)
        if len(set(variables)) != len(variables):
            raise ValueError(f"duplicate variable names in {variables}")
        if len(equations) != len(variables):
            raise ValueError("need exactly one equation per variable")
        n = len(variables)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "equations", tuple(_normalize(eq, n) for eq in equations))

    @classmethod
    def from_mapping(cls, variables: Sequence[str], equations: Mapping[str, Mapping[Exponents, float]]):
        """Build from ``{variable: {exponents: coefficient}}``; missing variables get 0."""
        unknown = set(equations) - set(variables)
        if unknown:
            raise ValueError(f"equations for undeclared variables: {sorted(unknown)}")
        return cls(variables, [list(equations.get(v, {}).items()) for v in variables])

    @classmethod
    def from_expressions(cls, equations: Mapping[str, str], params: Mapping[str, float] | None = None,
                         variables: Sequence[str] | None = None):
        """Parse ``{"x": "(5 - y)*x/eps", ...}`` into a polynomial system."""
        variables = tuple(variables) if variables is not None else tuple(equations)
        params = dict(params or {})
        clash = set(params) & set(variables)
        if clash:
            raise ValueError(f"names used both as parameter and variable: {sorted(clash)}")
        return cls.from_mapping(variables, {
            v: parse_polynomial(expr, variables, params) for v, expr in equations.items()
        })

    @property
    def n(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        return self.variables.index(name)

    def terms(self, name: str) -> Terms:
        return dict(self.equations[self.index(name)])

    def is_zero(self, name: str) -> bool:
        return not self.equations[self.index(name)]

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x) -> np.ndarray:
        """Right-hand side at state ``x`` (plain Python arithmetic, exact for integers)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n)
        for i, eq in enumerate(self.equations):
            s = 0.0
            for exps, coef in eq:
                m = coef
                for xj, e in zip(x, exps):
                    if e:
                        m *= xj ** e
                s += m
            out[i] = s
        return out

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        jac = np.zeros((self.n, self.n))
        for i, eq in enumerate(self.equations):
            for exps, coef in eq:
                for j, e in enumerate(exps):
                    if e == 0:
                        continue
                    d = coef * e * x[j] ** (e - 1)
                    for k, ek in enumerate(exps):
                        if k != j and ek:
                            d *= x[k] ** ek
                    jac[i, j] += d
        return jac

    def scaled(self, factor: float) -> PolynomialOdeSystem:
        return PolynomialOdeSystem(self.variables, [[(e, c * factor) for e, c in eq] for eq in self.equations])

    def substitute(self, values: Mapping[str, float]) -> PolynomialOdeSystem:
        """Fold constant variables into coefficients and drop their equations."""
        keep = [i for i, v in enumerate(self.variables) if v not in values]
        fixed = [(i, float(values[v])) for i, v in enumerate(self.variables) if v in values]
        eqs = []
        for i in keep:
            new = []
            for exps, coef in self.equations[i]:
                for j, val in fixed:
                    if exps[j]:
                        coef *= val ** exps[j]
                new.append((tuple(exps[k] for k in keep), coef))
            eqs.append(new)
        return PolynomialOdeSystem([self.variables[i] for i in keep], eqs)

    def reindexed(self, variables: Sequence[str]) -> PolynomialOdeSystem:
        """Same vector field over a superset/permutation of the variables."""
        variables = tuple(variables)
        missing = set(self.variables) - set(variables)
        if missing:
            raise ValueError(f"cannot drop variables {sorted(missing)}")
        pos = [variables.index(v) for v in self.variables]
        eqs = {v: {} for v in variables}
        for v, eq in zip(self.variables, self.equations):
            for exps, coef in eq:
                new = [0] * len(variables)
                for p, e in zip(pos, exps):
                    new[p] = e
                eqs[v][tuple(new)] = coef
        return PolynomialOdeSystem.from_mapping(variables, eqs)

    def isclose(self, other: PolynomialOdeSystem, rel_tol: float = 1e-12, abs_tol: float = 0.0) -> bool:
        if self.variables != other.variables:
            return False
        for a, b in zip(self.equations, other.equations):
            da, db = dict(a), dict(b)
            if set(da) != set(db):
                return False
            if not all(math.isclose(da[k], db[k], rel_tol=rel_tol, abs_tol=abs_tol) for k in da):
                return False
        return True

    def format(self) -> str:
        lines = []
        for v, eq in zip(self.variables, self.equations):
            lines.append(f"d{v}/dt = {format_terms(eq, self.variables)}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "equations": {
                v: [{"coef": c, "exponents": {self.variables[j]: e for j, e in enumerate(exps) if e}}
                    for exps, c in eq]
                for v, eq in zip(self.variables, self.equations)
            },
        }


def format_monomial(exps: Exponents, names: Sequence[str]) -> str:
    parts = []
    for name, e in zip(names, exps):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts)


def format_terms(terms: Iterable[tuple[Exponents, float]], names: Sequence[str]) -> str:
    out = ""
    for exps, c in terms:
        mono = format_monomial(exps, names)
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = f"{mag:.12g}" if not mono else (mono if mag == 1 else f"{mag:.12g}*{mono}")
        out += f" {sign} {body}" if out else (f"-{body}" if c < 0 else body)
    return out or "0"


# -- expression parsing -----------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub}


def _poly_mul(a: Terms, b: Terms) -> Terms:
    out: Terms = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return out


def _poly_add(a: Terms, b: Terms, sign: float = 1.0) -> Terms:
    out = dict(a)
    for e, c in b.items():
        out[e] = out.get(e, 0.0) + sign * c
    return out


def _constant_of(p: Terms, n: int) -> float | None:
    zero = (0,) * n
    if all(e == zero for e in p):
        return p.get(zero, 0.0)
    return None


def parse_polynomial(expr: str, variables: Sequence[str], params: Mapping[str, float] | None = None) -> Terms:
    """Expand an arithmetic expression into ``{exponents: coefficient}``.

    Supported syntax: numbers, variable and parameter names, ``+ - * /`` and
    ``**`` with a non-negative integer exponent. Division is only allowed by
    constant subexpressions.
    """
    params = params or {}
    n = len(variables)
    index = {v: i for i, v in enumerate(variables)}
    zero = (0,) * n

    def const(c: float) -> Terms:
        return {zero: float(c)}

    def walk(node) -> Terms:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return const(node.value)
        if isinstance(node, ast.Name):
            if node.id in index:
                e = [0] * n
                e[index[node.id]] = 1
                return {tuple(e): 1.0}
            if node.id in params:
                return const(params[node.id])
            raise ValueError(f"unknown name {node.id!r} in expression {expr!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = walk(node.operand)
            return inner if isinstance(node.op, ast.UAdd) else {e: -c for e, c in inner.items()}
        if isinstance(node, ast.BinOp):
            left, right = walk(node.left), walk(node.right)
            if type(node.op) in _BINOPS:
                return _poly_add(left, right, 1.0 if isinstance(node.op, ast.Add) else -1.0)
            if isinstance(node.op, ast.Mult):
                return _poly_mul(left, right)
            if isinstance(node.op, ast.Div):
                d = _constant_of(right, n)
                if d is None:
                    raise ValueError(f"division by a non-constant in {expr!r}")
                if d == 0:
                    raise ValueError(f"division by zero in {expr!r}")
                return {e: c / d for e, c in left.items()}
            if isinstance(node.op, ast.Pow):
                k = _constant_of(right, n)
                if k is None or k < 0 or k != int(k):
                    raise ValueError(f"exponent must be a non-negative integer constant in {expr!r}")
                out = const(1.0)
                for _ in range(int(k)):
                    out = _poly_mul(out, left)
                return out
        raise ValueError(f"unsupported syntax in polynomial expression {expr!r}")

    try:
        tree = ast.parse(expr.replace("^", "**"), mode="eval")
    except SyntaxError as err:
        raise ValueError(f"cannot parse expression {expr!r}: {err.msg}") from None
    return {e: c for e, c in walk(tree).items() if c != 0.0}
