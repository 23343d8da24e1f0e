"""Expression DSL producing the engine's JSON expression grammar.

Expressions are plain dict builders with operator overloading, so a pipeline
definition reads like dataframe code:

    (col("l_eprice") * col("l_disc")).json()
    (col("l_quantity") < lit(24.0)) & (col("l_discount") >= lit(0.05))

Nothing here evaluates anything; the engine owns all semantics.
"""

from __future__ import annotations

DOMAINS = ("bool", "int64", "float64", "date", "text")


class Expr:
    """Wrapper around one JSON expression node."""

    __slots__ = ("node",)

    def __init__(self, node: dict):
        self.node = node

    def json(self) -> dict:
        return self.node

    def _bin(self, kind: str, op: str, other: "Expr") -> "Expr":
        other = _coerce(other)
        return Expr({"kind": kind, "op": op, "lhs": self.node, "rhs": other.node})

    def __add__(self, other):
        return self._bin("arith", "+", other)

    def __sub__(self, other):
        return self._bin("arith", "-", other)

    def __mul__(self, other):
        return self._bin("arith", "*", other)

    def __truediv__(self, other):
        return self._bin("arith", "/", other)

    def __mod__(self, other):
        return self._bin("arith", "%", other)

    def __lt__(self, other):
        return self._bin("cmp", "<", other)

    def __le__(self, other):
        return self._bin("cmp", "<=", other)

    def __gt__(self, other):
        return self._bin("cmp", ">", other)

    def __ge__(self, other):
        return self._bin("cmp", ">=", other)

    def eq(self, other) -> "Expr":
        return self._bin("cmp", "==", other)

    def ne(self, other) -> "Expr":
        return self._bin("cmp", "!=", other)

    def __and__(self, other):
        return _bool_op("and", self, _coerce(other))

    def __or__(self, other):
        return _bool_op("or", self, _coerce(other))

    def __invert__(self):
        return Expr({"kind": "bool", "op": "not", "args": [self.node]})


def _bool_op(op: str, left: Expr, right: Expr) -> Expr:
    # flatten nested chains of the same operator so `a & b & c` serializes as
    # one three-argument node, matching hand-written documents
    args = []
    for side in (left, right):
        node = side.node
        if node.get("kind") == "bool" and node.get("op") == op:
            args.extend(node["args"])
        else:
            args.append(node)
    return Expr({"kind": "bool", "op": op, "args": args})


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return lit(x)


def col(name: str) -> Expr:
    """Reference a field of the current row."""
    return Expr({"kind": "field", "name": name})


def input_item() -> Expr:
    """Reference the whole current item (for non-tuple collections)."""
    return Expr({"kind": "input"})


def atom_json(value, domain: str) -> dict:
    return {"kind": "atom", "domain": domain, "value": value}


def lit(value, domain: str | None = None) -> Expr:
    """A constant: bool/int/float/str map to bool/int64/float64/text unless a
    domain (e.g. "date") is forced."""
    if domain is None:
        if isinstance(value, bool):
            domain = "bool"
        elif isinstance(value, int):
            domain = "int64"
        elif isinstance(value, float):
            domain = "float64"
        elif isinstance(value, str):
            domain = "text"
        else:
            raise TypeError(f"cannot infer a domain for {value!r}")
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    return Expr({"kind": "const", "value": atom_json(value, domain)})


def date(epoch_days: int) -> Expr:
    return lit(epoch_days, "date")


def if_then_else(cond: Expr, then: Expr, orelse: Expr) -> Expr:
    return Expr(
        {"kind": "if", "cond": _coerce(cond).node, "then": _coerce(then).node, "else": _coerce(orelse).node}
    )
