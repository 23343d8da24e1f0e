"""Pure scalar expressions used as instruction parameters.

Expressions close over exactly one input item (the current element), carry no
side effects, and serialize with the program, so programs stay self-contained
data. Two evaluation routes exist: `eval_expr` interprets the tree directly
over Values (the slow, obviously-correct route), while `compile_expr` builds a
plain-value closure used by the execution backends. The two are differentially
tested against each other.

Int64 arithmetic is range-checked: leaving [-2^63, 2^63) raises rather than
wrapping, and `/` and `%` are floor division / floor modulo. Float64 follows
binary64 semantics (division by zero yields inf/nan, comparisons with NaN are
false).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ArithmeticOverflow, DivisionByZero, NotDecomposable, TypeCheckError
from .types import Atom, AtomDomain, BOOL, ItemType, Tuple
from .values import Value, from_plain, to_plain, type_of

ARITH_OPS = ("+", "-", "*", "/", "%")
CMP_OPS = ("<", "<=", "==", "!=", ">=", ">")
BOOL_OPS = ("and", "or", "not")

_ORDERED_DOMAINS = (AtomDomain.INT64, AtomDomain.FLOAT64, AtomDomain.DATE)


class ScalarExpr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Const(ScalarExpr):
    value: Value


@dataclass(frozen=True, slots=True)
class FieldRef(ScalarExpr):
    name: str


@dataclass(frozen=True, slots=True)
class InputRef(ScalarExpr):
    pass


@dataclass(frozen=True, slots=True)
class MakeTuple(ScalarExpr):
    fields: tuple[tuple[str, ScalarExpr], ...]


@dataclass(frozen=True, slots=True)
class Arith(ScalarExpr):
    op: str
    lhs: ScalarExpr
    rhs: ScalarExpr

    def __post_init__(self) -> None:
        if self.op not in ARITH_OPS:
            raise ValueError(f"unknown arithmetic operator {self.op!r}")


@dataclass(frozen=True, slots=True)
class Cmp(ScalarExpr):
    op: str
    lhs: ScalarExpr
    rhs: ScalarExpr

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")


@dataclass(frozen=True, slots=True)
class BoolOp(ScalarExpr):
    op: str
    args: tuple[ScalarExpr, ...]

    def __post_init__(self) -> None:
        if self.op not in BOOL_OPS:
            raise ValueError(f"unknown boolean operator {self.op!r}")
        if self.op == "not" and len(self.args) != 1:
            raise ValueError("not takes exactly one argument")
        if self.op in ("and", "or") and len(self.args) < 2:
            raise ValueError(f"{self.op} takes at least two arguments")


@dataclass(frozen=True, slots=True)
class IfThenElse(ScalarExpr):
    cond: ScalarExpr
    then: ScalarExpr
    orelse: ScalarExpr


# --- typing -----------------------------------------------------------------------


def typecheck_expr(expr: ScalarExpr, input_type: ItemType) -> ItemType:
    """Result type of `expr` against `input_type`, or a TypeCheckError."""
    if isinstance(expr, Const):
        return type_of(expr.value)
    if isinstance(expr, InputRef):
        return input_type
    if isinstance(expr, FieldRef):
        if not isinstance(input_type, Tuple):
            raise TypeCheckError("NonTupleFieldAccess", f"field {expr.name!r} of non-tuple {input_type}")
        ft = input_type.field_type(expr.name)
        if ft is None:
            raise TypeCheckError("UnknownField", f"no field {expr.name!r} in {input_type}")
        return ft
    if isinstance(expr, MakeTuple):
        names = [n for n, _ in expr.fields]
        if len(set(names)) != len(names):
            raise TypeCheckError("OperandTypeMismatch", f"duplicate tuple field names {names}")
        return Tuple(tuple((n, typecheck_expr(e, input_type)) for n, e in expr.fields))
    if isinstance(expr, Arith):
        lt = typecheck_expr(expr.lhs, input_type)
        rt = typecheck_expr(expr.rhs, input_type)
        domains = set()
        for t in (lt, rt):
            if not (isinstance(t, Atom) and t.domain.is_numeric):
                raise TypeCheckError("OperandTypeMismatch", f"arithmetic needs numeric atoms, got {t}")
            domains.add(t.domain)
        return Atom(AtomDomain.FLOAT64 if AtomDomain.FLOAT64 in domains else AtomDomain.INT64)
    if isinstance(expr, Cmp):
        lt = typecheck_expr(expr.lhs, input_type)
        rt = typecheck_expr(expr.rhs, input_type)
        if not (isinstance(lt, Atom) and isinstance(rt, Atom)):
            raise TypeCheckError("OperandTypeMismatch", f"comparison needs atoms, got {lt} and {rt}")
        if lt.domain != rt.domain and not (lt.domain.is_numeric and rt.domain.is_numeric):
            raise TypeCheckError("OperandTypeMismatch", f"cannot compare {lt} with {rt}")
        if expr.op not in ("==", "!=") and (
            lt.domain not in _ORDERED_DOMAINS or rt.domain not in _ORDERED_DOMAINS
        ):
            raise TypeCheckError("OperandTypeMismatch", f"{lt} supports only equality comparison")
        return BOOL
    if isinstance(expr, BoolOp):
        for a in expr.args:
            t = typecheck_expr(a, input_type)
            if t != BOOL:
                raise TypeCheckError("OperandTypeMismatch", f"boolean operator over {t}")
        return BOOL
    if isinstance(expr, IfThenElse):
        ct = typecheck_expr(expr.cond, input_type)
        if ct != BOOL:
            raise TypeCheckError("OperandTypeMismatch", f"condition must be bool, got {ct}")
        tt = typecheck_expr(expr.then, input_type)
        et = typecheck_expr(expr.orelse, input_type)
        if tt != et:
            raise TypeCheckError("OperandTypeMismatch", f"branches disagree: {tt} vs {et}")
        return tt
    raise TypeCheckError("OperandTypeMismatch", f"not an expression: {expr!r}")


def fields_referenced(expr: ScalarExpr) -> set[str]:
    """Exactly the FieldRef names appearing anywhere in the expression."""
    out: set[str] = set()

    def walk(e: ScalarExpr) -> None:
        if isinstance(e, FieldRef):
            out.add(e.name)
        elif isinstance(e, MakeTuple):
            for _, sub in e.fields:
                walk(sub)
        elif isinstance(e, (Arith, Cmp)):
            walk(e.lhs)
            walk(e.rhs)
        elif isinstance(e, BoolOp):
            for a in e.args:
                walk(a)
        elif isinstance(e, IfThenElse):
            walk(e.cond)
            walk(e.then)
            walk(e.orelse)

    walk(expr)
    return out


# --- checked Int64 / IEEE helpers (shared by both evaluation routes) ---------------

_I64_MIN = -(2**63)
_I64_MAX = 2**63 - 1


def _icheck(r: int) -> int:
    if r < _I64_MIN or r > _I64_MAX:
        raise ArithmeticOverflow(f"int64 result {r} out of range")
    return r


def _iadd(a, b):
    return _icheck(a + b)


def _isub(a, b):
    return _icheck(a - b)


def _imul(a, b):
    return _icheck(a * b)


def _idiv(a, b):
    if b == 0:
        raise DivisionByZero("int64 division by zero")
    return _icheck(a // b)


def _imod(a, b):
    if b == 0:
        raise DivisionByZero("int64 modulo by zero")
    return a % b


def _fdiv(a, b):
    if b != 0.0:
        return a / b
    if a == 0.0 or a != a:
        return float("nan")
    return math.copysign(float("inf"), a) * math.copysign(1.0, b)


def _fmod(a, b):
    if b == 0.0:
        return float("nan")
    try:
        return a % b
    except (ZeroDivisionError, OverflowError):
        return float("nan")


_INT_FUNCS = {"+": _iadd, "-": _isub, "*": _imul, "/": _idiv, "%": _imod}


# --- compiled plain-value route ------------------------------------------------------

_COMPILE_GLOBALS = {
    "_iadd": _iadd,
    "_isub": _isub,
    "_imul": _imul,
    "_idiv": _idiv,
    "_imod": _imod,
    "_fdiv": _fdiv,
    "_fmod": _fmod,
    "__builtins__": {},
}

_CMP_SRC = {"<": "<", "<=": "<=", "==": "==", "!=": "!=", ">=": ">=", ">": ">"}


def _gen(expr: ScalarExpr, input_type: ItemType, consts: list) -> tuple[str, ItemType]:
    """Return (source fragment over variable `it`, result type)."""
    if isinstance(expr, Const):
        t = type_of(expr.value)
        plain = to_plain(expr.value, t)
        if isinstance(t, Atom) and t.domain is not AtomDomain.FLOAT64 and t.domain is not AtomDomain.TEXT:
            return repr(plain), t
        consts.append(plain)
        return f"_k{len(consts) - 1}", t
    if isinstance(expr, InputRef):
        return "it", input_type
    if isinstance(expr, FieldRef):
        t = typecheck_expr(expr, input_type)
        return f"it[{input_type.field_index(expr.name)}]", t
    if isinstance(expr, MakeTuple):
        parts = []
        fts = []
        for n, sub in expr.fields:
            src, t = _gen(sub, input_type, consts)
            parts.append(src)
            fts.append((n, t))
        trailing = "," if len(parts) == 1 else ""
        return "(" + ", ".join(parts) + trailing + ")", Tuple(tuple(fts))
    if isinstance(expr, Arith):
        ls, lt = _gen(expr.lhs, input_type, consts)
        rs, rt = _gen(expr.rhs, input_type, consts)
        if lt == rt == Atom(AtomDomain.INT64):
            fn = {"+": "_iadd", "-": "_isub", "*": "_imul", "/": "_idiv", "%": "_imod"}[expr.op]
            return f"{fn}({ls}, {rs})", Atom(AtomDomain.INT64)
        if expr.op == "/":
            return f"_fdiv({ls}, {rs})", Atom(AtomDomain.FLOAT64)
        if expr.op == "%":
            return f"_fmod({ls}, {rs})", Atom(AtomDomain.FLOAT64)
        return f"({ls} {expr.op} {rs})", Atom(AtomDomain.FLOAT64)
    if isinstance(expr, Cmp):
        ls, _ = _gen(expr.lhs, input_type, consts)
        rs, _ = _gen(expr.rhs, input_type, consts)
        return f"({ls} {_CMP_SRC[expr.op]} {rs})", BOOL
    if isinstance(expr, BoolOp):
        parts = [_gen(a, input_type, consts)[0] for a in expr.args]
        if expr.op == "not":
            return f"(not {parts[0]})", BOOL
        return "(" + f" {expr.op} ".join(parts) + ")", BOOL
    if isinstance(expr, IfThenElse):
        cs, _ = _gen(expr.cond, input_type, consts)
        ts, tt = _gen(expr.then, input_type, consts)
        es, _ = _gen(expr.orelse, input_type, consts)
        return f"({ts} if {cs} else {es})", tt
    raise TypeCheckError("OperandTypeMismatch", f"not an expression: {expr!r}")


def compile_expr(expr: ScalarExpr, input_type: ItemType):
    """Compile to a fast plain-value callable. Typechecks as a side effect."""
    typecheck_expr(expr, input_type)
    consts: list = []
    src, _ = _gen(expr, input_type, consts)
    glb = dict(_COMPILE_GLOBALS)
    for i, c in enumerate(consts):
        glb[f"_k{i}"] = c
    return eval(compile(f"lambda it: {src}", "<scalar-expr>", "eval"), glb)


# --- direct Value-tree route ----------------------------------------------------------


def _eval_plain(expr: ScalarExpr, it, input_type: ItemType):
    if isinstance(expr, Const):
        return to_plain(expr.value, type_of(expr.value))
    if isinstance(expr, InputRef):
        return it
    if isinstance(expr, FieldRef):
        return it[input_type.field_index(expr.name)]
    if isinstance(expr, MakeTuple):
        return tuple(_eval_plain(e, it, input_type) for _, e in expr.fields)
    if isinstance(expr, Arith):
        lt = typecheck_expr(expr.lhs, input_type)
        rt = typecheck_expr(expr.rhs, input_type)
        a = _eval_plain(expr.lhs, it, input_type)
        b = _eval_plain(expr.rhs, it, input_type)
        if lt == rt == Atom(AtomDomain.INT64):
            return _INT_FUNCS[expr.op](a, b)
        if expr.op == "/":
            return _fdiv(float(a), float(b))
        if expr.op == "%":
            return _fmod(float(a), float(b))
        return {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b}[expr.op]()
    if isinstance(expr, Cmp):
        a = _eval_plain(expr.lhs, it, input_type)
        b = _eval_plain(expr.rhs, it, input_type)
        return {
            "<": a < b, "<=": a <= b, "==": a == b,
            "!=": a != b, ">=": a >= b, ">": a > b,
        }[expr.op]
    if isinstance(expr, BoolOp):
        if expr.op == "not":
            return not _eval_plain(expr.args[0], it, input_type)
        if expr.op == "and":
            return all(_eval_plain(a, it, input_type) for a in expr.args)
        return any(_eval_plain(a, it, input_type) for a in expr.args)
    if isinstance(expr, IfThenElse):
        if _eval_plain(expr.cond, it, input_type):
            return _eval_plain(expr.then, it, input_type)
        return _eval_plain(expr.orelse, it, input_type)
    raise TypeCheckError("OperandTypeMismatch", f"not an expression: {expr!r}")


def eval_expr(expr: ScalarExpr, input_value: Value) -> Value:
    """Evaluate against one input item; pure and deterministic."""
    t_in = type_of(input_value)
    t_out = typecheck_expr(expr, t_in)
    result = _eval_plain(expr, to_plain(input_value, t_in), t_in)
    return from_plain(result, t_out)


# --- aggregate specifications -----------------------------------------------------------

AGG_FUNCTIONS = ("sum", "count", "min", "max")


@dataclass(frozen=True, slots=True)
class AggregateSpec:
    input_field: str
    function: str
    output_field: str

    def __post_init__(self) -> None:
        if self.function not in AGG_FUNCTIONS:
            raise ValueError(f"unknown aggregate function {self.function!r}")


def decompose_aggregate(spec: AggregateSpec) -> tuple[AggregateSpec, AggregateSpec]:
    """Split into a per-partition pre-aggregate and a global merge aggregate.

    The merge reads the pre-aggregate's output field: sum merges by sum, count
    by sum, min by min, max by max.
    """
    merge_fn = {"sum": "sum", "count": "sum", "min": "min", "max": "max"}.get(spec.function)
    if merge_fn is None:
        raise NotDecomposable(f"aggregate {spec.function!r} has no split")
    return spec, AggregateSpec(spec.output_field, merge_fn, spec.output_field)
