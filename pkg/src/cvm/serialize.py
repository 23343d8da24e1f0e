"""JSON serialization of types, values, expressions, programs, and documents.

The document format is self-contained: every register and every collection
value carries an explicit type annotation, nested programs and expressions are
inlined, and unknown opcodes survive a round trip untouched so they can be
rejected (or handled by a custom flavor) at type-checking time rather than at
parse time. Serialization is deterministic: the same program always produces
byte-identical text.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ParseError, UnknownFormatVersion
from .exprs import (
    AggregateSpec,
    Arith,
    BoolOp,
    Cmp,
    Const,
    FieldRef,
    IfThenElse,
    InputRef,
    MakeTuple,
    ScalarExpr,
)
from .program import (
    AggSpecParam,
    ConstItem,
    CORE_FLAVOR,
    ExprParam,
    Instruction,
    NestedProgram,
    Param,
    Program,
    Register,
)
from .types import (
    Atom,
    AtomDomain,
    Collection,
    CollectionKind,
    CollKind,
    ItemType,
    Tuple,
)
from .values import AtomValue, CollectionValue, TupleValue, Value

FORMAT_VERSION = 1


@dataclass(frozen=True)
class IRDocument:
    format_version: int
    flavors_used: tuple[str, ...]
    program: Program


# --- encoding ---------------------------------------------------------------------


def type_to_json(t: ItemType):
    if isinstance(t, Atom):
        return {"kind": "atom", "domain": t.domain.value}
    if isinstance(t, Tuple):
        return {"kind": "tuple", "fields": [[n, type_to_json(ft)] for n, ft in t.fields]}
    assert isinstance(t, Collection)
    out = {"kind": "collection", "coll": t.kind.tag.value}
    if t.kind.param is not None:
        out["size"] = t.kind.param
    out["elem"] = type_to_json(t.elem)
    return out


def _float_to_json(f: float):
    if math.isnan(f):
        return "NaN"
    if math.isinf(f):
        return "Infinity" if f > 0 else "-Infinity"
    return f


def value_to_json(v: Value):
    if isinstance(v, AtomValue):
        payload = _float_to_json(v.payload) if v.domain is AtomDomain.FLOAT64 else v.payload
        return {"kind": "atom", "domain": v.domain.value, "value": payload}
    if isinstance(v, TupleValue):
        return {"kind": "tuple", "fields": [[n, value_to_json(fv)] for n, fv in v.fields]}
    assert isinstance(v, CollectionValue)
    out = {"kind": "collection", "coll": v.kind.tag.value}
    if v.kind.param is not None:
        out["size"] = v.kind.param
    if v.extents is not None:
        out["extents"] = list(v.extents)
    out["elem_type"] = type_to_json(v.elem_type)
    out["items"] = [value_to_json(x) for x in v.items]
    return out


def expr_to_json(e: ScalarExpr):
    if isinstance(e, Const):
        return {"kind": "const", "value": value_to_json(e.value)}
    if isinstance(e, FieldRef):
        return {"kind": "field", "name": e.name}
    if isinstance(e, InputRef):
        return {"kind": "input"}
    if isinstance(e, MakeTuple):
        return {"kind": "make_tuple", "fields": [[n, expr_to_json(s)] for n, s in e.fields]}
    if isinstance(e, Arith):
        return {"kind": "arith", "op": e.op, "lhs": expr_to_json(e.lhs), "rhs": expr_to_json(e.rhs)}
    if isinstance(e, Cmp):
        return {"kind": "cmp", "op": e.op, "lhs": expr_to_json(e.lhs), "rhs": expr_to_json(e.rhs)}
    if isinstance(e, BoolOp):
        return {"kind": "bool", "op": e.op, "args": [expr_to_json(a) for a in e.args]}
    assert isinstance(e, IfThenElse)
    return {
        "kind": "if",
        "cond": expr_to_json(e.cond),
        "then": expr_to_json(e.then),
        "else": expr_to_json(e.orelse),
    }


def _param_to_json(p: Param):
    if isinstance(p, ConstItem):
        return {"kind": "const", "value": value_to_json(p.value)}
    if isinstance(p, NestedProgram):
        return {"kind": "program", "program": program_to_json(p.program)}
    if isinstance(p, ExprParam):
        return {"kind": "expr", "expr": expr_to_json(p.expr)}
    assert isinstance(p, AggSpecParam)
    return {
        "kind": "aggspecs",
        "specs": [
            {"input_field": s.input_field, "function": s.function, "output_field": s.output_field}
            for s in p.specs
        ],
    }


def program_to_json(p: Program):
    return {
        "params": [{"id": r.id, "type": type_to_json(r.type)} for r in p.params],
        "pipeline": p.pipeline,
        "body": [
            {
                "op": ins.opcode,
                "flavor": ins.flavor,
                "params": [_param_to_json(par) for par in ins.params],
                "in": list(ins.inputs),
                "out": list(ins.outputs),
            }
            for ins in p.body
        ],
    }


def flavors_used(p: Program) -> tuple[str, ...]:
    names: set[str] = set()

    def walk(q: Program) -> None:
        for ins in q.body:
            if ins.flavor != CORE_FLAVOR:
                names.add(ins.flavor)
            for par in ins.params:
                if isinstance(par, NestedProgram):
                    walk(par.program)

    walk(p)
    return tuple(sorted(names))


def serialize(p: Program) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "flavors_used": list(flavors_used(p)),
        "program": program_to_json(p),
    }
    return json.dumps(doc, indent=2) + "\n"


def serialize_values(values: list[Value]) -> str:
    doc = {"format_version": FORMAT_VERSION, "values": [value_to_json(v) for v in values]}
    return json.dumps(doc, indent=2) + "\n"


# --- decoding ---------------------------------------------------------------------


def _fail(where: str, reason: str):
    raise ParseError(where, reason)


def _need(obj, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        _fail(where, f"missing key {key!r}")
    return obj[key]


def type_from_json(obj, where: str = "type") -> ItemType:
    kind = _need(obj, "kind", where)
    if kind == "atom":
        name = _need(obj, "domain", where)
        try:
            return Atom(AtomDomain(name))
        except ValueError:
            _fail(where, f"unknown atom domain {name!r}")
    if kind == "tuple":
        fields = _need(obj, "fields", where)
        try:
            return Tuple(tuple((n, type_from_json(ft, f"{where}.{n}")) for n, ft in fields))
        except ValueError as exc:  # e.g. duplicate field names
            _fail(where, str(exc))
    if kind == "collection":
        coll_name = _need(obj, "coll", where)
        try:
            tag = CollKind(coll_name)
        except ValueError:
            _fail(where, f"unknown collection kind {coll_name!r}")
        size = obj.get("size")
        try:
            ck = CollectionKind(tag, size)
        except ValueError as exc:
            _fail(where, str(exc))
        return Collection(ck, type_from_json(_need(obj, "elem", where), where + ".elem"))
    _fail(where, f"unknown type kind {kind!r}")


def _float_from_json(x, where: str) -> float:
    if isinstance(x, str):
        if x == "NaN":
            return float("nan")
        if x == "Infinity":
            return float("inf")
        if x == "-Infinity":
            return float("-inf")
        _fail(where, f"bad float literal {x!r}")
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return float(x)
    _fail(where, f"bad float payload {x!r}")


def value_from_json(obj, where: str = "value") -> Value:
    kind = _need(obj, "kind", where)
    if kind == "atom":
        name = _need(obj, "domain", where)
        try:
            domain = AtomDomain(name)
        except ValueError:
            _fail(where, f"unknown atom domain {name!r}")
        payload = _need(obj, "value", where)
        if domain is AtomDomain.FLOAT64:
            payload = _float_from_json(payload, where)
        try:
            return AtomValue(domain, payload)
        except Exception as exc:
            _fail(where, str(exc))
    if kind == "tuple":
        fields = _need(obj, "fields", where)
        return TupleValue(tuple((n, value_from_json(fv, f"{where}.{n}")) for n, fv in fields))
    if kind == "collection":
        coll_name = _need(obj, "coll", where)
        try:
            tag = CollKind(coll_name)
        except ValueError:
            _fail(where, f"unknown collection kind {coll_name!r}")
        try:
            ck = CollectionKind(tag, obj.get("size"))
        except ValueError as exc:
            _fail(where, str(exc))
        elem_type = type_from_json(_need(obj, "elem_type", where), where + ".elem_type")
        items = tuple(
            value_from_json(x, f"{where}[{i}]") for i, x in enumerate(_need(obj, "items", where))
        )
        extents = tuple(obj["extents"]) if "extents" in obj else None
        try:
            return CollectionValue(ck, elem_type, items, extents)
        except Exception as exc:
            _fail(where, str(exc))
    _fail(where, f"unknown value kind {kind!r}")


def expr_from_json(obj, where: str = "expr") -> ScalarExpr:
    kind = _need(obj, "kind", where)
    try:
        if kind == "const":
            return Const(value_from_json(_need(obj, "value", where), where + ".value"))
        if kind == "field":
            return FieldRef(_need(obj, "name", where))
        if kind == "input":
            return InputRef()
        if kind == "make_tuple":
            return MakeTuple(
                tuple((n, expr_from_json(s, f"{where}.{n}")) for n, s in _need(obj, "fields", where))
            )
        if kind == "arith":
            return Arith(
                _need(obj, "op", where),
                expr_from_json(_need(obj, "lhs", where), where + ".lhs"),
                expr_from_json(_need(obj, "rhs", where), where + ".rhs"),
            )
        if kind == "cmp":
            return Cmp(
                _need(obj, "op", where),
                expr_from_json(_need(obj, "lhs", where), where + ".lhs"),
                expr_from_json(_need(obj, "rhs", where), where + ".rhs"),
            )
        if kind == "bool":
            return BoolOp(
                _need(obj, "op", where),
                tuple(expr_from_json(a, f"{where}[{i}]") for i, a in enumerate(_need(obj, "args", where))),
            )
        if kind == "if":
            return IfThenElse(
                expr_from_json(_need(obj, "cond", where), where + ".cond"),
                expr_from_json(_need(obj, "then", where), where + ".then"),
                expr_from_json(_need(obj, "else", where), where + ".else"),
            )
    except ValueError as exc:
        _fail(where, str(exc))
    _fail(where, f"unknown expression kind {kind!r}")


def _param_from_json(obj, where: str) -> Param:
    kind = _need(obj, "kind", where)
    if kind == "const":
        return ConstItem(value_from_json(_need(obj, "value", where), where + ".value"))
    if kind == "program":
        return NestedProgram(program_from_json(_need(obj, "program", where), where + ".program"))
    if kind == "expr":
        return ExprParam(expr_from_json(_need(obj, "expr", where), where + ".expr"))
    if kind == "aggspecs":
        specs = []
        for i, s in enumerate(_need(obj, "specs", where)):
            try:
                specs.append(
                    AggregateSpec(
                        _need(s, "input_field", f"{where}[{i}]"),
                        _need(s, "function", f"{where}[{i}]"),
                        _need(s, "output_field", f"{where}[{i}]"),
                    )
                )
            except ValueError as exc:
                _fail(f"{where}[{i}]", str(exc))
        return AggSpecParam(tuple(specs))
    _fail(where, f"unknown parameter kind {kind!r}")


def program_from_json(obj, where: str = "program") -> Program:
    params = []
    for i, r in enumerate(_need(obj, "params", where)):
        params.append(
            Register(_need(r, "id", f"{where}.params[{i}]"), type_from_json(_need(r, "type", f"{where}.params[{i}]")))
        )
    body = []
    for i, ins in enumerate(_need(obj, "body", where)):
        iw = f"{where}.body[{i}]"
        body.append(
            Instruction(
                _need(ins, "op", iw),
                _need(ins, "flavor", iw),
                tuple(_param_from_json(par, f"{iw}.param[{j}]") for j, par in enumerate(ins.get("params", []))),
                tuple(_need(ins, "in", iw)),
                tuple(_need(ins, "out", iw)),
            )
        )
    return Program(tuple(params), tuple(body), bool(obj.get("pipeline", False)))


def deserialize(text: str) -> Program:
    return load_document(text).program


def load_document(text: str) -> IRDocument:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}", exc.msg)
    version = _need(obj, "format_version", "document")
    if version != FORMAT_VERSION:
        raise UnknownFormatVersion(version)
    flavors = tuple(_need(obj, "flavors_used", "document"))
    try:
        return IRDocument(version, flavors, program_from_json(_need(obj, "program", "document")))
    except ParseError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:  # mis-shaped JSON
        raise ParseError("document", f"malformed document: {exc}") from exc


def deserialize_values(text: str) -> list[Value]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}", exc.msg)
    version = _need(obj, "format_version", "document")
    if version != FORMAT_VERSION:
        raise UnknownFormatVersion(version)
    try:
        return [value_from_json(v, f"values[{i}]") for i, v in enumerate(_need(obj, "values", "document"))]
    except ParseError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise ParseError("values", f"malformed values file: {exc}") from exc
