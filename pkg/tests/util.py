"""Shared test helpers: value equivalence and random well-typed programs."""

from __future__ import annotations

import math
import random

from cvm.exprs import (
    AggregateSpec,
    Arith,
    BoolOp,
    Cmp,
    Const,
    FieldRef,
    MakeTuple,
)
from cvm.flavors import HIGHLEVEL
from cvm.program import AggSpecParam, ConstItem, ExprParam, Program, Register, instr, program, ret
from cvm.types import (
    BAG,
    Collection,
    CollKind,
    FLOAT64,
    INT64,
    ItemType,
    SEQ,
    Tuple,
    coll,
)
from cvm.values import (
    AtomValue,
    CollectionValue,
    TupleValue,
    Value,
    canonical_key,
    collection_value,
    type_of,
)
from cvm.types import AtomDomain

ORDERED_KINDS = (CollKind.SEQ, CollKind.VEC, CollKind.SINGLE, CollKind.ARRAYN)


def values_equivalent(a: Value, b: Value, rel: float = 0.0) -> bool:
    """Semantic comparison: multiset for Set/Bag (and across Bag/Seq kind
    drift introduced by rewrites), ordered elsewhere, float tolerance `rel`."""
    if isinstance(a, AtomValue) and isinstance(b, AtomValue):
        if a.domain != b.domain:
            return False
        if a.domain is AtomDomain.FLOAT64:
            x, y = a.payload, b.payload
            if math.isnan(x) or math.isnan(y):
                return math.isnan(x) and math.isnan(y)
            if rel == 0.0:
                return x == y
            return math.isclose(x, y, rel_tol=rel, abs_tol=rel)
        return a.payload == b.payload
    if isinstance(a, TupleValue) and isinstance(b, TupleValue):
        if [n for n, _ in a.fields] != [n for n, _ in b.fields]:
            return False
        return all(values_equivalent(x, y, rel) for (_, x), (_, y) in zip(a.fields, b.fields))
    if isinstance(a, CollectionValue) and isinstance(b, CollectionValue):
        if len(a.items) != len(b.items):
            return False
        ordered = a.kind.tag in ORDERED_KINDS and b.kind.tag in ORDERED_KINDS
        if a.extents != b.extents:
            return False
        xs, ys = list(a.items), list(b.items)
        if not ordered:
            xs = sorted(xs, key=canonical_key)
            ys = sorted(ys, key=canonical_key)
        return all(values_equivalent(x, y, rel) for x, y in zip(xs, ys))
    return False


def rows_of(result: Value) -> list[Value]:
    """Flatten a query result to its rows: unwraps Single<Vec<...>> layers."""
    assert isinstance(result, CollectionValue)
    if result.kind.tag is CollKind.SINGLE and isinstance(result.items[0], CollectionValue):
        return list(result.items[0].items)
    return list(result.items)


def ints(*xs: int) -> list[AtomValue]:
    return [AtomValue(AtomDomain.INT64, x) for x in xs]


def int_v(x: int) -> AtomValue:
    return AtomValue(AtomDomain.INT64, x)


def float_v(x: float) -> AtomValue:
    return AtomValue(AtomDomain.FLOAT64, float(x))


def row(schema: Tuple, *payloads) -> TupleValue:
    fields = []
    for (name, ft), p in zip(schema.fields, payloads):
        fields.append((name, AtomValue(ft.domain, p)))
    return TupleValue(tuple(fields))


# --- random well-typed chain programs ------------------------------------------------

_FIELD_NAMES = "abcdef"


class ChainCase:
    def __init__(self, prog: Program, inputs: list[Value], int_only: bool):
        self.program = prog
        self.inputs = inputs
        self.int_only = int_only


from cvm.types import TEXT

_SPECIAL_FLOATS = (float("nan"), float("inf"), float("-inf"), -0.0)
_WORDS = ("ash", "birch", "cedar", "oak")


def _random_schema(rng: random.Random, int_only: bool) -> Tuple:
    n = rng.randint(2, 4)
    fields = []
    for i in range(n):
        if int_only:
            domain = INT64
        else:
            domain = rng.choices((INT64, FLOAT64, TEXT), weights=(4, 4, 1))[0]
        fields.append((_FIELD_NAMES[i], domain))
    if all(ft == TEXT for _, ft in fields):  # keep at least one numeric field
        fields[0] = (fields[0][0], INT64)
    return Tuple(tuple(fields))


def _random_rows(rng: random.Random, schema: Tuple, n_rows: int) -> list[TupleValue]:
    rows = []
    for _ in range(n_rows):
        fields = []
        for name, ft in schema.fields:
            if ft == INT64:
                fields.append((name, AtomValue(AtomDomain.INT64, rng.randint(-1000, 1000))))
            elif ft == TEXT:
                fields.append((name, AtomValue(AtomDomain.TEXT, rng.choice(_WORDS))))
            elif rng.random() < 0.03:
                fields.append((name, AtomValue(AtomDomain.FLOAT64, rng.choice(_SPECIAL_FLOATS))))
            else:
                fields.append((name, AtomValue(AtomDomain.FLOAT64, round(rng.uniform(-100, 100), 4))))
        rows.append(TupleValue(tuple(fields)))
    return rows


def _numeric_const(rng: random.Random, ft) -> Const:
    if ft == INT64:
        return Const(AtomValue(AtomDomain.INT64, rng.randint(-800, 800)))
    return Const(AtomValue(AtomDomain.FLOAT64, round(rng.uniform(-80, 80), 3)))


def _random_predicate(rng: random.Random, schema: Tuple) -> object:
    def one() -> Cmp:
        name, ft = rng.choice(schema.fields)
        if ft == TEXT:
            return Cmp(rng.choice(("==", "!=")), FieldRef(name), Const(AtomValue(AtomDomain.TEXT, rng.choice(_WORDS))))
        op = rng.choice(("<", "<=", ">", ">=", "==", "!="))
        return Cmp(op, FieldRef(name), _numeric_const(rng, ft))

    if rng.random() < 0.4:
        return BoolOp(rng.choice(("and", "or")), (one(), one()))
    return one()


def _random_projection(rng: random.Random, schema: Tuple) -> tuple[MakeTuple, Tuple]:
    numeric = [(n, t) for n, t in schema.fields if t != TEXT]
    k = rng.randint(1, 3)
    fields = []
    out_fields = []
    for i in range(k):
        name = _FIELD_NAMES[i]
        src_name, src_t = rng.choice(schema.fields)
        if src_t == TEXT or rng.random() < 0.5 or not numeric:
            expr = FieldRef(src_name)
            out_t = src_t
        else:
            src_name, src_t = rng.choice(numeric)
            other_name, other_t = rng.choice(numeric)
            op = rng.choice(("+", "-")) if (src_t == INT64 and other_t == INT64) else rng.choice(("+", "-", "*"))
            expr = Arith(op, FieldRef(src_name), FieldRef(other_name))
            out_t = INT64 if (src_t == INT64 and other_t == INT64) else FLOAT64
        fields.append((name, expr))
        out_fields.append((name, out_t))
    return MakeTuple(tuple(fields)), Tuple(tuple(out_fields))


def random_chain_case(rng: random.Random, max_rows: int = 400) -> ChainCase:
    """A random well-typed Select/ExProj/Map/Proj[/Aggr] chain plus input data."""
    int_only = rng.random() < 0.4
    schema = _random_schema(rng, int_only)
    kind = SEQ if rng.random() < 0.5 else BAG
    rows = _random_rows(rng, schema, rng.randint(0, max_rows))
    input_value = CollectionValue(kind, schema, tuple(rows))

    body = []
    fresh = iter(f"r{i}" for i in range(100))
    cur_reg = "src"
    cur_schema = schema
    for _ in range(rng.randint(1, 4)):
        choice = rng.random()
        out_reg = next(fresh)
        if choice < 0.35:
            body.append(
                instr("Select", HIGHLEVEL, (ExprParam(_random_predicate(rng, cur_schema)),), (cur_reg,), (out_reg,))
            )
        elif choice < 0.6:
            mk, out_schema = _random_projection(rng, cur_schema)
            body.append(instr("ExProj", HIGHLEVEL, (ExprParam(mk),), (cur_reg,), (out_reg,)))
            cur_schema = out_schema
        elif choice < 0.8:
            mk, out_schema = _random_projection(rng, cur_schema)
            body.append(instr("Map", HIGHLEVEL, (ExprParam(mk),), (cur_reg,), (out_reg,)))
            cur_schema = out_schema
        else:
            names = [n for n, _ in cur_schema.fields]
            rng.shuffle(names)
            keep = names[: rng.randint(1, len(names))]
            names_value = collection_value(SEQ, TEXT, [AtomValue(AtomDomain.TEXT, n) for n in keep])
            body.append(instr("Proj", HIGHLEVEL, (ConstItem(names_value),), (cur_reg,), (out_reg,)))
            cur_schema = Tuple(tuple((n, cur_schema.field_type(n)) for n in keep))
        cur_reg = out_reg
    if rng.random() < 0.6:
        out_reg = next(fresh)
        specs = []
        used = set()
        for name, ft in cur_schema.fields:
            if len(specs) == 2:
                break
            fn = "count" if ft == TEXT else rng.choice(("sum", "count", "min", "max"))
            out_name = f"agg_{name}"
            if out_name in used:
                continue
            used.add(out_name)
            specs.append(AggregateSpec(name, fn, out_name))
        body.append(instr("Aggr", HIGHLEVEL, (AggSpecParam(tuple(specs)),), (cur_reg,), (out_reg,)))
        cur_reg = out_reg
    body.append(ret(cur_reg))
    prog = program([Register("src", coll(kind, schema))], body)
    return ChainCase(prog, [input_value], int_only)
