"""The bundled revenue query: filter lineitem, project a product, sum it.

Shipped as both a Program builder and a canonical JSON document so frontends
can be checked against a fixed reference. The predicate constants are fixed
here: ship date in [8766, 9131) epoch days (the year 1994), discount within
[0.05, 0.07], quantity below 24.
"""

from __future__ import annotations

from .datagen import LINEITEM_TYPE
from .exprs import AggregateSpec, Arith, BoolOp, Cmp, Const, FieldRef, MakeTuple
from .flavors import HIGHLEVEL
from .program import AggSpecParam, ExprParam, Program, Register, instr, program, ret
from .serialize import serialize
from .types import BAG, AtomDomain, coll
from .values import AtomValue

SHIPDATE_LO = 8766
SHIPDATE_HI = 9131
DISCOUNT_LO = 0.05
DISCOUNT_HI = 0.07
QUANTITY_LT = 24.0


def _date(days: int) -> Const:
    return Const(AtomValue(AtomDomain.DATE, days))


def _num(x: float) -> Const:
    return Const(AtomValue(AtomDomain.FLOAT64, float(x)))


def q6_predicate() -> BoolOp:
    return BoolOp(
        "and",
        (
            Cmp(">=", FieldRef("l_shipdate"), _date(SHIPDATE_LO)),
            Cmp("<", FieldRef("l_shipdate"), _date(SHIPDATE_HI)),
            Cmp(">=", FieldRef("l_discount"), _num(DISCOUNT_LO)),
            Cmp("<=", FieldRef("l_discount"), _num(DISCOUNT_HI)),
            Cmp("<", FieldRef("l_quantity"), _num(QUANTITY_LT)),
        ),
    )


def q6_projection() -> MakeTuple:
    return MakeTuple((("x", Arith("*", FieldRef("l_eprice"), FieldRef("l_disc"))),))


def q6_program() -> Program:
    """Select -> extended projection -> scalar sum, over a bag of lineitem rows."""
    return program(
        [Register("lineitem", coll(BAG, LINEITEM_TYPE))],
        [
            instr("Select", HIGHLEVEL, (ExprParam(q6_predicate()),), ("lineitem",), ("filtered",)),
            instr("ExProj", HIGHLEVEL, (ExprParam(q6_projection()),), ("filtered",), ("projected",)),
            instr(
                "Aggr",
                HIGHLEVEL,
                (AggSpecParam((AggregateSpec("x", "sum", "revenue"),)),),
                ("projected",),
                ("result",),
            ),
            ret("result"),
        ],
    )


def q6_document_text() -> str:
    return serialize(q6_program())
