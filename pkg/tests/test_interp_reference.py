import math

import pytest

from cvm.datagen import LINEITEM_TYPE
from cvm.errors import (
    ArithmeticOverflow,
    BudgetExhausted,
    DivisionByZero,
    EmptyAggregate,
    RuntimeTypeError,
)
from cvm.exprs import AggregateSpec, Arith, Cmp, Const, FieldRef, InputRef, MakeTuple
from cvm.flavors import CONTROL, HIGHLEVEL, LOWLEVEL, builtin_registry
from cvm.interp import StepBudget, exec_build_htable, run_reference
from cvm.program import (
    AggSpecParam,
    ConstItem,
    ExprParam,
    NestedProgram,
    Register,
    instr,
    program,
    ret,
)
from cvm.q6 import q6_program
from cvm.serialize import serialize_values
from cvm.types import (
    BAG,
    FLOAT64,
    INT64,
    SEQ,
    SET,
    SINGLE,
    TEXT,
    AtomDomain,
    coll,
    kdseq,
    tup,
)
from cvm.values import AtomValue, CollectionValue, TupleValue, collection_value, type_of

from util import float_v, int_v, row

REG = builtin_registry()


def run1(p, inputs, **kw):
    return run_reference(REG, p, inputs, **kw)[0]


def bag_of(schema, rows):
    return collection_value(BAG, schema, rows)


class TestQ6Example:
    def test_six_row_hand_oracle(self):
        # exactly rows 1 and 4 pass the predicate, with x = 1.0 and 2.5
        rows = [
            row(LINEITEM_TYPE, 8800, 0.05, 10.0, 20.0, 0.05),   # pass: x = 1.0
            row(LINEITEM_TYPE, 8000, 0.05, 10.0, 100.0, 0.05),  # fail: date below window
            row(LINEITEM_TYPE, 9131, 0.06, 10.0, 100.0, 0.06),  # fail: date at upper bound
            row(LINEITEM_TYPE, 9000, 0.05, 20.0, 50.0, 0.05),   # pass: x = 2.5
            row(LINEITEM_TYPE, 9000, 0.02, 10.0, 100.0, 0.02),  # fail: discount low
            row(LINEITEM_TYPE, 9000, 0.05, 30.0, 100.0, 0.05),  # fail: quantity high
        ]
        out = run1(q6_program(), [bag_of(LINEITEM_TYPE, rows)])
        assert len(out.items) == 1
        assert out.items[0].field("revenue").payload == pytest.approx(3.5, abs=0)

    def test_empty_input_gives_zero_revenue(self):
        out = run1(q6_program(), [bag_of(LINEITEM_TYPE, [])])
        assert out.items[0].field("revenue").payload == 0.0


AB = tup(("a", INT64), ("b", INT64))


def _inc_program(t):
    """One-parameter program adding 1 to field a (used as a Loop body)."""
    mk = MakeTuple((("a", Arith("+", FieldRef("a"), Const(int_v(1)))), ("b", FieldRef("b"))))
    return program(
        [Register("c", t)],
        [instr("Map", HIGHLEVEL, (ExprParam(mk),), ("c",), ("o",)), ret("o")],
    )


class TestControlFlow:
    def test_loop_zero_is_identity(self):
        t = coll(BAG, AB)
        p = program(
            [Register("c", t)],
            [
                instr("Loop", CONTROL, (ConstItem(int_v(0)), NestedProgram(_inc_program(t))), ("c",), ("o",)),
                ret("o"),
            ],
        )
        data = bag_of(AB, [row(AB, 1, 2)])
        assert run1(p, [data]) == data

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_loop_equals_manual_composition(self, n):
        t = coll(BAG, AB)
        body = _inc_program(t)
        p = program(
            [Register("c", t)],
            [
                instr("Loop", CONTROL, (ConstItem(int_v(n)), NestedProgram(body)), ("c",), ("o",)),
                ret("o"),
            ],
        )
        data = bag_of(AB, [row(AB, 0, 7), row(AB, 10, 7)])
        looped = run1(p, [data])
        manual = [data]
        for _ in range(n):
            manual = run_reference(REG, body, manual)
        assert looped == manual[0]

    def _countdown(self, start):
        """While loop decrementing a one-row counter until it reaches zero."""
        t = coll(BAG, tup(("c", INT64)))
        dec = MakeTuple((("c", Arith("-", FieldRef("c"), Const(int_v(1)))),))
        flag = Cmp(">", FieldRef("c"), Const(int_v(0)))
        body = program(
            [Register("s", t)],
            [
                instr("ExProj", HIGHLEVEL, (ExprParam(dec),), ("s",), ("next",)),
                instr("Map", HIGHLEVEL, (ExprParam(flag),), ("next",), ("flag",)),
                ret("flag", "next"),
            ],
        )
        return program(
            [Register("s", t)],
            [instr("While", CONTROL, (NestedProgram(body),), ("s",), ("o",)), ret("o")],
        ), collection_value(BAG, tup(("c", INT64)), [row(tup(("c", INT64)), start)])

    def test_while_reaches_fixpoint(self):
        p, data = self._countdown(5)
        out = run1(p, [data])
        assert out.items[0].field("c").payload == 0

    def test_nonterminating_while_trips_budget(self):
        t = coll(BAG, tup(("c", INT64)))
        always = Const(AtomValue(AtomDomain.BOOL, True))
        body = program(
            [Register("s", t)],
            [instr("Map", HIGHLEVEL, (ExprParam(always),), ("s",), ("flag",)), ret("flag", "s")],
        )
        p = program(
            [Register("s", t)],
            [instr("While", CONTROL, (NestedProgram(body),), ("s",), ("o",)), ret("o")],
        )
        data = collection_value(BAG, tup(("c", INT64)), [row(tup(("c", INT64)), 1)])
        with pytest.raises(BudgetExhausted):
            run_reference(REG, p, [data], budget=StepBudget(1000))

    def test_cond_selects_exactly_one_bundle(self):
        t = coll(BAG, AB)
        for flip, expected_field in ((1, 20), (-1, 2)):
            flag = Cmp(">", FieldRef("a"), Const(int_v(0)))
            yes = MakeTuple((("a", FieldRef("a")), ("b", Arith("*", FieldRef("b"), Const(int_v(10))))))
            body = program(
                [Register("s", t)],
                [
                    instr("Map", HIGHLEVEL, (ExprParam(flag),), ("s",), ("f",)),
                    instr("ExProj", HIGHLEVEL, (ExprParam(yes),), ("s",), ("b1",)),
                    ret("f", "b1", "s"),
                ],
            )
            p = program(
                [Register("s", t)],
                [instr("Cond", CONTROL, (NestedProgram(body),), ("s",), ("o",)), ret("o")],
            )
            data = bag_of(AB, [row(AB, flip, 2)])
            out = run1(p, [data])
            assert out.items[0].field("b").payload == expected_field

    def test_call_runs_nested_program(self):
        t = coll(BAG, AB)
        p = program(
            [Register("c", t)],
            [instr("Call", CONTROL, (NestedProgram(_inc_program(t)),), ("c",), ("o",)), ret("o")],
        )
        out = run1(p, [bag_of(AB, [row(AB, 1, 1)])])
        assert out.items[0].field("a").payload == 2


class TestAggregates:
    def _agg(self, specs, rows, schema=AB):
        p = program(
            [Register("src", coll(BAG, schema))],
            [instr("Aggr", HIGHLEVEL, (AggSpecParam(tuple(specs)),), ("src",), ("o",)), ret("o")],
        )
        return run1(p, [bag_of(schema, rows)])

    def test_sum_count_min_max(self):
        rows = [row(AB, 3, 1), row(AB, -1, 2), row(AB, 5, 3)]
        out = self._agg(
            [
                AggregateSpec("a", "sum", "s"),
                AggregateSpec("a", "count", "n"),
                AggregateSpec("a", "min", "lo"),
                AggregateSpec("a", "max", "hi"),
            ],
            rows,
        )
        r = out.items[0]
        assert (r.field("s").payload, r.field("n").payload) == (7, 3)
        assert (r.field("lo").payload, r.field("hi").payload) == (-1, 5)

    def test_empty_sum_and_count(self):
        out = self._agg([AggregateSpec("a", "sum", "s"), AggregateSpec("a", "count", "n")], [])
        assert (out.items[0].field("s").payload, out.items[0].field("n").payload) == (0, 0)

    def test_empty_float_sum_is_float_zero(self):
        schema = tup(("x", FLOAT64))
        out = self._agg([AggregateSpec("x", "sum", "s")], [], schema=schema)
        payload = out.items[0].field("s").payload
        assert payload == 0.0 and isinstance(payload, float)

    def test_empty_min_errors(self):
        with pytest.raises(EmptyAggregate):
            self._agg([AggregateSpec("a", "min", "m")], [])

    def test_int_sum_overflow(self):
        rows = [row(AB, 2**62, 0), row(AB, 2**62, 0)]
        with pytest.raises(ArithmeticOverflow):
            self._agg([AggregateSpec("a", "sum", "s")], rows)


class TestSplitScan:
    def _split(self, n, count):
        p = program(
            [Register("src", coll(SEQ, INT64))],
            [instr("Split", HIGHLEVEL, (ConstItem(int_v(n)),), ("src",), ("parts",)), ret("parts")],
        )
        data = collection_value(SEQ, INT64, [int_v(i) for i in range(count)])
        return run1(p, [data])

    def test_chunk_sizes_larger_first(self):
        out = self._split(3, 7)
        assert [len(c.items) for c in out.items] == [3, 2, 2]
        flat = [x.payload for c in out.items for x in c.items]
        assert flat == list(range(7))

    def test_more_chunks_than_items(self):
        out = self._split(4, 2)
        assert [len(c.items) for c in out.items] == [1, 1, 0, 0]

    def test_scan_concatenates_in_order(self):
        p = program(
            [Register("src", coll(SEQ, coll(SEQ, INT64)))],
            [instr("Scan", HIGHLEVEL, (), ("src",), ("flat",)), ret("flat")],
        )
        parts = collection_value(
            SEQ,
            coll(SEQ, INT64),
            [
                collection_value(SEQ, INT64, [int_v(1), int_v(2)]),
                collection_value(SEQ, INT64, []),
                collection_value(SEQ, INT64, [int_v(3)]),
            ],
        )
        out = run1(p, [parts])
        assert [x.payload for x in out.items] == [1, 2, 3]


class TestSetSemantics:
    def test_proj_on_set_dedups(self):
        schema = tup(("a", INT64), ("b", INT64))
        p = program(
            [Register("src", coll(SET, schema))],
            [
                instr(
                    "Proj",
                    HIGHLEVEL,
                    (ConstItem(collection_value(SEQ, TEXT, [AtomValue(AtomDomain.TEXT, "a")])),),
                    ("src",),
                    ("o",),
                ),
                ret("o"),
            ],
        )
        data = collection_value(SET, schema, [row(schema, 1, 1), row(schema, 1, 2), row(schema, 2, 1)])
        out = run1(p, [data])
        assert [r.field("a").payload for r in out.items] == [1, 2]
        assert type_of(out).kind == SET


class TestErrors:
    def test_division_by_zero_in_select(self):
        pred = Cmp(">", Arith("/", Const(int_v(1)), FieldRef("a")), Const(int_v(0)))
        p = program(
            [Register("src", coll(BAG, AB))],
            [instr("Select", HIGHLEVEL, (ExprParam(pred),), ("src",), ("o",)), ret("o")],
        )
        with pytest.raises(DivisionByZero):
            run1(p, [bag_of(AB, [row(AB, 0, 0)])])

    def test_input_type_mismatch(self):
        p = q6_program()
        with pytest.raises(RuntimeTypeError):
            run1(p, [bag_of(AB, [])])


class TestDeterminism:
    def test_repeated_runs_bit_identical(self):
        from cvm.datagen import DatasetSpec, gen_lineitem

        ds = gen_lineitem(DatasetSpec("lineitem", 2000, 7))
        a = run_reference(REG, q6_program(), [ds.bag])
        b = run_reference(REG, q6_program(), [ds.bag])
        assert serialize_values(a) == serialize_values(b)


class TestFixedShapeKinds:
    def test_select_over_arrayn_degrades_to_bag(self):
        from cvm.types import array_n
        from cvm.exprs import Cmp, Const, InputRef
        from cvm.program import ExprParam

        t = array_n(3)
        p = program(
            [Register("src", coll(t, INT64))],
            [
                instr(
                    "Select",
                    HIGHLEVEL,
                    (ExprParam(Cmp(">", InputRef(), Const(int_v(1)))),),
                    ("src",),
                    ("o",),
                ),
                ret("o"),
            ],
        )
        data = collection_value(t, INT64, [int_v(1), int_v(2), int_v(3)])
        out = run1(p, [data])
        assert type_of(out).kind == BAG
        assert [x.payload for x in out.items] == [2, 3]
