import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvm.datagen import LINEITEM_TYPE
from cvm.errors import (
    ArithmeticOverflow,
    DivisionByZero,
    TypeCheckError,
)
from cvm.exprs import (
    AggregateSpec,
    Arith,
    BoolOp,
    Cmp,
    Const,
    FieldRef,
    IfThenElse,
    InputRef,
    MakeTuple,
    compile_expr,
    decompose_aggregate,
    eval_expr,
    fields_referenced,
    typecheck_expr,
)
from cvm.q6 import q6_predicate
from cvm.types import AtomDomain, BOOL, FLOAT64, INT64, Tuple, tup
from cvm.values import AtomValue, TupleValue, to_plain, type_of


def iv(x):
    return AtomValue(AtomDomain.INT64, x)


def fv(x):
    return AtomValue(AtomDomain.FLOAT64, float(x))


class TestTypecheck:
    def test_field_ref_on_lineitem(self):
        assert typecheck_expr(FieldRef("l_discount"), LINEITEM_TYPE) == FLOAT64

    def test_product_of_floats(self):
        e = Arith("*", FieldRef("l_eprice"), FieldRef("l_disc"))
        assert typecheck_expr(e, LINEITEM_TYPE) == FLOAT64

    def test_field_on_atom_is_error(self):
        with pytest.raises(TypeCheckError) as e:
            typecheck_expr(FieldRef("a"), INT64)
        assert e.value.code == "NonTupleFieldAccess"

    def test_unknown_field(self):
        with pytest.raises(TypeCheckError) as e:
            typecheck_expr(FieldRef("nope"), LINEITEM_TYPE)
        assert e.value.code == "UnknownField"

    def test_int_promotion(self):
        e = Arith("+", Const(iv(1)), Const(fv(2.0)))
        assert typecheck_expr(e, INT64) == FLOAT64

    def test_division_by_literal_zero_typechecks(self):
        e = Arith("/", Const(iv(1)), Const(iv(0)))
        assert typecheck_expr(e, INT64) == INT64

    def test_cmp_yields_bool(self):
        assert typecheck_expr(Cmp("<", Const(iv(1)), Const(iv(2))), INT64) == BOOL

    def test_text_ordering_rejected(self):
        t = AtomValue(AtomDomain.TEXT, "x")
        with pytest.raises(TypeCheckError):
            typecheck_expr(Cmp("<", Const(t), Const(t)), INT64)

    def test_text_equality_allowed(self):
        t = AtomValue(AtomDomain.TEXT, "x")
        assert typecheck_expr(Cmp("==", Const(t), Const(t)), INT64) == BOOL

    def test_branch_types_must_agree(self):
        e = IfThenElse(Const(AtomValue(AtomDomain.BOOL, True)), Const(iv(1)), Const(fv(1.0)))
        with pytest.raises(TypeCheckError):
            typecheck_expr(e, INT64)


class TestEval:
    def test_identity(self):
        assert eval_expr(InputRef(), iv(42)) == iv(42)

    def test_addition(self):
        assert eval_expr(Arith("+", Const(iv(1)), InputRef()), iv(2)) == iv(3)

    def test_int_division_by_zero(self):
        with pytest.raises(DivisionByZero):
            eval_expr(Arith("/", Const(iv(1)), Const(iv(0))), iv(0))

    def test_int_modulo_by_zero(self):
        with pytest.raises(DivisionByZero):
            eval_expr(Arith("%", Const(iv(1)), Const(iv(0))), iv(0))

    def test_overflow_raises(self):
        big = iv(2**62)
        with pytest.raises(ArithmeticOverflow):
            eval_expr(Arith("+", Const(big), Const(big)), iv(0))

    def test_float_division_by_zero_ieee(self):
        out = eval_expr(Arith("/", Const(fv(1.0)), Const(fv(0.0))), iv(0))
        assert out.payload == float("inf")
        out = eval_expr(Arith("/", Const(fv(0.0)), Const(fv(0.0))), iv(0))
        assert math.isnan(out.payload)

    def test_short_circuit_and(self):
        e = BoolOp(
            "and",
            (
                Cmp(">", InputRef(), Const(iv(0))),
                Cmp(">", Arith("/", Const(iv(1)), InputRef()), Const(iv(0))),
            ),
        )
        assert eval_expr(e, iv(0)).payload is False  # no division by zero

    def test_make_tuple(self):
        e = MakeTuple((("x", InputRef()), ("y", Const(iv(1)))))
        out = eval_expr(e, iv(5))
        assert out == TupleValue((("x", iv(5)), ("y", iv(1))))


class TestFieldsReferenced:
    def test_q6_predicate_fields(self):
        assert fields_referenced(q6_predicate()) == {"l_shipdate", "l_discount", "l_quantity"}

    def test_const_references_nothing(self):
        assert fields_referenced(Const(iv(1))) == set()

    def test_duplicates_collapse(self):
        e = MakeTuple((("x", FieldRef("a")), ("y", FieldRef("a"))))
        assert fields_referenced(e) == {"a"}


def _apply(fn, values):
    if fn == "sum":
        return sum(values)
    if fn == "count":
        return len(values)
    if fn == "min":
        return min(values)
    return max(values)


class TestDecompose:
    def test_sum_shape(self):
        pre, merge = decompose_aggregate(AggregateSpec("x", "sum", "revenue"))
        assert pre == AggregateSpec("x", "sum", "revenue")
        assert merge == AggregateSpec("revenue", "sum", "revenue")

    def test_count_merges_by_sum(self):
        pre, merge = decompose_aggregate(AggregateSpec("x", "count", "c"))
        assert (pre.function, merge.function, merge.input_field) == ("count", "sum", "c")

    def test_min_max_shape(self):
        for fn in ("min", "max"):
            pre, merge = decompose_aggregate(AggregateSpec("x", fn, "m"))
            assert pre.function == merge.function == fn
            assert merge.input_field == "m"

    @pytest.mark.parametrize("fn", ["count", "min", "max", "sum"])
    def test_two_way_partitions_of_six(self, fn):
        bag = [4, -2, 7, 7, 0, 13]
        pre, merge = decompose_aggregate(AggregateSpec("x", fn, "o"))
        expected = _apply(fn, bag)
        for mask in range(1, 2**6 - 1):  # both parts nonempty
            left = [v for i, v in enumerate(bag) if mask & (1 << i)]
            right = [v for i, v in enumerate(bag) if not mask & (1 << i)]
            partials = [_apply(pre.function, part) for part in (left, right)]
            assert _apply(merge.function, partials) == expected

    @given(
        st.lists(st.integers(-1000, 1000), min_size=1, max_size=20),
        st.integers(2, 4),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=120)
    def test_random_partitions(self, bag, k, rng):
        k = min(k, len(bag))
        assignment = [rng.randrange(k) for _ in bag]
        for part in range(k):  # ensure nonempty parts
            if part not in assignment:
                assignment[rng.randrange(len(bag))] = part
        for fn in ("sum", "count", "min", "max"):
            pre, merge = decompose_aggregate(AggregateSpec("x", fn, "o"))
            parts = [[v for v, a in zip(bag, assignment) if a == p] for p in range(k)]
            parts = [p for p in parts if p]
            partials = [_apply(pre.function, p) for p in parts]
            assert _apply(merge.function, partials) == _apply(fn, bag)


# --- compiled/interpreted differential ----------------------------------------------

_SCHEMA = tup(("a", INT64), ("b", FLOAT64), ("c", INT64))


def _rand_expr(draw_atoms, depth: int):
    if depth == 0:
        return draw_atoms
    sub = _rand_expr(draw_atoms, depth - 1)
    return st.one_of(
        sub,
        st.tuples(st.sampled_from(["+", "-", "*"]), sub, sub).map(lambda t: Arith(*t)),
        st.tuples(st.sampled_from(["+", "-", "*", "/", "%"]), sub, sub).map(lambda t: Arith(*t)),
    )


_ATOMS = st.one_of(
    st.sampled_from([FieldRef("a"), FieldRef("c"), InputRef()]).filter(lambda e: not isinstance(e, InputRef)),
    st.integers(-50, 50).map(lambda x: Const(iv(x))),
    st.floats(-50, 50).map(lambda x: Const(fv(x))),
    st.just(FieldRef("b")),
)


@given(_rand_expr(_ATOMS, 3), st.integers(-100, 100), st.floats(-100, 100), st.integers(-100, 100))
@settings(max_examples=200)
def test_compiled_matches_interpreted(expr, a, b, c):
    value = TupleValue((("a", iv(a)), ("b", fv(b)), ("c", iv(c))))
    try:
        out_t = typecheck_expr(expr, _SCHEMA)
    except TypeCheckError:
        return
    fn = compile_expr(expr, _SCHEMA)
    plain = to_plain(value, _SCHEMA)
    try:
        interpreted = eval_expr(expr, value)
    except (DivisionByZero, ArithmeticOverflow) as exc:
        with pytest.raises(type(exc)):
            fn(plain)
        return
    compiled = fn(plain)
    ip = interpreted.payload
    if isinstance(ip, float) and math.isnan(ip):
        assert math.isnan(compiled)
    else:
        assert compiled == ip
    assert type_of(interpreted) == out_t


def test_eval_is_pure_under_concurrency():
    from concurrent.futures import ThreadPoolExecutor

    e = Arith("*", FieldRef("l_eprice"), FieldRef("l_disc"))
    v = TupleValue(tuple((n, AtomValue(t.domain, p)) for (n, t), p in zip(LINEITEM_TYPE.fields, (9000, 0.05, 10.0, 100.0, 0.05))))
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda _: eval_expr(e, v).payload, range(200)))
    assert set(results) == {5.0}
