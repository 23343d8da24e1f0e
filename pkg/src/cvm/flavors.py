"""Instruction flavors: registrable opcodes with typing rules.

A flavor is a named set of instruction signatures. Programs may mix
instructions from any registered flavor; the registry maps (flavor, opcode) to
the signature that types it. Three flavors ship built in:

* ``highlevel`` - relational/dataflow and linear-algebra operators
  (Proj, ExProj, Map, Select, Aggr, Split, Scan, Join, MMMult)
* ``control``   - higher-order instructions (Loop, While, Cond, Call,
  ConcurExecute) plus the worker intrinsics WorkerId and Exchange
* ``lowlevel``  - physical operators over Vec/HTab
  (ScanVec, MatVec, SplitVec, BuildHTable, ProbeHTable)

Custom flavors may attach an `evaluator` so the interpreters can execute their
instructions; typing rules alone are enough for validation and rewriting.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .errors import RegistryError, TypeCheckError
from .exprs import MakeTuple, typecheck_expr
from .program import (
    AggSpecParam,
    ConstItem,
    ExprParam,
    Instruction,
    NestedProgram,
    Param,
    Program,
    RETURN_OP,
    validate,
)
from .types import (
    Atom,
    AtomDomain,
    BAG,
    BOOL,
    Collection,
    CollKind,
    HTAB,
    INT64,
    ItemType,
    SEQ,
    SINGLE,
    Tuple,
    VEC,
    coll,
    kdseq,
)
from .values import AtomValue, CollectionValue

HIGHLEVEL = "highlevel"
CONTROL = "control"
LOWLEVEL = "lowlevel"

PARAM_KIND_NAMES = {ConstItem: "const", NestedProgram: "program", ExprParam: "expr", AggSpecParam: "aggspecs"}


@dataclass(frozen=True)
class TypingContext:
    """What a typing rule may consult besides its own instruction."""

    registry: "FlavorRegistry"
    in_concur: bool = False
    opcode: str = "?"

    def fail(self, code: str, message: str):
        raise TypeCheckError(code, f"{self.opcode}: {message}")

    def nested_types(self, p: Program, in_concur: bool | None = None) -> tuple[list[ItemType], list[ItemType]]:
        """Typecheck a nested program; returns (param types, return types)."""
        flag = self.in_concur if in_concur is None else in_concur
        env, returns = _check_program(self.registry, p, flag)
        return [r.type for r in p.params], returns


TypingRule = Callable[[TypingContext, tuple[Param, ...], list[ItemType]], list[ItemType]]


@dataclass(frozen=True)
class InstructionSignature:
    """Shape and typing of one opcode.

    `input_arity` of None means variadic. `param_schema` lists expected
    parameter kinds ("const" | "program" | "expr" | "aggspecs"). `evaluator`,
    when present, lets the interpreters execute instructions of flavors they
    have no built-in semantics for; it receives (exec_helper, params,
    input_plains, input_types, output_types) and returns the output plains.
    """

    opcode: str
    flavor: str
    param_schema: tuple[str, ...]
    input_arity: int | None
    rule: TypingRule
    evaluator: Callable | None = None


@dataclass(frozen=True)
class Flavor:
    name: str
    signatures: Mapping[str, InstructionSignature] = field(default_factory=dict)

    @staticmethod
    def of(name: str, sigs: list[InstructionSignature]) -> "Flavor":
        table: dict[str, InstructionSignature] = {}
        for s in sigs:
            if s.opcode in table:
                raise RegistryError("DuplicateOpcode", f"{name}.{s.opcode} defined twice")
            table[s.opcode] = replace(s, flavor=name)
        return Flavor(name, table)


@dataclass(frozen=True)
class FlavorRegistry:
    flavors: Mapping[str, Flavor] = field(default_factory=dict)

    def lookup(self, flavor: str, opcode: str) -> InstructionSignature:
        fl = self.flavors.get(flavor)
        if fl is None or opcode not in fl.signatures:
            raise TypeCheckError("UnknownOpcode", f"no signature for ({flavor}, {opcode})")
        return fl.signatures[opcode]

    def names(self) -> list[str]:
        return sorted(self.flavors)


def register_flavor(registry: FlavorRegistry, flavor: Flavor) -> FlavorRegistry:
    if flavor.name in registry.flavors:
        raise RegistryError("DuplicateFlavor", f"flavor {flavor.name!r} already registered")
    table = dict(registry.flavors)
    table[flavor.name] = flavor
    return FlavorRegistry(table)


# --- rule helpers ----------------------------------------------------------------


def _want_collection(ctx: TypingContext, t: ItemType, what: str = "input") -> Collection:
    if not isinstance(t, Collection):
        ctx.fail("KindMismatch", f"{what} must be a collection, got {t}")
    return t


def _want_tuple_elem(ctx: TypingContext, c: Collection) -> Tuple:
    if not isinstance(c.elem, Tuple):
        ctx.fail("KindMismatch", f"requires a collection of tuples, got {c}")
    return c.elem


def _const_int(ctx: TypingContext, p: Param, what: str) -> int:
    v = p.value
    if not (isinstance(v, AtomValue) and v.domain is AtomDomain.INT64):
        ctx.fail("OperandTypeMismatch", f"{what} must be an Int64 constant")
    return v.payload


def _keyval_tuple(ctx: TypingContext, t: ItemType, what: str) -> Tuple:
    if not isinstance(t, Tuple) or sorted(t.field_names) != ["key", "val"]:
        ctx.fail("KindMismatch", f"{what} must be tuples with exactly key and val fields, got {t}")
    return t


def _proj_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    elem = _want_tuple_elem(ctx, c)
    names_value = params[0].value
    if not isinstance(names_value, CollectionValue):
        ctx.fail("OperandTypeMismatch", "field list must be a Seq<text> constant")
    names = [v.payload for v in names_value.items]
    if len(set(names)) != len(names):
        ctx.fail("UnknownField", f"duplicate projected fields {names}")
    fields = []
    for n in names:
        ft = elem.field_type(n)
        if ft is None:
            ctx.fail("UnknownField", f"no field {n!r} in {elem}")
        fields.append((n, ft))
    out_kind = c.kind if c.kind.tag in (CollKind.SET, CollKind.SEQ) else BAG
    return [coll(out_kind, Tuple(tuple(fields)))]


def _exproj_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    _want_tuple_elem(ctx, c)
    expr = params[0].expr
    if not isinstance(expr, MakeTuple):
        ctx.fail("OperandTypeMismatch", "extended projection expects a tuple-building expression")
    out_elem = typecheck_expr(expr, c.elem)
    return [coll(BAG, out_elem)]


def _map_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    out_elem = typecheck_expr(params[0].expr, c.elem)
    out_kind = SEQ if c.kind.tag is CollKind.SEQ else BAG
    return [coll(out_kind, out_elem)]


#: Kinds Select preserves; fixed-shape kinds degrade to Bag since filtering
#: cannot guarantee their arity.
_SELECT_PRESERVED = (CollKind.SET, CollKind.BAG, CollKind.SEQ, CollKind.VEC)


def _select_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    pt = typecheck_expr(params[0].expr, c.elem)
    if pt != BOOL:
        ctx.fail("OperandTypeMismatch", f"predicate must return bool, got {pt}")
    out_kind = c.kind if c.kind.tag in _SELECT_PRESERVED else BAG
    return [coll(out_kind, c.elem)]


def _aggr_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    elem = _want_tuple_elem(ctx, c)
    out_fields = []
    seen = set()
    for spec in params[0].specs:
        ft = elem.field_type(spec.input_field)
        if ft is None:
            ctx.fail("UnknownField", f"no field {spec.input_field!r} in {elem}")
        if spec.function == "count":
            out_t: ItemType = INT64
        else:
            if not (isinstance(ft, Atom) and ft.domain.is_numeric):
                ctx.fail("OperandTypeMismatch", f"{spec.function} needs a numeric field, got {ft}")
            out_t = ft
        if spec.output_field in seen:
            ctx.fail("OperandTypeMismatch", f"duplicate output field {spec.output_field!r}")
        seen.add(spec.output_field)
        out_fields.append((spec.output_field, out_t))
    if not out_fields:
        ctx.fail("OperandTypeMismatch", "aggregation needs at least one spec")
    return [coll(BAG, Tuple(tuple(out_fields)))]


def _split_rule(ctx, params, ins):
    n = _const_int(ctx, params[0], "partition count")
    if n < 1:
        ctx.fail("OperandTypeMismatch", "partition count must be >= 1")
    c = _want_collection(ctx, ins[0])
    return [coll(SEQ, coll(SEQ, c.elem))]


def _scan_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    inner = c.elem
    if not isinstance(inner, Collection):
        ctx.fail("KindMismatch", f"scan needs nested collections, got {c}")
    out_kind = SEQ if (c.kind.tag is CollKind.SEQ and inner.kind.tag is CollKind.SEQ) else BAG
    return [coll(out_kind, inner.elem)]


def _mmmult_rule(ctx, params, ins):
    mats = []
    for i, t in enumerate(ins):
        c = _want_collection(ctx, t, f"operand {i}")
        if c.kind != kdseq(2) or not (isinstance(c.elem, Atom) and c.elem.domain.is_numeric):
            ctx.fail("KindMismatch", f"operand {i} must be a 2DSeq of numbers, got {t}")
        mats.append(c)
    if mats[0].elem != mats[1].elem:
        ctx.fail("OperandTypeMismatch", f"mixed element domains {mats[0].elem} and {mats[1].elem}")
    return [mats[0]]


def _loop_rule(ctx, params, ins):
    n = _const_int(ctx, params[0], "iteration count")
    if n < 0:
        ctx.fail("OperandTypeMismatch", "iteration count must be >= 0")
    p = params[1].program
    ptypes, rtypes = ctx.nested_types(p)
    if ptypes != list(ins):
        ctx.fail("ArityMismatch", f"loop body takes {ptypes}, loop carries {list(ins)}")
    if rtypes != list(ins):
        ctx.fail("ArityMismatch", f"loop body returns {rtypes}, must return carried types {list(ins)}")
    return list(ins)


def _is_flag_type(t: ItemType) -> bool:
    # A bare Bool or a singleton-at-runtime collection of Bool (no built-in
    # instruction yields a bare atom register, so the one-row output of a Map
    # or Aggr is the practical way to produce a flag).
    return t == BOOL or (isinstance(t, Collection) and t.elem == BOOL)


def _while_rule(ctx, params, ins):
    p = params[0].program
    ptypes, rtypes = ctx.nested_types(p)
    if ptypes != list(ins):
        ctx.fail("ArityMismatch", f"while body takes {ptypes}, carries {list(ins)}")
    if len(rtypes) != len(ins) + 1 or not _is_flag_type(rtypes[0]) or rtypes[1:] != list(ins):
        ctx.fail("ArityMismatch", "while body must return a bool flag plus the carried collections")
    return list(ins)


def _cond_rule(ctx, params, ins):
    p = params[0].program
    ptypes, rtypes = ctx.nested_types(p)
    if ptypes != list(ins):
        ctx.fail("ArityMismatch", f"cond body takes {ptypes}, got {list(ins)}")
    if not rtypes or not _is_flag_type(rtypes[0]) or (len(rtypes) - 1) % 2 != 0:
        ctx.fail("ArityMismatch", "cond body must return a bool flag plus two result bundles")
    l = (len(rtypes) - 1) // 2
    if rtypes[1 : 1 + l] != rtypes[1 + l :]:
        ctx.fail("OperandTypeMismatch", "both cond bundles must have identical types")
    return rtypes[1 : 1 + l]


def _call_rule(ctx, params, ins):
    p = params[0].program
    ptypes, rtypes = ctx.nested_types(p)
    if ptypes != list(ins):
        ctx.fail("ArityMismatch", f"called program takes {ptypes}, got {list(ins)}")
    return rtypes


def _concur_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    p = params[0].program
    ptypes, rtypes = ctx.nested_types(p, in_concur=True)
    if len(ptypes) != 1 or ptypes[0] != c.elem:
        ctx.fail("ArityMismatch", f"worker program must take one item of type {c.elem}, takes {ptypes}")
    if len(rtypes) != 1:
        ctx.fail("ArityMismatch", "worker program must return exactly one item")
    out_kind = SEQ if c.kind.tag is CollKind.SEQ else BAG
    return [coll(out_kind, rtypes[0])]


def _worker_id_rule(ctx, params, ins):
    if not ctx.in_concur:
        ctx.fail("ExchangeOutsideConcur", "WorkerId is only available inside a concurrent worker program")
    return [coll(SINGLE, INT64)]


def _exchange_rule(ctx, params, ins):
    if not ctx.in_concur:
        ctx.fail("ExchangeOutsideConcur", "Exchange is only available inside a concurrent worker program")
    c = _want_collection(ctx, ins[0])
    dt = typecheck_expr(params[0].expr, c.elem)
    if dt != INT64:
        ctx.fail("OperandTypeMismatch", f"destination expression must yield Int64, got {dt}")
    return [coll(SEQ, c.elem)]


def _vec_elem(ctx, t: ItemType) -> ItemType:
    """Element type reachable by a vector scan: Coll<Vec<I>> or a bare Vec<I>."""
    c = _want_collection(ctx, t)
    if isinstance(c.elem, Collection) and c.elem.kind.tag is CollKind.VEC:
        return c.elem.elem
    if c.kind.tag is CollKind.VEC:
        return c.elem
    ctx.fail("KindMismatch", f"expected a collection of Vec (or a Vec), got {t}")


def _scanvec_rule(ctx, params, ins):
    return [coll(SEQ, _vec_elem(ctx, ins[0]))]


def _matvec_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    return [coll(SINGLE, coll(VEC, c.elem))]


def _splitvec_rule(ctx, params, ins):
    n = _const_int(ctx, params[0], "partition count")
    if n < 1:
        ctx.fail("OperandTypeMismatch", "partition count must be >= 1")
    elem = _vec_elem(ctx, ins[0])
    in_c = ins[0]
    seq_of_vec = in_c.kind.tag is CollKind.SEQ and isinstance(in_c.elem, Collection)
    return [coll(SEQ if seq_of_vec else BAG, coll(VEC, elem))]


def _buildhtable_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0])
    t = _keyval_tuple(ctx, c.elem, "build input")
    return [coll(SINGLE, coll(HTAB, t))]


def _join_schema(ctx, probe: Tuple, build: Tuple) -> Tuple:
    if probe.field_type("key") != build.field_type("key"):
        ctx.fail(
            "OperandTypeMismatch",
            f"key types differ: {probe.field_type('key')} vs {build.field_type('key')}",
        )
    return Tuple(
        (
            ("key", probe.field_type("key")),
            ("lval", probe.field_type("val")),
            ("rval", build.field_type("val")),
        )
    )


def _probehtable_rule(ctx, params, ins):
    c = _want_collection(ctx, ins[0], "probe input")
    t1 = _keyval_tuple(ctx, c.elem, "probe input")
    h = _want_collection(ctx, ins[1], "hash table input")
    if h.kind.tag is not CollKind.SINGLE or not (
        isinstance(h.elem, Collection) and h.elem.kind.tag is CollKind.HTAB
    ):
        ctx.fail("KindMismatch", f"second input must be Single<HTab<...>>, got {ins[1]}")
    t2 = _keyval_tuple(ctx, h.elem.elem, "hash table")
    return [coll(BAG, _join_schema(ctx, t1, t2))]


def _join_rule(ctx, params, ins):
    c1 = _want_collection(ctx, ins[0], "probe input")
    c2 = _want_collection(ctx, ins[1], "build input")
    t1 = _keyval_tuple(ctx, c1.elem, "probe input")
    t2 = _keyval_tuple(ctx, c2.elem, "build input")
    return [coll(BAG, _join_schema(ctx, t1, t2))]


def _sig(opcode, schema, arity, rule) -> InstructionSignature:
    return InstructionSignature(opcode, "?", tuple(schema), arity, rule)


def builtin_flavors() -> list[Flavor]:
    highlevel = Flavor.of(
        HIGHLEVEL,
        [
            _sig("Proj", ["const"], 1, _proj_rule),
            _sig("ExProj", ["expr"], 1, _exproj_rule),
            _sig("Map", ["expr"], 1, _map_rule),
            _sig("Select", ["expr"], 1, _select_rule),
            _sig("Aggr", ["aggspecs"], 1, _aggr_rule),
            _sig("Split", ["const"], 1, _split_rule),
            _sig("Scan", [], 1, _scan_rule),
            _sig("MMMult", [], 2, _mmmult_rule),
            _sig("Join", [], 2, _join_rule),
        ],
    )
    control = Flavor.of(
        CONTROL,
        [
            _sig("Loop", ["const", "program"], None, _loop_rule),
            _sig("While", ["program"], None, _while_rule),
            _sig("Cond", ["program"], None, _cond_rule),
            _sig("Call", ["program"], None, _call_rule),
            _sig("ConcurExecute", ["program"], 1, _concur_rule),
            _sig("WorkerId", [], 0, _worker_id_rule),
            _sig("Exchange", ["expr"], 1, _exchange_rule),
        ],
    )
    lowlevel = Flavor.of(
        LOWLEVEL,
        [
            _sig("ScanVec", [], 1, _scanvec_rule),
            _sig("MatVec", [], 1, _matvec_rule),
            _sig("SplitVec", ["const"], 1, _splitvec_rule),
            _sig("BuildHTable", [], 1, _buildhtable_rule),
            _sig("ProbeHTable", [], 2, _probehtable_rule),
        ],
    )
    return [highlevel, control, lowlevel]


_BUILTIN: FlavorRegistry | None = None


def builtin_registry() -> FlavorRegistry:
    """The registry of built-in flavors (built once, immutable)."""
    global _BUILTIN
    if _BUILTIN is None:
        reg = FlavorRegistry()
        for fl in builtin_flavors():
            reg = register_flavor(reg, fl)
        _BUILTIN = reg
    return _BUILTIN


# --- program type checking ---------------------------------------------------------


def _check_instruction(
    registry: FlavorRegistry,
    ins: Instruction,
    env: dict[str, ItemType],
    in_concur: bool,
) -> list[ItemType]:
    sig = registry.lookup(ins.flavor, ins.opcode)
    if sig.input_arity is not None and len(ins.inputs) != sig.input_arity:
        raise TypeCheckError(
            "ArityMismatch", f"{ins.opcode} takes {sig.input_arity} inputs, got {len(ins.inputs)}"
        )
    if len(ins.params) != len(sig.param_schema):
        raise TypeCheckError(
            "ArityMismatch", f"{ins.opcode} takes {len(sig.param_schema)} params, got {len(ins.params)}"
        )
    for want, got in zip(sig.param_schema, ins.params):
        if PARAM_KIND_NAMES.get(type(got)) != want:
            raise TypeCheckError("OperandTypeMismatch", f"{ins.opcode} expects a {want} parameter")
    in_types = [env[r] for r in ins.inputs]
    ctx = TypingContext(registry, in_concur, ins.opcode)
    out_types = sig.rule(ctx, ins.params, in_types)
    if len(out_types) != len(ins.outputs):
        raise TypeCheckError(
            "ArityMismatch",
            f"{ins.opcode} produces {len(out_types)} outputs, instruction assigns {len(ins.outputs)}",
        )
    return out_types


def _check_program(
    registry: FlavorRegistry, p: Program, in_concur: bool
) -> tuple[dict[str, ItemType], list[ItemType]]:
    env: dict[str, ItemType] = {r.id: r.type for r in p.params}
    returns: list[ItemType] = []
    for ins in p.body:
        if ins.opcode == RETURN_OP:
            returns = [env[r] for r in ins.inputs]
            continue
        out_types = _check_instruction(registry, ins, env, in_concur)
        for rid, t in zip(ins.outputs, out_types):
            env[rid] = t
    return env, returns


def typecheck_program(registry: FlavorRegistry, p: Program) -> dict[str, ItemType]:
    """Assign every register its unique type, or raise the first type error.

    The program must already be structurally valid (SSA etc.); this is checked
    and reported as a type error to keep the API safe to call directly.
    """
    report = validate(p)
    if not report.ok:
        raise TypeCheckError("InvalidProgram", str(report.violations[0]))
    env, _ = _check_program(registry, p, in_concur=False)
    return env


def program_return_types(registry: FlavorRegistry, p: Program, in_concur: bool = False) -> list[ItemType]:
    _, returns = _check_program(registry, p, in_concur)
    return returns
