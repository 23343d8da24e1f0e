"""Rewrite passes and the pass manager.

Three passes ship built in:

* ``parallelize`` - seeds each rewritable parameter chain with the logical
  no-op triple Split -> ConcurExecute(empty) -> Scan, then pushes elementwise
  instructions into the worker program and splits a terminal decomposable
  aggregate into per-partition pre-aggregation plus a global merge. An
  instruction outside the push-in allowlist stops the expansion and stays put.
* ``lower`` - retypes flat-record collection parameters to their physical
  Single<Vec<...>> layout, turns Split into SplitVec, expands Join into
  BuildHTable + ProbeHTable, inserts ScanVec wherever vector data flows into a
  row-at-a-time operator, and materializes results with MatVec at program
  boundaries.
* ``extract_pipelines`` - replaces maximal tree-shaped runs of tuple-at-a-time
  instructions with Call instructions whose nested programs are marked as
  pipelines; pipeline boundaries are exactly the materialization points.

Every pass is a pure function Program -> Program; the manager re-validates and
re-typechecks after each step and keeps the intermediate programs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import LoweringUnsupported, NotDecomposable, PassFailed, TypeCheckError
from .exprs import decompose_aggregate
from .flavors import CONTROL, FlavorRegistry, HIGHLEVEL, LOWLEVEL, typecheck_program
from .program import (
    AggSpecParam,
    ConstItem,
    Instruction,
    NestedProgram,
    Program,
    RETURN_OP,
    Register,
    instr,
    program,
    ret,
    validate,
)
from .types import (
    Collection,
    CollKind,
    ItemType,
    SEQ,
    SINGLE,
    VEC,
    coll,
    is_flat_tuple,
)
from .values import AtomValue
from .types import AtomDomain

ELEMENTWISE = ("Select", "ExProj", "Map", "Proj")

_ABSTRACT_ROW_KINDS = (CollKind.SET, CollKind.BAG, CollKind.SEQ)


def _int_const(n: int) -> ConstItem:
    return ConstItem(AtomValue(AtomDomain.INT64, n))


def _fresh_namer(p: Program):
    used = {r.id for r in p.params}
    for ins in p.body:
        used.update(ins.outputs)
    counter = [0]

    def fresh(hint: str) -> str:
        while True:
            name = f"{hint}{counter[0]}"
            counter[0] += 1
            if name not in used:
                used.add(name)
                return name

    return fresh


def _use_counts(p: Program) -> dict[str, int]:
    counts: dict[str, int] = {}
    for ins in p.body:
        for r in ins.inputs:
            counts[r] = counts.get(r, 0) + 1
    return counts


def _consumers(p: Program, reg: str) -> list[int]:
    return [i for i, ins in enumerate(p.body) if reg in ins.inputs]


# --- structural comparison ------------------------------------------------------------


def _params_equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, NestedProgram):
        return structural_equal(a.program, b.program)
    return a == b


def structural_equal(p1: Program, p2: Program) -> bool:
    """True iff the programs are identical up to consistent register renaming."""
    if len(p1.params) != len(p2.params) or len(p1.body) != len(p2.body):
        return False
    if p1.pipeline != p2.pipeline:
        return False
    fwd: dict[str, str] = {}
    bwd: dict[str, str] = {}

    def bind(a: str, b: str) -> bool:
        if a in fwd or b in bwd:
            return False
        fwd[a] = b
        bwd[b] = a
        return True

    for r1, r2 in zip(p1.params, p2.params):
        if r1.type != r2.type or not bind(r1.id, r2.id):
            return False
    for i1, i2 in zip(p1.body, p2.body):
        if i1.opcode != i2.opcode or i1.flavor != i2.flavor:
            return False
        if len(i1.params) != len(i2.params) or len(i1.inputs) != len(i2.inputs):
            return False
        if len(i1.outputs) != len(i2.outputs):
            return False
        if not all(_params_equal(a, b) for a, b in zip(i1.params, i2.params)):
            return False
        for a, b in zip(i1.inputs, i2.inputs):
            if fwd.get(a) != b:
                return False
        for a, b in zip(i1.outputs, i2.outputs):
            if not bind(a, b):
                return False
    return True


# --- parallelize ------------------------------------------------------------------------


def _splittable_aggr(ins: Instruction) -> bool:
    # Pre-aggregation must stay total on empty partitions (fixed chunking can
    # produce them when rows < n). sum/count yield a neutral row there; min/max
    # have no neutral element and error, so they take the leave-outside
    # fallback like any other non-pushable instruction.
    if ins.opcode != "Aggr" or ins.flavor != HIGHLEVEL:
        return False
    try:
        for spec in ins.params[0].specs:
            decompose_aggregate(spec)
    except NotDecomposable:
        return False
    return all(spec.function in ("sum", "count") for spec in ins.params[0].specs)


def _find_chain(p: Program, param: Register, counts: dict[str, int]) -> list[int]:
    """Indices of the maximal pushable instruction chain fed by `param`."""
    if not isinstance(param.type, Collection) or counts.get(param.id, 0) != 1:
        return []
    chain: list[int] = []
    reg = param.id
    while True:
        idx = _consumers(p, reg)[0]
        ins = p.body[idx]
        if ins.opcode == RETURN_OP or len(ins.inputs) != 1:
            break
        if ins.flavor == HIGHLEVEL and ins.opcode in ELEMENTWISE:
            chain.append(idx)
            reg = ins.outputs[0]
            if counts.get(reg, 0) != 1:
                break
            continue
        if _splittable_aggr(ins):
            chain.append(idx)
        break
    return chain


def parallelize(p: Program, n: int) -> Program:
    """Data-parallelize single-source elementwise chains over n partitions.

    Each program parameter consumed by a rewritable chain is split into n
    partitions processed by one concurrent worker each; worker outputs are
    recombined by Scan, and a terminal decomposable aggregate is split into
    per-worker pre-aggregation plus a merge aggregate outside. Parameters
    without a rewritable chain are left untouched; if nothing is rewritable
    the program is returned unchanged.
    """
    if n < 1:
        raise PassFailed("parallelize", f"partition count must be >= 1, got {n}")
    counts = _use_counts(p)
    plans: list[tuple[Register, list[int]]] = []
    claimed: set[int] = set()
    for param in p.params:
        chain = _find_chain(p, param, counts)
        if chain and not claimed.intersection(chain):
            plans.append((param, chain))
            claimed.update(chain)
    if not plans:
        return p

    fresh = _fresh_namer(p)
    replacements: dict[int, list[Instruction]] = {}
    removed: set[int] = set()
    for param, chain in plans:
        elem = param.type.elem
        inner_body: list[Instruction] = []
        last_out = None
        merge_instr = None
        for idx in chain:
            ins = p.body[idx]
            if ins.opcode == "Aggr":
                pres = []
                merges = []
                for spec in ins.params[0].specs:
                    pre, merge = decompose_aggregate(spec)
                    pres.append(pre)
                    merges.append(merge)
                inner_body.append(
                    instr("Aggr", HIGHLEVEL, (AggSpecParam(tuple(pres)),), ins.inputs, ins.outputs)
                )
                merge_instr = instr("Aggr", HIGHLEVEL, (AggSpecParam(tuple(merges)),), (), ins.outputs)
            else:
                inner_body.append(ins)
            last_out = ins.outputs[0]
        inner = program(
            [Register(param.id, coll(SEQ, elem))],
            inner_body + [ret(last_out)],
        )
        parts = fresh("parts")
        part_results = fresh("part_results")
        triple = [
            instr("Split", HIGHLEVEL, (_int_const(n),), (param.id,), (parts,)),
            instr("ConcurExecute", CONTROL, (NestedProgram(inner),), (parts,), (part_results,)),
        ]
        if merge_instr is not None:
            unnested = fresh("unnested")
            triple.append(instr("Scan", HIGHLEVEL, (), (part_results,), (unnested,)))
            triple.append(
                instr("Aggr", HIGHLEVEL, merge_instr.params, (unnested,), merge_instr.outputs)
            )
        else:
            triple.append(instr("Scan", HIGHLEVEL, (), (part_results,), (last_out,)))
        replacements[chain[0]] = triple
        removed.update(chain)

    body: list[Instruction] = []
    for i, ins in enumerate(p.body):
        if i in replacements:
            body.extend(replacements[i])
        elif i not in removed:
            body.append(ins)
    return program(p.params, body)


# --- lower ---------------------------------------------------------------------------------

_LOWER_ALLOWED = {
    (HIGHLEVEL, op) for op in ("Select", "ExProj", "Map", "Proj", "Aggr", "Split", "Scan", "Join")
} | {(CONTROL, "ConcurExecute")} | {
    (LOWLEVEL, op) for op in ("ScanVec", "MatVec", "SplitVec", "BuildHTable", "ProbeHTable")
}

#: Operators that consume individual rows, in front of which vector-typed
#: inputs must be unpacked by a ScanVec.
_ROW_CONSUMERS = {"Select", "ExProj", "Map", "Proj", "Aggr", "Split", "Join", "BuildHTable", "ProbeHTable"}


def _is_vec_shaped(t: ItemType) -> bool:
    """Single<Vec<I>>, K<Vec<I>>, or a bare Vec<I>: needs a ScanVec before row ops."""
    if not isinstance(t, Collection):
        return False
    if t.kind.tag is CollKind.VEC and not (
        isinstance(t.elem, Collection) and t.elem.kind.tag is CollKind.VEC
    ):
        return True
    return isinstance(t.elem, Collection) and t.elem.kind.tag is CollKind.VEC


def _physical_param_type(t: ItemType) -> ItemType | None:
    if isinstance(t, Collection) and t.kind.tag in _ABSTRACT_ROW_KINDS and is_flat_tuple(t.elem):
        return coll(SINGLE, coll(VEC, t.elem))
    return None


def _lower_program(registry: FlavorRegistry, p: Program, param_types: list[ItemType]) -> Program:
    fresh = _fresh_namer(p)
    params = [Register(r.id, t) for r, t in zip(p.params, param_types)]
    env: dict[str, ItemType] = {r.id: r.type for r in params}
    body: list[Instruction] = []

    def scanned(reg: str) -> str:
        rows = fresh("rows")
        rule_out = _apply_rule(registry, instr("ScanVec", LOWLEVEL, (), (reg,), (rows,)), env)
        body.append(instr("ScanVec", LOWLEVEL, (), (reg,), (rows,)))
        env[rows] = rule_out[0]
        return rows

    for ins in p.body:
        if ins.opcode == RETURN_OP:
            rets = []
            for reg in ins.inputs:
                t = env[reg]
                if isinstance(t, Collection) and t.kind.tag in _ABSTRACT_ROW_KINDS:
                    mat = fresh("mat")
                    out_t = _apply_rule(registry, instr("MatVec", LOWLEVEL, (), (reg,), (mat,)), env)
                    body.append(instr("MatVec", LOWLEVEL, (), (reg,), (mat,)))
                    env[mat] = out_t[0]
                    rets.append(mat)
                else:
                    rets.append(reg)
            body.append(ret(*rets))
            continue
        key = (ins.flavor, ins.opcode)
        if key not in _LOWER_ALLOWED:
            raise LoweringUnsupported(ins.opcode)
        opcode, flavor = ins.opcode, ins.flavor
        inputs = list(ins.inputs)
        if opcode == "Split" and _is_vec_shaped(env[inputs[0]]) :
            opcode, flavor = "SplitVec", LOWLEVEL
        elif opcode == "Scan" and _single_vec(env[inputs[0]]):
            opcode, flavor = "ScanVec", LOWLEVEL
        elif opcode == "Join":
            build_src = inputs[1]
            if _is_vec_shaped(env[build_src]):
                build_src = scanned(build_src)
            built = fresh("htab")
            out_t = _apply_rule(registry, instr("BuildHTable", LOWLEVEL, (), (build_src,), (built,)), env)
            body.append(instr("BuildHTable", LOWLEVEL, (), (build_src,), (built,)))
            env[built] = out_t[0]
            probe = inputs[0]
            if _is_vec_shaped(env[probe]):
                probe = scanned(probe)
            probe_ins = instr("ProbeHTable", LOWLEVEL, (), (probe, built), ins.outputs)
            out_t = _apply_rule(registry, probe_ins, env)
            body.append(probe_ins)
            for rid, t in zip(ins.outputs, out_t):
                env[rid] = t
            continue
        if opcode in _ROW_CONSUMERS:
            inputs = [scanned(r) if _is_vec_shaped(env[r]) else r for r in inputs]
        if opcode == "ConcurExecute":
            part_t = env[inputs[0]]
            item_t = part_t.elem
            inner = ins.params[0].program
            if isinstance(item_t, Collection) and item_t.kind.tag is CollKind.VEC:
                inner = _lower_program(registry, inner, [item_t])
            else:
                inner = _lower_program(registry, inner, [r.type for r in inner.params])
            new_ins = instr(opcode, flavor, (NestedProgram(inner),), inputs, ins.outputs)
        else:
            new_ins = instr(opcode, flavor, ins.params, inputs, ins.outputs)
        out_t = _apply_rule(registry, new_ins, env)
        body.append(new_ins)
        for rid, t in zip(new_ins.outputs, out_t):
            env[rid] = t
    return program(params, body, p.pipeline)


def _single_vec(t: ItemType) -> bool:
    return (
        isinstance(t, Collection)
        and t.kind.tag is CollKind.SINGLE
        and isinstance(t.elem, Collection)
        and t.elem.kind.tag is CollKind.VEC
    )


def _apply_rule(registry: FlavorRegistry, ins: Instruction, env: dict[str, ItemType]) -> list[ItemType]:
    from .flavors import TypingContext

    sig = registry.lookup(ins.flavor, ins.opcode)
    ctx = TypingContext(registry, True, ins.opcode)  # in_concur irrelevant to lowered ops
    return sig.rule(ctx, ins.params, [env[r] for r in ins.inputs])


def lower(registry: FlavorRegistry, p: Program) -> Program:
    """Rewrite onto physical operators over Vec-backed inputs."""
    new_param_types = []
    for r in p.params:
        phys = _physical_param_type(r.type)
        new_param_types.append(phys if phys is not None else r.type)
    return _lower_program(registry, p, new_param_types)


# --- extract_pipelines -------------------------------------------------------------------------

_PIPE_OPS = {
    (HIGHLEVEL, "Select"),
    (HIGHLEVEL, "ExProj"),
    (HIGHLEVEL, "Map"),
    (HIGHLEVEL, "Proj"),
    (HIGHLEVEL, "Aggr"),
    (LOWLEVEL, "ScanVec"),
    (LOWLEVEL, "MatVec"),
    (LOWLEVEL, "ProbeHTable"),
}


def _pipelineable(ins: Instruction, types: dict[str, ItemType]) -> bool:
    if (ins.flavor, ins.opcode) not in _PIPE_OPS:
        return False
    for out in ins.outputs:
        t = types.get(out)
        if isinstance(t, Collection) and t.kind.tag is CollKind.SET:
            return False  # set outputs need dedup, i.e. materialization
    return True


def extract_pipelines(registry: FlavorRegistry, p: Program) -> Program:
    """Fuse maximal chains of tuple-at-a-time instructions into pipeline Calls."""
    return _extract(registry, p, in_concur=False)


def _extract(registry: FlavorRegistry, p: Program, in_concur: bool) -> Program:
    from .flavors import _check_program

    types, _ = _check_program(registry, p, in_concur)
    counts = _use_counts(p)
    body = list(p.body)

    # recurse into nested programs of non-pipeline instructions first
    for i, ins in enumerate(body):
        new_params = []
        changed = False
        for par in ins.params:
            if isinstance(par, NestedProgram) and not par.program.pipeline:
                sub = _extract(registry, par.program, in_concur or ins.opcode == "ConcurExecute")
                new_params.append(NestedProgram(sub))
                changed = changed or sub is not par.program
            else:
                new_params.append(par)
        if changed:
            body[i] = instr(ins.opcode, ins.flavor, new_params, ins.inputs, ins.outputs)

    regions: list[list[int]] = []
    in_region: set[int] = set()
    for i, ins in enumerate(body):
        if i in in_region or not _pipelineable(ins, types):
            continue
        region = [i]
        in_region.add(i)
        cur = ins
        while cur.opcode != "MatVec":
            out = cur.outputs[0]
            if counts.get(out, 0) != 1:
                break
            j = next(k for k, cand in enumerate(body) if out in cand.inputs)
            nxt = body[j]
            if (
                j in in_region
                or not _pipelineable(nxt, types)
                or nxt.inputs[0] != out
                or nxt.opcode == "ScanVec"  # vector scans can only source a pipeline
            ):
                break
            region.append(j)
            in_region.add(j)
            cur = nxt
        regions.append(region)

    param_ids = {r.id for r in p.params}
    new_body: list[Instruction] = []
    region_start = {r[0]: r for r in regions}
    for i, ins in enumerate(body):
        if i in in_region and i not in region_start:
            continue
        if i not in region_start:
            new_body.append(ins)
            continue
        region = region_start[i]
        members = [body[j] for j in region]
        produced = {out for m in members for out in m.outputs}
        external: list[str] = []
        for m in members:
            for r in m.inputs:
                if r not in produced and r not in external:
                    external.append(r)
        final_out = members[-1].outputs[0]
        nested = program(
            [Register(r, types[r]) for r in external],
            list(members) + [ret(final_out)],
            pipeline=True,
        )
        new_body.append(
            instr("Call", CONTROL, (NestedProgram(nested),), tuple(external), (final_out,))
        )
    return program(p.params, new_body, p.pipeline)


# --- pass manager -------------------------------------------------------------------------------


@dataclass(frozen=True)
class RewritePass:
    """A named, configurable, pure program transformation."""

    name: str
    apply: Callable[[FlavorRegistry, Program, object], Program]


def _parallelize_pass(registry, p, config):
    n = 4 if config is None else int(config)
    return parallelize(p, n)


def _lower_pass(registry, p, config):
    return lower(registry, p)


def _extract_pass(registry, p, config):
    return extract_pipelines(registry, p)


BUILTIN_PASSES: dict[str, RewritePass] = {
    "parallelize": RewritePass("parallelize", _parallelize_pass),
    "lower": RewritePass("lower", _lower_pass),
    "extract_pipelines": RewritePass("extract_pipelines", _extract_pass),
}


@dataclass(frozen=True)
class PassPipeline:
    steps: tuple[tuple[str, object], ...]

    @staticmethod
    def parse(spec: str) -> "PassPipeline":
        steps = []
        for part in spec.split(","):
            part = part.strip()
            if not part:
                continue
            if ":" in part:
                name, cfg = part.split(":", 1)
                steps.append((name, cfg))
            else:
                steps.append((part, None))
        return PassPipeline(tuple(steps))


@dataclass
class RewriteResult:
    program: Program
    intermediates: list[tuple[str, Program]]


def run_pipeline(
    registry: FlavorRegistry,
    pipeline: PassPipeline,
    p: Program,
    passes: dict[str, RewritePass] | None = None,
) -> RewriteResult:
    """Apply passes in order, re-validating and re-typechecking after each."""
    table = BUILTIN_PASSES if passes is None else passes
    report = validate(p)
    if not report.ok:
        raise PassFailed("input", str(report.violations[0]))
    typecheck_program(registry, p)
    intermediates: list[tuple[str, Program]] = []
    current = p
    for name, config in pipeline.steps:
        rw = table.get(name)
        if rw is None:
            raise PassFailed(name, "pass is not registered")
        try:
            current = rw.apply(registry, current, config)
        except PassFailed:
            raise
        except (TypeCheckError, NotDecomposable, ValueError) as exc:
            raise PassFailed(name, str(exc)) from exc
        report = validate(current)
        if not report.ok:
            raise PassFailed(name, f"output fails validation: {report.violations[0]}")
        try:
            typecheck_program(registry, current)
        except TypeCheckError as exc:
            raise PassFailed(name, f"output fails type checking: {exc}") from exc
        intermediates.append((name, current))
    return RewriteResult(current, intermediates)
