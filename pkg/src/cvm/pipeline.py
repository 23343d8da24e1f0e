"""Fused execution of pipeline-marked programs.

A pipeline program is a chain of tuple-at-a-time operators (the extraction
pass guarantees the shape: each instruction streams from its predecessor,
side inputs are program parameters, and the chain ends in a single returned
register). Here the chain is assembled into one pull-based iterator stack and
drained in a single pass: no intermediate collection exists, and the only
materialization is the pipeline's output (the terminal MatVec, when present).
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Iterator

from .errors import RuntimeTypeError
from .program import RETURN_OP
from .types import Collection, CollKind
from .values import Value, VecRows, from_plain, iter_plain, to_plain, type_of

if TYPE_CHECKING:
    from .interp import InstrPlan, Machine, ProgramPlan


def _source_iter(value, t) -> Iterator:
    return iter_plain(value, t)


def _vec_row_iter(value, t: Collection) -> Iterator:
    if isinstance(value, VecRows):
        return iter(value)

    def gen():
        for vec in iter_plain(value, t):
            yield from vec

    return gen()


def _projector(idx: tuple[int, ...]):
    def proj(e):
        return tuple(e[i] for i in idx)

    return proj


def _aggr_gen(upstream: Iterator, specs) -> Iterator:
    from .interp import aggregate_stream

    yield aggregate_stream(upstream, specs)


def _probe_gen(upstream: Iterator, probe_type, htab) -> Iterator:
    from .interp import probe_rows

    return probe_rows(upstream, probe_type, htab)


def run_fused(machine: "Machine", plan: "ProgramPlan", inputs: list):
    """Execute a pipeline program as one fused pass; returns the single output."""
    p = plan.program
    env = {r.id: v for r, v in zip(p.params, inputs)}
    param_ids = set(env)
    stream: Iterator | None = None
    producer: str | None = None
    out_value = None
    out_is_stream = False
    last_ip: "InstrPlan | None" = None

    for ins, ip in zip(p.body, plan.instrs):
        machine._budget.consume()
        machine.stats.instructions += 1
        if ins.opcode == RETURN_OP:
            break
        if stream is None:
            if ins.inputs and ins.inputs[0] not in param_ids:
                raise RuntimeTypeError("pipeline does not start at a parameter")
        elif not ins.inputs or ins.inputs[0] != producer:
            raise RuntimeTypeError("pipeline instructions must chain on their first input")
        op = ins.opcode
        if op == "ScanVec":
            stream = _vec_row_iter(env[ins.inputs[0]], ip.in_types[0])
        elif op == "Select":
            up = stream if stream is not None else _source_iter(env[ins.inputs[0]], ip.in_types[0])
            stream = filter(ip.fn, up)  # binds the predicate now, not at drain time
        elif op in ("Map", "ExProj"):
            up = stream if stream is not None else _source_iter(env[ins.inputs[0]], ip.in_types[0])
            stream = map(ip.fn, up)
        elif op == "Proj":
            up = stream if stream is not None else _source_iter(env[ins.inputs[0]], ip.in_types[0])
            stream = map(_projector(ip.extra), up)
        elif op == "Aggr":
            up = stream if stream is not None else _source_iter(env[ins.inputs[0]], ip.in_types[0])
            stream = _aggr_gen(up, ip.extra)
        elif op == "ProbeHTable":
            up = stream if stream is not None else _source_iter(env[ins.inputs[0]], ip.in_types[0])
            if ins.inputs[1] not in param_ids:
                raise RuntimeTypeError("hash table input of a fused probe must be a pipeline parameter")
            htab = env[ins.inputs[1]][0]
            stream = _probe_gen(up, ip.in_types[0].elem, htab)
        elif op == "MatVec":
            up = stream if stream is not None else _source_iter(env[ins.inputs[0]], ip.in_types[0])
            machine.stats.built(True)
            out_value = [VecRows(rows=list(up))]
            stream = None
        else:
            raise RuntimeTypeError(f"opcode {op} cannot run inside a fused pipeline")
        producer = ins.outputs[0]
        out_is_stream = stream is not None
        last_ip = ip

    ret = p.body[-1]
    if len(ret.inputs) != 1 or ret.inputs[0] != producer:
        raise RuntimeTypeError("pipeline must return exactly its final register")
    if out_is_stream:
        machine.stats.built(True)
        out_t: Collection = last_ip.out_types[0]
        items = list(stream)
        if out_t.kind.tag is CollKind.VEC:
            return VecRows(rows=items)
        return items
    return out_value


def exec_pipeline(registry, pipeline_program, inputs: list[Value], machine: "Machine | None" = None) -> Value:
    """Run a pipeline-marked program fused, from Values to a Value."""
    from .interp import Machine

    if machine is None:
        machine = Machine(registry, mode="mt")
        machine._budget = machine_budget(machine)
    plan = machine._prepare(pipeline_program, in_concur=False)
    plains = [to_plain(v, r.type) for v, r in zip(inputs, pipeline_program.params)]
    for v, r in zip(inputs, pipeline_program.params):
        if type_of(v) != r.type:
            raise RuntimeTypeError(f"input {r.id!r} expects {r.type}, got {type_of(v)}")
    out = run_fused(machine, plan, plains)
    ret_reg = pipeline_program.body[-1].inputs[0]
    out_t = _register_type(plan, ret_reg)
    return from_plain(out, out_t)


def machine_budget(machine: "Machine"):
    from .interp import _Budget

    return _Budget(machine.max_steps)


def _register_type(plan: "ProgramPlan", reg: str):
    for r in plan.program.params:
        if r.id == reg:
            return r.type
    for ins, ip in zip(plan.program.body, plan.instrs):
        if ip is None:
            continue
        for rid, t in zip(ins.outputs, ip.out_types):
            if rid == reg:
                return t
    raise RuntimeTypeError(f"unknown register {reg!r}")
