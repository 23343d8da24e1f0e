"""Program execution: the reference machine and the shared instruction core.

The reference backend runs single-threaded and deterministic; it is the
semantic ground truth every transformation and the parallel backend are tested
against. Concurrent worker groups are *simulated* cooperatively: worker
programs run as coroutine-like generators scheduled round-robin by worker
index, so programs that exchange data behave identically here and on the real
parallel backend.

Execution works on plain values (see `values`), guided by per-instruction
plans precomputed from the type checker: field indices resolved, expressions
compiled, nested programs pre-planned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

from .errors import (
    BudgetExhausted,
    DeadlockDetected,
    EmptyAggregate,
    RuntimeTypeError,
    TypeCheckError,
)
from .exprs import _iadd, _imul, compile_expr
from .flavors import CONTROL, FlavorRegistry, HIGHLEVEL, LOWLEVEL, TypingContext, builtin_registry
from .program import NestedProgram, Program, RETURN_OP, validate
from .types import Atom, AtomDomain, Collection, CollKind, ItemType, Tuple
from .values import (
    HTabRep,
    KdArr,
    Value,
    VecRows,
    canonical_key_plain,
    from_plain,
    iter_plain,
    to_plain,
    type_of,
)

DEFAULT_BUDGET = 10**8

_BUILTIN_FLAVOR_NAMES = (HIGHLEVEL, CONTROL, LOWLEVEL)


@dataclass(frozen=True, slots=True)
class StepBudget:
    """Cap on instruction evaluations per top-level run.

    Enforced exactly on the reference backend; the parallel backend meters each
    worker against the remaining allowance, so the group-wide total can
    overshoot by a bounded amount.
    """

    max_steps: int = DEFAULT_BUDGET

    def __post_init__(self) -> None:
        if self.max_steps <= 0:
            raise ValueError("budget must be positive")


@dataclass
class ExecStats:
    instructions: int = 0
    collections_built: int = 0
    pipeline_builds: int = 0  # collection builds attributable to pipeline bodies

    def built(self, in_pipeline: bool, n: int = 1) -> None:
        self.collections_built += n
        if in_pipeline:
            self.pipeline_builds += n


class _Budget:
    __slots__ = ("remaining",)

    def __init__(self, max_steps: int):
        self.remaining = max_steps

    def consume(self, n: int = 1) -> None:
        self.remaining -= n
        if self.remaining < 0:
            raise BudgetExhausted("instruction budget exhausted")


# --- cooperative exchange fabric ------------------------------------------------------

_DONE = object()


class CoopFabric:
    """Per-(src,dst) FIFO message queues polled by the cooperative scheduler."""

    def __init__(self, n: int):
        self.n = n
        self.queues: dict[tuple[int, int], list] = {(s, d): [] for s in range(n) for d in range(n)}
        self.finished = [False] * n
        self.consumed = 0  # scheduler progress marker

    def send(self, src: int, dst: int, rnd: int, batch: list) -> None:
        self.queues[(src, dst)].append((rnd, batch))

    def try_recv(self, src: int, dst: int, rnd: int):
        q = self.queues[(src, dst)]
        if not q:
            if self.finished[src]:
                raise DeadlockDetected(f"worker {dst} waits on finished worker {src}")
            return None
        got_rnd, batch = q.pop(0)
        if got_rnd != rnd:
            raise RuntimeTypeError(f"exchange round skew: expected {rnd}, got {got_rnd}")
        self.consumed += 1
        return batch

    def mark_finished(self, idx: int) -> None:
        self.finished[idx] = True


@dataclass
class ExchangeContext:
    """Per-worker handle for data exchange inside a concurrent group."""

    worker_index: int
    worker_count: int
    fabric: object
    rounds: int = 0

    def next_round(self) -> int:
        r = self.rounds
        self.rounds += 1
        return r


# --- per-instruction execution plans ---------------------------------------------------


@dataclass
class InstrPlan:
    opcode: str
    in_types: list[ItemType]
    out_types: list[ItemType]
    fn: Callable | None = None  # compiled scalar expression, when applicable
    extra: object = None
    nested: "ProgramPlan | None" = None
    handler: object = None  # built-in semantics, _HIGHER_ORDER, or None
    evaluator: Callable | None = None


@dataclass
class ProgramPlan:
    program: Program
    instrs: list[InstrPlan | None]  # None for Return
    uses_exchange: bool = False
    has_concur: bool = False


class Machine:
    """Executes validated, well-typed programs.

    mode "ref" is the sequential reference machine; mode "mt" runs
    ConcurExecute groups on real concurrent workers and pipeline-marked Call
    bodies as fused iterator chains. One instance supports one run at a time;
    use separate instances (or the module-level entry points, which build
    fresh ones) to execute from several threads concurrently.
    """

    def __init__(
        self,
        registry: FlavorRegistry | None = None,
        mode: str = "ref",
        budget: StepBudget | None = None,
        worker_cap: int = 4,
        process_threshold: int = 500_000,
    ):
        if mode not in ("ref", "mt"):
            raise ValueError(f"unknown backend mode {mode!r}")
        self.registry = registry if registry is not None else builtin_registry()
        self.mode = mode
        self.max_steps = (budget or StepBudget()).max_steps
        self.worker_cap = max(1, worker_cap)
        self.process_threshold = process_threshold
        self.stats = ExecStats()
        self._plans: dict[int, ProgramPlan] = {}

    # -- public entry ------------------------------------------------------------------

    def run(self, program: Program, inputs: list[Value]) -> list[Value]:
        report = validate(program)
        if not report.ok:
            raise TypeCheckError("InvalidProgram", str(report.violations[0]))
        if self.mode == "mt" and _nested_concur(program):
            raise RuntimeTypeError("nested ConcurExecute is not supported on the parallel backend")
        plan = self._prepare(program, in_concur=False)
        if len(inputs) != len(program.params):
            raise RuntimeTypeError(f"program takes {len(program.params)} inputs, got {len(inputs)}")
        plains = []
        for v, reg in zip(inputs, program.params):
            vt = type_of(v)
            if vt != reg.type:
                raise RuntimeTypeError(f"input {reg.id!r} expects {reg.type}, got {vt}")
            plains.append(to_plain(v, reg.type))
        self._budget = _Budget(self.max_steps)
        outs = _drive(self._run_gen(plan, plains, None, False))
        ret_ids = program.body[-1].inputs
        env_types = {r.id: r.type for r in program.params}
        for ins, ip in zip(program.body, plan.instrs):
            if ip is not None:
                for rid, t in zip(ins.outputs, ip.out_types):
                    env_types[rid] = t
        return [from_plain(o, env_types[r]) for o, r in zip(outs, ret_ids)]

    # -- preparation -------------------------------------------------------------------

    def _prepare(self, p: Program, in_concur: bool) -> ProgramPlan:
        key = id(p)
        cached = self._plans.get(key)
        if cached is not None:
            return cached
        env: dict[str, ItemType] = {r.id: r.type for r in p.params}
        instrs: list[InstrPlan | None] = []
        uses_exchange = False
        has_concur = False
        for ins in p.body:
            if ins.opcode == RETURN_OP:
                instrs.append(None)
                continue
            sig = self.registry.lookup(ins.flavor, ins.opcode)
            in_types = [env[r] for r in ins.inputs]
            ctx = TypingContext(self.registry, in_concur, ins.opcode)
            out_types = sig.rule(ctx, ins.params, in_types)
            for rid, t in zip(ins.outputs, out_types):
                env[rid] = t
            ip = InstrPlan(ins.opcode, in_types, list(out_types))
            if ins.flavor in _BUILTIN_FLAVOR_NAMES:
                ip.handler = _BUILTIN_OPS.get(ins.opcode)
            self._prepare_details(ins, ip, in_concur)
            if ip.handler is None and ip.evaluator is None:
                raise RuntimeTypeError(f"no execution semantics for ({ins.flavor}, {ins.opcode})")
            uses_exchange |= ins.opcode == "Exchange" or (ip.nested is not None and ip.nested.uses_exchange)
            has_concur |= ins.opcode == "ConcurExecute" or (ip.nested is not None and ip.nested.has_concur)
            instrs.append(ip)
        plan = ProgramPlan(p, instrs, uses_exchange, has_concur)
        self._plans[key] = plan
        return plan

    def _prepare_details(self, ins, ip: InstrPlan, in_concur: bool) -> None:
        sig = self.registry.lookup(ins.flavor, ins.opcode)
        if sig.evaluator is not None:
            ip.evaluator = sig.evaluator
        if ins.flavor not in _BUILTIN_FLAVOR_NAMES:
            return
        op = ins.opcode
        if op in ("Select", "Map", "ExProj", "Exchange"):
            elem = ip.in_types[0].elem
            ip.fn = compile_expr(ins.params[0].expr, elem)
        elif op == "Proj":
            elem: Tuple = ip.in_types[0].elem
            names = [v.payload for v in ins.params[0].value.items]
            ip.extra = tuple(elem.field_index(n) for n in names)
        elif op == "Aggr":
            elem = ip.in_types[0].elem
            ip.extra = [
                (elem.field_index(s.input_field), s.function, ip.out_types[0].elem.fields[i][1].domain)
                for i, s in enumerate(ins.params[0].specs)
            ]
        elif op in ("Split", "SplitVec", "Loop"):
            ip.extra = ins.params[0].value.payload
        if op == "ConcurExecute":
            ip.nested = self._prepare(ins.params[0].program, in_concur=True)
        elif op in ("Loop", "While", "Cond", "Call"):
            pi = 1 if op == "Loop" else 0
            ip.nested = self._prepare(ins.params[pi].program, in_concur)

    # -- execution ---------------------------------------------------------------------

    def _run_gen(self, plan: ProgramPlan, inputs: list, wctx: ExchangeContext | None, in_pipeline: bool):
        """Generator-based program runner; yields when blocked on an exchange."""
        p = plan.program
        env: dict[str, object] = {r.id: v for r, v in zip(p.params, inputs)}
        budget = self._budget
        stats = self.stats
        for ins, ip in zip(p.body, plan.instrs):
            budget.consume()
            stats.instructions += 1
            if ip is None:  # Return
                return [env[r] for r in ins.inputs]
            handler = ip.handler
            if handler is None:
                outs = ip.evaluator(self, ins.params, [env[r] for r in ins.inputs], ip.in_types, ip.out_types)
            elif handler is _HIGHER_ORDER:
                outs = yield from self._exec_higher_order(ins, ip, env, wctx, in_pipeline)
            else:
                outs = handler(self, ip, [env[r] for r in ins.inputs], in_pipeline)
            for rid, v in zip(ins.outputs, outs):
                env[rid] = v
        return []  # unreachable for valid programs

    def _exec_higher_order(self, ins, ip: InstrPlan, env, wctx, in_pipeline):
        op = ip.opcode
        if op == "Loop":
            state = [env[r] for r in ins.inputs]
            for _ in range(ip.extra):
                state = yield from self._run_gen(ip.nested, state, wctx, in_pipeline)
            return state
        if op == "While":
            state = [env[r] for r in ins.inputs]
            while True:
                rets = yield from self._run_gen(ip.nested, state, wctx, in_pipeline)
                flag, state = _flag_value(rets[0]), rets[1:]
                if not flag:
                    return state
        if op == "Cond":
            rets = yield from self._run_gen(ip.nested, [env[r] for r in ins.inputs], wctx, in_pipeline)
            flag = _flag_value(rets[0])
            half = (len(rets) - 1) // 2
            return rets[1 : 1 + half] if flag else rets[1 + half :]
        if op == "Call":
            args = [env[r] for r in ins.inputs]
            if self.mode == "mt" and ip.nested.program.pipeline:
                from .pipeline import run_fused

                return [run_fused(self, ip.nested, args)]
            rets = yield from self._run_gen(ip.nested, args, wctx, ip.nested.program.pipeline or in_pipeline)
            return rets
        if op == "ConcurExecute":
            items = list(iter_plain(env[ins.inputs[0]], ip.in_types[0]))
            if self.mode == "mt":
                from .parallel import exec_concur_parallel

                return [exec_concur_parallel(self, ip, items)]
            return [self._exec_concur_coop(ip, items)]
        if op == "WorkerId":
            if wctx is None:
                raise RuntimeTypeError("WorkerId outside a concurrent worker")
            return [[wctx.worker_index]]
        if op == "Exchange":
            if wctx is None:
                raise RuntimeTypeError("Exchange outside a concurrent worker")
            out = yield from _exchange(wctx, ip.fn, env[ins.inputs[0]], ip.in_types[0])
            return [out]
        raise RuntimeTypeError(f"unhandled higher-order opcode {op}")

    def _exec_concur_coop(self, ip: InstrPlan, items: list):
        """Round-robin cooperative simulation of a concurrent worker group."""
        n = len(items)
        if n == 0:
            return []
        fabric = CoopFabric(n)
        gens = []
        for i, item in enumerate(items):
            wctx = ExchangeContext(i, n, fabric)
            gens.append(self._run_gen(ip.nested, [item], wctx, False))
        results: list = [None] * n
        live = set(range(n))
        while live:
            before = (fabric.consumed, len(live))
            for i in sorted(live):
                try:
                    next(gens[i])
                    # worker yielded: blocked on a receive; try again next sweep
                except StopIteration as stop:
                    results[i] = stop.value[0]
                    fabric.mark_finished(i)
                    live.discard(i)
            if live and (fabric.consumed, len(live)) == before:
                raise DeadlockDetected("all workers blocked on receives")
        return results


def _exchange(wctx: ExchangeContext, dst_fn, payload, payload_type):
    """Route each element to the worker chosen by the destination expression.

    One exchange is a shuffle round: every worker contributes one (possibly
    empty) batch to every other worker, and receives the batches addressed to
    it ordered by source index. Batches between a fixed pair of workers are
    delivered in send order.
    """
    n = wctx.worker_count
    rnd = wctx.next_round()
    batches: list[list] = [[] for _ in range(n)]
    for e in iter_plain(payload, payload_type):
        d = dst_fn(e)
        if not (0 <= d < n):
            raise RuntimeTypeError(f"exchange destination {d} out of range [0, {n})")
        batches[d].append(e)
    for dst in range(n):
        wctx.fabric.send(wctx.worker_index, dst, rnd, batches[dst])
    received: list = []
    for src in range(n):
        while True:
            batch = wctx.fabric.try_recv(src, wctx.worker_index, rnd)
            if batch is not None:
                received.extend(batch)
                break
            yield ("recv", src)
    return received


def _flag_value(plain) -> bool:
    """Unwrap a control-flow flag: a bare bool or a one-element collection."""
    if isinstance(plain, bool):
        return plain
    if isinstance(plain, list):
        if len(plain) != 1:
            raise RuntimeTypeError(f"control-flow flag must hold exactly one value, got {len(plain)}")
        return bool(plain[0])
    raise RuntimeTypeError(f"bad control-flow flag carrier: {type(plain).__name__}")


def _drive(gen):
    """Run a program generator that is never expected to block."""
    try:
        next(gen)
    except StopIteration as stop:
        return stop.value
    raise DeadlockDetected("exchange blocked outside any worker group")


def _nested_concur(p: Program, inside: bool = False) -> bool:
    for ins in p.body:
        for par in ins.params:
            if isinstance(par, NestedProgram):
                now_inside = inside or ins.opcode == "ConcurExecute"
                if ins.opcode == "ConcurExecute" and inside:
                    return True
                if _nested_concur(par.program, now_inside):
                    return True
    return False


# --- instruction semantics (non-higher-order) --------------------------------------------

_HIGHER_ORDER = object()


def _finish(machine: Machine, items: list, out_type: Collection, in_pipeline: bool):
    """Post-process an output element list according to the output kind."""
    machine.stats.built(in_pipeline)
    tag = out_type.kind.tag
    if tag is CollKind.SET:
        seen = {}
        for e in items:
            seen.setdefault(canonical_key_plain(e, out_type.elem), e)
        return [seen[k] for k in sorted(seen)]
    if tag is CollKind.SINGLE and len(items) != 1:
        raise RuntimeTypeError(f"Single output got {len(items)} elements")
    return items


def _exec_select(machine, ip, ins_vals, in_pipeline):
    fn = ip.fn
    src = ins_vals[0]
    out_t: Collection = ip.out_types[0]
    if isinstance(src, VecRows) and out_t.kind.tag is CollKind.VEC:
        machine.stats.built(in_pipeline)
        return [VecRows(rows=[e for e in src if fn(e)])]
    items = [e for e in iter_plain(src, ip.in_types[0]) if fn(e)]
    return [_finish(machine, items, out_t, in_pipeline)]


def _exec_map(machine, ip, ins_vals, in_pipeline):
    fn = ip.fn
    items = [fn(e) for e in iter_plain(ins_vals[0], ip.in_types[0])]
    return [_finish(machine, items, ip.out_types[0], in_pipeline)]


def _exec_proj(machine, ip, ins_vals, in_pipeline):
    idx = ip.extra
    items = [tuple(e[i] for i in idx) for e in iter_plain(ins_vals[0], ip.in_types[0])]
    return [_finish(machine, items, ip.out_types[0], in_pipeline)]


def _agg_update(state, func, v, domain):
    if func == "count":
        return state + 1 if state is not None else 1
    if state is None:
        return v
    if func == "sum":
        return _iadd(state, v) if domain is AtomDomain.INT64 else state + v
    key = canonical_key_plain  # min/max via the canonical atom order (NaN greatest)
    a = key(state, Atom(domain))
    b = key(v, Atom(domain))
    if func == "min":
        return v if b < a else state
    return v if b > a else state


def _agg_finish(state, func, domain):
    if state is not None:
        return state
    if func == "count":
        return 0
    if func == "sum":
        return 0 if domain is AtomDomain.INT64 else 0.0
    raise EmptyAggregate(f"{func} over an empty collection")


def aggregate_stream(rows: Iterator, specs: list) -> tuple:
    """Fold rows into one output tuple; specs are (field index, function, out domain)."""
    states = [None] * len(specs)
    counts_only = all(f == "count" for _, f, _ in specs)
    if counts_only:
        n = sum(1 for _ in rows)
        return tuple(n for _ in specs)
    for row in rows:
        for i, (idx, func, domain) in enumerate(specs):
            if func == "count":
                states[i] = (states[i] or 0) + 1
            else:
                states[i] = _agg_update(states[i], func, row[idx], domain)
    return tuple(_agg_finish(s, f, d) for s, (_, f, d) in zip(states, specs))


def _exec_aggr(machine, ip, ins_vals, in_pipeline):
    row = aggregate_stream(iter_plain(ins_vals[0], ip.in_types[0]), ip.extra)
    return [_finish(machine, [row], ip.out_types[0], in_pipeline)]


def chunk_bounds(m: int, n: int) -> list[tuple[int, int]]:
    """n contiguous chunks of sizes ceil(m/n) or floor(m/n), larger ones first."""
    base, extra = divmod(m, n)
    bounds = []
    lo = 0
    for i in range(n):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def _exec_split(machine, ip, ins_vals, in_pipeline):
    items = list(iter_plain(ins_vals[0], ip.in_types[0]))
    n = ip.extra
    chunks = [items[lo:hi] for lo, hi in chunk_bounds(len(items), n)]
    machine.stats.built(in_pipeline, n + 1)
    return [chunks]


def _exec_scan(machine, ip, ins_vals, in_pipeline):
    inner_t: Collection = ip.in_types[0].elem
    items: list = []
    for sub in iter_plain(ins_vals[0], ip.in_types[0]):
        items.extend(iter_plain(sub, inner_t))
    return [_finish(machine, items, ip.out_types[0], in_pipeline)]


def _exec_mmmult(machine, ip, ins_vals, in_pipeline):
    a, b = ins_vals
    (r1, c1), (r2, c2) = a.extents, b.extents
    if c1 != r2:
        raise RuntimeTypeError(f"matrix extents {a.extents} x {b.extents} do not chain")
    is_int = ip.out_types[0].elem.domain is AtomDomain.INT64
    av, bv = a.items, b.items
    out = [0 if is_int else 0.0] * (r1 * c2)
    for i in range(r1):
        for k in range(c1):
            x = av[i * c1 + k]
            row_off = i * c2
            b_off = k * c2
            if is_int:
                for j in range(c2):
                    out[row_off + j] = _iadd(out[row_off + j], _imul(x, bv[b_off + j]))
            else:
                for j in range(c2):
                    out[row_off + j] += x * bv[b_off + j]
    machine.stats.built(in_pipeline)
    return [KdArr((r1, c2), out)]


def _iter_vec_rows(src, in_type: Collection):
    if isinstance(src, VecRows):
        yield from src
        return
    for vec in iter_plain(src, in_type):
        yield from vec


def _exec_scanvec(machine, ip, ins_vals, in_pipeline):
    items = list(_iter_vec_rows(ins_vals[0], ip.in_types[0]))
    machine.stats.built(in_pipeline)
    return [items]


def _exec_matvec(machine, ip, ins_vals, in_pipeline):
    rows = list(iter_plain(ins_vals[0], ip.in_types[0]))
    machine.stats.built(in_pipeline)
    return [[VecRows(rows=rows)]]


def _exec_splitvec(machine, ip, ins_vals, in_pipeline):
    src = ins_vals[0]
    n = ip.extra
    in_t: Collection = ip.in_types[0]
    machine.stats.built(in_pipeline, n + 1)
    if not isinstance(src, VecRows):
        vecs = list(iter_plain(src, in_t))
        if len(vecs) == 1:
            src = vecs[0]
        else:
            src = VecRows(rows=[r for v in vecs for r in v])
    m = len(src)
    return [[src.slice(lo, hi) for lo, hi in chunk_bounds(m, n)]]


def build_htab(rows: Iterator, elem_type: Tuple) -> HTabRep:
    ki = elem_type.field_index("key")
    vi = elem_type.field_index("val")
    rep = HTabRep(elem_type.fields[ki][1], elem_type.fields[vi][1], ki)
    for row in rows:
        rep.add(row[ki], row[vi])
    return rep


def _exec_buildhtable(machine, ip, ins_vals, in_pipeline):
    machine.stats.built(in_pipeline)
    return [[build_htab(iter_plain(ins_vals[0], ip.in_types[0]), ip.in_types[0].elem)]]


def probe_rows(rows: Iterator, probe_type: Tuple, htab: HTabRep):
    ki = probe_type.field_index("key")
    vi = probe_type.field_index("val")
    for row in rows:
        k = row[ki]
        for build_val in htab.lookup(k):
            yield (k, row[vi], build_val)


def _exec_probehtable(machine, ip, ins_vals, in_pipeline):
    htab = ins_vals[1][0]
    items = list(probe_rows(iter_plain(ins_vals[0], ip.in_types[0]), ip.in_types[0].elem, htab))
    return [_finish(machine, items, ip.out_types[0], in_pipeline)]


def _exec_join(machine, ip, ins_vals, in_pipeline):
    build_t: Tuple = ip.in_types[1].elem
    htab = build_htab(iter_plain(ins_vals[1], ip.in_types[1]), build_t)
    items = list(probe_rows(iter_plain(ins_vals[0], ip.in_types[0]), ip.in_types[0].elem, htab))
    return [_finish(machine, items, ip.out_types[0], in_pipeline)]


_BUILTIN_OPS: dict[str, object] = {
    "Select": _exec_select,
    "Map": _exec_map,
    "ExProj": _exec_map,  # same shape: apply the tuple-building expression per element
    "Proj": _exec_proj,
    "Aggr": _exec_aggr,
    "Split": _exec_split,
    "Scan": _exec_scan,
    "MMMult": _exec_mmmult,
    "ScanVec": _exec_scanvec,
    "MatVec": _exec_matvec,
    "SplitVec": _exec_splitvec,
    "BuildHTable": _exec_buildhtable,
    "ProbeHTable": _exec_probehtable,
    "Join": _exec_join,
    "Loop": _HIGHER_ORDER,
    "While": _HIGHER_ORDER,
    "Cond": _HIGHER_ORDER,
    "Call": _HIGHER_ORDER,
    "ConcurExecute": _HIGHER_ORDER,
    "WorkerId": _HIGHER_ORDER,
    "Exchange": _HIGHER_ORDER,
}


# --- public entry points --------------------------------------------------------------------


def run_reference(
    registry: FlavorRegistry,
    program: Program,
    inputs: list[Value],
    budget: StepBudget | None = None,
) -> list[Value]:
    """Execute on the deterministic single-threaded reference machine."""
    return Machine(registry, mode="ref", budget=budget).run(program, inputs)


def run_parallel(
    registry: FlavorRegistry,
    program: Program,
    inputs: list[Value],
    worker_cap: int = 4,
    budget: StepBudget | None = None,
) -> list[Value]:
    """Execute with concurrent workers for ConcurExecute and fused pipelines."""
    return Machine(registry, mode="mt", budget=budget, worker_cap=worker_cap).run(program, inputs)


def exec_build_htable(input_value: Value) -> Value:
    """Group a collection of <key, val> tuples into Single<HTab<...>>."""
    t = type_of(input_value)
    if not (isinstance(t, Collection) and isinstance(t.elem, Tuple)):
        raise RuntimeTypeError(f"build expects a collection of tuples, got {t}")
    elem: Tuple = t.elem
    if sorted(elem.field_names) != ["key", "val"]:
        raise RuntimeTypeError(f"build expects key/val tuples, got {elem}")
    rep = build_htab(iter_plain(to_plain(input_value, t), t), elem)
    from .types import HTAB, SINGLE, coll

    out_t = coll(SINGLE, coll(HTAB, elem))
    return from_plain([rep], out_t)
