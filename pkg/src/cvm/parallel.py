"""Concurrent execution of worker groups for the parallel backend.

Worker groups whose programs exchange data get one OS thread per worker with
blocking per-(src,dst) FIFO queues; a worker that terminates floods its
outgoing queues with a DONE marker so a peer stuck waiting on it fails with
DeadlockDetected instead of hanging.

Exchange-free groups are mapped onto at most `worker_cap` lanes. Groups above
the machine's process threshold (default 500k input rows, roughly where the
per-fork cost stops mattering) run their lanes as forked OS processes so the
work actually spreads over cores (CPython threads serialize CPU-bound
interpretation); smaller groups stay on threads. Workers share nothing but
their read-only input partitions either way, so lane placement cannot change
results.
"""

from __future__ import annotations

import multiprocessing
import os
import queue
import threading
from typing import TYPE_CHECKING

from .errors import DeadlockDetected, ExecError, RuntimeTypeError
from .types import Collection
from .values import plain_len

if TYPE_CHECKING:
    from .interp import InstrPlan, Machine, ProgramPlan

_DONE_MSG = ("__done__",)


class ThreadFabric:
    """Blocking per-pair FIFO queues for one worker group."""

    def __init__(self, n: int):
        self.n = n
        self.queues = {(s, d): queue.SimpleQueue() for s in range(n) for d in range(n)}

    def send(self, src: int, dst: int, rnd: int, batch: list) -> None:
        self.queues[(src, dst)].put((rnd, batch))

    def try_recv(self, src: int, dst: int, rnd: int):
        msg = self.queues[(src, dst)].get()
        if msg == _DONE_MSG:
            raise DeadlockDetected(f"worker {dst} waits on finished worker {src}")
        got, batch = msg
        if got != rnd:
            raise RuntimeTypeError(f"exchange round skew: expected {rnd}, got {got}")
        return batch

    def mark_finished(self, idx: int) -> None:
        for dst in range(self.n):
            self.queues[(idx, dst)].put(_DONE_MSG)


class NoFabric:
    """Placeholder for exchange-free workers: any use is a bug."""

    def send(self, *a):  # pragma: no cover
        raise RuntimeTypeError("exchange used by a worker planned as exchange-free")

    try_recv = send
    mark_finished = staticmethod(lambda idx: None)


def _drive_worker(gen):
    try:
        next(gen)
    except StopIteration as stop:
        return stop.value
    raise DeadlockDetected("worker generator blocked under a blocking fabric")


def _pick_error(outcomes) -> BaseException | None:
    """Deterministic error choice: lowest worker index, real faults first."""
    first_deadlock = None
    for out in outcomes:
        if out is not None and out[0] == "err":
            if isinstance(out[1], DeadlockDetected):
                first_deadlock = first_deadlock or out[1]
            else:
                return out[1]
    return first_deadlock


def exec_concur_parallel(machine: "Machine", ip: "InstrPlan", items: list) -> list:
    n = len(items)
    if n == 0:
        return []
    plan = ip.nested
    if plan.uses_exchange:
        return _run_exchange_threads(machine, plan, items)
    lanes = min(machine.worker_cap, n)
    elem_t = ip.in_types[0].elem
    if isinstance(elem_t, Collection):
        total = sum(plain_len(item, elem_t) for item in items)
    else:
        total = n
    if lanes > 1 and total >= machine.process_threshold and hasattr(os, "fork"):
        # more lanes than cores just adds fork and scheduling overhead
        lanes = min(lanes, os.cpu_count() or lanes)
        try:
            return _run_process_lanes(machine, plan, items, lanes)
        except (OSError, ValueError):  # fork unavailable: fall back to threads
            pass
    return _run_thread_lanes(machine, plan, items, lanes)


def _run_exchange_threads(machine: "Machine", plan: "ProgramPlan", items: list) -> list:
    from .interp import ExchangeContext

    n = len(items)
    fabric = ThreadFabric(n)
    outcomes: list = [None] * n

    def work(i: int) -> None:
        try:
            out = _drive_worker(machine._run_gen(plan, [items[i]], ExchangeContext(i, n, fabric), False))
            outcomes[i] = ("ok", out[0])
        except BaseException as exc:
            outcomes[i] = ("err", exc)
        finally:
            fabric.mark_finished(i)

    threads = [threading.Thread(target=work, args=(i,), daemon=True) for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    err = _pick_error(outcomes)
    if err is not None:
        raise err
    return [out[1] for out in outcomes]


def _run_thread_lanes(machine: "Machine", plan: "ProgramPlan", items: list, lanes: int) -> list:
    from .interp import ExchangeContext

    n = len(items)
    results: list = [None] * n
    outcomes: list = [None] * n

    def lane(start: int) -> None:
        for i in range(start, n, lanes):
            try:
                out = _drive_worker(machine._run_gen(plan, [items[i]], ExchangeContext(i, n, NoFabric()), False))
                results[i] = out[0]
                outcomes[i] = ("ok", None)
            except BaseException as exc:
                outcomes[i] = ("err", exc)
                return

    if lanes == 1:
        lane(0)
    else:
        threads = [threading.Thread(target=lane, args=(s,), daemon=True) for s in range(lanes)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    err = _pick_error(outcomes)
    if err is not None:
        raise err
    return results


def _run_process_lanes(machine: "Machine", plan: "ProgramPlan", items: list, lanes: int) -> list:
    from .interp import ExchangeContext

    ctx = multiprocessing.get_context("fork")
    result_q = ctx.SimpleQueue()
    n = len(items)
    bounds = _lane_slices(n, lanes)

    def run_lane(idx_list: list[int]) -> list:
        out = []
        for i in idx_list:
            r = _drive_worker(machine._run_gen(plan, [items[i]], ExchangeContext(i, n, NoFabric()), False))
            out.append((i, r[0]))
        return out

    def lane_main(idx_list: list[int]) -> None:
        try:
            result_q.put(("ok", run_lane(idx_list)))
        except ExecError as exc:
            result_q.put(("err", idx_list[0], exc))
        except BaseException as exc:  # non-engine faults: re-wrap so they pickle
            result_q.put(("err", idx_list[0], RuntimeTypeError(f"worker failed: {exc!r}")))

    # children take lanes 1.., the parent computes lane 0 while they run
    procs = [ctx.Process(target=lane_main, args=(idx,), daemon=True) for idx in bounds[1:] if idx]
    for p in procs:
        p.start()
    results: list = [None] * n
    first_err: tuple[int, BaseException] | None = None
    try:
        for i, r in run_lane(bounds[0]):
            results[i] = r
    except BaseException as exc:
        first_err = (bounds[0][0], exc)
    for _ in procs:
        msg = result_q.get()
        if msg[0] == "ok":
            for i, r in msg[1]:
                results[i] = r
        else:
            _, at, exc = msg
            if first_err is None or at < first_err[0]:
                first_err = (at, exc)
    for p in procs:
        p.join()
    if first_err is not None:
        raise first_err[1]
    return results


def _lane_slices(n: int, lanes: int) -> list[list[int]]:
    out: list[list[int]] = [[] for _ in range(lanes)]
    for i in range(n):
        out[i % lanes].append(i)
    return out
