"""Command-line driver: check, rewrite, run, bench, gen.

Exit codes: 0 success, 1 validation/typecheck failure, 2 runtime error,
3 usage error. Failures print a machine-readable JSON object on stderr:
``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

from .errors import CvmError, ExecError, ParseError, PassFailed, TypeCheckError
from .flavors import builtin_registry, typecheck_program
from .interp import Machine, run_parallel, run_reference
from .program import Program, validate
from .rewrite import PassPipeline, run_pipeline
from .serialize import deserialize_values, load_document, serialize, serialize_values
from . import datagen, q6

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 3

WORKERS_ENV = "CVM_WORKERS"


class CliError(Exception):
    def __init__(self, exit_code: int, code: str, message: str):
        super().__init__(message)
        self.exit_code = exit_code
        self.code = code
        self.message = message


def _fail(exit_code: int, code: str, message: str):
    raise CliError(exit_code, code, message)


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        _fail(EXIT_USAGE, "FileError", f"cannot read {path}: {exc}")


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        _fail(EXIT_USAGE, "FileError", f"cannot write {path}: {exc}")


def _load_program(path: str) -> Program:
    try:
        return load_document(_read(path)).program
    except ParseError as exc:
        _fail(EXIT_CHECK, type(exc).__name__, str(exc))


def _check_program(p: Program):
    report = validate(p)
    if not report.ok:
        _fail(EXIT_CHECK, "ValidationFailed", str(report))
    try:
        typecheck_program(builtin_registry(), p)
    except TypeCheckError as exc:
        _fail(EXIT_CHECK, exc.code, exc.message)


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            _fail(EXIT_USAGE, "BadWorkers", f"{WORKERS_ENV}={env!r} is not an integer")
    return 4


def _cmd_check(args) -> int:
    p = _load_program(args.file)
    _check_program(p)
    print("ok")
    return EXIT_OK


def _cmd_rewrite(args) -> int:
    p = _load_program(args.file)
    pipeline = PassPipeline.parse(args.passes)
    try:
        result = run_pipeline(builtin_registry(), pipeline, p)
    except PassFailed as exc:
        _fail(EXIT_CHECK, "PassFailed", str(exc))
    except TypeCheckError as exc:
        _fail(EXIT_CHECK, exc.code, exc.message)
    if args.dump_dir:
        os.makedirs(args.dump_dir, exist_ok=True)
        for i, (name, prog) in enumerate(result.intermediates):
            _write(os.path.join(args.dump_dir, f"{i:02d}_{name}.json"), serialize(prog))
    text = serialize(result.program)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_run(args) -> int:
    p = _load_program(args.file)
    _check_program(p)
    try:
        inputs = deserialize_values(_read(args.input))
    except ParseError as exc:
        _fail(EXIT_CHECK, type(exc).__name__, str(exc))
    try:
        if args.backend == "ref":
            outputs = run_reference(builtin_registry(), p, inputs)
        else:
            outputs = run_parallel(builtin_registry(), p, inputs, worker_cap=_workers(args))
    except ExecError as exc:
        _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
    text = serialize_values(outputs)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def result_digest(outputs) -> str:
    return "sha256:" + hashlib.sha256(serialize_values(outputs).encode()).hexdigest()


@dataclass
class BenchReport:
    program: str
    backend: str
    workers: int
    rows: int
    seed: int
    warmup_ms: float
    rep_ms: list[float]
    mean_ms: float
    digest: str

    def to_json(self) -> dict:
        return {
            "program": self.program,
            "backend": self.backend,
            "workers": self.workers,
            "rows": self.rows,
            "seed": self.seed,
            "warmup_ms": self.warmup_ms,
            "rep_ms": self.rep_ms,
            "mean_ms": self.mean_ms,
            "result_digest": self.digest,
        }


def bench_q6(rows: int, workers: int, seed: int, reps: int) -> BenchReport:
    """Time the rewritten revenue query on the parallel backend.

    Runs `reps` repetitions (at least 4) and discards the first as warm-up;
    the reported mean covers the remaining repetitions.
    """
    if reps < 4:
        raise ValueError("reps must be >= 4 (first repetition is discarded as warm-up)")
    registry = builtin_registry()
    pipeline = PassPipeline.parse(f"parallelize:{workers},lower,extract_pipelines")
    rewritten = run_pipeline(registry, pipeline, q6.q6_program()).program
    dataset = datagen.gen_lineitem(datagen.DatasetSpec("lineitem", rows, seed))
    times: list[float] = []
    outputs = None
    for _ in range(reps):
        machine = Machine(registry, mode="mt", worker_cap=workers)
        t0 = time.perf_counter()
        outputs = machine.run(rewritten, [dataset.physical])
        times.append((time.perf_counter() - t0) * 1000.0)
    rep_ms = times[1:]
    return BenchReport(
        program="q6",
        backend="mt",
        workers=workers,
        rows=rows,
        seed=seed,
        warmup_ms=times[0],
        rep_ms=rep_ms,
        mean_ms=sum(rep_ms) / len(rep_ms),
        digest=result_digest(outputs),
    )


def _cmd_bench(args) -> int:
    if args.workload != "q6":
        _fail(EXIT_USAGE, "UnknownWorkload", f"unknown bench workload {args.workload!r}")
    try:
        report = bench_q6(args.rows, _workers(args), args.seed, args.reps)
    except ValueError as exc:
        _fail(EXIT_USAGE, "BadArguments", str(exc))
    except ExecError as exc:
        _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
    json.dump(report.to_json(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_gen(args) -> int:
    if args.table != "lineitem":
        _fail(EXIT_USAGE, "UnknownTable", f"unknown table {args.table!r}")
    try:
        spec = datagen.DatasetSpec(args.table, args.rows, args.seed)
    except ValueError as exc:
        _fail(EXIT_USAGE, "BadArguments", str(exc))
    dataset = datagen.gen_lineitem(spec)
    view = dataset.physical if args.layout == "vec" else dataset.bag
    text = serialize_values([view])
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvm", description="Collection-oriented IR compiler and runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="validate and typecheck a program document")
    p_check.add_argument("file")
    p_check.set_defaults(fn=_cmd_check)

    p_rw = sub.add_parser("rewrite", help="apply rewrite passes to a program document")
    p_rw.add_argument("file")
    p_rw.add_argument("--passes", required=True, help="e.g. parallelize:4,lower,extract_pipelines")
    p_rw.add_argument("-o", "--output")
    p_rw.add_argument("--dump-dir", help="write the intermediate program after every pass")
    p_rw.set_defaults(fn=_cmd_rewrite)

    p_run = sub.add_parser("run", help="execute a program document")
    p_run.add_argument("file")
    p_run.add_argument("--backend", choices=("ref", "mt"), default="ref")
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--input", required=True, help="JSON file with one value per program parameter")
    p_run.add_argument("--output")
    p_run.set_defaults(fn=_cmd_run)

    p_bench = sub.add_parser("bench", help="run a bundled benchmark workload")
    p_bench.add_argument("workload", choices=("q6",))
    p_bench.add_argument("--rows", type=int, default=100_000)
    p_bench.add_argument("--workers", type=int)
    p_bench.add_argument("--seed", type=int, default=1)
    p_bench.add_argument("--reps", type=int, default=4)
    p_bench.set_defaults(fn=_cmd_bench)

    p_gen = sub.add_parser("gen", help="generate a deterministic dataset")
    p_gen.add_argument("table", choices=("lineitem",))
    p_gen.add_argument("--rows", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--layout", choices=("vec", "bag"), default="vec")
    p_gen.add_argument("-o", "--output")
    p_gen.set_defaults(fn=_cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except CliError as exc:
        json.dump({"error": {"code": exc.code, "message": exc.message}}, sys.stderr)
        sys.stderr.write("\n")
        return exc.exit_code
    except CvmError as exc:  # anything not mapped above is a runtime fault
        json.dump({"error": {"code": type(exc).__name__, "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
