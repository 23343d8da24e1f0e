"""Programs: linear SSA instruction sequences over typed registers.

A program declares typed parameter registers and a body of instructions; the
last instruction must be the structural `Return` terminator naming the result
registers. Registers never leak into nested programs - data crosses nesting
boundaries only through instruction inputs and outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .types import Collection, ItemType, htab_type_problems, walk_type
from .values import Value

RETURN_OP = "Return"
#: Flavor name used for the structural Return terminator.
CORE_FLAVOR = "core"


@dataclass(frozen=True, slots=True)
class Register:
    id: str
    type: ItemType


class Param:
    """Base class for instruction parameters."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class ConstItem(Param):
    value: Value


@dataclass(frozen=True, slots=True)
class NestedProgram(Param):
    program: "Program"


@dataclass(frozen=True, slots=True)
class ExprParam(Param):
    expr: object  # ScalarExpr; kept loose to avoid an import cycle


@dataclass(frozen=True, slots=True)
class AggSpecParam(Param):
    specs: tuple  # tuple[AggregateSpec, ...]


@dataclass(frozen=True, slots=True)
class Instruction:
    opcode: str
    flavor: str
    params: tuple[Param, ...] = ()
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class Program:
    params: tuple[Register, ...]
    body: tuple[Instruction, ...]
    pipeline: bool = False

    @property
    def return_instruction(self) -> Instruction | None:
        if self.body and self.body[-1].opcode == RETURN_OP:
            return self.body[-1]
        return None

    def nested_programs(self):
        for instr in self.body:
            for p in instr.params:
                if isinstance(p, NestedProgram):
                    yield instr, p.program


def ret(*registers: str) -> Instruction:
    return Instruction(RETURN_OP, CORE_FLAVOR, (), tuple(registers), ())


def instr(
    opcode: str,
    flavor: str,
    params: tuple[Param, ...] | list = (),
    inputs: tuple[str, ...] | list = (),
    outputs: tuple[str, ...] | list = (),
) -> Instruction:
    return Instruction(opcode, flavor, tuple(params), tuple(inputs), tuple(outputs))


def program(params, body, pipeline: bool = False) -> Program:
    return Program(tuple(params), tuple(body), pipeline)


# --- validation -----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Violation:
    kind: str  # Reassignment | UseBeforeDef | MissingReturn | MisplacedReturn | DuplicateRegister | MalformedType
    where: str  # path like "body[3]" or "body[1].param[0].body[0]"
    detail: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, where: str, detail: str) -> None:
        self.violations.append(Violation(kind, where, detail))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def _check_type(t: ItemType, where: str, report: ValidationReport) -> None:
    for sub in walk_type(t):
        if isinstance(sub, Collection):
            for problem in htab_type_problems(sub):
                report.add("MalformedType", where, problem)


def _validate_into(p: Program, prefix: str, report: ValidationReport) -> None:
    defined: set[str] = set()
    for i, reg in enumerate(p.params):
        where = f"{prefix}params[{i}]"
        if not reg.id:
            report.add("DuplicateRegister", where, "empty register id")
        if reg.id in defined:
            report.add("DuplicateRegister", where, f"parameter {reg.id!r} declared twice")
        defined.add(reg.id)
        _check_type(reg.type, where, report)

    saw_return = False
    for i, ins in enumerate(p.body):
        where = f"{prefix}body[{i}]"
        if saw_return:
            report.add("MisplacedReturn", where, "instruction appears after Return")
        if ins.opcode == RETURN_OP:
            if ins.outputs:
                report.add("MisplacedReturn", where, "Return assigns no outputs")
            if i != len(p.body) - 1:
                report.add("MisplacedReturn", where, "Return must be the final instruction")
            saw_return = True
        for rid in ins.inputs:
            if rid not in defined:
                report.add("UseBeforeDef", where, f"register {rid!r} read before assignment")
        seen_out: set[str] = set()
        for rid in ins.outputs:
            if rid in defined or rid in seen_out:
                report.add("Reassignment", where, f"register {rid!r} assigned more than once")
            seen_out.add(rid)
        defined |= seen_out
        for j, par in enumerate(ins.params):
            pwhere = f"{where}.param[{j}]"
            if isinstance(par, NestedProgram):
                _validate_into(par.program, pwhere + ".", report)
            elif isinstance(par, ConstItem):
                from .values import type_of  # local import: values does not import program

                try:
                    _check_type(type_of(par.value), pwhere, report)
                except Exception as exc:  # heterogeneous / malformed constants
                    report.add("MalformedType", pwhere, str(exc))

    if not p.body or p.body[-1].opcode != RETURN_OP:
        report.add("MissingReturn", f"{prefix}body", "program must end with Return")


def validate(p: Program) -> ValidationReport:
    """Collect every SSA/structural violation; an empty report means valid."""
    report = ValidationReport()
    _validate_into(p, "", report)
    return report
