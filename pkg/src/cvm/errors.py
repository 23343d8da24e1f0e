"""Exception hierarchy shared by the whole engine.

Static problems (type checking, registration, parsing) and runtime problems
(interpreter faults) are kept in separate branches so callers can map them to
distinct exit codes.
"""

from __future__ import annotations


class CvmError(Exception):
    """Base class for every engine-raised error."""


# --- static / front-of-pipeline errors ---------------------------------------


class TypeMismatch(CvmError):
    """Two values or types that were required to agree do not."""


class HeterogeneousCollection(CvmError):
    """A collection value whose elements do not share one item type."""


class MalformedValue(CvmError):
    """A value violating a structural invariant (Single arity, Set dedup, ...)."""


class TypeCheckError(CvmError):
    """Raised by expression or program type checking.

    `code` is a stable machine-readable discriminator, e.g. "UnknownField",
    "OperandTypeMismatch", "NonTupleFieldAccess", "UnknownOpcode",
    "KindMismatch", "ArityMismatch", "ExchangeOutsideConcur".
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class RegistryError(CvmError):
    """Flavor registration conflict (DuplicateFlavor / DuplicateOpcode)."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class NotDecomposable(CvmError):
    """Aggregate function with no known pre-aggregation/merge split."""


class PassFailed(CvmError):
    """A rewrite pass aborted; carries the pass name and the reason."""

    def __init__(self, pass_name: str, reason: str):
        super().__init__(f"pass {pass_name!r} failed: {reason}")
        self.pass_name = pass_name
        self.reason = reason


class LoweringUnsupported(PassFailed):
    """An instruction the lowering pass has no rule for."""

    def __init__(self, opcode: str):
        super().__init__("lower", f"no lowering rule for opcode {opcode!r}")
        self.opcode = opcode


class ParseError(CvmError):
    """Malformed document text; `where` is a JSON-path-ish location string."""

    def __init__(self, where: str, reason: str):
        super().__init__(f"parse error at {where}: {reason}")
        self.where = where
        self.reason = reason


class UnknownFormatVersion(ParseError):
    def __init__(self, version: object):
        super().__init__("format_version", f"unsupported version {version!r}")
        self.version = version


# --- runtime errors -----------------------------------------------------------


class ExecError(CvmError):
    """Base class for faults raised while running a program."""


class RuntimeTypeError(ExecError):
    """A dynamic shape/type violation the static checker cannot rule out."""


class DivisionByZero(ExecError):
    pass


class ArithmeticOverflow(ExecError):
    """64-bit signed integer arithmetic left [-2^63, 2^63)."""


class EmptyAggregate(ExecError):
    """min/max over an empty input has no defined result."""


class BudgetExhausted(ExecError):
    """The per-run instruction evaluation budget ran out."""


class DeadlockDetected(ExecError):
    """Every live worker of a concurrent group is blocked on a receive."""
