"""cvm: an extensible compiler framework for collection-oriented IRs.

Programs are linear SSA instruction sequences over registers holding nested
collections. Instruction sets ("flavors") are registrable; rewrite passes
transform programs between flavors; two backends execute them: a deterministic
reference interpreter and a parallel backend with concurrent workers and fused
pipelines.
"""

from .errors import CvmError
from .exprs import AggregateSpec, decompose_aggregate, eval_expr, fields_referenced, typecheck_expr
from .flavors import Flavor, FlavorRegistry, InstructionSignature, builtin_registry, register_flavor, typecheck_program
from .interp import Machine, StepBudget, exec_build_htable, run_parallel, run_reference
from .pipeline import exec_pipeline
from .program import Instruction, Program, Register, validate
from .rewrite import (
    PassPipeline,
    extract_pipelines,
    lower,
    parallelize,
    run_pipeline,
    structural_equal,
)
from .serialize import deserialize, load_document, serialize
from .types import AtomDomain, Collection, ItemType, Tuple
from .values import Value, canonical_compare, type_of

__all__ = [
    "AggregateSpec",
    "AtomDomain",
    "Collection",
    "CvmError",
    "Flavor",
    "FlavorRegistry",
    "Instruction",
    "InstructionSignature",
    "ItemType",
    "Machine",
    "PassPipeline",
    "Program",
    "Register",
    "StepBudget",
    "Tuple",
    "Value",
    "builtin_registry",
    "canonical_compare",
    "decompose_aggregate",
    "deserialize",
    "eval_expr",
    "exec_build_htable",
    "exec_pipeline",
    "extract_pipelines",
    "fields_referenced",
    "load_document",
    "lower",
    "parallelize",
    "register_flavor",
    "run_parallel",
    "run_pipeline",
    "run_reference",
    "serialize",
    "structural_equal",
    "type_of",
    "typecheck_expr",
    "typecheck_program",
    "validate",
]
