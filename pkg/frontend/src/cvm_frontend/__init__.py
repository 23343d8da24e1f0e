"""Dataflow frontend for the cvm engine: build documents, drive the CLI."""

from .builder import Dataflow, LINEITEM_FIELDS, SchemaError, build_q6
from .documents import documents_structurally_equal
from .engine import BIN_ENV, EngineError, EngineHandle, result_rows
from .expressions import Expr, col, date, if_then_else, input_item, lit

__all__ = [
    "BIN_ENV",
    "Dataflow",
    "EngineError",
    "EngineHandle",
    "Expr",
    "LINEITEM_FIELDS",
    "SchemaError",
    "build_q6",
    "col",
    "date",
    "documents_structurally_equal",
    "if_then_else",
    "input_item",
    "lit",
    "result_rows",
]
