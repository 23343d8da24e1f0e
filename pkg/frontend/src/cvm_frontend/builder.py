"""Fluent dataflow builder emitting self-contained engine documents.

A Dataflow wraps an immutable chain of operations over one source table; each
method returns a new Dataflow. `document()` serializes the chain as a program
document the engine CLI accepts. Register allocation is monotone, so the same
chain always produces byte-identical output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .expressions import DOMAINS, Expr, col, date, lit

FORMAT_VERSION = 1
HIGHLEVEL = "highlevel"

LINEITEM_FIELDS = (
    ("l_shipdate", "date"),
    ("l_discount", "float64"),
    ("l_quantity", "float64"),
    ("l_eprice", "float64"),
    ("l_disc", "float64"),
)


class SchemaError(Exception):
    """The declared input schema cannot support the requested plan."""


def _tuple_type(schema) -> dict:
    fields = []
    for name, domain in schema:
        if domain not in DOMAINS:
            raise SchemaError(f"unknown domain {domain!r} for field {name!r}")
        fields.append([name, {"kind": "atom", "domain": domain}])
    return {"kind": "tuple", "fields": fields}


def _collection(coll: str, elem: dict) -> dict:
    return {"kind": "collection", "coll": coll, "elem": elem}


@dataclass(frozen=True)
class Dataflow:
    """An immutable chain of instructions over a single source collection."""

    source_name: str
    schema: tuple[tuple[str, str], ...]
    body: tuple[dict, ...] = ()
    next_reg: int = 0
    last: str = ""

    @staticmethod
    def source(name: str, schema) -> "Dataflow":
        schema = tuple((n, d) for n, d in schema)
        if not schema:
            raise SchemaError("a source needs at least one field")
        names = [n for n, _ in schema]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate fields in schema: {names}")
        return Dataflow(name, schema, (), 0, name)

    def _emit(self, op: str, params: list[dict]) -> "Dataflow":
        out = f"t{self.next_reg}"
        ins = {"op": op, "flavor": HIGHLEVEL, "params": params, "in": [self.last], "out": [out]}
        return Dataflow(self.source_name, self.schema, self.body + (ins,), self.next_reg + 1, out)

    def filter(self, predicate: Expr) -> "Dataflow":
        return self._emit("Select", [{"kind": "expr", "expr": predicate.json()}])

    def select_extended(self, **named_exprs: Expr) -> "Dataflow":
        fields = [[name, e.json()] for name, e in named_exprs.items()]
        mk = {"kind": "make_tuple", "fields": fields}
        return self._emit("ExProj", [{"kind": "expr", "expr": mk}])

    def map_rows(self, expr: Expr) -> "Dataflow":
        return self._emit("Map", [{"kind": "expr", "expr": expr.json()}])

    def project(self, *names: str) -> "Dataflow":
        items = [{"kind": "atom", "domain": "text", "value": n} for n in names]
        const = {
            "kind": "collection",
            "coll": "seq",
            "elem_type": {"kind": "atom", "domain": "text"},
            "items": items,
        }
        return self._emit("Proj", [{"kind": "const", "value": const}])

    def aggregate(self, *specs: tuple[str, str, str]) -> "Dataflow":
        spec_objs = [
            {"input_field": i, "function": fn, "output_field": o} for i, fn, o in specs
        ]
        return self._emit("Aggr", [{"kind": "aggspecs", "specs": spec_objs}])

    def document(self) -> dict:
        body = list(self.body) + [
            {"op": "Return", "flavor": "core", "params": [], "in": [self.last], "out": []}
        ]
        return {
            "format_version": FORMAT_VERSION,
            "flavors_used": [HIGHLEVEL],
            "program": {
                "params": [
                    {
                        "id": self.source_name,
                        "type": _collection("bag", _tuple_type(self.schema)),
                    }
                ],
                "pipeline": False,
                "body": body,
            },
        }

    def document_text(self) -> str:
        return json.dumps(self.document(), indent=2) + "\n"

    # -- input data helpers (building inputs is not computing results) ------------

    def dataset_document(self, rows: list[dict], layout: str = "bag") -> dict:
        """Serialize rows (dicts keyed by field name) as a run input file."""
        elem_type = _tuple_type(self.schema)
        items = []
        for row in rows:
            fields = []
            for name, domain in self.schema:
                if name not in row:
                    raise SchemaError(f"row lacks field {name!r}")
                fields.append([name, {"kind": "atom", "domain": domain, "value": row[name]}])
            items.append({"kind": "tuple", "fields": fields})
        if layout == "bag":
            value = {"kind": "collection", "coll": "bag", "elem_type": elem_type, "items": items}
        elif layout == "vec":
            vec = {"kind": "collection", "coll": "vec", "elem_type": elem_type, "items": items}
            value = {
                "kind": "collection",
                "coll": "single",
                "elem_type": _collection("vec", elem_type),
                "items": [vec],
            }
        else:
            raise SchemaError(f"unknown layout {layout!r}")
        return {"format_version": FORMAT_VERSION, "values": [value]}


def build_q6(schema=LINEITEM_FIELDS) -> dict:
    """The revenue query over a lineitem-shaped schema.

    The schema must provide the five lineitem fields; extra fields are
    permitted (the plan projects what it needs).
    """
    schema = tuple((n, d) for n, d in schema)
    declared = {n: d for n, d in schema}
    missing = [n for n, _ in LINEITEM_FIELDS if n not in declared]
    if missing:
        raise SchemaError(f"schema lacks lineitem fields: {missing}")
    predicate = (
        (col("l_shipdate") >= date(8766))
        & (col("l_shipdate") < date(9131))
        & (col("l_discount") >= lit(0.05))
        & (col("l_discount") <= lit(0.07))
        & (col("l_quantity") < lit(24.0))
    )
    flow = (
        Dataflow.source("lineitem", schema)
        .filter(predicate)
        .select_extended(x=col("l_eprice") * col("l_disc"))
        .aggregate(("x", "sum", "revenue"))
    )
    return flow.document()
