"""Structural comparison of program documents.

Two documents are structurally equal when they are identical up to a
consistent renaming of register ids. Everything is JSON-level: this package
never loads the engine's in-memory program representation.
"""

from __future__ import annotations


def documents_structurally_equal(a: dict, b: dict) -> bool:
    if a.get("format_version") != b.get("format_version"):
        return False
    if list(a.get("flavors_used", [])) != list(b.get("flavors_used", [])):
        return False
    return _programs_equal(a.get("program", {}), b.get("program", {}))


def _programs_equal(pa: dict, pb: dict) -> bool:
    if bool(pa.get("pipeline")) != bool(pb.get("pipeline")):
        return False
    params_a = pa.get("params", [])
    params_b = pb.get("params", [])
    body_a = pa.get("body", [])
    body_b = pb.get("body", [])
    if len(params_a) != len(params_b) or len(body_a) != len(body_b):
        return False
    fwd: dict[str, str] = {}
    bwd: dict[str, str] = {}

    def bind(x: str, y: str) -> bool:
        if x in fwd or y in bwd:
            return False
        fwd[x] = y
        bwd[y] = x
        return True

    for ra, rb in zip(params_a, params_b):
        if ra.get("type") != rb.get("type") or not bind(ra.get("id"), rb.get("id")):
            return False
    for ia, ib in zip(body_a, body_b):
        if ia.get("op") != ib.get("op") or ia.get("flavor") != ib.get("flavor"):
            return False
        pas, pbs = ia.get("params", []), ib.get("params", [])
        if len(pas) != len(pbs):
            return False
        for xa, xb in zip(pas, pbs):
            if xa.get("kind") != xb.get("kind"):
                return False
            if xa.get("kind") == "program":
                if not _programs_equal(xa.get("program", {}), xb.get("program", {})):
                    return False
            elif xa != xb:
                return False
        ins_a, ins_b = ia.get("in", []), ib.get("in", [])
        outs_a, outs_b = ia.get("out", []), ib.get("out", [])
        if len(ins_a) != len(ins_b) or len(outs_a) != len(outs_b):
            return False
        for x, y in zip(ins_a, ins_b):
            if fwd.get(x) != y:
                return False
        for x, y in zip(outs_a, outs_b):
            if not bind(x, y):
                return False
    return True
