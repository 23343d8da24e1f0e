"""Runtime values and their canonical ordering.

Two representations coexist:

* `Value` objects - immutable dataclasses mirroring the type grammar. They are
  the API/serialization surface and what instruction parameters embed.
* "plain" values - plumbing used by the interpreters: atoms become Python
  scalars, tuples become positional `tuple`s, collections become lists (or the
  compact `VecRows` / `KdArr` / `HTabRep` carriers). Static item types from the
  type checker make the plain form unambiguous.

Large vectors of fixed-width records can be backed by numpy columns; rows are
decoded lazily and in chunks so a multi-million-row scan never materializes
per-row objects up front.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import HeterogeneousCollection, MalformedValue, TypeMismatch
from .types import (
    Atom,
    AtomDomain,
    Collection,
    CollectionKind,
    CollKind,
    ItemType,
    Tuple,
    htab_type_problems,
)

_I64_MIN = -(2**63)
_I64_MAX = 2**63 - 1

_NUMPY_DTYPES = {
    AtomDomain.BOOL: np.bool_,
    AtomDomain.INT64: np.int64,
    AtomDomain.DATE: np.int64,
    AtomDomain.FLOAT64: np.float64,
}


class Value:
    """Base class; concrete variants are AtomValue, TupleValue, CollectionValue."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class AtomValue(Value):
    domain: AtomDomain
    payload: bool | int | float | str

    def __post_init__(self) -> None:
        p = self.payload
        d = self.domain
        ok = (
            (d is AtomDomain.BOOL and type(p) is bool)
            or (d in (AtomDomain.INT64, AtomDomain.DATE) and type(p) is int and _I64_MIN <= p <= _I64_MAX)
            or (d is AtomDomain.FLOAT64 and type(p) is float)
            or (d is AtomDomain.TEXT and type(p) is str)
        )
        if not ok:
            raise MalformedValue(f"payload {p!r} does not inhabit domain {d.value}")


@dataclass(frozen=True, slots=True)
class TupleValue(Value):
    fields: tuple[tuple[str, Value], ...]

    def field(self, name: str) -> Value:
        for n, v in self.fields:
            if n == name:
                return v
        raise KeyError(name)


@dataclass(frozen=True, eq=False)
class CollectionValue(Value):
    """A collection with a mandatory element-type annotation.

    The annotation makes typing of empty collections deterministic. `extents`
    is only meaningful for KDSeq values (row-major element order). Items may be
    any sequence of Values, including a lazy columnar view.
    """

    kind: CollectionKind
    elem_type: ItemType
    items: Sequence[Value]
    extents: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        tag = self.kind.tag
        n = len(self.items)
        if tag is CollKind.SINGLE and n != 1:
            raise MalformedValue(f"Single must hold exactly 1 element, got {n}")
        if tag is CollKind.ARRAYN and n != self.kind.param:
            raise MalformedValue(f"Array{self.kind.param} must hold exactly {self.kind.param} elements, got {n}")
        if tag is CollKind.KDSEQ:
            if self.extents is None or len(self.extents) != self.kind.param:
                raise MalformedValue(f"{self.kind} value needs {self.kind.param} extents")
            if any(e < 0 for e in self.extents):
                raise MalformedValue("negative extent")
            if math.prod(self.extents) != n:
                raise MalformedValue(f"extent product {math.prod(self.extents)} != element count {n}")
        elif self.extents is not None:
            raise MalformedValue(f"{self.kind} values carry no extents")
        problems = htab_type_problems(Collection(self.kind, self.elem_type))
        if problems:
            raise MalformedValue("; ".join(problems))
        if tag is CollKind.SET:
            keys = [canonical_key(v, self.elem_type) for v in self.items]
            if len(set(keys)) != len(keys):
                raise MalformedValue("Set value contains canonically equal elements")
            order = sorted(range(len(keys)), key=keys.__getitem__)
            if order != list(range(len(keys))):
                object.__setattr__(self, "items", tuple(self.items[i] for i in order))

    def __eq__(self, other: object) -> bool:  # structural, not canonical
        return (
            isinstance(other, CollectionValue)
            and self.kind == other.kind
            and self.elem_type == other.elem_type
            and self.extents == other.extents
            and len(self.items) == len(other.items)
            and all(a == b for a, b in zip(self.items, other.items))
        )


def atom_value(domain: AtomDomain, payload) -> AtomValue:
    if domain is AtomDomain.FLOAT64 and type(payload) is int:
        payload = float(payload)
    return AtomValue(domain, payload)


def tuple_value(*fields: tuple[str, Value]) -> TupleValue:
    return TupleValue(tuple(fields))


def collection_value(
    kind: CollectionKind,
    elem_type: ItemType,
    items: Sequence[Value],
    extents: tuple[int, ...] | None = None,
) -> CollectionValue:
    if not isinstance(items, (tuple, ColumnarItems)):
        items = tuple(items)
    return CollectionValue(kind, elem_type, items, extents)


# --- typing of values ---------------------------------------------------------


def type_of(value: Value) -> ItemType:
    """The unique ItemType of a value; deep-checks collection homogeneity."""
    if isinstance(value, AtomValue):
        return Atom(value.domain)
    if isinstance(value, TupleValue):
        return Tuple(tuple((n, type_of(v)) for n, v in value.fields))
    if isinstance(value, CollectionValue):
        if not isinstance(value.items, ColumnarItems):  # columnar is homogeneous by construction
            for i, item in enumerate(value.items):
                t = type_of(item)
                if t != value.elem_type:
                    raise HeterogeneousCollection(
                        f"element {i} has type {t}, collection is annotated {value.elem_type}"
                    )
        return Collection(value.kind, value.elem_type)
    raise TypeError(f"not a Value: {value!r}")


# --- canonical ordering ---------------------------------------------------------


def _float_key(f: float) -> int:
    """Monotone integer encoding of binary64 total order; NaN greatest, -0 < +0."""
    if math.isnan(f):
        return 2**63
    bits = struct.unpack("<q", struct.pack("<d", f))[0]
    if bits >= 0:
        return bits
    return -(bits & 0x7FFFFFFFFFFFFFFF) - 1


def _atom_key(domain: AtomDomain, payload):
    if domain is AtomDomain.FLOAT64:
        return _float_key(payload)
    if domain is AtomDomain.BOOL:
        return int(payload)
    return payload  # int64/date ints, text str


def canonical_key_plain(plain, t: ItemType):
    """A nested tuple key implementing the canonical total order on plain values."""
    if isinstance(t, Atom):
        return _atom_key(t.domain, plain)
    if isinstance(t, Tuple):
        return tuple(canonical_key_plain(p, ft) for p, (_, ft) in zip(plain, t.fields))
    assert isinstance(t, Collection)
    tag = t.kind.tag
    if tag is CollKind.KDSEQ:
        return (plain.extents, tuple(canonical_key_plain(p, t.elem) for p in plain.items))
    if tag is CollKind.HTAB:
        key_t = t.elem.field_type("key")
        val_t = t.elem.field_type("val")
        return tuple(
            (canonical_key_plain(k, key_t), tuple(sorted(canonical_key_plain(v, val_t) for v in vals)))
            for k, vals in plain.sorted_groups()
        )
    elem_keys = tuple(canonical_key_plain(p, t.elem) for p in iter_plain(plain, t))
    if tag in (CollKind.SET, CollKind.BAG):
        return tuple(sorted(elem_keys))
    return elem_keys  # seq / vec / single / arrayn: positional


def canonical_key(value: Value, t: ItemType | None = None):
    if t is None:
        t = type_of(value)
    return canonical_key_plain(to_plain(value, t), t)


def canonical_compare(a: Value, b: Value) -> int:
    """Total order over same-typed values: -1, 0, or 1.

    Set/Bag compare as sorted multisets; ordered kinds compare lexicographically;
    atoms by domain-native order with the binary64 total-order convention.
    """
    ta, tb = type_of(a), type_of(b)
    if ta != tb:
        raise TypeMismatch(f"cannot compare {ta} with {tb}")
    ka, kb = canonical_key(a, ta), canonical_key(b, tb)
    return -1 if ka < kb else (1 if ka > kb else 0)


# --- compact plain carriers -----------------------------------------------------

_DECODE_CHUNK = 8192


@dataclass(frozen=True, slots=True)
class Columns:
    """Column-major storage of a vector of fixed-width records."""

    schema: tuple[tuple[str, AtomDomain], ...]
    arrays: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        lengths = {len(a) for a in self.arrays}
        if len(self.arrays) != len(self.schema) or len(lengths) > 1:
            raise MalformedValue("ragged or mis-shaped column set")

    @property
    def length(self) -> int:
        return len(self.arrays[0]) if self.arrays else 0

    def row(self, i: int) -> tuple:
        return tuple(a[i].item() for a in self.arrays)

    def iter_rows(self) -> Iterator[tuple]:
        n = self.length
        for lo in range(0, n, _DECODE_CHUNK):
            hi = min(lo + _DECODE_CHUNK, n)
            yield from zip(*(a[lo:hi].tolist() for a in self.arrays))

    def slice(self, lo: int, hi: int) -> Columns:
        return Columns(self.schema, tuple(a[lo:hi] for a in self.arrays))


class VecRows:
    """Plain representation of a Vec: row-backed or column-backed."""

    __slots__ = ("rows", "cols")

    def __init__(self, rows: list | None = None, cols: Columns | None = None):
        if (rows is None) == (cols is None):
            raise ValueError("exactly one of rows/cols")
        self.rows = rows
        self.cols = cols

    def __len__(self) -> int:
        return len(self.rows) if self.rows is not None else self.cols.length

    def __getitem__(self, i: int):
        return self.rows[i] if self.rows is not None else self.cols.row(i)

    def __iter__(self):
        if self.rows is not None:
            return iter(self.rows)
        return self.cols.iter_rows()

    def slice(self, lo: int, hi: int) -> VecRows:
        if self.rows is not None:
            return VecRows(rows=self.rows[lo:hi])
        return VecRows(cols=self.cols.slice(lo, hi))


@dataclass(frozen=True, slots=True)
class KdArr:
    """Plain k-dimensional sequence: extents plus row-major elements."""

    extents: tuple[int, ...]
    items: list


class HTabRep:
    """Plain hash table: values grouped per canonical key.

    `key_index` records which position the key holds in the element tuple's
    declared field order, so iteration reproduces elements exactly.
    """

    __slots__ = ("key_type", "val_type", "key_index", "groups")

    def __init__(self, key_type: ItemType, val_type: ItemType, key_index: int = 0):
        self.key_type = key_type
        self.val_type = val_type
        self.key_index = key_index
        self.groups: dict = {}  # canonical key -> (key_plain, [val_plain, ...])

    def add(self, key_plain, val_plain) -> None:
        ck = canonical_key_plain(key_plain, self.key_type)
        entry = self.groups.get(ck)
        if entry is None:
            self.groups[ck] = (key_plain, [val_plain])
        else:
            entry[1].append(val_plain)

    def lookup(self, key_plain) -> list:
        entry = self.groups.get(canonical_key_plain(key_plain, self.key_type))
        return entry[1] if entry is not None else []

    def sorted_groups(self):
        """(key_plain, vals) pairs in canonical key order."""
        for ck in sorted(self.groups):
            yield self.groups[ck]

    def __len__(self) -> int:
        return sum(len(vals) for _, vals in self.groups.values())

    def iter_pairs(self) -> Iterator[tuple]:
        """Element tuples in canonical key order, fields in declared order."""
        key_first = self.key_index == 0
        for k, vals in self.sorted_groups():
            for v in vals:
                yield (k, v) if key_first else (v, k)


def iter_plain(plain, t: ItemType) -> Iterator:
    """Iterate a plain collection's elements, whatever its carrier."""
    tag = t.kind.tag
    if tag is CollKind.HTAB:
        return plain.iter_pairs()
    if tag is CollKind.KDSEQ:
        return iter(plain.items)
    return iter(plain)  # list or VecRows


def plain_len(plain, t: ItemType) -> int:
    if t.kind.tag is CollKind.KDSEQ:
        return len(plain.items)
    return len(plain)


# --- Value <-> plain conversions -------------------------------------------------


class ColumnarItems(Sequence[Value]):
    """Lazy Sequence[Value] view over columnar storage (flat tuple elements)."""

    __slots__ = ("cols", "elem_type")

    def __init__(self, cols: Columns, elem_type: Tuple):
        self.cols = cols
        self.elem_type = elem_type

    def __len__(self) -> int:
        return self.cols.length

    def __getitem__(self, i: int) -> Value:
        if isinstance(i, slice):
            raise TypeError("slice of ColumnarItems not supported")
        row = self.cols.row(i)
        return TupleValue(
            tuple((n, AtomValue(d, p)) for (n, d), p in zip(self.cols.schema, row))
        )

    def __iter__(self) -> Iterator[Value]:
        schema = self.cols.schema
        for row in self.cols.iter_rows():
            yield TupleValue(tuple((n, AtomValue(d, p)) for (n, d), p in zip(schema, row)))


def columns_schema(t: Tuple) -> tuple[tuple[str, AtomDomain], ...]:
    schema = []
    for name, ft in t.fields:
        if not isinstance(ft, Atom) or ft.domain is AtomDomain.TEXT:
            raise MalformedValue(f"field {name!r} of {t} cannot be column-backed")
        schema.append((name, ft.domain))
    return tuple(schema)


def columnar_vec_value(t: Tuple, arrays: dict[str, np.ndarray]) -> CollectionValue:
    """Build a Vec<flat tuple> Value backed by numpy columns."""
    schema = columns_schema(t)
    cols = Columns(schema, tuple(np.asarray(arrays[n], dtype=_NUMPY_DTYPES[d]) for n, d in schema))
    return CollectionValue(CollectionKind(CollKind.VEC), t, ColumnarItems(cols, t))


def to_plain(value: Value, t: ItemType):
    if isinstance(t, Atom):
        return value.payload
    if isinstance(t, Tuple):
        return tuple(to_plain(v, ft) for (_, v), (_n, ft) in zip(value.fields, t.fields))
    assert isinstance(t, Collection)
    tag = t.kind.tag
    if tag is CollKind.VEC:
        if isinstance(value.items, ColumnarItems):
            return VecRows(cols=value.items.cols)
        return VecRows(rows=[to_plain(v, t.elem) for v in value.items])
    if tag is CollKind.KDSEQ:
        return KdArr(value.extents, [to_plain(v, t.elem) for v in value.items])
    if tag is CollKind.HTAB:
        ki = t.elem.field_index("key")
        vi = t.elem.field_index("val")
        rep = HTabRep(t.elem.field_type("key"), t.elem.field_type("val"), ki)
        for v in value.items:
            p = to_plain(v, t.elem)
            rep.add(p[ki], p[vi])
        return rep
    return [to_plain(v, t.elem) for v in value.items]


def from_plain(plain, t: ItemType) -> Value:
    if isinstance(t, Atom):
        if t.domain is AtomDomain.BOOL:
            plain = bool(plain)
        elif t.domain is AtomDomain.FLOAT64:
            plain = float(plain)
        return AtomValue(t.domain, plain)
    if isinstance(t, Tuple):
        return TupleValue(tuple((n, from_plain(p, ft)) for p, (n, ft) in zip(plain, t.fields)))
    assert isinstance(t, Collection)
    tag = t.kind.tag
    if tag is CollKind.VEC:
        if isinstance(plain, VecRows) and plain.cols is not None:
            return CollectionValue(t.kind, t.elem, ColumnarItems(plain.cols, t.elem))
        return CollectionValue(t.kind, t.elem, tuple(from_plain(p, t.elem) for p in plain))
    if tag is CollKind.KDSEQ:
        return CollectionValue(t.kind, t.elem, tuple(from_plain(p, t.elem) for p in plain.items), plain.extents)
    if tag is CollKind.HTAB:
        return CollectionValue(t.kind, t.elem, tuple(from_plain(p, t.elem) for p in plain.iter_pairs()))
    return CollectionValue(t.kind, t.elem, tuple(from_plain(p, t.elem) for p in plain))
