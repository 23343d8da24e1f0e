"""Item types: the recursive grammar of atoms, tuples, and collections.

An item is an atom, a tuple of items, or a collection of items. Types are
immutable, hashable, and structurally compared, so they can key caches and be
shared freely between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class AtomDomain(enum.Enum):
    """Closed set of atomic value domains.

    Date is stored as Int64 epoch days; it is ordered but not arithmetic.
    """

    BOOL = "bool"
    INT64 = "int64"
    FLOAT64 = "float64"
    DATE = "date"
    TEXT = "text"

    @property
    def is_numeric(self) -> bool:
        return self in (AtomDomain.INT64, AtomDomain.FLOAT64)


class CollKind(enum.Enum):
    """Collection kind tags; KDSEQ and ARRAYN carry a static size parameter."""

    SET = "set"
    BAG = "bag"
    SEQ = "seq"
    KDSEQ = "kdseq"
    VEC = "vec"
    SINGLE = "single"
    ARRAYN = "arrayn"
    HTAB = "htab"


@dataclass(frozen=True, slots=True)
class CollectionKind:
    """A collection kind together with its static parameter, if any.

    KDSEQ's param is the dimensionality k >= 1; ARRAYN's param is the fixed
    element count n >= 1. Every other kind carries no parameter.
    """

    tag: CollKind
    param: int | None = None

    def __post_init__(self) -> None:
        if self.tag in (CollKind.KDSEQ, CollKind.ARRAYN):
            if not isinstance(self.param, int) or self.param < 1:
                raise ValueError(f"{self.tag.value} requires a positive size parameter")
        elif self.param is not None:
            raise ValueError(f"{self.tag.value} takes no parameter")

    def __str__(self) -> str:
        if self.tag is CollKind.KDSEQ:
            return f"{self.param}DSeq"
        if self.tag is CollKind.ARRAYN:
            return f"Array{self.param}"
        return self.tag.value.capitalize()


SET = CollectionKind(CollKind.SET)
BAG = CollectionKind(CollKind.BAG)
SEQ = CollectionKind(CollKind.SEQ)
VEC = CollectionKind(CollKind.VEC)
SINGLE = CollectionKind(CollKind.SINGLE)
HTAB = CollectionKind(CollKind.HTAB)


def kdseq(k: int) -> CollectionKind:
    return CollectionKind(CollKind.KDSEQ, k)


def array_n(n: int) -> CollectionKind:
    return CollectionKind(CollKind.ARRAYN, n)


#: Kinds whose element count is not pinned by the type itself.
VARIABLE_SIZE_KINDS = frozenset({CollKind.SET, CollKind.BAG, CollKind.SEQ, CollKind.VEC})

#: Abstract kinds in the sense of the high-level type table.
ABSTRACT_KINDS = frozenset({CollKind.SET, CollKind.BAG, CollKind.SEQ, CollKind.KDSEQ})


class ItemType:
    """Base class; concrete variants are Atom, Tuple, and Collection."""

    __slots__ = ()

    def is_collection(self) -> bool:
        return isinstance(self, Collection)

    def is_tuple(self) -> bool:
        return isinstance(self, Tuple)

    def is_atom(self) -> bool:
        return isinstance(self, Atom)


@dataclass(frozen=True, slots=True)
class Atom(ItemType):
    domain: AtomDomain

    def __str__(self) -> str:
        return self.domain.value


@dataclass(frozen=True, slots=True)
class Tuple(ItemType):
    """Named, ordered fields; names must be unique."""

    fields: tuple[tuple[str, ItemType], ...]

    def __post_init__(self) -> None:
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate tuple field names in {names}")

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def field_type(self, name: str) -> ItemType | None:
        for n, t in self.fields:
            if n == name:
                return t
        return None

    def field_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.fields):
            if n == name:
                return i
        raise KeyError(name)

    def __str__(self) -> str:
        inner = ", ".join(f"{n}: {t}" for n, t in self.fields)
        return f"<{inner}>"


@dataclass(frozen=True, slots=True)
class Collection(ItemType):
    kind: CollectionKind
    elem: ItemType

    def __str__(self) -> str:
        return f"{self.kind}<{self.elem}>"


def atom(domain: AtomDomain) -> Atom:
    return Atom(domain)


BOOL = Atom(AtomDomain.BOOL)
INT64 = Atom(AtomDomain.INT64)
FLOAT64 = Atom(AtomDomain.FLOAT64)
DATE = Atom(AtomDomain.DATE)
TEXT = Atom(AtomDomain.TEXT)


def tup(*fields: tuple[str, ItemType]) -> Tuple:
    return Tuple(tuple(fields))


def coll(kind: CollectionKind, elem: ItemType) -> Collection:
    return Collection(kind, elem)


def htab_type_problems(t: ItemType) -> list[str]:
    """Structural complaints about HTab element types, empty when fine.

    An HTab element must be a tuple of exactly the fields `key` and `val`, so
    the grouped representation is lossless. This is reported (not raised) so
    program validation can surface it as a violation.
    """
    problems: list[str] = []
    if not isinstance(t, Collection):
        return problems
    if t.kind.tag is CollKind.HTAB:
        if not isinstance(t.elem, Tuple):
            problems.append(f"HTab element must be a tuple, got {t.elem}")
        elif sorted(t.elem.field_names) != ["key", "val"]:
            problems.append(f"HTab element must have exactly the fields key and val, got {t.elem}")
    return problems


def walk_type(t: ItemType):
    """Yield t and every nested type, depth first."""
    yield t
    if isinstance(t, Tuple):
        for _, ft in t.fields:
            yield from walk_type(ft)
    elif isinstance(t, Collection):
        yield from walk_type(t.elem)


def is_flat_tuple(t: ItemType) -> bool:
    """True for a tuple whose fields are all atoms (a fixed-width record)."""
    return isinstance(t, Tuple) and all(isinstance(ft, Atom) for _, ft in t.fields)
