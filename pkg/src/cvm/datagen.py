"""Seeded synthetic data generation for the bundled revenue query workload.

The generator is specified down to the bit so independent implementations in
other languages can reproduce identical datasets:

* PRNG: splitmix64. Draw i (1-based) is ``mix64(seed + i * GAMMA)`` where all
  arithmetic wraps modulo 2^64, so the stream is both sequential and random
  access (which is what lets numpy produce it vectorized).
* Row r consumes draws 4r+1 .. 4r+4, in order:
  shipdate, discount, quantity, eprice.
* Column mapping (modulo reduction, no rejection):
  - l_shipdate = 8766 + d0 % 2192            (epoch days, 1994-01-01..1999-12-31)
  - l_discount = (d1 % 11) / 100.0           ({0.00, 0.01, ..., 0.10})
  - l_quantity = float(1 + d2 % 50)          (1..50 stored as float64)
  - l_eprice   = (90000 + d3 % 10410001) / 100.0   (900.00..105000.00, cents)
  - l_disc     = l_discount                  (alias column)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import DATE, FLOAT64, Tuple, coll, BAG
from .values import CollectionValue, ColumnarItems, Columns, columnar_vec_value, columns_schema
from .types import SINGLE, VEC

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1

LINEITEM_TYPE = Tuple(
    (
        ("l_shipdate", DATE),
        ("l_discount", FLOAT64),
        ("l_quantity", FLOAT64),
        ("l_eprice", FLOAT64),
        ("l_disc", FLOAT64),
    )
)

SHIPDATE_BASE = 8766
SHIPDATE_SPAN = 2192  # 8766..10957 inclusive
EPRICE_BASE_CENTS = 90000
EPRICE_SPAN_CENTS = 10410001  # up to 10_500_000 cents inclusive


def mix64(state: int) -> int:
    """The splitmix64 output function over one 64-bit state word."""
    z = state & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def splitmix64_stream(seed: int, count: int) -> list[int]:
    """First `count` splitmix64 outputs for `seed` (scalar reference path)."""
    out = []
    state = seed & _MASK
    for _ in range(count):
        state = (state + GAMMA) & _MASK
        out.append(mix64(state))
    return out


def _mix64_np(states: np.ndarray) -> np.ndarray:
    z = states
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix64_block(seed: int, count: int) -> np.ndarray:
    """Vectorized equivalent of splitmix64_stream, as a uint64 array."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    states = np.uint64(seed & _MASK) + idx * np.uint64(GAMMA)
    return _mix64_np(states)


@dataclass(frozen=True)
class DatasetSpec:
    table: str
    rows: int
    seed: int

    def __post_init__(self) -> None:
        if self.table != "lineitem":
            raise ValueError(f"unknown table {self.table!r}")
        if self.rows < 0:
            raise ValueError("row count must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class LineitemDataset:
    """Physical (Single<Vec<row>>) and abstract (Bag<row>) views of one table."""

    physical: CollectionValue
    bag: CollectionValue
    columns: dict[str, np.ndarray]


def gen_lineitem(spec: DatasetSpec) -> LineitemDataset:
    draws = splitmix64_block(spec.seed, 4 * spec.rows).reshape(spec.rows, 4) if spec.rows else np.zeros(
        (0, 4), dtype=np.uint64
    )
    shipdate = (SHIPDATE_BASE + (draws[:, 0] % np.uint64(SHIPDATE_SPAN))).astype(np.int64)
    discount = (draws[:, 1] % np.uint64(11)).astype(np.float64) / 100.0
    quantity = 1.0 + (draws[:, 2] % np.uint64(50)).astype(np.float64)
    eprice = (EPRICE_BASE_CENTS + (draws[:, 3] % np.uint64(EPRICE_SPAN_CENTS))).astype(np.float64) / 100.0
    columns = {
        "l_shipdate": shipdate,
        "l_discount": discount,
        "l_quantity": quantity,
        "l_eprice": eprice,
        "l_disc": discount.copy(),
    }
    vec = columnar_vec_value(LINEITEM_TYPE, columns)
    physical = CollectionValue(SINGLE, coll(VEC, LINEITEM_TYPE), (vec,))
    bag_items = ColumnarItems(Columns(columns_schema(LINEITEM_TYPE), tuple(columns[n] for n, _ in LINEITEM_TYPE.fields)), LINEITEM_TYPE)
    bag = CollectionValue(BAG, LINEITEM_TYPE, bag_items)
    return LineitemDataset(physical, bag, columns)
