"""Equiwidth discretization of numerical attributes.

Bins are left-closed and right-open except the last, which also holds the
maximum. A constant column collapses to one bin whatever the arity.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data_model import MISSING, CategoricalColumn, Dataset, NumericColumn


class RangePolicy(str, Enum):
    WORKING = "working"  # edges from the current working set
    GLOBAL = "global"  # edges from the full dataset


class OutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class BinEdges:
    lo: float
    hi: float
    b: int
    edges: np.ndarray
    attribute: str = ""
    all_missing: bool = False

    @property
    def nbins(self) -> int:
        """Effective number of bins (1 for a constant or all-missing column)."""
        return len(self.edges) - 1 if len(self.edges) > 1 else 1

    @property
    def degenerate(self) -> bool:
        return self.all_missing or self.lo == self.hi


def bin_edges(values: Sequence[float] | np.ndarray, b: int, attribute: str = "") -> BinEdges:
    if b < 1:
        raise ValueError(f"arity must be >= 1, got {b}")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return BinEdges(np.nan, np.nan, b, np.array([]), attribute, all_missing=True)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return BinEdges(lo, hi, b, np.array([lo, hi]), attribute)
    edges = lo + np.arange(b + 1) * ((hi - lo) / b)
    edges[0], edges[b] = lo, hi
    return BinEdges(lo, hi, b, edges, attribute)


def assign_bins(values: np.ndarray, edges: BinEdges) -> np.ndarray:
    """Vectorized bin index for each non-missing value."""
    v = np.asarray(values, dtype=np.float64)
    if edges.degenerate:
        if not edges.all_missing and v.size and (np.any(v != edges.lo)):
            raise OutOfRangeError(f"value outside constant range [{edges.lo}, {edges.hi}]")
        return np.zeros(v.shape, dtype=np.int64)
    if v.size and (v.min() < edges.lo or v.max() > edges.hi):
        raise OutOfRangeError(f"value outside [{edges.lo}, {edges.hi}]")
    nb = edges.nbins
    e = edges.edges
    scale = nb / (edges.hi - edges.lo)
    if np.isfinite(scale):
        k = np.clip((v - edges.lo) * scale, 0, nb - 1).astype(np.int64)
        # The arithmetic guess can be off by one next to an edge; settle against the edges.
        k -= v < e[k]
        k += (v >= e[np.minimum(k + 1, nb)]) & (k < nb - 1)
        if np.all((e[k] <= v) & ((v < e[k + 1]) | (k == nb - 1))):
            return k
    # Ranges only a few ulps wide: search the edges directly.
    return np.minimum(np.searchsorted(e, v, side="right") - 1, nb - 1).astype(np.int64)


def assign_bin(value, edges: BinEdges):
    if value is MISSING or value is None:
        return MISSING
    if edges.all_missing:
        raise OutOfRangeError("no bins for an all-missing column")
    return int(assign_bins(np.array([value]), edges)[0])


@dataclass(frozen=True)
class DiscretizedView:
    """Per-case token tuples for a set of working cases.

    ``codes`` holds one integer column per attribute in schema order: bin index
    for numerical attributes, category code for categorical ones, and the value
    ``radix - 1`` for missing. ``radix`` is the code count per attribute.
    """

    case_ids: np.ndarray
    codes: list[np.ndarray]
    radix: list[int]
    categories: list[tuple[str, ...] | None]
    edges: list[BinEdges | None]

    def __len__(self):
        return len(self.case_ids)

    def token(self, row: int, h: int):
        c = int(self.codes[h][row])
        if c == self.radix[h] - 1:
            return MISSING
        cats = self.categories[h]
        return c if cats is None else cats[c]

    def tokens(self, row: int) -> tuple:
        return tuple(self.token(row, h) for h in range(len(self.codes)))

    def all_tokens(self) -> list[tuple]:
        return [self.tokens(r) for r in range(len(self))]


def discretize(
    data: Dataset,
    b: int,
    working: np.ndarray | None = None,
    range_policy: RangePolicy | str = RangePolicy.WORKING,
) -> DiscretizedView:
    """Token view of ``working`` rows with numerical attributes cut into ``b`` bins.

    Under the global policy edges come from all of ``data``; otherwise from the
    working rows alone.
    """
    range_policy = RangePolicy(range_policy)
    ids = np.arange(data.n) if working is None else np.asarray(working, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot discretize an empty working set")
    codes, radix, cats, all_edges = [], [], [], []
    for a, col in zip(data.schema.attributes, data.columns()):
        if isinstance(col, CategoricalColumn):
            c = col.codes[ids]
            miss_code = len(col.categories)
            codes.append(np.where(c < 0, miss_code, c))
            radix.append(miss_code + 1)
            cats.append(col.categories)
            all_edges.append(None)
            continue
        assert isinstance(col, NumericColumn)
        miss = col.missing[ids]
        vals = col.values[ids]
        if range_policy is RangePolicy.GLOBAL:
            edges = bin_edges(col.values[~col.missing], b, a.name)
        else:
            edges = bin_edges(vals[~miss], b, a.name)
        k = np.full(ids.size, edges.nbins, dtype=np.int64)
        k[~miss] = assign_bins(vals[~miss], edges)
        codes.append(k)
        radix.append(edges.nbins + 1)
        cats.append(None)
        all_edges.append(edges)
    return DiscretizedView(ids, codes, radix, cats, all_edges)
