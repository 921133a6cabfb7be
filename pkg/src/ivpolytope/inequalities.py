"""The linear inequality system linking counterfactual and observed distributions.

Each inequality is generated by a family of outcome subsets, one subset per
treatment level, all nonempty and at least one a strict subset of the outcome
range.  The generated row bounds the counterfactual mass of the Cartesian
product of the family by the observed mass of the union of the per-treatment
cells, arm by arm:

    P'(product of subsets)  <=  sum_x P(X = x, Y in subset_x | Z = z).

Subsets are stored as little-endian bitmasks over outcome levels (bit ``y-1``
set means level ``y`` is in the subset).  Row order is lexicographic over the
mask tuples, which makes every generated matrix byte-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Iterator, Sequence

import numpy as np

from .core import Dims
from .errors import DimensionMismatch, SizeOverflow

DEFAULT_ROW_CAP = 10_000_000


def full_mask(n_outcomes: int) -> int:
    return (1 << n_outcomes) - 1


def mask_levels(mask: int) -> tuple[int, ...]:
    """1-based outcome levels present in a subset bitmask."""
    out = []
    level = 1
    while mask:
        if mask & 1:
            out.append(level)
        mask >>= 1
        level += 1
    return tuple(out)


def levels_mask(levels: Sequence[int], n_outcomes: int) -> int:
    mask = 0
    for y in levels:
        if not 1 <= y <= n_outcomes:
            raise DimensionMismatch(f"outcome level {y} outside 1..{n_outcomes}")
        mask |= 1 << (y - 1)
    return mask


@dataclass(frozen=True)
class SubsetFamily:
    """One outcome subset per treatment level, encoded as bitmasks."""

    masks: tuple[int, ...]
    n_outcomes: int

    def __post_init__(self):
        full = full_mask(self.n_outcomes)
        if any(m == 0 for m in self.masks):
            raise DimensionMismatch("every subset in a family must be nonempty")
        if any(m > full for m in self.masks):
            raise DimensionMismatch("subset mask exceeds the outcome range")
        if all(m == full for m in self.masks):
            raise DimensionMismatch("at least one subset must be strict")

    def levels(self, treatment: int) -> tuple[int, ...]:
        return mask_levels(self.masks[treatment - 1])

    @property
    def n_strict(self) -> int:
        full = full_mask(self.n_outcomes)
        return sum(1 for m in self.masks if m != full)


def nonredundant_keep(masks: Sequence[int], n_outcomes: int) -> bool:
    """Keep predicate for the non-redundant subsystem.

    A row survives when at least two subsets are strict, or when exactly one is
    strict and that subset omits a single outcome level.
    """
    full = full_mask(n_outcomes)
    strict = [m for m in masks if m != full]
    if len(strict) >= 2:
        return True
    return len(strict) == 1 and strict[0].bit_count() == n_outcomes - 1


def _lhs_mask(masks: Sequence[int], n_outcomes: int) -> int:
    """Bitmask over flat stratum indices of the Cartesian product of the family."""
    acc = masks[-1]
    width = 1
    for m in reversed(masks[:-1]):
        width *= n_outcomes
        nxt = 0
        probe = m
        level = 0
        while probe:
            if probe & 1:
                nxt |= acc << (level * width)
            probe >>= 1
            level += 1
        acc = nxt
    return acc


def _rhs_mask(masks: Sequence[int], n_outcomes: int) -> int:
    """Bitmask over flat cell indices of the union of per-treatment cells."""
    acc = 0
    for k, m in enumerate(masks):
        acc |= m << (k * n_outcomes)
    return acc


def _mask_to_dense(mask: int, length: int) -> np.ndarray:
    nbytes = (length + 7) // 8
    raw = np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length]


@dataclass(frozen=True)
class InequalityRow:
    """One inequality: stratum-side indicator vs. per-arm cell-side indicator."""

    family: SubsetFamily
    dims: Dims
    lhs_mask: int
    rhs_mask: int

    @classmethod
    def from_family(cls, dims: Dims, masks: Sequence[int]) -> "InequalityRow":
        masks = tuple(masks)
        family = SubsetFamily(masks, dims.n_outcomes)
        if len(masks) != dims.n_treatments:
            raise DimensionMismatch(f"family needs {dims.n_treatments} subsets")
        return cls(family, dims,
                   _lhs_mask(masks, dims.n_outcomes),
                   _rhs_mask(masks, dims.n_outcomes))

    @property
    def lhs_support(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.dims.n_strata) if self.lhs_mask >> i & 1)

    @property
    def rhs_support(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.dims.n_cells) if self.rhs_mask >> i & 1)

    def lhs_dense(self) -> np.ndarray:
        return _mask_to_dense(self.lhs_mask, self.dims.n_strata)

    def rhs_dense(self) -> np.ndarray:
        return _mask_to_dense(self.rhs_mask, self.dims.n_cells)


def iter_families(dims: Dims) -> Iterator[tuple[int, ...]]:
    """All subset families in canonical (lexicographic over masks) order."""
    full = full_mask(dims.n_outcomes)
    all_full = (full,) * dims.n_treatments
    for masks in product(range(1, full + 1), repeat=dims.n_treatments):
        if masks != all_full:
            yield masks


@dataclass(frozen=True)
class InequalitySystem:
    """Per-arm inequality rows; the same matrix applies to every instrument arm."""

    dims: Dims
    rows: tuple[InequalityRow, ...]
    tag: str = "full"

    def __post_init__(self):
        seen = {row.family.masks for row in self.rows}
        if len(seen) != len(self.rows):
            raise DimensionMismatch("duplicate rows in inequality system")

    def __len__(self) -> int:
        return len(self.rows)

    @cached_property
    def lhs_matrix(self) -> np.ndarray:
        """Dense stratum-side matrix, one row per inequality (read-only)."""
        mat = np.vstack([r.lhs_dense() for r in self.rows]).astype(float)
        mat.flags.writeable = False
        return mat

    @cached_property
    def rhs_matrix(self) -> np.ndarray:
        """Dense cell-side matrix, one row per inequality (read-only)."""
        mat = np.vstack([r.rhs_dense() for r in self.rows]).astype(float)
        mat.flags.writeable = False
        return mat


def enumerate_full(dims: Dims, row_cap: int = DEFAULT_ROW_CAP) -> InequalitySystem:
    """Every per-arm inequality: all families except the trivial all-levels one."""
    per_arm = (2**dims.n_outcomes - 1) ** dims.n_treatments - 1
    if per_arm > row_cap:
        raise SizeOverflow(f"{per_arm} rows exceeds cap {row_cap}")
    rows = tuple(InequalityRow.from_family(dims, masks) for masks in iter_families(dims))
    return InequalitySystem(dims, rows, "full")


def filter_nonredundant(sys: InequalitySystem) -> InequalitySystem:
    """Restrict a full system to the non-redundant rows, preserving order."""
    if sys.tag != "full":
        raise DimensionMismatch("filter_nonredundant expects the full enumeration")
    rows = tuple(r for r in sys.rows if nonredundant_keep(r.family.masks, sys.dims.n_outcomes))
    return InequalitySystem(sys.dims, rows, "nonredundant")


def count_inequalities(dims: Dims) -> tuple[int, int]:
    """Closed-form (total, non-redundant) row counts across all arms."""
    q, k, m = dims.n_instruments, dims.n_treatments, dims.n_outcomes
    per_arm_total = (2**m - 1) ** k - 1
    per_arm_kept = per_arm_total - k * (2**m - m - 2)
    return q * per_arm_total, q * per_arm_kept


def marginal_bound_rows(dims: Dims) -> list[InequalityRow]:
    """Rows whose subsets are each either a singleton or the full outcome range.

    These are the closed-form bounds on (joint) marginal counterfactual
    probabilities; with a binary outcome they are the entire system.
    """
    full = full_mask(dims.n_outcomes)
    allowed = sorted({1 << j for j in range(dims.n_outcomes)} | {full})
    out = []
    for masks in product(allowed, repeat=dims.n_treatments):
        if all(m == full for m in masks):
            continue
        out.append(InequalityRow.from_family(dims, masks))
    out.sort(key=lambda r: r.family.masks)
    return out


def system_to_json(sys: InequalitySystem) -> dict:
    """JSON-ready description of a system: families plus support index lists."""
    return {
        "dims": {
            "Q": sys.dims.n_instruments,
            "K": sys.dims.n_treatments,
            "M": sys.dims.n_outcomes,
        },
        "tag": sys.tag,
        "per_arm_rows": len(sys.rows),
        "rows": [
            {
                "V": list(r.family.masks),
                "lhs_support": list(r.lhs_support),
                "rhs_support": list(r.rhs_support),
            }
            for r in sys.rows
        ],
    }


def system_dense_csv(sys: InequalitySystem, fh) -> None:
    """Write the concatenated [-lhs | rhs] block as plain CSV, one row per inequality."""
    block = np.hstack([-sys.lhs_matrix, sys.rhs_matrix]).astype(int)
    for row in block:
        fh.write(",".join(str(v) for v in row))
        fh.write("\n")


def system_json_text(sys: InequalitySystem) -> str:
    return json.dumps(system_to_json(sys), sort_keys=True, separators=(",", ":"))
