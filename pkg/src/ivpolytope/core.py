"""Dimensions, index conventions, probability-vector types, and dataset ingestion.

Level conventions
-----------------
Instrument, treatment, and outcome levels are 1-based everywhere a user sees
them (files, labels, functional specs).  Flat indices are 0-based:

* a stratum is a joint assignment of one outcome per treatment level,
  flattened with the first treatment most significant:
  ``flat = sum((y_k - 1) * M**(K - k))`` for ``k = 1..K``;
* an observed cell ``(x, y)`` flattens treatment-outer, outcome-inner:
  ``flat = (x - 1) * M + (y - 1)``.

Every matrix and fixture in the package depends on these two orderings.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroArm

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Dims:
    """Problem size: levels of the instrument, the treatment, and the outcome."""

    n_instruments: int
    n_treatments: int
    n_outcomes: int

    def __post_init__(self):
        if self.n_instruments < 1:
            raise DimensionMismatch("need at least one instrument arm")
        if self.n_treatments < 2:
            raise DimensionMismatch("need at least two treatment levels")
        if self.n_outcomes < 2:
            raise DimensionMismatch("need at least two outcome levels")

    @property
    def n_strata(self) -> int:
        """Number of joint potential-outcome assignments."""
        return self.n_outcomes**self.n_treatments

    @property
    def n_cells(self) -> int:
        """Number of observed (treatment, outcome) cells per arm."""
        return self.n_treatments * self.n_outcomes


def stratum_flat(dims: Dims, outcomes: Sequence[int]) -> int:
    """Flat index of the stratum assigning ``outcomes[k-1]`` to treatment ``k``."""
    if len(outcomes) != dims.n_treatments:
        raise DimensionMismatch(
            f"stratum needs {dims.n_treatments} outcomes, got {len(outcomes)}"
        )
    flat = 0
    for y in outcomes:
        if not 1 <= y <= dims.n_outcomes:
            raise DimensionMismatch(f"outcome level {y} outside 1..{dims.n_outcomes}")
        flat = flat * dims.n_outcomes + (y - 1)
    return flat


def stratum_outcomes(dims: Dims, flat: int) -> tuple[int, ...]:
    """Inverse of :func:`stratum_flat`."""
    if not 0 <= flat < dims.n_strata:
        raise DimensionMismatch(f"stratum index {flat} outside 0..{dims.n_strata - 1}")
    digits = []
    for _ in range(dims.n_treatments):
        digits.append(flat % dims.n_outcomes + 1)
        flat //= dims.n_outcomes
    return tuple(reversed(digits))


def cell_flat(dims: Dims, treatment: int, outcome: int) -> int:
    """Flat index of observed cell (treatment ``x``, outcome ``y``)."""
    if not 1 <= treatment <= dims.n_treatments:
        raise DimensionMismatch(f"treatment level {treatment} outside 1..{dims.n_treatments}")
    if not 1 <= outcome <= dims.n_outcomes:
        raise DimensionMismatch(f"outcome level {outcome} outside 1..{dims.n_outcomes}")
    return (treatment - 1) * dims.n_outcomes + (outcome - 1)


def cell_parts(dims: Dims, flat: int) -> tuple[int, int]:
    """Inverse of :func:`cell_flat`, returning (treatment, outcome)."""
    if not 0 <= flat < dims.n_cells:
        raise DimensionMismatch(f"cell index {flat} outside 0..{dims.n_cells - 1}")
    return flat // dims.n_outcomes + 1, flat % dims.n_outcomes + 1


@dataclass(frozen=True)
class StratumIndex:
    outcomes: tuple[int, ...]
    flat: int

    @classmethod
    def from_outcomes(cls, dims: Dims, outcomes: Sequence[int]) -> "StratumIndex":
        return cls(tuple(outcomes), stratum_flat(dims, outcomes))

    @classmethod
    def from_flat(cls, dims: Dims, flat: int) -> "StratumIndex":
        return cls(stratum_outcomes(dims, flat), flat)


@dataclass(frozen=True)
class CellIndex:
    treatment: int
    outcome: int
    flat: int

    @classmethod
    def from_parts(cls, dims: Dims, treatment: int, outcome: int) -> "CellIndex":
        return cls(treatment, outcome, cell_flat(dims, treatment, outcome))

    @classmethod
    def from_flat(cls, dims: Dims, flat: int) -> "CellIndex":
        x, y = cell_parts(dims, flat)
        return cls(x, y, flat)


def index_roundtrip(dims: Dims) -> dict:
    """Exhaustively confirm flat <-> structured index maps are mutual inverses."""
    strata_ok = all(
        stratum_flat(dims, stratum_outcomes(dims, s)) == s for s in range(dims.n_strata)
    )
    cells_ok = all(cell_flat(dims, *cell_parts(dims, c)) == c for c in range(dims.n_cells))
    seen = {stratum_outcomes(dims, s) for s in range(dims.n_strata)}
    strata_ok = strata_ok and len(seen) == dims.n_strata
    return {
        "n_strata": dims.n_strata,
        "n_cells": dims.n_cells,
        "strata_ok": strata_ok,
        "cells_ok": cells_ok,
        "ok": strata_ok and cells_ok,
    }


def _frozen_probs(values, length: int, what: str) -> np.ndarray:
    probs = np.asarray(values, dtype=float).copy()
    if probs.shape != (length,):
        raise DimensionMismatch(f"{what} must have length {length}, got shape {probs.shape}")
    if np.any(probs < 0):
        raise DimensionMismatch(f"{what} has negative entries")
    if abs(float(probs.sum()) - 1.0) > PROB_SUM_TOL:
        raise DimensionMismatch(f"{what} sums to {probs.sum()!r}, not 1")
    probs.flags.writeable = False
    return probs


@dataclass(frozen=True)
class ObservedDistribution:
    """Per-arm probability vector over observed (treatment, outcome) cells."""

    dims: Dims
    arm: int
    probs: np.ndarray
    n: int = 0

    def __post_init__(self):
        if not 1 <= self.arm <= self.dims.n_instruments:
            raise DimensionMismatch(f"arm {self.arm} outside 1..{self.dims.n_instruments}")
        if self.n < 0:
            raise DimensionMismatch("sample size must be nonnegative")
        object.__setattr__(
            self, "probs", _frozen_probs(self.probs, self.dims.n_cells, "cell probabilities")
        )

    def prob(self, treatment: int, outcome: int) -> float:
        return float(self.probs[cell_flat(self.dims, treatment, outcome)])


@dataclass(frozen=True)
class CounterfactualDistribution:
    """Probability vector over joint potential-outcome strata."""

    dims: Dims
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "probs", _frozen_probs(self.probs, self.dims.n_strata, "stratum probabilities")
        )

    def prob(self, outcomes: Sequence[int]) -> float:
        return float(self.probs[stratum_flat(self.dims, outcomes)])


@dataclass(frozen=True)
class Dataset:
    """Integer count tensor indexed by (arm, treatment, outcome), with optional labels.

    ``labels`` maps axis name (``"z"``, ``"x"``, ``"y"``) to the tuple of level
    labels in level order; axes without string labels are omitted.
    """

    dims: Dims
    counts: np.ndarray
    labels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        expected = (self.dims.n_instruments, self.dims.n_treatments, self.dims.n_outcomes)
        if counts.shape != expected:
            raise DimensionMismatch(f"counts shape {counts.shape} != dims {expected}")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise DimensionMismatch("counts must be integers")
            counts = counts.astype(np.int64)
        else:
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise DimensionMismatch("counts must be nonnegative")
        if counts.sum() == 0:
            raise DimensionMismatch("dataset needs at least one arm with observations")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        for axis, names in dict(self.labels).items():
            size = {"z": self.dims.n_instruments, "x": self.dims.n_treatments,
                    "y": self.dims.n_outcomes}.get(axis)
            if size is None:
                raise DimensionMismatch(f"unknown label axis {axis!r}")
            if len(names) != size:
                raise DimensionMismatch(f"axis {axis!r} has {len(names)} labels, expected {size}")
        object.__setattr__(self, "labels", {k: tuple(v) for k, v in dict(self.labels).items()})

    @property
    def arm_sizes(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.counts.sum(axis=(1, 2)))

    def label_of(self, axis: str, level: int) -> str:
        names = self.labels.get(axis)
        return names[level - 1] if names else str(level)


def empirical_distributions(ds: Dataset, arms: Sequence[int] | None = None) -> list[ObservedDistribution]:
    """Empirical per-arm cell distributions, ``counts / n_arm``.

    Raises :class:`ZeroArm` when a requested arm has no observations.
    """
    requested = list(arms) if arms is not None else list(range(1, ds.dims.n_instruments + 1))
    sizes = ds.arm_sizes
    out = []
    for arm in requested:
        if not 1 <= arm <= ds.dims.n_instruments:
            raise DimensionMismatch(f"arm {arm} outside 1..{ds.dims.n_instruments}")
        n = sizes[arm - 1]
        if n == 0:
            raise ZeroArm(f"arm {ds.label_of('z', arm)} has no observations")
        probs = ds.counts[arm - 1].reshape(-1) / n
        out.append(ObservedDistribution(ds.dims, arm, probs, n))
    return out


def resolve_level(ds_or_labels, axis: str, token) -> int:
    """Resolve a 1-based level from an integer or a (prefix of a) label.

    Label matching is exact first, then unique case-insensitive prefix, so the
    abbreviations common in write-ups (``Arr`` for ``Arrest``) work.
    """
    labels = ds_or_labels.labels if isinstance(ds_or_labels, Dataset) else ds_or_labels
    names = (labels or {}).get(axis)
    text = str(token).strip()
    if names:
        if text in names:
            return names.index(text) + 1
        hits = [i for i, name in enumerate(names) if name.lower().startswith(text.lower())]
        if len(hits) == 1:
            return hits[0] + 1
        if len(hits) > 1:
            raise DimensionMismatch(f"{text!r} is an ambiguous {axis} label prefix")
    try:
        return int(text)
    except ValueError:
        raise DimensionMismatch(f"cannot resolve {axis} level {token!r}") from None


def _build_axis(values: list[str]) -> tuple[dict[str, int], tuple[str, ...] | None]:
    """Map raw column values to 1-based levels.

    All-integer columns keep their numeric levels; otherwise labels are
    assigned levels in first-appearance order over the whole file.
    """
    try:
        numeric = [int(v) for v in values]
    except ValueError:
        numeric = None
    if numeric is not None:
        if min(numeric) < 1:
            raise DimensionMismatch("integer levels must be 1-based")
        return {v: int(v) for v in values}, None
    order: dict[str, int] = {}
    for v in values:
        if v not in order:
            order[v] = len(order) + 1
    names = tuple(sorted(order, key=order.get))
    return order, names


def _assemble(rows: list[tuple], label_map: Mapping[str, Sequence[str]] | None,
              dims: Dims | None = None) -> Dataset:
    label_map = {k: list(v) for k, v in (label_map or {}).items()}
    levels: dict[str, list[int]] = {}
    labels: dict[str, tuple[str, ...]] = {}
    for pos, axis in enumerate(("z", "x", "y")):
        raw = [str(r[pos]).strip() for r in rows]
        if axis in label_map:
            names = [str(v) for v in label_map[axis]]
            mapping = {name: i + 1 for i, name in enumerate(names)}
            unknown = set(raw) - set(mapping)
            if unknown:
                raise DimensionMismatch(f"axis {axis!r} values {sorted(unknown)} not in label map")
            levels[axis] = [mapping[v] for v in raw]
            labels[axis] = tuple(names)
        else:
            mapping, names = _build_axis(raw)
            levels[axis] = [mapping[v] for v in raw]
            if names is not None:
                labels[axis] = names
    if dims is None:
        dims = Dims(max(levels["z"]), max(levels["x"]), max(levels["y"]))
    counts = np.zeros((dims.n_instruments, dims.n_treatments, dims.n_outcomes), dtype=np.int64)
    for (z, x, y), row in zip(zip(levels["z"], levels["x"], levels["y"]), rows):
        c = int(row[3])
        if c < 0:
            raise DimensionMismatch(f"negative count in row {row!r}")
        try:
            counts[z - 1, x - 1, y - 1] += c
        except IndexError:
            raise DimensionMismatch(f"row {row!r} outside declared dims") from None
    return Dataset(dims, counts, labels)


def load_csv(source, label_map: Mapping[str, Sequence[str]] | None = None) -> Dataset:
    """Read a ``z,x,y,count`` CSV; ``#`` starts a comment line.

    Values may be 1-based integers or labels (mapped to levels by first
    appearance unless ``label_map`` pins the order).
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_csv(fh, label_map)
    lines = [ln for ln in source if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    header = [h.strip().lower() for h in next(reader, [])]
    if header != ["z", "x", "y", "count"]:
        raise DimensionMismatch(f"expected header z,x,y,count, got {header}")
    rows = [tuple(field.strip() for field in row) for row in reader if row]
    if any(len(r) != 4 for r in rows):
        raise DimensionMismatch("every data row needs exactly 4 fields")
    if not rows:
        raise DimensionMismatch("no data rows")
    return _assemble(rows, label_map)


def load_json(source) -> Dataset:
    """Read the JSON dataset form: ``{"dims": {"Q","K","M"}, "counts": [[z,x,y,count],...]}``."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    elif isinstance(source, io.IOBase):
        doc = json.load(source)
    else:
        doc = source
    spec = doc.get("dims", {})
    dims = Dims(int(spec["Q"]), int(spec["K"]), int(spec["M"]))
    labels = doc.get("labels") or {}
    rows = [tuple(entry) for entry in doc["counts"]]
    if any(len(r) != 4 for r in rows):
        raise DimensionMismatch("each counts entry must be [z, x, y, count]")
    label_map = {k: list(v) for k, v in labels.items()}
    ds = _assemble(rows, label_map or None, dims)
    return ds


def load_dataset(path) -> Dataset:
    """Dispatch on file suffix: ``.json`` via :func:`load_json`, else CSV."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return load_json(path)
    return load_csv(path)


def drop_treatment(ds: Dataset, treatment) -> Dataset:
    """Remove one treatment level's counts entirely (selects on treatment;
    the instrumental-variable assumptions generally do NOT survive this)."""
    x = resolve_level(ds, "x", treatment)
    if ds.dims.n_treatments <= 2:
        raise DimensionMismatch("cannot drop a treatment level below two")
    keep = [i for i in range(ds.dims.n_treatments) if i != x - 1]
    counts = ds.counts[:, keep, :]
    labels = dict(ds.labels)
    if "x" in labels:
        labels["x"] = tuple(labels["x"][i] for i in keep)
    dims = Dims(ds.dims.n_instruments, ds.dims.n_treatments - 1, ds.dims.n_outcomes)
    return Dataset(dims, counts, labels)


def drop_instrument(ds: Dataset, arm) -> Dataset:
    """Remove one instrument arm (valid under randomization of the instrument)."""
    z = resolve_level(ds, "z", arm)
    if ds.dims.n_instruments <= 1:
        raise DimensionMismatch("cannot drop the only instrument arm")
    keep = [i for i in range(ds.dims.n_instruments) if i != z - 1]
    counts = ds.counts[keep, :, :]
    labels = dict(ds.labels)
    if "z" in labels:
        labels["z"] = tuple(labels["z"][i] for i in keep)
    dims = Dims(ds.dims.n_instruments - 1, ds.dims.n_treatments, ds.dims.n_outcomes)
    return Dataset(dims, counts, labels)
