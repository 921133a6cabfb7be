"""Plug-in partial-identification bounds, the falsification test, and the
Dirichlet falsification-rate simulation.

All optimizations here treat the observed per-arm distributions as fixed data,
so each bound is a plain LP over the counterfactual simplex.  Because every
arm shares the same stratum-side matrix, the arms' constraints collapse to a
single system whose right-hand side is the componentwise minimum over arms.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import (
    CounterfactualDistribution,
    Dims,
    ObservedDistribution,
    cell_flat,
    resolve_level,
    stratum_flat,
    stratum_outcomes,
)
from .errors import DimensionMismatch, LpFailure
from .inequalities import InequalitySystem
from .simplex import solve

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class LinearFunctional:
    """A linear functional of the counterfactual distribution."""

    dims: Dims
    coeffs: np.ndarray
    label: str

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).copy()
        if coeffs.shape != (self.dims.n_strata,):
            raise DimensionMismatch(
                f"functional needs {self.dims.n_strata} coefficients, got {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise DimensionMismatch("functional coefficients must be finite")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    def __call__(self, dist: CounterfactualDistribution | np.ndarray) -> float:
        probs = dist.probs if isinstance(dist, CounterfactualDistribution) else np.asarray(dist)
        return float(self.coeffs @ probs)

    def __add__(self, other: "LinearFunctional") -> "LinearFunctional":
        return LinearFunctional(self.dims, self.coeffs + other.coeffs,
                                f"({self.label})+({other.label})")

    def __sub__(self, other: "LinearFunctional") -> "LinearFunctional":
        return LinearFunctional(self.dims, self.coeffs - other.coeffs,
                                f"({self.label})-({other.label})")

    def __neg__(self) -> "LinearFunctional":
        return LinearFunctional(self.dims, -self.coeffs, f"-({self.label})")


def marginal(dims: Dims, treatment: int, outcome: int) -> LinearFunctional:
    """Probability that the potential outcome under ``treatment`` equals ``outcome``."""
    coeffs = np.zeros(dims.n_strata)
    for s in range(dims.n_strata):
        if stratum_outcomes(dims, s)[treatment - 1] == outcome:
            coeffs[s] = 1.0
    return LinearFunctional(dims, coeffs, f"marginal({treatment},{outcome})")


def ate(dims: Dims, treatment: int, baseline: int, outcome: int) -> LinearFunctional:
    """Average treatment effect on ``P(outcome)`` of ``treatment`` versus ``baseline``."""
    f = marginal(dims, treatment, outcome) - marginal(dims, baseline, outcome)
    return LinearFunctional(dims, f.coeffs, f"ate({treatment},{baseline},{outcome})")


def stratum_indicator(dims: Dims, outcomes: Sequence[int]) -> LinearFunctional:
    coeffs = np.zeros(dims.n_strata)
    coeffs[stratum_flat(dims, outcomes)] = 1.0
    return LinearFunctional(dims, coeffs, f"stratum({','.join(str(y) for y in outcomes)})")


def raw_functional(dims: Dims, coeffs, label: str | None = None) -> LinearFunctional:
    values = [float(v) for v in coeffs]
    text = label or f"raw([{','.join(repr(v) for v in values)}])"
    return LinearFunctional(dims, np.asarray(values), text)


_CALL_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$", re.S)


def parse_functional(text: str, dims: Dims, labels=None) -> LinearFunctional:
    """Parse the functional mini-language.

    Forms: ``ate(i,i',y)``, ``marginal(i,y)``, ``stratum(y1,...,yK)``, and
    ``raw([c0,...])``.  Treatment and outcome arguments may be 1-based integers
    or (prefixes of) dataset labels.
    """
    m = _CALL_RE.match(text)
    if not m:
        raise DimensionMismatch(f"cannot parse functional {text!r}")
    name, body = m.group(1).lower(), m.group(2).strip()
    if name == "raw":
        inner = body.strip()
        if not (inner.startswith("[") and inner.endswith("]")):
            raise DimensionMismatch("raw(...) expects a bracketed coefficient list")
        coeffs = [float(v) for v in inner[1:-1].split(",") if v.strip()]
        return raw_functional(dims, coeffs, text.strip())
    args = [a.strip() for a in body.split(",") if a.strip()]
    if name == "marginal":
        if len(args) != 2:
            raise DimensionMismatch("marginal(i,y) expects 2 arguments")
        i = resolve_level(labels or {}, "x", args[0])
        y = resolve_level(labels or {}, "y", args[1])
        return marginal(dims, i, y)
    if name == "ate":
        if len(args) != 3:
            raise DimensionMismatch("ate(i,i',y) expects 3 arguments")
        i = resolve_level(labels or {}, "x", args[0])
        i2 = resolve_level(labels or {}, "x", args[1])
        y = resolve_level(labels or {}, "y", args[2])
        return ate(dims, i, i2, y)
    if name == "stratum":
        ys = [resolve_level(labels or {}, "y", a) for a in args]
        return stratum_indicator(dims, ys)
    raise DimensionMismatch(f"unknown functional form {name!r}")


# ---------------------------------------------------------------------------
# LP assembly


def _check_observed(sys: InequalitySystem, observed: Sequence[ObservedDistribution]) -> None:
    dims = sys.dims
    arms = sorted(o.arm for o in observed)
    if arms != list(range(1, dims.n_instruments + 1)):
        raise DimensionMismatch(f"need one distribution per arm 1..{dims.n_instruments}, got arms {arms}")
    for o in observed:
        if o.dims.n_treatments != dims.n_treatments or o.dims.n_outcomes != dims.n_outcomes:
            raise DimensionMismatch("observed distribution dims disagree with the system")


def _min_rhs(sys: InequalitySystem, observed: Sequence[ObservedDistribution]) -> np.ndarray:
    """Componentwise-minimum right-hand side over arms (the arms share lhs rows)."""
    stacked = np.vstack([sys.rhs_matrix @ o.probs for o in observed])
    return stacked.min(axis=0)


def _clean_distribution(dims: Dims, x: np.ndarray) -> CounterfactualDistribution:
    probs = np.maximum(np.asarray(x, dtype=float), 0.0)
    total = probs.sum()
    if total <= 0:
        raise LpFailure("degenerate", "LP returned a zero vector")
    return CounterfactualDistribution(dims, probs / total)


@dataclass(frozen=True)
class BoundsResult:
    functional: str
    lower: float
    upper: float
    status: str  # "feasible" | "infeasible"
    witness_lower: CounterfactualDistribution | None = None
    witness_upper: CounterfactualDistribution | None = None

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lower, self.upper)


def plugin_bounds(
    sys: InequalitySystem,
    observed: Sequence[ObservedDistribution],
    f: LinearFunctional,
) -> BoundsResult:
    """Sharp bounds on ``f`` over counterfactual distributions compatible with
    every arm's observed distribution."""
    _check_observed(sys, observed)
    dims = sys.dims
    if not np.any(f.coeffs):
        warnings.warn(f"functional {f.label} is identically zero", stacklevel=2)
    a_ub = sys.lhs_matrix
    b_ub = _min_rhs(sys, observed)
    a_eq = np.ones((1, dims.n_strata))
    b_eq = [1.0]
    lo = solve(f.coeffs, a_ub, b_ub, a_eq, b_eq)
    if lo.status == "infeasible":
        return BoundsResult(f.label, float("inf"), float("-inf"), "infeasible")
    if lo.status != "optimal":
        raise LpFailure(lo.status)
    hi = solve(f.coeffs, a_ub, b_ub, a_eq, b_eq, maximize=True)
    if hi.status != "optimal":
        raise LpFailure(hi.status)
    return BoundsResult(
        f.label,
        float(lo.objective),
        float(hi.objective),
        "feasible",
        _clean_distribution(dims, lo.x),
        _clean_distribution(dims, hi.x),
    )


def _feasible(sys: InequalitySystem, observed: Sequence[ObservedDistribution]) -> bool:
    dims = sys.dims
    res = solve(
        np.zeros(dims.n_strata),
        sys.lhs_matrix,
        _min_rhs(sys, observed),
        np.ones((1, dims.n_strata)),
        [1.0],
    )
    if res.status == "infeasible":
        return False
    if res.status != "optimal":
        raise LpFailure(res.status)
    return True


def falsify(sys: InequalitySystem, observed: Sequence[ObservedDistribution]) -> str:
    """``"infeasible"`` means no counterfactual distribution is compatible with
    every arm, i.e. the observed data falsify the instrumental-variable model."""
    _check_observed(sys, observed)
    return "feasible" if _feasible(sys, observed) else "infeasible"


def falsify_helly(sys: InequalitySystem, observed: Sequence[ObservedDistribution]) -> str:
    """Falsification via subset checks: with many arms it suffices to test every
    combination of ``n_cells`` arms; delegates to :func:`falsify` otherwise."""
    _check_observed(sys, observed)
    dims = sys.dims
    size = dims.n_cells
    if dims.n_instruments <= size:
        return falsify(sys, observed)
    for subset in combinations(observed, size):
        if not _feasible(sys, subset):
            return "infeasible"
    return "feasible"


def simulate_falsification(
    dims: Dims,
    draws: int,
    seed: int,
    sys: InequalitySystem | None = None,
) -> float:
    """Fraction of synthetic observed distributions that falsify the model.

    Each arm's cell distribution is an independent flat-Dirichlet draw, built
    from unit-rate exponentials normalized to the simplex.
    """
    if draws < 1:
        raise DimensionMismatch("need at least one draw")
    if sys is None:
        from .inequalities import enumerate_full, filter_nonredundant

        sys = filter_nonredundant(enumerate_full(dims))
    rng = np.random.default_rng(seed)
    rhs = sys.rhs_matrix
    a_eq = np.ones((1, dims.n_strata))
    zero_c = np.zeros(dims.n_strata)
    n_bad = 0
    for _ in range(draws):
        exp = -np.log1p(-rng.random((dims.n_instruments, dims.n_cells)))
        probs = exp / exp.sum(axis=1, keepdims=True)
        b_ub = (rhs @ probs.T).min(axis=1)
        res = solve(zero_c, sys.lhs_matrix, b_ub, a_eq, [1.0])
        if res.status == "infeasible":
            n_bad += 1
        elif res.status != "optimal":
            raise LpFailure(res.status)
    return n_bad / draws


def closed_form_marginal_bounds(
    observed: Sequence[ObservedDistribution], treatment: int, outcome: int
) -> tuple[float, float]:
    """Tightest closed-form bounds on one marginal counterfactual probability:
    the observed cell mass from below, one minus the same-treatment complement
    mass from above, each optimized over arms."""
    lo = 0.0
    hi = 1.0
    for o in observed:
        dims = o.dims
        cell = o.probs[cell_flat(dims, treatment, outcome)]
        others = sum(
            o.probs[cell_flat(dims, treatment, y)]
            for y in range(1, dims.n_outcomes + 1)
            if y != outcome
        )
        lo = max(lo, float(cell))
        hi = min(hi, 1.0 - float(others))
    return lo, hi
