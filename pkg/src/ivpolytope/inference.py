"""Finite-sample simultaneous confidence intervals for linear functionals.

The pipeline: a moment-polynomial Chernoff bound on the summed, sample-size
weighted KL divergence between empirical and population cell distributions
gives a critical value; the confidence region it induces is intersected with
the inequality system; each functional is then minimized and maximized over
that convex set.  One critical value is shared by every functional, which is
what makes the resulting intervals simultaneous.

The single smooth convex constraint is handled by outer approximation:
supporting-hyperplane cuts accumulated around LP-relaxation iterates, one cut
per arm per round, on top of the same simplex kernel used for the plug-in
bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .bounds import LinearFunctional
from .core import CounterfactualDistribution, Dataset, Dims, empirical_distributions
from .errors import DimensionMismatch, DomainError, LpFailure, NoConvergence
from .inequalities import InequalitySystem
from .simplex import solve

_LAMBDA_GRID_SIZE = 512
_LAMBDA_TOL = 1e-10
_T_TOL = 1e-8
_T_BRACKET_CAP = 1e6
_FLOOR = 1e-12


@dataclass(frozen=True)
class ChernoffSpec:
    """Inputs of the tail bound: cell count, per-arm sample sizes, level."""

    n_cells: int
    arm_sizes: tuple[int, ...]
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "arm_sizes", tuple(int(n) for n in self.arm_sizes))
        if self.n_cells < 2:
            raise DimensionMismatch("need at least two cells")
        if not self.arm_sizes or any(n < 1 for n in self.arm_sizes):
            raise DimensionMismatch("every arm size must be at least 1")
        if not 0 < self.alpha <= 1:
            raise DimensionMismatch("level must lie in (0, 1]")


@dataclass(frozen=True)
class CriticalValue:
    t_alpha: float
    achieved_rhs: float
    lambda_star: float


@dataclass(frozen=True)
class ConfidenceInterval:
    functional: str
    lower: float
    upper: float
    alpha: float
    t_alpha: float
    falsified: bool = False
    witness_lower: dict | None = None
    witness_upper: dict | None = None


@lru_cache(maxsize=512)
def _log_coeffs(d: int, n: int) -> np.ndarray:
    """Log coefficients of the moment polynomial, degree 0..n.

    Coefficient m is (n falling-factorial m / n^m) * C(m + d - 2, d - 2);
    both factors accumulate as cumulative log sums, so no term overflows.
    """
    m = np.arange(1, n + 1, dtype=float)
    falling = np.concatenate([[0.0], np.cumsum(np.log((n - m + 1) / n))])
    binom = np.concatenate([[0.0], np.cumsum(np.log((m + d - 2) / m))])
    out = falling + binom
    out.flags.writeable = False
    return out


def log_g_polynomial(d: int, n: int, lam: float) -> float:
    """Log of the moment-generating-function upper bound at ``lam``."""
    if d < 2 or n < 1:
        raise DimensionMismatch("need d >= 2 and n >= 1")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda {lam!r} outside [0, 1]")
    if lam == 0.0:
        return 0.0
    coeffs = _log_coeffs(d, n)
    terms = coeffs + np.arange(n + 1) * math.log(lam)
    peak = float(terms.max())
    return peak + math.log(float(np.exp(terms - peak).sum()))


def g_polynomial(d: int, n: int, lam: float) -> float:
    return math.exp(log_g_polynomial(d, n, lam))


@lru_cache(maxsize=128)
def _grid_log_sum(n_cells: int, arm_sizes: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Summed log moment bound over a fixed lambda grid (independent of t)."""
    grid = np.linspace(0.0, 1.0, _LAMBDA_GRID_SIZE)
    total = np.zeros_like(grid)
    log_lam = np.log(grid[1:])
    for n in arm_sizes:
        coeffs = _log_coeffs(n_cells, n)
        powers = np.arange(n + 1)
        terms = coeffs[:, None] + powers[:, None] * log_lam[None, :]
        peak = terms.max(axis=0)
        total[1:] += peak + np.log(np.exp(terms - peak[None, :]).sum(axis=0))
    grid.flags.writeable = False
    total.flags.writeable = False
    return grid, total


def _sum_log_g(spec: ChernoffSpec, lam: float) -> float:
    return sum(log_g_polynomial(spec.n_cells, n, lam) for n in spec.arm_sizes)


def _minimize_exponent(spec: ChernoffSpec, t: float) -> tuple[float, float]:
    """Minimize ``-lam*t + sum log G(lam)`` over [0, 1]: grid then golden section."""
    grid, total = _grid_log_sum(spec.n_cells, spec.arm_sizes)
    phi = -grid * t + total
    i = int(np.argmin(phi))
    best_val = float(phi[i])
    best_lam = float(grid[i])
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, grid.size - 1)])
    ratio = (math.sqrt(5.0) - 1.0) / 2.0

    def f(lam: float) -> float:
        return -lam * t + _sum_log_g(spec, lam)

    a, b = lo, hi
    x1 = b - ratio * (b - a)
    x2 = a + ratio * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > _LAMBDA_TOL:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - ratio * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + ratio * (b - a)
            f2 = f(x2)
        if f1 < best_val:
            best_val, best_lam = f1, x1
        if f2 < best_val:
            best_val, best_lam = f2, x2
    return best_val, best_lam


def tail_rhs(spec: ChernoffSpec, t: float) -> float:
    """Chernoff upper bound on the probability that the weighted KL sum exceeds ``t``."""
    if t < 0:
        raise DomainError("threshold must be nonnegative")
    log_val, _ = _minimize_exponent(spec, t)
    return math.exp(min(log_val, 0.0))


@lru_cache(maxsize=256)
def find_t_alpha(spec: ChernoffSpec) -> CriticalValue:
    """Smallest threshold whose tail bound reaches the requested level."""
    if spec.alpha >= 1.0:
        return CriticalValue(0.0, 1.0, 0.0)
    hi = 1.0
    while tail_rhs(spec, hi) > spec.alpha:
        hi *= 2.0
        if hi > _T_BRACKET_CAP:
            raise NoConvergence("tail bound never reaches the requested level")
    lo = 0.0
    while hi - lo > _T_TOL:
        mid = 0.5 * (lo + hi)
        if tail_rhs(spec, mid) <= spec.alpha:
            hi = mid
        else:
            lo = mid
    log_val, lam = _minimize_exponent(spec, hi)
    return CriticalValue(hi, math.exp(min(log_val, 0.0)), lam)


# ---------------------------------------------------------------------------
# the KL-ball convex program


def weighted_kl(p_hats: Sequence[np.ndarray], ps: Sequence[np.ndarray],
                sizes: Sequence[int]) -> float:
    """Sum over arms of n_z * KL(empirical || candidate); zero-mass empirical
    cells contribute nothing regardless of the candidate."""
    total = 0.0
    for p_hat, p, n in zip(p_hats, ps, sizes):
        mask = p_hat > 0
        if np.any(p[mask] <= 0):
            return math.inf
        total += float(n) * float(np.sum(p_hat[mask] * np.log(p_hat[mask] / p[mask])))
    return total


class _KlProgram:
    """Shared LP data for the cutting-plane solves over one dataset.

    Variables are the counterfactual block followed by one cell block per arm;
    the KL budget enters only through aggregate supporting-hyperplane cuts."""

    def __init__(self, sys: InequalitySystem, ds: Dataset, t_alpha: float):
        dims = sys.dims
        observed = empirical_distributions(ds)
        self.dims = dims
        self.t_alpha = t_alpha
        self.sizes = [o.n for o in observed]
        self.p_hats = [np.asarray(o.probs) for o in observed]
        s, c, q = dims.n_strata, dims.n_cells, dims.n_instruments
        self.width = s + q * c
        self.n_strata = s
        self.n_cells = c
        self.n_arms = q
        r = len(sys.rows)
        base = np.zeros((r * q, self.width))
        lhs, rhs = sys.lhs_matrix, sys.rhs_matrix
        for z in range(q):
            block = slice(z * r, (z + 1) * r)
            base[block, :s] = lhs
            base[block, s + z * c : s + (z + 1) * c] = -rhs
        self.iv_rows = base
        self.iv_rhs = np.zeros(r * q)
        eqs = [np.zeros(self.width) for _ in range(q + 1)]
        eqs[0][:s] = 1.0
        for z in range(q):
            eqs[z + 1][s + z * c : s + (z + 1) * c] = 1.0
        self.a_eq = np.vstack(eqs)
        self.b_eq = np.ones(q + 1)
        # flattened views for fast KL evaluation across all arms at once
        phat_concat = np.concatenate(self.p_hats)
        weights = np.concatenate([np.full(c, float(n)) for n in self.sizes])
        self._mask = phat_concat > 0
        self._wp = (weights * phat_concat)[self._mask]
        self._log_phat = np.log(phat_concat[self._mask])

    def arm_block(self, x: np.ndarray, z: int) -> np.ndarray:
        s, c = self.n_strata, self.n_cells
        return x[s + z * c : s + (z + 1) * c]

    def floored_arms(self, x: np.ndarray) -> list[np.ndarray]:
        out = []
        for z in range(self.n_arms):
            p = np.array(self.arm_block(x, z))
            mask = self.p_hats[z] > 0
            p[mask] = np.maximum(p[mask], _FLOOR)
            out.append(p)
        return out

    def _kl_of_cells(self, cells: np.ndarray) -> float:
        p = np.maximum(cells[self._mask], _FLOOR)
        return float(np.sum(self._wp * (self._log_phat - np.log(p))))

    def kl_at(self, x: np.ndarray) -> float:
        return self._kl_of_cells(x[self.n_strata :])

    def center_point(self) -> np.ndarray:
        """Every arm at its empirical distribution: the center of the KL ball.
        (The stratum block is irrelevant for cut generation.)"""
        x = np.zeros(self.width)
        s, c = self.n_strata, self.n_cells
        for z, p_hat in enumerate(self.p_hats):
            x[s + z * c : s + (z + 1) * c] = p_hat
        return x

    def _crossing(self, anchor: np.ndarray, x: np.ndarray) -> float:
        """Largest fraction of the way from anchor to x still inside the budget."""
        s = self.n_strata
        cells_a = anchor[s:]
        step = x[s:] - cells_a
        lo, hi = 0.0, 1.0
        for _ in range(22):
            mid = 0.5 * (lo + hi)
            if self._kl_of_cells(cells_a + mid * step) <= self.t_alpha:
                lo = mid
            else:
                hi = mid
        return lo

    def boundary_point(self, anchor: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Point on [anchor, x] where the KL sum crosses the budget; ``x``
        itself when the whole segment stays inside.  The anchor must lie on or
        inside the budget."""
        if self.kl_at(x) <= self.t_alpha:
            return np.array(x)
        return anchor + self._crossing(anchor, x) * (x - anchor)

    def cut_points(self, anchor: np.ndarray, x: np.ndarray) -> list[np.ndarray]:
        """Cut locations along [anchor, x]: the budget crossing, the outer
        midpoint, and a capped near-end point.

        Staying on the segment keeps every coordinate bounded away from zero
        wherever the empirical mass is positive, so the cut gradients stay
        within what the float LP kernel digests reliably.
        """
        if self.kl_at(x) <= self.t_alpha:
            return [np.array(x)]
        theta_b = self._crossing(anchor, x)
        thetas = {theta_b, 0.5 * (theta_b + 1.0), max(0.999, theta_b)}
        return [anchor + t * (x - anchor) for t in sorted(thetas)]

    def linearize(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        """Supporting hyperplane of the weighted KL sum at the (floored) point:
        coefficients over this module's variable layout and the value at x, so
        the KL sum is bounded below by ``value + row @ (p - x)`` everywhere."""
        s, c = self.n_strata, self.n_cells
        arms = self.floored_arms(x)
        row = np.zeros(self.width)
        value = 0.0
        for z, (p_hat, p, n) in enumerate(zip(self.p_hats, arms, self.sizes)):
            mask = p_hat > 0
            grad = np.zeros(c)
            grad[mask] = -n * p_hat[mask] / p[mask]
            row[s + z * c : s + (z + 1) * c] = grad
            value += n * float(np.sum(p_hat[mask] * np.log(p_hat[mask] / p[mask])))
        return row, value


class _CutPool:
    """Base rows plus a managed bundle of cut rows for one solve.

    Near-parallel cuts are merged (tighter one wins) and cuts that have gone
    slack are retired once the pool exceeds its budget: dropping a valid cut
    only loosens the relaxation, so the outer bound stays sound while the
    master LPs stay small and well conditioned.
    """

    def __init__(self, base_rows: np.ndarray, base_rhs: np.ndarray,
                 extra_cols: int = 0, capacity: int = 80):
        if extra_cols:
            base_rows = np.hstack([base_rows, np.zeros((base_rows.shape[0], extra_cols))])
        self.base_rows = base_rows
        self.base_rhs = base_rhs
        self.capacity = capacity
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.born: list[int] = []
        self.round = 0

    def add(self, row: np.ndarray, rhs: float) -> None:
        scale = float(np.max(np.abs(row)))
        if scale <= 0:
            return
        row = row / scale
        rhs = rhs / scale
        for i, (old_row, old_rhs) in enumerate(zip(self.rows, self.rhs)):
            if np.max(np.abs(old_row - row)) < 1e-6:
                if rhs < old_rhs:
                    self.rows[i] = row
                    self.rhs[i] = rhs
                    self.born[i] = self.round
                return
        self.rows.append(row)
        self.rhs.append(rhs)
        self.born.append(self.round)

    def prune(self, x: np.ndarray) -> None:
        self.round += 1
        if len(self.rows) <= self.capacity:
            return
        slack = np.array([rhs - float(row @ x) for row, rhs in zip(self.rows, self.rhs)])
        keep = [
            i for i in range(len(self.rows))
            if slack[i] <= 1e-6 or self.round - self.born[i] <= 3
        ]
        if len(keep) > self.capacity:
            keep.sort(key=lambda i: slack[i])
            keep = keep[: self.capacity]
        keep = sorted(keep)
        self.rows = [self.rows[i] for i in keep]
        self.rhs = [self.rhs[i] for i in keep]
        self.born = [self.born[i] for i in keep]

    def a_ub(self) -> np.ndarray:
        return self.base_rows if not self.rows else np.vstack([self.base_rows, np.vstack(self.rows)])

    def b_ub(self) -> np.ndarray:
        return self.base_rhs if not self.rhs else np.concatenate([self.base_rhs, self.rhs])


def _kl_feasible_point(prog: _KlProgram, max_rounds: int, tol_kl: float):
    """Feasibility phase: drive down an epigraph bound on the KL sum.

    Returns a point inside both the inequality system and the budget, or
    ``None`` when the program is provably empty (the LP lower bound on the
    KL sum already exceeds the budget).  The search keeps going below the
    budget while cheap progress is available, because a point well inside the
    budget anchors the later incumbent line searches much better.
    """
    center = prog.center_point()
    # fast path: when the empirical distributions already satisfy the system,
    # the KL center itself anchors everything (and with the deepest margin)
    s = prog.n_strata
    b_center = -(prog.iv_rows[:, s:] @ center[s:])
    probe = solve(
        np.zeros(s), prog.iv_rows[:, :s], b_center, np.ones((1, s)), [1.0]
    )
    if probe.status == "optimal":
        point = center.copy()
        point[:s] = np.maximum(probe.x, 0.0)
        point[:s] /= point[:s].sum()
        return point

    # one extra epigraph variable, kept nonnegative (the KL sum never is not)
    cost = np.zeros(prog.width + 1)
    cost[-1] = 1.0
    pool = _CutPool(prog.iv_rows, prog.iv_rhs, extra_cols=1)
    a_eq = np.hstack([prog.a_eq, np.zeros((prog.a_eq.shape[0], 1))])
    best = None
    best_val = math.inf
    for _ in range(max_rounds):
        res = solve(cost, pool.a_ub(), pool.b_ub(), a_eq, prog.b_eq)
        if res.status != "optimal":
            raise LpFailure(res.status, "feasibility relaxation failed")
        lower = float(res.objective)
        point = res.x[:-1]
        actual = prog.kl_at(point)
        if actual < best_val:
            best, best_val = point, actual
        if best_val <= 0.5 * prog.t_alpha:
            return best
        if best_val <= prog.t_alpha + tol_kl and best_val - lower <= 1e-6 * max(1.0, prog.t_alpha):
            return best
        if lower > prog.t_alpha + tol_kl:
            return None
        for cut_point in prog.cut_points(center, point):
            row, value = prog.linearize(cut_point)
            # value + row @ (p - cut_point) <= u
            aug = np.concatenate([row, [-1.0]])
            pool.add(aug, float(row @ cut_point) - value)
        pool.prune(res.x)
    if best_val <= prog.t_alpha + tol_kl:
        return best
    raise NoConvergence("feasibility phase exceeded the cut budget")


_GAP_TOL = 1e-5


def _optimize_direction(prog: _KlProgram, f: LinearFunctional, maximize: bool,
                        anchor: np.ndarray, max_rounds: int, tol_kl: float,
                        tol_obj: float):
    """One endpoint: optimize ``f`` over the cut relaxation.

    Stops when the iterate honors the true budget with a settled objective, or
    when a certified incumbent (the budget crossing toward the interior
    anchor, feasible by convexity) pins the optimum within the gap tolerance.
    The outer LP value is returned, so any residual error widens the interval.
    """
    cost = np.zeros(prog.width)
    cost[: prog.n_strata] = f.coeffs
    pool = _CutPool(prog.iv_rows, prog.iv_rhs)
    sense = 1.0 if maximize else -1.0
    best_inc = None
    best_point = anchor
    prev = None
    for _ in range(max_rounds):
        res = solve(cost, pool.a_ub(), pool.b_ub(), prog.a_eq, prog.b_eq, maximize=maximize)
        if res.status != "optimal":
            raise LpFailure(res.status, "cut relaxation failed unexpectedly")
        obj = float(res.objective)
        actual = prog.kl_at(res.x)
        if actual <= prog.t_alpha + tol_kl and (prev is None or abs(obj - prev) <= tol_obj):
            return obj, res.x
        points = prog.cut_points(anchor, res.x)
        inside = points[0]
        inc = float(cost @ inside)
        if best_inc is None or sense * (inc - best_inc) > 0:
            best_inc = inc
            best_point = inside
        if sense * (obj - best_inc) <= max(tol_obj, _GAP_TOL):
            return obj, best_point
        prev = obj
        for cut_point in points:
            row, value = prog.linearize(cut_point)
            # value + row @ (p - cut_point) <= budget
            pool.add(row, prog.t_alpha + float(row @ cut_point) - value)
        pool.prune(res.x)
    raise NoConvergence("cutting-plane loop exceeded the round budget")


def _witness(prog: _KlProgram, x: np.ndarray) -> dict:
    probs = np.maximum(x[: prog.n_strata], 0.0)
    probs /= probs.sum()
    return {
        "counterfactual": CounterfactualDistribution(prog.dims, probs),
        "arms": [np.array(prog.arm_block(x, z)) for z in range(prog.n_arms)],
    }


def confidence_intervals(
    sys: InequalitySystem,
    ds: Dataset,
    functionals: Sequence[LinearFunctional],
    alpha: float,
    *,
    max_cut_rounds: int = 500,
    tol_kl: float = 1e-7,
    tol_obj: float = 1e-6,
) -> list[ConfidenceInterval]:
    """Simultaneous confidence intervals sharing one critical value.

    An empty program (no population distributions inside the KL budget satisfy
    the inequality system) yields sentinel intervals flagged as falsified.
    """
    if not functionals:
        raise DimensionMismatch("need at least one functional")
    if sys.dims != ds.dims:
        raise DimensionMismatch("system and dataset dimensions disagree")
    sizes = [n for n in ds.arm_sizes]
    spec = ChernoffSpec(ds.dims.n_cells, tuple(sizes), alpha)
    critical = find_t_alpha(spec)
    prog = _KlProgram(sys, ds, critical.t_alpha)
    start = _kl_feasible_point(prog, max_cut_rounds, tol_kl)
    if start is None:
        return [
            ConfidenceInterval(f.label, math.inf, -math.inf, alpha, critical.t_alpha, True)
            for f in functionals
        ]
    out = []
    for f in functionals:
        lo, x_lo = _optimize_direction(prog, f, False, start, max_cut_rounds, tol_kl, tol_obj)
        hi, x_hi = _optimize_direction(prog, f, True, start, max_cut_rounds, tol_kl, tol_obj)
        out.append(
            ConfidenceInterval(
                f.label, lo, hi, alpha, critical.t_alpha, False,
                _witness(prog, x_lo), _witness(prog, x_hi),
            )
        )
    return out


# ---------------------------------------------------------------------------
# coverage harness


@dataclass(frozen=True)
class TruthInstance:
    """A counterfactual distribution with per-arm observed distributions it
    is compatible with, plus the functionals to cover."""

    counterfactual: CounterfactualDistribution
    arm_probs: tuple
    arm_sizes: tuple[int, ...]
    functionals: tuple[LinearFunctional, ...]


def vertex_mixture_truth(
    dims: Dims,
    arm_sizes: Sequence[int],
    functionals: Sequence[LinearFunctional],
    seed: int,
) -> TruthInstance:
    """Random compatible truth built as a mixture of the polytope's vertices."""
    from .oracle import enumerate_vertices

    rng = np.random.default_rng(seed)
    vs = enumerate_vertices(dims)
    weights = -np.log1p(-rng.random(len(vs.vertices)))
    weights /= weights.sum()
    p_star = np.zeros(dims.n_strata)
    arms = np.zeros((dims.n_instruments, dims.n_cells))
    for w, v in zip(weights, vs.vertices):
        p_star[v.stratum] += w
        for z, cell in enumerate(v.cells):
            arms[z, cell] += w
    return TruthInstance(
        CounterfactualDistribution(dims, p_star),
        tuple(arms[z].copy() for z in range(dims.n_instruments)),
        tuple(int(n) for n in arm_sizes),
        tuple(functionals),
    )


def coverage_monte_carlo(
    dims: Dims,
    truth: TruthInstance,
    alpha: float,
    reps: int,
    seed: int,
    sys: InequalitySystem | None = None,
) -> float:
    """Fraction of simulated datasets whose intervals cover every true value."""
    if sys is None:
        from .inequalities import enumerate_full, filter_nonredundant

        sys = filter_nonredundant(enumerate_full(dims))
    rng = np.random.default_rng(seed)
    true_values = [f(truth.counterfactual) for f in truth.functionals]
    hits = 0
    for _ in range(reps):
        counts = np.stack(
            [
                rng.multinomial(n, p)
                for n, p in zip(truth.arm_sizes, truth.arm_probs)
            ]
        ).reshape(dims.n_instruments, dims.n_treatments, dims.n_outcomes)
        ds = Dataset(dims, counts)
        # a coarse objective tolerance only pushes endpoints outward, which
        # cannot hurt coverage
        intervals = confidence_intervals(sys, ds, truth.functionals, alpha, tol_obj=1e-3)
        ok = all(
            ci.lower - 1e-9 <= val <= ci.upper + 1e-9
            for ci, val in zip(intervals, true_values)
        )
        hits += bool(ok)
    return hits / reps
