"""Self-contained dense two-phase simplex kernel.

Solves  min c.x  subject to  a_ub x <= b_ub,  a_eq x = b_eq,  x >= 0.

Two numeric backends share the same algorithm and result contract:

* the float backend (numpy tableau, Dantzig pricing with a Bland fallback
  against cycling) runs every production optimization;
* the exact backend (``fractions.Fraction`` tableau, Bland pricing throughout,
  zero tolerances) backs the brute-force verification layer, where feasibility
  and redundancy are discrete questions.

The kernel is deliberately small so that the whole optimization chain can be
audited; an external solver can be swapped in behind :func:`solve`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import LpFailure

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
_BLAND_AFTER = 3000
_MAX_ITER = 30000


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: object = None
    objective: object = None


def solve(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, *,
          maximize: bool = False, exact: bool = False) -> LpResult:
    """Solve a linear program over nonnegative variables.

    Returns an :class:`LpResult`; ``x`` and ``objective`` are populated only
    for status ``"optimal"``.  With ``exact=True`` all data is converted to
    rationals and the result is exact.

    The float path verifies its own solution and retries once with Bland
    pricing before trusting a claimed infeasibility or a drifting solution.
    """
    if exact:
        return _solve_exact(c, a_ub, b_ub, a_eq, b_eq, maximize)
    try:
        res = _solve_float(c, a_ub, b_ub, a_eq, b_eq, maximize, bland=False)
    except LpFailure as err:
        if err.status not in ("numerical", "stalled"):
            raise
        res = None
    if res is None or res.status == "infeasible":
        retry = _solve_float(c, a_ub, b_ub, a_eq, b_eq, maximize, bland=True)
        if res is None or retry.status != "infeasible":
            return retry
    return res


# ---------------------------------------------------------------------------
# float backend


def _as_2d(a, n):
    if a is None:
        return np.zeros((0, n), dtype=float)
    arr = np.asarray(a, dtype=float)
    return arr.reshape(0, n) if arr.size == 0 else np.atleast_2d(arr)


def _solve_float(c, a_ub, b_ub, a_eq, b_eq, maximize, bland=False):
    c = np.asarray(c, dtype=float)
    n = c.size
    sign = -1.0 if maximize else 1.0
    a1 = _as_2d(a_ub, n)
    b1 = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    a2 = _as_2d(a_eq, n)
    b2 = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    if a1.shape[0] != b1.size or a2.shape[0] != b2.size:
        raise LpFailure("bad-input", "constraint matrix/vector length mismatch")

    # row scaling: an inequality is invariant under positive row scaling and
    # the cutting-plane path produces rows with wildly mixed magnitudes
    a_all = np.vstack([a1, a2]) if a1.size or a2.size else np.zeros((0, n))
    b_all = np.concatenate([b1, b2])
    is_ub = np.zeros(a_all.shape[0], dtype=bool)
    is_ub[: a1.shape[0]] = True
    scales = np.max(np.abs(a_all), axis=1) if a_all.size else np.zeros(0)
    degenerate = scales <= 0.0
    if degenerate.any():
        bad_ub = degenerate & is_ub & (b_all < -FEAS_TOL)
        bad_eq = degenerate & ~is_ub & (np.abs(b_all) > FEAS_TOL)
        if bad_ub.any() or bad_eq.any():
            return LpResult("infeasible")
    keep_rows = ~degenerate
    row_mat = a_all[keep_rows] / scales[keep_rows, None]
    rhs_vec = b_all[keep_rows] / scales[keep_rows]
    is_ub = is_ub[keep_rows]
    kinds = ["ub" if flag else "eq" for flag in is_ub]
    m = row_mat.shape[0]
    m_ub = int(is_ub.sum())
    if m == 0:
        # only x >= 0 remains; bounded iff no negative cost coefficient
        cc = sign * c
        if np.any(cc < -PIVOT_TOL):
            return LpResult("unbounded")
        x = np.zeros(n)
        return LpResult("optimal", x, float(c @ x))

    width = n + m_ub
    T = np.zeros((m, width))
    T[:, :n] = row_mat
    T[np.arange(m_ub), n + np.arange(m_ub)] = 1.0  # ub rows precede eq rows
    b = rhs_vec.copy()
    neg = b < 0
    T[neg] *= -1.0
    b[neg] *= -1.0
    basis = [-1] * m
    need_art = []
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis[i] = n + i
        else:
            need_art.append(i)

    a0 = T[:, :width].copy()  # post-scaling, post-sign-flip rows for basis polish
    b0 = b.copy()
    orig_rows = list(range(m))

    n_art = len(need_art)
    if n_art:
        art_block = np.zeros((m, n_art))
        for j, i in enumerate(need_art):
            art_block[i, j] = 1.0
            basis[i] = width + j
        T = np.hstack([T, art_block])

    # phase 1: minimize the artificial sum
    if n_art:
        r = np.zeros(T.shape[1])
        for i in need_art:
            r[:width] -= T[i, :width]
        status = _float_pivot_loop(T, b, r, basis, allow=width, bland=bland)
        if status != "optimal":
            return LpResult("infeasible")
        if _phase_value(T, b, basis, width) > FEAS_TOL:
            return LpResult("infeasible")
        keep = _drive_out_artificials(T, b, basis, width)
        T = T[keep, :width]
        b = b[keep]
        basis = [basis[i] for i in keep]
        orig_rows = [orig_rows[i] for i in keep]
    else:
        T = T[:, :width]

    # phase 2
    r = np.zeros(width)
    r[:n] = sign * c
    for i, bi in enumerate(basis):
        if bi < width and r[bi] != 0.0:
            r -= r[bi] * T[i]
    status = _float_pivot_loop(T, b, r, basis, allow=width, bland=bland)
    if status == "unbounded":
        return LpResult("unbounded")
    # polish: the pivoted tableau only identifies the basis; recompute the
    # basic values from the original data (with one refinement step) to shed
    # accumulated drift, keeping whichever candidate violates least
    def _violation(x):
        if not m:
            return 0.0
        resid = row_mat @ x - rhs_vec
        ub_mask = np.array([k == "ub" for k in kinds])
        worst = float(np.max(resid[ub_mask])) if ub_mask.any() else 0.0
        if (~ub_mask).any():
            worst = max(worst, float(np.max(np.abs(resid[~ub_mask]))))
        return worst

    candidates = [_basic_point(width, basis, b)]
    try:
        square = a0[np.ix_(orig_rows, basis)]
        rhs0 = b0[orig_rows]
        x_basic = np.linalg.solve(square, rhs0)
        x_basic += np.linalg.solve(square, rhs0 - square @ x_basic)
        x_full = np.zeros(width)
        x_full[basis] = x_basic
        candidates.append(x_full)
    except np.linalg.LinAlgError:
        pass
    scored = [(np.maximum(cand[:n], 0.0), cand) for cand in candidates]
    x, _ = min(scored, key=lambda pair: _violation(pair[0]))
    worst = _violation(x)
    if worst > 1e-6:
        raise LpFailure("numerical", f"solution violates constraints by {worst:.2e}")
    return LpResult("optimal", x, float(c @ x))


def _phase_value(T, b, basis, width) -> float:
    return float(sum(b[i] for i in range(len(basis)) if basis[i] >= width))


def _basic_point(width, basis, b) -> np.ndarray:
    x = np.zeros(width)
    for i, bi in enumerate(basis):
        if bi < width:
            x[bi] = b[i]
    return x


def _drive_out_artificials(T, b, basis, width) -> list[int]:
    """Pivot artificials out of the basis; rows that cannot pivot are redundant."""
    m = T.shape[0]
    keep = []
    for i in range(m):
        if basis[i] < width:
            keep.append(i)
            continue
        row = T[i, :width]
        candidates = np.flatnonzero(np.abs(row) > PIVOT_TOL)
        candidates = [j for j in candidates if j not in basis]
        if not candidates:
            continue  # 0 = 0 row
        _apply_pivot(T, b, i, int(candidates[0]))
        basis[i] = int(candidates[0])
        keep.append(i)
    return keep


def _apply_pivot(T, b, row, col):
    piv = T[row, col]
    T[row] = T[row] / piv
    b[row] = b[row] / piv
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])
    b -= col_vals * b[row]
    T[:, col] = 0.0
    T[row, col] = 1.0


def _float_pivot_loop(T, b, r, basis, allow, bland=False) -> str:
    """Pivot to optimality.  ``allow`` limits entering columns (blocks artificials)."""
    bland_after = 0 if bland else _BLAND_AFTER
    for it in range(_MAX_ITER):
        cols = r[:allow]
        if it < bland_after:
            j = int(np.argmin(cols))
            if cols[j] >= -PIVOT_TOL:
                return "optimal"
        else:
            neg = np.flatnonzero(cols < -PIVOT_TOL)
            if neg.size == 0:
                return "optimal"
            j = int(neg[0])
        col = T[:, j]
        eligible = np.flatnonzero(col > PIVOT_TOL)
        if eligible.size == 0:
            return "unbounded"
        ratios = b[eligible] / col[eligible]
        if it < bland_after:
            # Harris-style two-pass ratio test: relax the bound by a feasibility
            # slack, then pivot on the largest eligible element; tiny pivots are
            # what blow a dense tableau up
            bound = float(np.min((b[eligible] + 1e-9) / col[eligible]))
            cand = eligible[ratios <= bound]
            row = int(cand[np.argmax(col[cand])])
        else:
            best = float(np.min(ratios))
            tie = eligible[ratios <= best + 1e-12]
            row = int(min(tie, key=lambda i: basis[i]))
        _apply_pivot(T, b, row, j)
        rj = r[j]
        r -= rj * T[row]
        r[j] = 0.0
        basis[row] = j
    raise LpFailure("stalled", "simplex iteration limit reached")


# ---------------------------------------------------------------------------
# exact backend


def _frac_matrix(a, n):
    if a is None:
        return []
    return [[Fraction(v) for v in row] for row in a]


def _solve_exact(c, a_ub, b_ub, a_eq, b_eq, maximize):
    c = [Fraction(v) for v in c]
    n = len(c)
    sign = Fraction(-1) if maximize else Fraction(1)
    rows = _frac_matrix(a_ub, n) + _frac_matrix(a_eq, n)
    rhs = [Fraction(v) for v in (list(b_ub or []) + list(b_eq or []))]
    m_ub = len(list(b_ub or []))
    m = len(rows)
    if any(len(row) != n for row in rows):
        raise LpFailure("bad-input", "constraint matrix/vector length mismatch")
    if m == 0:
        if any(sign * ci < 0 for ci in c):
            return LpResult("unbounded")
        x = [Fraction(0)] * n
        return LpResult("optimal", x, Fraction(0))

    width = n + m_ub
    zero = Fraction(0)
    T = [row[:] + [zero] * m_ub for row in rows]
    b = rhs[:]
    basis = [-1] * m
    need_art = []
    for i in range(m):
        if i < m_ub:
            T[i][n + i] = Fraction(1)
        if b[i] < 0:
            T[i] = [-v for v in T[i]]
            b[i] = -b[i]
        if i < m_ub and T[i][n + i] > 0:
            basis[i] = n + i
        else:
            need_art.append(i)

    n_art = len(need_art)
    for j, i in enumerate(need_art):
        for k in range(m):
            T[k].append(Fraction(1) if k == i else zero)
        basis[i] = width + j

    if n_art:
        r = [zero] * (width + n_art)
        for i in need_art:
            for j in range(width):
                r[j] -= T[i][j]
        status = _exact_pivot_loop(T, b, r, basis, allow=width)
        if status != "optimal":
            return LpResult("infeasible")
        if any(b[i] > 0 and basis[i] >= width for i in range(m)):
            return LpResult("infeasible")
        keep = []
        for i in range(m):
            if basis[i] < width:
                keep.append(i)
                continue
            cand = next((j for j in range(width) if T[i][j] != 0 and j not in basis), None)
            if cand is None:
                continue
            _exact_apply_pivot(T, b, i, cand)
            basis[i] = cand
            keep.append(i)
        T = [T[i][:width] for i in keep]
        b = [b[i] for i in keep]
        basis = [basis[i] for i in keep]
    else:
        T = [row[:width] for row in T]

    r = [sign * c[j] if j < n else zero for j in range(width)]
    for i, bi in enumerate(basis):
        if r[bi] != 0:
            coef = r[bi]
            for j in range(width):
                r[j] -= coef * T[i][j]
    status = _exact_pivot_loop(T, b, r, basis, allow=width)
    if status == "unbounded":
        return LpResult("unbounded")
    x = [zero] * width
    for i, bi in enumerate(basis):
        x[bi] = b[i]
    obj = sum(ci * xi for ci, xi in zip(c, x[:n]))
    return LpResult("optimal", x[:n], obj)


def _exact_apply_pivot(T, b, row, col):
    piv = T[row][col]
    T[row] = [v / piv for v in T[row]]
    b[row] = b[row] / piv
    for i in range(len(T)):
        if i == row:
            continue
        f = T[i][col]
        if f != 0:
            T[i] = [vi - f * vr for vi, vr in zip(T[i], T[row])]
            b[i] = b[i] - f * b[row]


def _exact_pivot_loop(T, b, r, basis, allow) -> str:
    # Bland's rule throughout: finite termination without tolerances
    for _ in range(200000):
        j = next((jj for jj in range(allow) if r[jj] < 0), None)
        if j is None:
            return "optimal"
        best = None
        row = -1
        for i in range(len(T)):
            if T[i][j] > 0:
                ratio = b[i] / T[i][j]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[row]):
                    best = ratio
                    row = i
        if row < 0:
            return "unbounded"
        _exact_apply_pivot(T, b, row, j)
        coef = r[j]
        for jj in range(len(r)):
            r[jj] -= coef * T[row][jj]
        basis[row] = j
    raise LpFailure("stalled", "exact simplex iteration limit reached")
