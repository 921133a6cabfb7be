"""Brute-force verification layer: coherence relation, coupling feasibility,
edge-certificate redundancy, vertex enumeration, and LP redundancy audits.

Everything here works in exact rational arithmetic (float inputs are converted
to exact binary rationals first), so feasibility, tightness, and redundancy are
decided without tolerances.  The production float paths live elsewhere; this
module exists to validate them at small dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Sequence

import numpy as np

from .core import CounterfactualDistribution, Dims, ObservedDistribution, cell_flat, stratum_outcomes
from .errors import DimensionMismatch, SizeOverflow
from .inequalities import InequalitySystem, SubsetFamily, iter_families, mask_levels
from .simplex import solve

_ALL_SUBSET_CAP = 20          # strata count cap for all-subsets coupling checks
_CANDIDATE_CAP = 1_000_000    # family count cap for certificate searches
_VERTEX_CAP = 1_000_000


@dataclass(frozen=True)
class CoherenceRelation:
    """Bipartite relation pairing strata with the observed cells they allow."""

    dims: Dims
    edges: frozenset[tuple[int, int]]

    def neighbors_of_stratum(self, stratum: int) -> tuple[int, ...]:
        return tuple(sorted(c for s, c in self.edges if s == stratum))

    def neighbors_of_cell(self, cell: int) -> tuple[int, ...]:
        return tuple(sorted(s for s, c in self.edges if c == cell))


def _stratum_cells(dims: Dims) -> list[tuple[int, ...]]:
    """For each stratum, the flat cell coherent with each treatment level."""
    out = []
    for s in range(dims.n_strata):
        outcomes = stratum_outcomes(dims, s)
        out.append(tuple(cell_flat(dims, x, outcomes[x - 1]) for x in range(1, dims.n_treatments + 1)))
    return out


def build_coherence(dims: Dims) -> CoherenceRelation:
    edges = frozenset(
        (s, c) for s, cells in enumerate(_stratum_cells(dims)) for c in cells
    )
    return CoherenceRelation(dims, edges)


# ---------------------------------------------------------------------------
# coupling feasibility


def _to_fractions(values) -> list[Fraction]:
    return [Fraction(float(v)) for v in values]


def strassen_feasible(
    pa: CounterfactualDistribution,
    pb: ObservedDistribution,
    all_subsets: bool = False,
) -> bool:
    """Does a coupling of ``pa`` and ``pb`` supported on the coherence relation exist?

    The default check runs over Cartesian stratum events only; with
    ``all_subsets=True`` every nonempty proper subset of strata is tested
    (tiny dimensions only).  The two must agree: a general event's mass is
    dominated by the mass of its Cartesian closure, which shares neighbors.
    """
    dims = pa.dims
    if pb.dims != dims:
        raise DimensionMismatch("marginals built for different dimensions")
    pa_f = _to_fractions(pa.probs)
    pb_f = _to_fractions(pb.probs)
    if all_subsets:
        if dims.n_strata > _ALL_SUBSET_CAP:
            raise SizeOverflow(f"all-subsets check capped at {_ALL_SUBSET_CAP} strata")
        cells = _stratum_cells(dims)
        for u in range(1, 2**dims.n_strata - 1):
            mass = Fraction(0)
            neigh = 0
            for s in range(dims.n_strata):
                if u >> s & 1:
                    mass += pa_f[s]
                    for c in cells[s]:
                        neigh |= 1 << c
            rhs = sum((pb_f[c] for c in range(dims.n_cells) if neigh >> c & 1), Fraction(0))
            if mass > rhs:
                return False
        return True
    m = dims.n_outcomes
    for masks in iter_families(dims):
        lhs = Fraction(0)
        for s in range(dims.n_strata):
            outcomes = stratum_outcomes(dims, s)
            if all(masks[k] >> (outcomes[k] - 1) & 1 for k in range(dims.n_treatments)):
                lhs += pa_f[s]
        rhs = Fraction(0)
        for x in range(1, dims.n_treatments + 1):
            for y in mask_levels(masks[x - 1]):
                rhs += pb_f[cell_flat(dims, x, y)]
        if lhs > rhs:
            return False
    return True


# ---------------------------------------------------------------------------
# edge certificates and redundancy


@dataclass(frozen=True)
class EdgeCertificate:
    """A stratum event together with its certificate edge set.

    Edge slot ``stratum * K + (x - 1)`` holds the edge between a stratum and
    the cell coherent with treatment ``x`` under it.
    """

    dims: Dims
    stratum_mask: int
    edge_mask: int


def _family_stratum_mask(masks: Sequence[int], dims: Dims) -> int:
    out = 0
    for s in range(dims.n_strata):
        outcomes = stratum_outcomes(dims, s)
        if all(masks[k] >> (outcomes[k] - 1) & 1 for k in range(dims.n_treatments)):
            out |= 1 << s
    return out


def edge_certificate(dims: Dims, stratum_mask: int) -> EdgeCertificate:
    """Certificate edges: edges inside the event joined with edges entirely outside it."""
    k = dims.n_treatments
    cells = _stratum_cells(dims)
    neigh = 0
    for s in range(dims.n_strata):
        if stratum_mask >> s & 1:
            for c in cells[s]:
                neigh |= 1 << c
    edge_mask = 0
    for s in range(dims.n_strata):
        inside = stratum_mask >> s & 1
        for x0, c in enumerate(cells[s]):
            if inside or not (neigh >> c & 1):
                edge_mask |= 1 << (s * k + x0)
    return EdgeCertificate(dims, stratum_mask, edge_mask)


def edge_certificate_for_family(dims: Dims, masks: Sequence[int]) -> EdgeCertificate:
    return edge_certificate(dims, _family_stratum_mask(masks, dims))


def certificate_redundant(family, dims: Dims, all_subsets: bool = False) -> bool:
    """Is the family's inequality redundant, by exhaustive certificate search?

    Searches for a different event whose certificate edge set contains this
    one's.  Candidates are Cartesian families by default; ``all_subsets=True``
    searches every nonempty proper stratum event (tiny dimensions only).
    """
    masks = family.masks if isinstance(family, SubsetFamily) else tuple(family)
    n_candidates = (2**dims.n_outcomes - 1) ** dims.n_treatments
    if n_candidates > _CANDIDATE_CAP:
        raise SizeOverflow(f"{n_candidates} candidate families exceeds cap {_CANDIDATE_CAP}")
    own = edge_certificate_for_family(dims, masks)
    if all_subsets:
        if dims.n_strata > _ALL_SUBSET_CAP:
            raise SizeOverflow(f"all-subsets search capped at {_ALL_SUBSET_CAP} strata")
        for u in range(1, 2**dims.n_strata - 1):
            if u == own.stratum_mask:
                continue
            cert = edge_certificate(dims, u)
            if own.edge_mask & ~cert.edge_mask == 0:
                return True
        return False
    for cand in iter_families(dims):
        if cand == tuple(masks):
            continue
        cert = edge_certificate_for_family(dims, cand)
        if own.edge_mask & ~cert.edge_mask == 0:
            return True
    return False


def _packed_edge_matrix(dims: Dims) -> np.ndarray:
    """Certificate edge sets of every family in canonical order, bit-packed."""
    k, m = dims.n_treatments, dims.n_outcomes
    n_strata = dims.n_strata
    families = np.array(list(iter_families(dims)), dtype=np.int64)
    n_fam = families.shape[0]
    digits = np.empty((k, n_strata), dtype=np.int64)
    for kk in range(k):
        digits[kk] = (np.arange(n_strata) // m ** (k - 1 - kk)) % m
    # level_in[kk][f, s]: stratum s's outcome under treatment kk lies in the family's subset
    member = np.ones((n_fam, n_strata), dtype=bool)
    level_in = []
    for kk in range(k):
        hit = (families[:, kk : kk + 1] >> digits[kk][None, :]) & 1
        hit = hit.astype(bool)
        level_in.append(hit)
        member &= hit
    edges = np.empty((n_fam, n_strata, k), dtype=bool)
    for kk in range(k):
        edges[:, :, kk] = member | ~level_in[kk]
    flat = edges.reshape(n_fam, n_strata * k)
    packed = np.packbits(flat, axis=1, bitorder="little")
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.hstack([packed, np.zeros((n_fam, pad), dtype=np.uint8)])
    return packed.view(np.uint64)


def redundancy_flags(dims: Dims) -> np.ndarray:
    """Certificate-search redundancy verdict for every family, canonical order.

    Vectorized form of :func:`certificate_redundant` over Cartesian candidates; a
    word-by-word containment scan keeps the all-pairs search tractable.
    """
    packed = _packed_edge_matrix(dims)
    inv = ~packed
    n_fam, n_words = packed.shape
    flags = np.zeros(n_fam, dtype=bool)
    indices = np.arange(n_fam)
    for i in range(n_fam):
        alive = indices[(packed[i, 0] & inv[:, 0]) == 0]
        for w in range(1, n_words):
            if alive.size == 0:
                break
            alive = alive[(packed[i, w] & inv[alive, w]) == 0]
        flags[i] = bool(alive.size > 1 or (alive.size == 1 and alive[0] != i))
    return flags


# ---------------------------------------------------------------------------
# vertex enumeration


@dataclass(frozen=True)
class Vertex:
    """Point mass on one stratum plus one coherent cell per instrument arm."""

    stratum: int
    cells: tuple[int, ...]


@dataclass(frozen=True)
class VertexSet:
    dims: Dims
    vertices: tuple[Vertex, ...]

    def dense(self) -> np.ndarray:
        """0/1 coordinates in the product space [strata | arm-1 cells | arm-2 cells | ...]."""
        dims = self.dims
        width = dims.n_strata + dims.n_instruments * dims.n_cells
        out = np.zeros((len(self.vertices), width), dtype=np.int64)
        for i, v in enumerate(self.vertices):
            out[i, v.stratum] = 1
            for z, c in enumerate(v.cells):
                out[i, dims.n_strata + z * dims.n_cells + c] = 1
        return out


def enumerate_vertices(dims: Dims, cap: int = _VERTEX_CAP) -> VertexSet:
    """All product-of-point-mass extreme points of the joint polytope."""
    count = dims.n_strata * dims.n_treatments**dims.n_instruments
    if count > cap:
        raise SizeOverflow(f"{count} vertices exceeds cap {cap}")
    cells = _stratum_cells(dims)
    vertices = []
    for s in range(dims.n_strata):
        for choice in product(range(dims.n_treatments), repeat=dims.n_instruments):
            vertices.append(Vertex(s, tuple(cells[s][x] for x in choice)))
    return VertexSet(dims, tuple(vertices))


# ---------------------------------------------------------------------------
# exact linear algebra helpers


def _exact_rank(rows: list[list]) -> int:
    mat = [[Fraction(v) for v in row] for row in rows]
    rank = 0
    n_cols = len(mat[0]) if mat else 0
    col = 0
    while rank < len(mat) and col < n_cols:
        pivot = next((i for i in range(rank, len(mat)) if mat[i][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        inv = mat[rank][col]
        mat[rank] = [v / inv for v in mat[rank]]
        for i in range(len(mat)):
            if i != rank and mat[i][col] != 0:
                f = mat[i][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[rank])]
        rank += 1
        col += 1
    return rank


def _affine_rank(points: np.ndarray) -> int:
    if points.shape[0] <= 1:
        return 0
    base = points[0]
    diffs = [list(map(int, p - base)) for p in points[1:]]
    return _exact_rank(diffs)


def _product_rows(sys: InequalitySystem):
    """Expand per-arm rows over arms as exact coefficient rows in the product space."""
    dims = sys.dims
    width = dims.n_strata + dims.n_instruments * dims.n_cells
    rows = []
    meta = []
    lhs = sys.lhs_matrix.astype(np.int64)
    rhs = sys.rhs_matrix.astype(np.int64)
    for z in range(dims.n_instruments):
        for j in range(len(sys.rows)):
            coef = np.zeros(width, dtype=np.int64)
            coef[: dims.n_strata] = lhs[j]
            start = dims.n_strata + z * dims.n_cells
            coef[start : start + dims.n_cells] = -rhs[j]
            rows.append(coef)
            meta.append((z + 1, j))
    return np.vstack(rows), meta


def vertex_consistency_report(sys: InequalitySystem) -> dict:
    """Exact vertex-versus-inequality verification in the product space.

    Confirms every enumerated vertex satisfies every row, and that every row is
    tight on an affinely (dim-1)-dimensional set of vertices, i.e. defines a
    facet of the polytope spanned by the vertices.
    """
    dims = sys.dims
    vs = enumerate_vertices(dims)
    points = vs.dense()
    coeffs, meta = _product_rows(sys)
    values = coeffs @ points.T  # exact: small integers
    feasible = bool((values <= 0).all())
    poly_dim = _affine_rank(points)
    row_reports = []
    all_facets = True
    for idx, (arm, j) in enumerate(meta):
        tight = points[values[idx] == 0]
        facet_dim = _affine_rank(tight)
        ok = facet_dim == poly_dim - 1
        all_facets = all_facets and ok
        row_reports.append(
            {
                "arm": arm,
                "row": j,
                "family": list(sys.rows[j].family.masks),
                "tight_vertices": int(tight.shape[0]),
                "facet_dim": facet_dim,
                "facet_ok": ok,
            }
        )
    return {
        "n_vertices": len(vs.vertices),
        "polytope_dim": poly_dim,
        "all_vertices_feasible": feasible,
        "all_rows_facet_defining": all_facets,
        "rows": row_reports,
    }


# ---------------------------------------------------------------------------
# LP redundancy audit


def lp_redundancy_audit(sys: InequalitySystem, row_cap: int = 5000) -> list[dict]:
    """Audit each row by maximizing its violation subject to all other rows.

    A row is non-redundant exactly when the optimum is strictly positive.
    Exact simplex throughout, so the verdicts carry no tolerance.
    """
    dims = sys.dims
    coeffs, meta = _product_rows(sys)
    n_rows, width = coeffs.shape
    if n_rows > row_cap:
        raise SizeOverflow(f"{n_rows} rows exceeds audit cap {row_cap}")
    a_eq = []
    b_eq = []
    blocks = [(0, dims.n_strata)] + [
        (dims.n_strata + z * dims.n_cells, dims.n_cells) for z in range(dims.n_instruments)
    ]
    for start, size in blocks:
        row = np.zeros(width, dtype=np.int64)
        row[start : start + size] = 1
        a_eq.append(row)
        b_eq.append(1)
    a_eq = np.vstack(a_eq)
    report = []
    for i, (arm, j) in enumerate(meta):
        others = np.delete(coeffs, i, axis=0)
        res = solve(
            coeffs[i].tolist(),
            others.tolist(),
            [0] * (n_rows - 1),
            a_eq.tolist(),
            b_eq,
            maximize=True,
            exact=True,
        )
        if res.status != "optimal":
            raise DimensionMismatch(f"audit LP ended with status {res.status}")
        violation = res.objective
        report.append(
            {
                "row": j,
                "arm": arm,
                "family": list(sys.rows[j].family.masks),
                "verdict": "nonredundant" if violation > 0 else "redundant",
                "max_violation": str(violation),
            }
        )
    return report
