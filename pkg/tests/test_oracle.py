import numpy as np
import pytest

from ivpolytope import (
    CounterfactualDistribution,
    Dims,
    ObservedDistribution,
    SizeOverflow,
    build_coherence,
    enumerate_full,
    enumerate_vertices,
    filter_nonredundant,
    lp_redundancy_audit,
    certificate_redundant,
    redundancy_flags,
    strassen_feasible,
    vertex_consistency_report,
)
from ivpolytope.core import cell_flat, stratum_flat
from ivpolytope.inequalities import iter_families, nonredundant_keep
from ivpolytope.oracle import edge_certificate_for_family


def _dirichlet(rng, size):
    draw = -np.log1p(-rng.random(size))
    return draw / draw.sum()


def test_coherence_structure():
    d = Dims(1, 2, 2)
    rel = build_coherence(d)
    assert len(rel.edges) == 8
    s12 = stratum_flat(d, (1, 2))
    assert rel.neighbors_of_stratum(s12) == (cell_flat(d, 1, 1), cell_flat(d, 2, 2))

    assert len(build_coherence(Dims(1, 2, 3)).edges) == 18

    d32 = Dims(1, 3, 2)
    rel32 = build_coherence(d32)
    s = stratum_flat(d32, (1, 2, 1))
    expected = tuple(sorted((cell_flat(d32, 1, 1), cell_flat(d32, 2, 2), cell_flat(d32, 3, 1))))
    assert rel32.neighbors_of_stratum(s) == expected
    # each cell sees exactly M^(K-1) strata
    for cell in range(d32.n_cells):
        assert len(rel32.neighbors_of_cell(cell)) == 4


def test_strassen_point_masses():
    d = Dims(1, 2, 2)
    delta_11 = CounterfactualDistribution(d, [1, 0, 0, 0])
    cell_11 = ObservedDistribution(d, 1, [1, 0, 0, 0])
    cell_12 = ObservedDistribution(d, 1, [0, 1, 0, 0])
    assert strassen_feasible(delta_11, cell_11) is True
    assert strassen_feasible(delta_11, cell_12) is False
    assert strassen_feasible(delta_11, cell_11, all_subsets=True) is True
    assert strassen_feasible(delta_11, cell_12, all_subsets=True) is False


def test_strassen_cartesian_agrees_with_all_subsets():
    d = Dims(1, 2, 2)
    rng = np.random.default_rng(2024)
    agree = 0
    n_draws = 300
    for _ in range(n_draws):
        pa = CounterfactualDistribution(d, _dirichlet(rng, 4))
        pb = ObservedDistribution(d, 1, _dirichlet(rng, 4))
        agree += strassen_feasible(pa, pb) == strassen_feasible(pa, pb, all_subsets=True)
    assert agree == n_draws


def test_strassen_all_subsets_cap():
    d = Dims(1, 5, 3)  # 243 strata
    pa = CounterfactualDistribution(d, np.full(243, 1 / 243))
    pb = ObservedDistribution(d, 1, np.full(15, 1 / 15))
    with pytest.raises(SizeOverflow):
        strassen_feasible(pa, pb, all_subsets=True)


def test_rhs_monotone_in_subset_growth():
    # enlarging every subset can only add cells to the bound's right side
    d = Dims(1, 2, 3)
    rng = np.random.default_rng(5)
    p = _dirichlet(rng, d.n_cells)
    from ivpolytope.inequalities import InequalityRow

    smaller = InequalityRow.from_family(d, (0b001, 0b011))
    larger = InequalityRow.from_family(d, (0b011, 0b111))
    assert smaller.rhs_dense() @ p <= larger.rhs_dense() @ p


def test_certificate_redundancy_examples():
    d = Dims(1, 2, 3)
    assert certificate_redundant((0b111, 0b001), d) is True
    assert certificate_redundant((0b111, 0b011), d) is False
    assert certificate_redundant((0b011, 0b110), d) is False


def test_certificate_equals_keep_predicate_small_dims():
    for q, k, m in [(1, 2, 2), (1, 2, 3), (1, 3, 2)]:
        d = Dims(q, k, m)
        for masks in iter_families(d):
            assert certificate_redundant(masks, d) == (not nonredundant_keep(masks, m)), masks


def test_all_subsets_certificate_matches_cartesian():
    d = Dims(1, 2, 2)
    for masks in iter_families(d):
        assert certificate_redundant(masks, d) == certificate_redundant(masks, d, all_subsets=True)


def test_batch_flags_match_single_calls():
    for k, m in [(2, 2), (2, 3), (3, 2), (2, 4)]:
        d = Dims(1, k, m)
        flags = redundancy_flags(d)
        singles = [certificate_redundant(masks, d) for masks in iter_families(d)]
        assert flags.tolist() == singles


def test_edge_containment_fixture():
    # ternary outcome, binary treatment: a single small subset's certificate
    # sits inside the certificate of the one-level-larger subset
    d = Dims(1, 2, 3)
    inner = edge_certificate_for_family(d, (0b100, 0b111))   # outcome set {3} free second
    outer = edge_certificate_for_family(d, (0b110, 0b111))   # outcome set {2,3}
    assert inner.edge_mask & ~outer.edge_mask == 0
    # and the transposed variant
    inner2 = edge_certificate_for_family(d, (0b111, 0b001))
    outer2 = edge_certificate_for_family(d, (0b111, 0b101))
    assert inner2.edge_mask & ~outer2.edge_mask == 0


def test_vertex_counts_and_feasibility():
    assert len(enumerate_vertices(Dims(2, 2, 2)).vertices) == 16
    assert len(enumerate_vertices(Dims(2, 2, 3)).vertices) == 36

    d = Dims(2, 2, 2)
    vs = enumerate_vertices(d)
    for v in vs.vertices:
        pa = np.zeros(d.n_strata)
        pa[v.stratum] = 1.0
        for z, cell in enumerate(v.cells):
            pb = np.zeros(d.n_cells)
            pb[cell] = 1.0
            assert strassen_feasible(
                CounterfactualDistribution(d, pa), ObservedDistribution(d, z + 1, pb)
            )


def test_vertex_cap():
    with pytest.raises(SizeOverflow):
        enumerate_vertices(Dims(2, 2, 2), cap=10)


def test_lp_audit_small_binary():
    report = lp_redundancy_audit(filter_nonredundant(enumerate_full(Dims(1, 2, 2))))
    assert len(report) == 8
    assert all(entry["verdict"] == "nonredundant" for entry in report)


def test_vertex_consistency_binary_one_arm(system_cache):
    report = vertex_consistency_report(system_cache(Dims(1, 2, 2)))
    assert report["n_vertices"] == 8
    assert report["polytope_dim"] == 6
    assert report["all_vertices_feasible"]
    assert report["all_rows_facet_defining"]
