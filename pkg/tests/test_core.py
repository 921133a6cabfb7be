import io
import random

import numpy as np
import pytest

from ivpolytope import (
    CounterfactualDistribution,
    Dataset,
    DimensionMismatch,
    Dims,
    ObservedDistribution,
    ZeroArm,
    drop_instrument,
    drop_treatment,
    empirical_distributions,
    index_roundtrip,
    load_csv,
    load_json,
)
from ivpolytope.core import cell_flat, resolve_level, stratum_flat


def test_dims_validation():
    with pytest.raises(DimensionMismatch):
        Dims(0, 2, 2)
    with pytest.raises(DimensionMismatch):
        Dims(1, 1, 2)
    with pytest.raises(DimensionMismatch):
        Dims(1, 2, 1)
    d = Dims(3, 3, 2)
    assert d.n_strata == 8 and d.n_cells == 6


def test_stratum_examples():
    d = Dims(1, 2, 2)
    assert [stratum_flat(d, s) for s in [(1, 1), (1, 2), (2, 1), (2, 2)]] == [0, 1, 2, 3]
    d23 = Dims(1, 2, 3)
    assert stratum_flat(d23, (2, 3)) == (2 - 1) * 3 + (3 - 1)
    assert cell_flat(Dims(1, 2, 2), 2, 1) == 2


def test_index_roundtrip_exhaustive_small_dims():
    for k in (2, 3, 4):
        for m in (2, 3, 4):
            report = index_roundtrip(Dims(1, k, m))
            assert report["ok"], (k, m)


def test_index_wrappers():
    from ivpolytope import CellIndex, StratumIndex

    d = Dims(1, 2, 3)
    s = StratumIndex.from_outcomes(d, (2, 3))
    assert s.flat == 5
    assert StratumIndex.from_flat(d, 5) == s
    c = CellIndex.from_parts(d, 2, 1)
    assert c.flat == 3
    assert CellIndex.from_flat(d, 3) == c


def test_empirical_distributions_always_valid():
    rng = np.random.default_rng(0)
    for _ in range(40):
        q = int(rng.integers(1, 4))
        k = int(rng.integers(2, 4))
        m = int(rng.integers(2, 4))
        counts = rng.integers(0, 40, size=(q, k, m))
        counts[:, 0, 0] += 1  # every arm observed
        ds = Dataset(Dims(q, k, m), counts)
        for dist in empirical_distributions(ds):
            assert dist.n >= 1
            assert np.all(dist.probs >= 0)
            assert abs(dist.probs.sum() - 1.0) <= 1e-12


def test_probability_vector_validation():
    d = Dims(1, 2, 2)
    with pytest.raises(DimensionMismatch):
        ObservedDistribution(d, 1, [0.5, 0.5, 0.1, 0.0])
    with pytest.raises(DimensionMismatch):
        ObservedDistribution(d, 1, [0.5, 0.5, -0.1, 0.1])
    with pytest.raises(DimensionMismatch):
        CounterfactualDistribution(d, [0.25, 0.25, 0.25])
    dist = ObservedDistribution(d, 1, [0.25, 0.25, 0.25, 0.25], 8)
    with pytest.raises(ValueError):
        dist.probs[0] = 1.0  # frozen storage


def test_minneapolis_ingestion(minneapolis):
    ds = minneapolis
    assert ds.dims == Dims(3, 3, 2)
    assert ds.arm_sizes == (92, 108, 113)
    obs = empirical_distributions(ds)
    arrest = obs[0]
    assert arrest.n == 92
    assert arrest.prob(1, 1) == pytest.approx(81 / 92, abs=1e-15)
    assert arrest.prob(1, 2) == pytest.approx(10 / 92, abs=1e-15)
    assert arrest.prob(3, 1) == pytest.approx(1 / 92, abs=1e-15)
    assert arrest.prob(2, 1) == 0.0


def test_point_mass_and_uniform_datasets():
    ds = Dataset(Dims(1, 2, 2), np.array([[[5, 0], [0, 0]]]))
    (dist,) = empirical_distributions(ds)
    assert dist.n == 5
    assert dist.probs.tolist() == [1.0, 0.0, 0.0, 0.0]

    uniform = Dataset(Dims(1, 3, 2), np.ones((1, 3, 2), dtype=int))
    (dist,) = empirical_distributions(uniform)
    assert np.allclose(dist.probs, 1 / 6)


def test_zero_arm_rejected():
    counts = np.zeros((2, 2, 2), dtype=int)
    counts[0] = [[1, 2], [3, 4]]
    ds = Dataset(Dims(2, 2, 2), counts)
    with pytest.raises(ZeroArm):
        empirical_distributions(ds)
    assert empirical_distributions(ds, arms=[1])[0].n == 10


def test_csv_row_order_stability(minneapolis):
    from conftest import FIXTURES

    lines = (FIXTURES / "minneapolis.csv").read_text(encoding="utf-8").splitlines()
    header = [ln for ln in lines if ln and not ln.startswith("#")][0]
    rows = [ln for ln in lines if ln and not ln.startswith("#")][1:]
    rng = random.Random(13)
    for _ in range(5):
        rng.shuffle(rows)
        ds = load_csv(io.StringIO("\n".join([header] + rows)))
        for z in range(1, 4):
            for x in range(1, 4):
                for y in (1, 2):
                    zl = minneapolis.label_of("z", z)
                    xl = minneapolis.label_of("x", x)
                    z2 = resolve_level(ds, "z", zl)
                    x2 = resolve_level(ds, "x", xl)
                    assert ds.counts[z2 - 1, x2 - 1, y - 1] == minneapolis.counts[z - 1, x - 1, y - 1]


def test_csv_label_map_pins_order():
    text = "z,x,y,count\nb,u,1,3\na,v,2,4\n"
    ds = load_csv(io.StringIO(text), label_map={"z": ["a", "b"], "x": ["u", "v"]})
    assert ds.labels["z"] == ("a", "b")
    assert ds.counts[1, 0, 0] == 3
    assert ds.counts[0, 1, 1] == 4


def test_json_ingestion_and_dims(violating_two_arm):
    ds = violating_two_arm
    assert ds.dims == Dims(2, 2, 3)
    assert ds.arm_sizes == (100, 100)
    obs = empirical_distributions(ds)
    assert obs[0].prob(1, 1) == pytest.approx(0.43)
    assert obs[1].prob(1, 2) == pytest.approx(0.36)


def test_json_rejects_bad_rows():
    with pytest.raises(DimensionMismatch):
        load_json({"dims": {"Q": 1, "K": 2, "M": 2}, "counts": [[1, 1, 1]]})


def test_label_prefix_resolution(minneapolis):
    assert resolve_level(minneapolis, "x", "Advise") == 2
    assert resolve_level(minneapolis, "x", "Adv") == 2
    assert resolve_level(minneapolis, "x", "arr") == 1
    assert resolve_level(minneapolis, "y", 2) == 2
    with pytest.raises(DimensionMismatch):
        resolve_level({"x": ("alpha", "alto")}, "x", "al")


def test_dataset_surgeries(minneapolis):
    no_sep_arm = drop_instrument(minneapolis, "Separate")
    assert no_sep_arm.dims == Dims(2, 3, 2)
    assert no_sep_arm.arm_sizes == (92, 108)
    assert no_sep_arm.labels["z"] == ("Arrest", "Advise")

    no_sep_treatment = drop_treatment(minneapolis, "Sep")
    assert no_sep_treatment.dims == Dims(3, 2, 2)
    assert no_sep_treatment.arm_sizes == (91, 102, 31)
    with pytest.raises(DimensionMismatch):
        drop_treatment(no_sep_treatment, "Advise")
