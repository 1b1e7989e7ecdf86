import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longlasso.dataset import (
    CsvSchema,
    LongitudinalDataset,
    SubjectSeries,
    build_lagged,
    load_csv,
    split_temporal,
    write_csv,
)
from longlasso.errors import DataError

WELL_FORMED = """subject_id,time,y,x1
a,1,0.5,1.0
a,2,0.6,2.0
a,3,0.7,3.0
b,1,1.5,4.0
b,2,1.6,5.0
b,3,1.7,6.0
"""


def _ds(text: str, schema=CsvSchema()):
    return load_csv(io.BytesIO(text.encode("utf-8")), schema)


def test_load_csv_well_formed():
    ds = _ds(WELL_FORMED)
    assert (ds.m, ds.d, ds.T) == (2, 1, 3)
    assert ds.subject_ids == ("a", "b")
    assert ds.feature_names == ("x1",)
    assert np.allclose(ds.subjects[0].features, [[1.0, 2.0, 3.0]])
    assert np.allclose(ds.subjects[1].outcomes, [1.5, 1.6, 1.7])
    assert ds.subjects[0].time_start == 1


def test_load_csv_ragged_subjects():
    text = WELL_FORMED.rsplit("\n", 2)[0] + "\n"  # drop b's last row
    with pytest.raises(DataError, match="unequal series length"):
        _ds(text)


def test_load_csv_shuffled_rows_bit_equal():
    lines = WELL_FORMED.strip().split("\n")
    shuffled = "\n".join([lines[0]] + lines[1:][::-1]) + "\n"
    a = _ds(WELL_FORMED)
    b = _ds(shuffled)
    assert a.subject_ids == b.subject_ids
    for sa, sb in zip(a.subjects, b.subjects):
        assert np.array_equal(sa.features, sb.features)
        assert np.array_equal(sa.outcomes, sb.outcomes)
        assert sa.time_start == sb.time_start


def test_load_csv_missing_value():
    text = WELL_FORMED.replace("a,2,0.6,2.0", "a,2,,2.0")
    with pytest.raises(DataError, match=r"missing value at \(a,2,y\)"):
        _ds(text)
    text = WELL_FORMED.replace("a,2,0.6,2.0", "a,2,0.6,nan")
    with pytest.raises(DataError, match=r"missing value at \(a,2,x1\)"):
        _ds(text)


def test_load_csv_duplicate_pair():
    text = WELL_FORMED + "b,3,9.9,9.9\n"
    with pytest.raises(DataError, match=r"duplicate \(subject,time\)"):
        _ds(text)


def test_load_csv_non_consecutive_times():
    text = WELL_FORMED.replace("a,3,0.7,3.0", "a,5,0.7,3.0")
    with pytest.raises(DataError, match="not consecutive"):
        _ds(text)


def test_load_csv_header_and_schema_errors():
    with pytest.raises(DataError, match="missing required column"):
        _ds("id,time,y,x1\na,1,1,1\n")
    with pytest.raises(DataError, match="missing feature column"):
        _ds(WELL_FORMED, CsvSchema(feature_cols=("x9",)))
    with pytest.raises(DataError, match="empty CSV"):
        _ds("")


def test_load_csv_custom_schema_mapping():
    text = (
        "person,week,drinks,stress,mood\n"
        "p2,4,1.0,0.1,0.2\n"
        "p2,5,2.0,0.3,0.4\n"
        "p1,4,3.0,0.5,0.6\n"
        "p1,5,4.0,0.7,0.8\n"
    )
    schema = CsvSchema(subject_col="person", time_col="week", outcome_col="drinks",
                       feature_cols=("mood", "stress"))
    ds = _ds(text, schema)
    assert ds.subject_ids == ("p1", "p2")
    assert ds.feature_names == ("mood", "stress")  # schema order, not file order
    assert np.allclose(ds.subjects[0].features, [[0.6, 0.8], [0.5, 0.7]])
    assert ds.subjects[0].time_start == 4


def test_write_then_load_round_trip(tmp_path):
    ds = _ds(WELL_FORMED)
    path = tmp_path / "roundtrip.csv"
    write_csv(ds, path)
    again = load_csv(path)
    for sa, sb in zip(ds.subjects, again.subjects):
        assert np.array_equal(sa.features, sb.features)
        assert np.array_equal(sa.outcomes, sb.outcomes)


def test_dataset_invariants():
    good = SubjectSeries(id="a", features=np.ones((2, 3)), outcomes=np.zeros(3))
    with pytest.raises(DataError, match="unique"):
        LongitudinalDataset((good, good), ("f1", "f2"))
    with pytest.raises(DataError, match="two time points"):
        LongitudinalDataset(
            (SubjectSeries(id="a", features=np.ones((1, 1)), outcomes=np.zeros(1)),), ("f1",)
        )
    with pytest.raises(DataError, match="missing value"):
        SubjectSeries(id="a", features=np.array([[1.0, np.nan]]), outcomes=np.zeros(2))


def test_arrays_are_immutable():
    ds = _ds(WELL_FORMED)
    with pytest.raises(ValueError):
        ds.subjects[0].features[0, 0] = 9.0
    design = build_lagged(ds, 1)
    with pytest.raises(ValueError):
        design.X[0, 0, 0, 0] = 9.0


def test_build_lagged_hand_example():
    # d=1, T=3, tau=1, x=[x1,x2,x3]: examples [x2,x1] then [x3,x2]
    ds = _ds(WELL_FORMED)
    design = build_lagged(ds, 1)
    assert design.n == 2
    assert np.allclose(design.X[0, 0, 0], [2.0, 1.0])
    assert np.allclose(design.X[0, 1, 0], [3.0, 2.0])
    assert np.allclose(design.y[0], [0.6, 0.7])
    assert np.array_equal(design.times, [1, 2])


def test_build_lagged_tau_zero_identity():
    ds = _ds(WELL_FORMED)
    design = build_lagged(ds, 0)
    assert design.n == ds.T
    assert design.n_lags == 1
    assert np.allclose(design.X[1, :, 0, 0], ds.subjects[1].features[0])


def test_build_lagged_example_count():
    rng = np.random.default_rng(0)
    subjects = tuple(
        SubjectSeries(id=f"s{i}", features=rng.normal(size=(2, 30)), outcomes=rng.normal(size=30))
        for i in range(3)
    )
    ds = LongitudinalDataset(subjects, ("f1", "f2"))
    assert build_lagged(ds, 4).n == 26


def test_build_lagged_exhausted_series():
    ds = _ds(WELL_FORMED)
    with pytest.raises(DataError, match="lag exhausts series"):
        build_lagged(ds, 3)


def test_build_lagged_with_lagged_outcome():
    ds = _ds(WELL_FORMED)
    design = build_lagged(ds, 1, include_lagged_outcome=True)
    assert design.d_eff == 2
    assert design.feature_names == ("x1", "lagged_outcome")
    # lag column 0 of the outcome row never holds the current outcome
    assert np.allclose(design.X[:, :, 1, 0], 0.0)
    # lag column 1 holds y_{t-1}
    assert np.allclose(design.X[0, :, 1, 1], [0.5, 0.6])
    assert np.allclose(design.X[1, :, 1, 1], [1.5, 1.6])


@settings(deadline=None, max_examples=30)
@given(
    seed=st.integers(0, 2**31 - 1),
    d=st.integers(1, 4),
    T=st.integers(2, 8),
    m=st.integers(1, 4),
)
def test_build_lagged_preserves_content(seed, d, T, m):
    rng = np.random.default_rng(seed)
    tau = int(rng.integers(0, T - 1))
    subjects = tuple(
        SubjectSeries(id=f"s{i}", features=rng.normal(size=(d, T)), outcomes=rng.normal(size=T))
        for i in range(m)
    )
    ds = LongitudinalDataset(subjects, tuple(f"f{j}" for j in range(d)))
    design = build_lagged(ds, tau)
    assert design.n == T - tau
    for i, s in enumerate(ds.subjects):
        for j, t in enumerate(design.times):
            for k in range(tau + 1):
                assert np.array_equal(design.X[i, j, :, k], s.features[:, t - k])
            assert design.y[i, j] == s.outcomes[t]


def test_split_temporal_paper_scale():
    rng = np.random.default_rng(1)
    subjects = tuple(
        SubjectSeries(id=f"s{i}", features=rng.normal(size=(3, 30)), outcomes=rng.normal(size=30))
        for i in range(4)
    )
    ds = LongitudinalDataset(subjects, ("a", "b", "c"))
    train, test = split_temporal(ds, 5, 4)
    assert train.T == 25
    assert test.T == 9  # 5 holdout + 4 preceding
    assert build_lagged(test, 4).n == 5


def test_split_temporal_range_errors():
    ds = _ds(WELL_FORMED)
    with pytest.raises(ValueError, match="holdout out of range"):
        split_temporal(ds, 3, 0)
    with pytest.raises(ValueError, match="holdout out of range"):
        split_temporal(ds, 0, 1)


def test_split_temporal_small_hand_case():
    # T=3, holdout=1, tau=1: one test example whose current time is t=3
    ds = _ds(WELL_FORMED)
    train, test = split_temporal(ds, 1, 1)
    assert train.T == 2
    assert test.T == 2
    design = build_lagged(test, 1)
    assert design.n == 1
    assert design.example_times()[0, 0] == 3
    assert design.y[0, 0] == 0.7


def test_split_then_build_partitions_full_design():
    rng = np.random.default_rng(7)
    T, tau, holdout = 12, 2, 3
    subjects = tuple(
        SubjectSeries(id=f"s{i}", features=rng.normal(size=(2, T)), outcomes=rng.normal(size=T))
        for i in range(3)
    )
    ds = LongitudinalDataset(subjects, ("a", "b"))
    full = build_lagged(ds, tau)
    train, test = split_temporal(ds, holdout, tau)
    dtr = build_lagged(train, tau)
    dte = build_lagged(test, tau)
    cut = T - holdout
    full_times = full.example_times()
    train_mask = full_times[0] < cut + 1  # absolute times start at 1
    assert np.array_equal(dtr.X, full.X[:, train_mask])
    assert np.array_equal(dte.X, full.X[:, ~train_mask])
    assert np.array_equal(dtr.y, full.y[:, train_mask])
    assert np.array_equal(dte.y, full.y[:, ~train_mask])
    assert np.array_equal(dte.example_times(), full.example_times()[:, ~train_mask])


def test_subset_preserves_order_and_errors():
    ds = _ds(WELL_FORMED)
    sub = ds.subset(["b"])
    assert sub.subject_ids == ("b",)
    with pytest.raises(DataError, match="unknown subject ids"):
        ds.subset(["zz"])
