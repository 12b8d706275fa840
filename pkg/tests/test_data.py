import logging

import numpy as np
import pytest

from tabssl.data import (
    DataTable,
    SplitPlan,
    common_features,
    load_csv,
    load_table,
    marginals,
    preprocess,
    save_table,
    stratified_indices,
    stratified_split,
    subsample_fraction,
    synthetic_corpus,
    validation_indices,
)
from tabssl.data.cache import dumps_table, loads_table
from tabssl.errors import ContractError, NumericError, SchemaError, SplitError


def _write(path, text):
    path.write_text(text)
    return path


# loading

def test_csv_without_labels(tmp_path):
    t = load_csv(_write(tmp_path / "a.csv", "x,y\n1,2\n3,4\n5,6\n"))
    assert (t.n_rows, t.n_features) == (3, 2)
    assert t.labels is None


def test_csv_labels_in_first_appearance_order(tmp_path):
    t = load_csv(_write(tmp_path / "a.csv", "g1,label\n1,B\n2,A\n3,B\n"), "label")
    assert t.labels.tolist() == [0, 1, 0]
    assert t.class_names == ("B", "A")
    assert t.feature_names == ("g1",)


def test_csv_nan_names_row_and_column(tmp_path):
    path = _write(tmp_path / "a.csv", "g1,g2\n1,2\n3,NaN\n")
    with pytest.raises(NumericError, match=r"a.csv:3.*'g2'"):
        load_csv(path)


def test_csv_ragged_and_non_numeric(tmp_path):
    with pytest.raises(SchemaError, match=":2"):
        load_csv(_write(tmp_path / "r.csv", "a,b\n1\n"))
    with pytest.raises(SchemaError, match="non-numeric"):
        load_csv(_write(tmp_path / "n.csv", "a,b\n1,x\n"))
    with pytest.raises(SchemaError, match="label column"):
        load_csv(_write(tmp_path / "l.csv", "a,b\n1,2\n"), "label")


def test_table_is_read_only():
    t = DataTable(np.zeros((2, 2)), ["a", "b"])
    with pytest.raises(ValueError):
        t.features[0, 0] = 1.0


# preprocessing

def test_preprocess_hand_example():
    t = DataTable(np.array([[1.0], [3.0]]), ["g"])
    out, stats = preprocess(t)
    # log2(x + 1) gives [1, 2]; population z-score gives [-1, 1]
    assert np.allclose(out.features[:, 0], [-1.0, 1.0])
    assert stats.mean[0] == pytest.approx(1.5)


def test_preprocess_zero_maps_to_zero_before_standardizing():
    t = DataTable(np.array([[0.0, 1.0], [0.0, 2.0]]), ["z", "g"])
    out, stats = preprocess(t)
    assert stats.mean[0] == 0.0


def test_constant_feature_becomes_zero_with_warning(caplog):
    t = DataTable(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]), ["c", "g"])
    with caplog.at_level(logging.WARNING):
        out, stats = preprocess(t)
    assert np.array_equal(out.features[:, 0], np.zeros(3))
    assert stats.zero_variance == ["c"]
    assert "zero-variance" in caplog.text


def test_preprocess_reuses_stats():
    a = DataTable(np.array([[1.0], [3.0]]), ["g"])
    b = DataTable(np.array([[7.0]]), ["g"])
    _, stats = preprocess(a)
    out, same = preprocess(b, stats)
    assert same is stats
    assert out.features[0, 0] == pytest.approx((3.0 - 1.5) / 0.5)


def test_log_rejects_negative_counts():
    with pytest.raises(ContractError):
        preprocess(DataTable(np.array([[-1.0], [2.0]]), ["g"]))


# splitting

def _balanced(n_per_class, n_classes=2, d=3):
    labels = np.repeat(np.arange(n_classes), n_per_class)
    return DataTable(np.arange(labels.size * d, dtype=float).reshape(-1, d),
                     [f"f{j}" for j in range(d)], labels, [f"c{c}" for c in range(n_classes)])


def test_split_exact_divisibility():
    t = _balanced(50)
    parts = stratified_split(t, SplitPlan(0.8, 0.1, 0.1, seed=3))
    assert [p.n_rows for p in parts] == [80, 10, 10]
    assert [np.bincount(p.labels).tolist() for p in parts] == [[40, 40], [5, 5], [5, 5]]


def test_split_is_disjoint_and_deterministic():
    t = _balanced(33, 3)
    a = stratified_indices(t.labels, (0.6, 0.2, 0.2), 9)
    b = stratified_indices(t.labels, (0.6, 0.2, 0.2), 9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    joined = np.concatenate(a)
    assert np.array_equal(np.sort(joined), np.arange(t.n_rows))


def test_split_tiny_class_is_named():
    labels = np.array([0] * 10 + [1] * 2)
    with pytest.raises(SplitError, match="'rare'"):
        stratified_indices(labels, (0.8, 0.1, 0.1), 0, ("common", "rare"))


def test_split_plan_rejects_bad_fractions():
    with pytest.raises(ContractError):
        SplitPlan(0.5, 0.3, 0.3)


def test_validation_indices_partition_rows():
    t = _balanced(20, 2)
    tr, va = validation_indices(t, 0.15, 0)
    assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(40))
    assert np.bincount(t.labels[va]).tolist() == [3, 3]


# subsampling

def test_subsample_identity_at_one():
    t = _balanced(5)
    sub = subsample_fraction(t, 1.0, seed=0)
    assert np.array_equal(sub.features, t.features)


def test_subsample_half_of_ten():
    sub = subsample_fraction(_balanced(5), 0.5, seed=4)
    assert sub.n_rows == 5
    assert sorted(np.bincount(sub.labels).tolist()) == [2, 3]


def test_subsample_ceiling_count():
    labels = np.arange(1029) % 19
    t = DataTable(np.zeros((1029, 1)), ["f"], labels, [str(c) for c in range(19)])
    assert subsample_fraction(t, 0.02, seed=0).n_rows == 21


def test_subsample_reference_size():
    t = _balanced(20)
    assert subsample_fraction(t, 0.25, seed=0, reference_size=20).n_rows == 5


def test_subsample_too_few_rows_for_classes():
    with pytest.raises(SplitError):
        subsample_fraction(_balanced(50, 4), 0.01, seed=0)


def test_subsample_rejects_bad_p():
    with pytest.raises(ContractError):
        subsample_fraction(_balanced(5), 0.0, seed=0)


# common features

def test_common_features_shared_subset():
    a = DataTable(np.arange(6.0).reshape(2, 3), ["g1", "g2", "g3"])
    b = DataTable(np.arange(6.0).reshape(2, 3) + 10, ["g4", "g3", "g2"])
    a2, b2 = common_features(a, b)
    assert a2.feature_names == b2.feature_names == ("g2", "g3")
    assert np.array_equal(b2.features, [[12.0, 11.0], [15.0, 14.0]])


def test_common_features_identical_sets():
    a = DataTable(np.ones((1, 2)), ["x", "y"])
    a2, b2 = common_features(a, a)
    assert np.array_equal(a2.features, a.features)


def test_common_features_disjoint():
    with pytest.raises(SchemaError):
        common_features(DataTable(np.ones((1, 1)), ["a"]), DataTable(np.ones((1, 1)), ["b"]))


# marginals

def test_marginal_pools_keep_duplicates():
    m = marginals(DataTable(np.array([[1.0], [1.0], [2.0]]), ["g"]))
    assert sorted(m.pool(0).tolist()) == [1.0, 1.0, 2.0]


def test_single_row_pools_are_singletons():
    m = marginals(DataTable(np.array([[3.0, 4.0]]), ["a", "b"]))
    draws = m.sample(5, np.random.default_rng(0))
    assert np.array_equal(draws, np.tile([3.0, 4.0], (5, 1)))


def test_marginal_draws_are_pool_members():
    x = np.random.default_rng(0).normal(size=(20, 4))
    m = marginals(DataTable(x, list("abcd")))
    draws = m.sample(100, np.random.default_rng(1))
    assert all(np.isin(draws[:, j], x[:, j]).all() for j in range(4))


# synthetic corpus

def test_synthetic_single_class():
    t = synthetic_corpus(1, 8, 2, 5, seed=0)
    assert not t.labels.any()


def test_synthetic_group_correlation():
    t = synthetic_corpus(2, 12, 4, 500, seed=1)  # groups of 3 features, N=1000
    corr = np.corrcoef(t.features[:, :3].T)
    pairs = np.abs(corr[np.triu_indices(3, 1)])
    assert pairs.mean() > 0.8


def test_synthetic_is_seeded():
    a = synthetic_corpus(3, 10, 2, 4, seed=5)
    b = synthetic_corpus(3, 10, 2, 4, seed=5)
    assert a.features.tobytes() == b.features.tobytes()
    assert np.array_equal(a.labels, b.labels)


# cache

def test_table_cache_round_trip(tmp_path):
    t = synthetic_corpus(3, 6, 2, 4, seed=0)
    save_table(t, tmp_path / "t.tsdt")
    back = load_table(tmp_path / "t.tsdt")
    assert back.features.tobytes() == t.features.tobytes()
    assert np.array_equal(back.labels, t.labels)
    assert back.feature_names == t.feature_names and back.class_names == t.class_names


def test_table_cache_detects_corruption():
    blob = bytearray(dumps_table(DataTable(np.ones((2, 2)), ["a", "b"])))
    blob[-12] ^= 1
    with pytest.raises(SchemaError):
        loads_table(bytes(blob))
