import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from spikedx.dataset import (
    OmicsDataset,
    alpha_ratio,
    discretize,
    gen_synthetic,
    load_csv,
    mrmr_rank,
    mutual_information,
    smote_replicate,
    stratified_kfold,
    variance_filter,
    write_csv,
)
from spikedx.errors import (
    AllFeaturesRemoved,
    AlreadyAboveTarget,
    EmptyDataset,
    KTooLarge,
    MissingHeader,
    NonNumericFeature,
    TooFewSamplesPerClass,
    UnknownLabelValue,
)


def make(features, labels, names=None):
    features = np.asarray(features, dtype=float)
    n, m = features.shape
    return OmicsDataset([f"s{i}" for i in range(n)], features, names or [f"f{j}" for j in range(m)], labels)


def mi_oracle(x, y):
    """Plug-in mutual information from probability tables."""
    n = len(x)
    pxy = Counter(zip(x, y))
    px, py = Counter(x), Counter(y)
    return sum(c / n * math.log2((c / n) / (px[a] / n * py[b] / n)) for (a, b), c in pxy.items())


def mrmr_oracle(d, k, bins=8):
    disc = [list(discretize(d.features[:, j], bins)) for j in range(d.n_features)]
    y = list(d.labels)
    chosen = []
    while len(chosen) < k:
        best, best_score = None, -math.inf
        for j in range(d.n_features):
            if j in chosen:
                continue
            s = mi_oracle(disc[j], y)
            if chosen:
                s -= sum(mi_oracle(disc[j], disc[i]) for i in chosen) / len(chosen)
            if s > best_score + 1e-12:
                best, best_score = j, s
        chosen.append(best)
    return chosen


# --- load_csv ---------------------------------------------------------------


def test_load_csv_basic(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sample_id,a,b,label\nx,1,2,0\ny,3,4,1\nz,5,6,0\n")
    d = load_csv(p)
    assert d.n_samples == 3 and d.n_features == 2 and d.num_classes == 2
    assert d.labels.tolist() == [0, 1, 0]
    assert d.feature_names == ["a", "b"]


def test_load_csv_label_out_of_range(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sample_id,a,label\nx,1,0\ny,3,2\n")
    with pytest.raises(UnknownLabelValue):
        load_csv(p)


def test_load_csv_blank_cell_reports_position(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sample_id,a,b,label\nx,1,2,0\ny,3,,1\n")
    with pytest.raises(NonNumericFeature) as info:
        load_csv(p)
    assert (info.value.row, info.value.col, info.value.name) == (3, 2, "b")


def test_load_csv_missing_header_names_file(tmp_path):
    p = tmp_path / "nohead.csv"
    p.write_text("x,1,2,0\n")
    with pytest.raises(MissingHeader, match="nohead.csv"):
        load_csv(p)


def test_load_csv_drops_nonfinite_rows(tmp_path, caplog):
    p = tmp_path / "d.csv"
    p.write_text("sample_id,a,label\nx,1,0\ny,nan,1\nz,2,1\n")
    d = load_csv(p)
    assert d.sample_ids == ["x", "z"]
    assert "non-finite" in caplog.text


def test_load_csv_missing_class(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sample_id,a,label\nx,1,0\ny,2,0\n")
    with pytest.raises(EmptyDataset):
        load_csv(p)


def test_csv_round_trip_keeps_synthetic_flags(tmp_path):
    d = gen_synthetic(8, 4, 3, 1.0, np.random.default_rng(0))
    d2 = smote_replicate(d, 1.0, np.random.default_rng(1))
    write_csv(d2, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv")
    assert back.sample_ids == d2.sample_ids
    np.testing.assert_array_equal(back.features, d2.features)
    np.testing.assert_array_equal(back.synthetic, d2.synthetic)


# --- variance filter --------------------------------------------------------


def test_variance_filter_removes_constant_keeps_binary():
    d = make([[1, 0], [1, 1], [1, 0], [1, 1]], [0, 1, 0, 1])
    # sample variance of {0,1,0,1} is 1/3
    assert np.var([0, 1, 0, 1], ddof=1) == pytest.approx(1 / 3)
    out = variance_filter(d, 0.002)
    assert out.feature_names == ["f1"]


def test_variance_filter_zero_threshold_identity():
    d = make([[1, 0], [1, 1]], [0, 1])
    assert variance_filter(d, 0.0) is d


def test_variance_filter_all_removed():
    with pytest.raises(AllFeaturesRemoved):
        variance_filter(make([[1.0], [1.0]], [0, 1]), 0.002)


# --- mutual information -----------------------------------------------------


def test_mi_perfect_dependence_one_bit():
    x = [0, 1] * 50
    assert mutual_information(x, x) == pytest.approx(1.0)


def test_mi_independent_product_table_exact_zero():
    x = [0, 0, 1, 1] * 5
    y = [0, 1, 0, 1] * 5
    assert mutual_information(x, y) == 0.0


def test_mi_joint_table_matches_direct_sum():
    x = [0, 0, 0, 1, 1, 1]
    y = [0, 0, 1, 0, 1, 1]  # counts (0,0):2 (0,1):1 (1,0):1 (1,1):2
    expected = 2 * (2 / 6) * math.log2((2 / 6) / 0.25) + 2 * (1 / 6) * math.log2((1 / 6) / 0.25)
    assert mutual_information(x, y) == pytest.approx(expected, abs=1e-12)
    assert mutual_information(x, y) == pytest.approx(mi_oracle(x, y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2)), min_size=1, max_size=40))
def test_mi_matches_oracle_and_is_symmetric(pairs):
    x, y = zip(*pairs)
    v = mutual_information(x, y)
    assert v >= 0
    assert v == pytest.approx(mi_oracle(x, y), abs=1e-9)
    assert v == pytest.approx(mutual_information(y, x), abs=1e-12)


def test_discretize_ties_share_bin():
    b = discretize([1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], bins=4)
    assert len(set(b[:3])) == 1
    assert b.max() <= 3 and b.min() == 0


# --- mRMR -------------------------------------------------------------------


def test_mrmr_label_copy_first():
    rng = np.random.default_rng(3)
    y = np.array([0, 1] * 20)
    x = rng.standard_normal((40, 5))
    x[:, 3] = y
    assert mrmr_rank(make(x, y), 1) == [3]


def test_mrmr_redundant_copy_ranks_below_independent_feature():
    y = np.array([0] * 10 + [1] * 10)
    a = y.copy()
    a[[0, 10]] = 1 - a[[0, 10]]  # strongly relevant
    c = y.copy()
    c[[1, 2, 11, 12, 13]] = 1 - c[[1, 2, 11, 12, 13]]  # moderately relevant
    noise = np.array([0, 1] * 10)
    x = np.column_stack([a, a, c, noise]).astype(float)  # columns A, B(copy of A), C, noise
    d = make(x, y)
    ranked = mrmr_rank(d, 4)
    assert ranked == mrmr_oracle(d, 4)
    assert ranked[0] == 0
    assert ranked.index(2) < ranked.index(1)


def test_mrmr_full_k_is_permutation_and_prefix_stable():
    d = gen_synthetic(30, 10, 7, 1.0, np.random.default_rng(5))
    full = mrmr_rank(d, 7)
    assert sorted(full) == list(range(7))
    assert mrmr_rank(d, 3) == full[:3]


def test_mrmr_matches_oracle_on_random_data():
    for seed in range(5):
        d = gen_synthetic(25, 15, 6, 0.8, np.random.default_rng(seed))
        assert mrmr_rank(d, 6) == mrmr_oracle(d, 6)


def test_mrmr_k_too_large():
    with pytest.raises(KTooLarge):
        mrmr_rank(make([[1, 2], [3, 4]], [0, 1]), 3)


# --- alpha ratio ------------------------------------------------------------


@pytest.mark.parametrize("minority,majority,alpha", [(10, 100, 0.10), (50, 50, 1.0), (33, 500, 0.066)])
def test_alpha_ratio(minority, majority, alpha):
    labels = [0] * majority + [1] * minority
    d = make(np.zeros((len(labels), 1)), labels)
    bal = alpha_ratio(d)
    assert bal.alpha == pytest.approx(alpha)
    assert bal.minority_count <= bal.majority_count


# --- SMOTE replication ------------------------------------------------------


def _imbalanced(n_min=10, n_maj=100):
    return gen_synthetic(n_maj, n_min, 3, 1.0, np.random.default_rng(0))


def test_smote_half():
    out = smote_replicate(_imbalanced(), 0.5, np.random.default_rng(1))
    assert out.class_counts().tolist() == [100, 50]
    assert int(out.synthetic.sum()) == 40
    assert not out.synthetic[:110].any()


def test_smote_balanced():
    out = smote_replicate(_imbalanced(), 1.0, np.random.default_rng(1))
    assert out.class_counts().tolist() == [100, 100]


def test_smote_deterministic():
    a = smote_replicate(_imbalanced(), 0.7, np.random.default_rng(9))
    b = smote_replicate(_imbalanced(), 0.7, np.random.default_rng(9))
    assert a.sample_ids == b.sample_ids


def test_smote_already_above_target():
    with pytest.raises(AlreadyAboveTarget):
        smote_replicate(_imbalanced(50, 100), 0.2, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(20, 60), st.floats(0.35, 1.0))
def test_smote_counts_property(n_min, n_maj, target):
    assume(n_min / n_maj <= target)
    d = make(np.arange(n_min + n_maj, dtype=float)[:, None], [0] * n_maj + [1] * n_min)
    out = smote_replicate(d, target, np.random.default_rng(0))
    assert out.class_counts()[1] == max(n_min, math.ceil(target * n_maj - 1e-9))
    # originals untouched, duplicates copy minority rows
    np.testing.assert_array_equal(out.features[: d.n_samples], d.features)
    assert set(out.features[out.synthetic, 0]) <= set(d.features[d.labels == 1, 0])


# --- stratified folds -------------------------------------------------------


def test_kfold_balanced_exact():
    d = make(np.zeros((8, 1)), [0, 1] * 4)
    split = stratified_kfold(d, 4, np.random.default_rng(0))
    for f in range(4):
        te = split.test_indices(f)
        assert len(te) == 2 and sorted(d.labels[te].tolist()) == [0, 1]


def test_kfold_minority_spread():
    d = make(np.zeros((10, 1)), [0] * 8 + [1] * 2)
    split = stratified_kfold(d, 2, np.random.default_rng(0))
    for f in range(2):
        assert d.labels[split.test_indices(f)].sum() == 1


def test_kfold_too_few():
    d = make(np.zeros((13, 1)), [0] * 10 + [1] * 3)
    with pytest.raises(TooFewSamplesPerClass):
        stratified_kfold(d, 4, np.random.default_rng(0))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 30), st.integers(0, 30), st.integers(0, 2**32 - 1))
def test_kfold_properties(k, extra0, extra1, seed):
    n0, n1 = k + extra0, k + extra1
    d = make(np.zeros((n0 + n1, 1)), [0] * n0 + [1] * n1)
    split = stratified_kfold(d, k, np.random.default_rng(seed))
    sizes = [len(split.test_indices(f)) for f in range(k)]
    assert max(sizes) - min(sizes) <= 1 and min(sizes) > 0
    for c, n in ((0, n0), (1, n1)):
        per = [int((d.labels[split.test_indices(f)] == c).sum()) for f in range(k)]
        assert max(per) - min(per) <= 1 and sum(per) == n


# --- synthetic generator ----------------------------------------------------


def test_gen_synthetic_counts():
    d = gen_synthetic(100, 10, 11, 2.0, np.random.default_rng(0))
    assert alpha_ratio(d).alpha == pytest.approx(0.10)
    assert d.n_features == 11


def _heldout_logistic(sep, n_features, seed):
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import f1_score, roc_auc_score

    d = gen_synthetic(500, 500, n_features, sep, np.random.default_rng(seed))
    half = d.n_samples // 2
    clf = LogisticRegression().fit(d.features[:half], d.labels[:half])
    p = clf.predict_proba(d.features[half:])[:, 1]
    return roc_auc_score(d.labels[half:], p), f1_score(d.labels[half:], p >= 0.5)


def test_gen_synthetic_zero_separation_chance_auc():
    auc, _ = _heldout_logistic(0.0, 11, 1)
    assert abs(auc - 0.5) <= 0.05


def test_gen_synthetic_wide_separation_high_f1():
    _, f1 = _heldout_logistic(4.0, 11, 2)
    assert f1 > 0.95
