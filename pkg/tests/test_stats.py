import numpy as np
import pandas as pd
import pytest

from predpower import stats
from predpower.errors import ParameterError, PipelineError
from predpower.lmm import ModelSpec
from predpower.stats import FoldAssignment, InferenceConfig


# ---------------------------------------------------------------- folds


def test_ten_items_ten_folds_all_singletons():
    items = [("t", i) for i in range(10)]
    folds = stats.make_item_folds(items, k=10, seed=0)
    assert sorted(folds.fold_sizes()) == [1] * 10


def test_fold_sizes_differ_by_at_most_one():
    items = [("t", i) for i in range(25)]
    folds = stats.make_item_folds(items, k=10, seed=3)
    assert sorted(folds.fold_sizes()) == [2] * 5 + [3] * 5


def test_folds_are_deterministic_and_seed_sensitive():
    items = [("t", i) for i in range(40)]
    a = stats.make_item_folds(items, k=5, seed=11)
    b = stats.make_item_folds(items, k=5, seed=11)
    c = stats.make_item_folds(items, k=5, seed=12)
    assert a.assignment == b.assignment
    assert a.assignment != c.assignment


def test_folds_ignore_duplicates_and_input_order():
    items = [("t", i) for i in range(12)]
    a = stats.make_item_folds(items, k=3, seed=5)
    b = stats.make_item_folds(list(reversed(items)) + items[:4], k=3, seed=5)
    assert a.assignment == b.assignment


def test_fold_parameter_errors():
    items = [("t", i) for i in range(4)]
    with pytest.raises(ParameterError):
        stats.make_item_folds(items, k=1, seed=0)
    with pytest.raises(ParameterError):
        stats.make_item_folds(items, k=5, seed=0)


def test_row_folds_partition_and_missing_item():
    items = [("t", i) for i in range(6)]
    folds = stats.make_item_folds(items, k=3, seed=2)
    df = pd.DataFrame({"text_id": ["t"] * 12, "word_index": list(range(6)) * 2})
    rf = folds.row_folds(df)
    assert set(rf) == {0, 1, 2}
    assert len(rf) == 12
    with pytest.raises(ParameterError):
        folds.row_folds(pd.DataFrame({"text_id": ["t"], "word_index": [99]}))


# ------------------------------------------------------------ sign flip


def test_all_zero_diffs_give_p_one():
    assert stats.paired_sign_flip_test(np.zeros(8), n_perm=1000, seed=0) == 1.0


def test_twenty_unit_diffs_exact_p():
    # all 2^20 assignments enumerated; only the two all-same patterns tie 20
    p = stats.paired_sign_flip_test(np.ones(20), n_perm=1000, seed=0)
    assert p == 2.0 / 2**20


def test_three_unit_diffs_exact_p():
    p = stats.paired_sign_flip_test(np.ones(3), n_perm=1000, seed=0)
    assert p == 0.25


def test_exact_p_is_sign_symmetric():
    d = np.array([0.3, -1.2, 0.7, 0.1, -0.4])
    p1 = stats.paired_sign_flip_test(d, n_perm=1000, seed=0)
    p2 = stats.paired_sign_flip_test(-d, n_perm=1000, seed=0)
    assert p1 == p2


def test_monte_carlo_path_deterministic_and_smoothed():
    d = np.random.default_rng(0).normal(0.5, 1.0, size=40)
    p1 = stats.paired_sign_flip_test(d, n_perm=500, seed=9)
    p2 = stats.paired_sign_flip_test(d, n_perm=500, seed=9)
    p3 = stats.paired_sign_flip_test(d, n_perm=500, seed=10)
    assert p1 == p2
    assert p1 != p3
    assert p1 >= 1.0 / 501.0


def test_monte_carlo_agrees_with_exact_enumeration():
    d = np.random.default_rng(4).normal(0.4, 1.0, size=15)
    exact = stats.paired_sign_flip_test(d, n_perm=1000, seed=0)
    mc = stats.paired_sign_flip_test(np.concatenate([d, [0.0] * 6]),
                                     n_perm=8000, seed=1)
    # padding with zeros moves n past the enumeration limit without changing
    # the distribution of the sum
    assert abs(mc - exact) < 0.03


def test_monte_carlo_block_stream_is_reproducible():
    """Blocked RNG: block b of a run must use default_rng([seed, 1, b])."""
    d = np.random.default_rng(2).normal(0.2, 1.0, size=30)
    total = float(d.sum())
    thresh = abs(total) - 1e-12 * max(1.0, abs(total))
    count = 0
    for block, nb in ((0, 1024), (1, 476)):
        rng = np.random.default_rng([7, 1, block])
        flips = rng.random((nb, 30)) < 0.5
        sums = total - 2.0 * (flips.astype(float) @ d)
        count += int((np.abs(sums) >= thresh).sum())
    expected = (1 + count) / 1501.0
    assert stats.paired_sign_flip_test(d, n_perm=1500, seed=7) == expected


def test_sign_flip_parameter_errors():
    with pytest.raises(ParameterError):
        stats.paired_sign_flip_test(np.ones(5), n_perm=99, seed=0)
    with pytest.raises(ParameterError):
        stats.paired_sign_flip_test(np.array([]), n_perm=1000, seed=0)


# ------------------------------------------------------------ bootstrap


def test_bootstrap_degenerate_subjects_collapse_ci():
    by_subject = {f"s{i}": np.full(3, 0.42) for i in range(5)}
    lo, hi = stats.bootstrap_subject_ci(by_subject, n_boot=1000, seed=0)
    assert lo == pytest.approx(0.42, abs=1e-15)
    assert hi == pytest.approx(0.42, abs=1e-15)


def test_bootstrap_is_deterministic_and_brackets_the_mean():
    rng = np.random.default_rng(5)
    by_subject = {f"s{i}": rng.normal(0.1, 1.0, size=20) for i in range(10)}
    ci1 = stats.bootstrap_subject_ci(by_subject, n_boot=2000, seed=3)
    ci2 = stats.bootstrap_subject_ci(by_subject, n_boot=2000, seed=3)
    assert ci1 == ci2
    grand = np.concatenate(list(by_subject.values())).mean()
    assert ci1[0] <= grand <= ci1[1]


def test_bootstrap_parameter_errors():
    ok = {"a": np.ones(2), "b": np.ones(2)}
    with pytest.raises(ParameterError):
        stats.bootstrap_subject_ci(ok, n_boot=999, seed=0)
    with pytest.raises(ParameterError):
        stats.bootstrap_subject_ci({"a": np.ones(2)}, n_boot=1000, seed=0)
    with pytest.raises(ParameterError):
        stats.bootstrap_subject_ci({"a": np.ones(2), "b": np.array([])},
                                   n_boot=1000, seed=0)


def test_inference_config_validation():
    with pytest.raises(ParameterError):
        InferenceConfig(n_perm=50)
    with pytest.raises(ParameterError):
        InferenceConfig(n_boot=10)


# ----------------------------------------------------- cross validation


def cv_table(seed=0, n_subj=6, n_items=60, effect=0.8):
    rng = np.random.default_rng(seed)
    x_item = rng.normal(0, 1, size=n_items)
    rows = []
    for j in range(n_subj):
        b = rng.normal(0, 0.3)
        for i in range(n_items):
            rows.append({
                "subject_id": f"s{j}", "text_id": "t", "word_index": i,
                "x": x_item[i],
                "y": 0.2 + effect * x_item[i] + b + rng.normal(0, 0.5),
            })
    return pd.DataFrame(rows)


def cv_folds(df, k=3, seed=1):
    items = set(zip(df["text_id"], df["word_index"]))
    return stats.make_item_folds(items, k=k, seed=seed)


CFG = InferenceConfig(n_perm=1000, n_boot=1000, perm_seed=0, boot_seed=0)


def test_identical_specs_give_zero_gain():
    df = cv_table()
    spec = ModelSpec("y", ("x",))
    res = stats.cross_validated_delta_ll(df, spec, spec, cv_folds(df), CFG)
    assert np.all(res.diffs == 0.0)
    assert res.mean_delta_ll == 0.0
    assert res.p_value == 1.0
    assert res.nested


def test_informative_predictor_wins():
    df = cv_table()
    res = stats.cross_validated_delta_ll(
        df, ModelSpec("y", ()), ModelSpec("y", ("x",)), cv_folds(df), CFG)
    assert res.mean_delta_ll > 0
    assert res.p_value < 0.01
    assert res.ci95[0] < res.mean_delta_ll < res.ci95[1]
    assert res.diffs.size == len(df)
    # subject bookkeeping is aligned with table rows
    assert res.subject_stats()["s0"][1] == 60


def test_every_row_scored_exactly_once():
    df = cv_table()
    folds = cv_folds(df)
    res = stats.cross_validated_delta_ll(
        df, ModelSpec("y", ()), ModelSpec("y", ("x",)), folds, CFG)
    # row i was scored under the fold holding its item out; re-deriving the
    # fold map must cover all rows
    rf = folds.row_folds(df)
    assert len(rf) == res.diffs.size
    assert res.mean_delta_ll == pytest.approx(res.diffs.mean(), abs=1e-15)


def test_non_nested_specs_flagged():
    df = cv_table()
    res = stats.cross_validated_delta_ll(
        df, ModelSpec("y", ("x",)), ModelSpec("y", ()), cv_folds(df), CFG)
    assert not res.nested


def test_fold_fit_failure_names_fold_and_model():
    df = cv_table().assign(x_dup=lambda d: d["x"])
    with pytest.raises(PipelineError, match="fold 0: target model failed to fit"):
        stats.cross_validated_delta_ll(
            df, ModelSpec("y", ("x",)), ModelSpec("y", ("x", "x_dup")),
            cv_folds(df), CFG)


def test_affine_raw_predictor_transform_is_invariant():
    """Rescaling or shifting a raw predictor before standardization cannot
    change the gain: the z-scores are identical up to float rounding."""
    from predpower.ingest import zscore

    df = cv_table()
    res1 = stats.cross_validated_delta_ll(
        df.assign(x=zscore(df["x"].to_numpy())),
        ModelSpec("y", ()), ModelSpec("y", ("x",)), cv_folds(df), CFG)
    df2 = df.assign(x=zscore(3.0 * df["x"].to_numpy() - 7.0))
    res2 = stats.cross_validated_delta_ll(
        df2, ModelSpec("y", ()), ModelSpec("y", ("x",)), cv_folds(df2), CFG)
    assert res2.mean_delta_ll == pytest.approx(res1.mean_delta_ll, abs=1e-9)
    assert res2.p_value == res1.p_value
    np.testing.assert_allclose(res2.diffs, res1.diffs, rtol=0, atol=1e-6)


def test_delta_ll_result_round_trip(tmp_path):
    df = cv_table()
    res = stats.cross_validated_delta_ll(
        df, ModelSpec("y", ()), ModelSpec("y", ("x",)), cv_folds(df), CFG)
    d = res.to_json_dict()
    assert d["n_obs"] == len(df)
    assert d["mean_delta_ll"] == res.mean_delta_ll
    path = tmp_path / "diffs.csv"
    stats.write_diffs_csv(res, str(path))
    back = pd.read_csv(path)
    assert len(back) == len(df)
    assert back["diff"].sum() == pytest.approx(res.diffs.sum(), rel=1e-12)


def test_in_sample_nested_gain_is_nonnegative():
    df = cv_table()
    gain = stats.in_sample_delta_ll(df, ModelSpec("y", ()), ModelSpec("y", ("x",)))
    assert gain >= -1e-6


# ---------------------------------------------------------- group split


def test_delta_pp_hand_value_and_antisymmetry():
    st = {"a": (2.0, 2), "b": (1.0, 1), "c": (-3.0, 3)}
    d = stats.delta_pp_from_stats(st, high_group={"a", "b"})
    assert d == pytest.approx(2.0, abs=1e-15)
    assert stats.delta_pp_from_stats(st, high_group={"c"}) == pytest.approx(-2.0)
    with pytest.raises(ParameterError):
        stats.delta_pp_from_stats(st, high_group=set(st))


def test_group_permutation_label_swap_invariance():
    rng = np.random.default_rng(8)
    st = {f"s{i}": (float(rng.normal()), 10) for i in range(9)}
    high = {"s0", "s3", "s4", "s8"}
    low = set(st) - high
    obs = stats.delta_pp_from_stats(st, high)
    p_high = stats.group_label_permutation_test(obs, st, high, n_perm=500, seed=2)
    p_low = stats.group_label_permutation_test(-obs, st, low, n_perm=500, seed=2)
    assert p_high == p_low


def test_group_permutation_null_rejection_rate_is_calibrated():
    # Both groups drawn from one distribution: rejection rate at alpha=.05
    # over 200 simulations must sit in [0.02, 0.09].
    rng = np.random.default_rng(314)
    rejections = 0
    for _ in range(200):
        st = {f"s{i:02d}": (float(rng.normal(0.0, 1.0, 8).sum()), 8) for i in range(12)}
        high = {f"s{i:02d}" for i in range(6)}
        obs = stats.delta_pp_from_stats(st, high)
        p = stats.group_label_permutation_test(obs, st, high, n_perm=500, seed=9)
        rejections += p < 0.05
    assert 4 <= rejections <= 18


def test_group_permutation_detects_separation():
    st = {f"h{i}": (5.0 + 0.1 * i, 10) for i in range(6)}
    st.update({f"l{i}": (-5.0 - 0.1 * i, 10) for i in range(6)})
    high = {k for k in st if k.startswith("h")}
    obs = stats.delta_pp_from_stats(st, high)
    p = stats.group_label_permutation_test(obs, st, high, n_perm=1000, seed=0)
    assert p < 0.02


def test_group_permutation_is_deterministic():
    st = {f"s{i}": (float(i - 3), 5) for i in range(8)}
    high = {"s0", "s1", "s2", "s3"}
    obs = stats.delta_pp_from_stats(st, high)
    args = (obs, st, high)
    assert (stats.group_label_permutation_test(*args, n_perm=400, seed=5)
            == stats.group_label_permutation_test(*args, n_perm=400, seed=5))


def test_group_permutation_parameter_errors():
    st = {"a": (1.0, 1), "b": (2.0, 1)}
    with pytest.raises(ParameterError):
        stats.group_label_permutation_test(0.5, st, {"a"}, n_perm=10, seed=0)
    with pytest.raises(ParameterError):
        stats.group_label_permutation_test(0.5, st, {"zz"}, n_perm=100, seed=0)
    with pytest.raises(ParameterError):
        stats.group_label_permutation_test(0.5, st, set(), n_perm=100, seed=0)
