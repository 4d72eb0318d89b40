"""Newton-boosted tree ensemble: split search, boosting loop, importances."""

import numpy as np
import pytest

from agisense import (
    GbtHyperparams,
    Leaf,
    Split,
    TreeEnsemble,
    aggregate_importance,
    fit_gbt,
    importance_gain,
    importance_vector,
    importance_weight,
    load_gbt,
    predict_gbt,
    raw_scores,
    save_gbt,
    staged_predict_gbt,
)


def exhaustive_depth1_fit(X, y, reg_lambda=1.0, gamma=0.0, min_child_weight=0.0):
    """Independent brute-force oracle for a single depth-1 Newton tree.

    Enumerates every (feature, midpoint threshold) pair directly, applying
    the documented tie-break: highest gain, then lowest feature index, then
    lowest threshold.  Returns (feature, threshold, w_left, w_right) or a
    single leaf weight when no positive-gain split exists.
    """
    n = len(y)
    p = float(np.mean(y))
    base = float(np.log(p / (1.0 - p)))
    probs = 1.0 / (1.0 + np.exp(-base))
    g = np.full(n, probs) - y
    h = np.full(n, probs * (1.0 - probs))
    G, H = g.sum(), h.sum()
    parent = G * G / (H + reg_lambda)

    best = None  # (gain, feature, threshold, wl, wr)
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for a, b in zip(values, values[1:]):
            thr = 0.5 * (a + b)
            left = X[:, f] < thr
            GL, HL = g[left].sum(), h[left].sum()
            GR, HR = G - GL, H - HL
            if HL < min_child_weight or HR < min_child_weight:
                continue
            gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda) - parent) - gamma
            if gain > 0.0 and (best is None or gain > best[0]):
                best = (
                    gain, f, thr,
                    -GL / (HL + reg_lambda), -GR / (HR + reg_lambda),
                )
    if best is None:
        return -G / (H + reg_lambda)
    return best[1:]


def fitted_root(model):
    (tree,) = model.trees
    return tree


def test_toy_1d_split_at_midpoint():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=1, max_depth=1))
    root = fitted_root(model)
    assert isinstance(root, Split)
    assert root.feature == 0
    assert root.threshold == 2.5
    assert root.left.weight < 0 < root.right.weight
    # Low x scores below 0.5, high x above.
    p = predict_gbt(model, X)
    assert p[0] < 0.5 < p[3]
    assert np.all((p > 0) & (p < 1))


def test_single_class_labels_rejected():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError, match="single class"):
        fit_gbt(X, np.zeros(4))


def test_non_finite_features_rejected():
    X = np.array([[1.0], [np.nan]])
    with pytest.raises(ValueError, match="non-finite"):
        fit_gbt(X, np.array([0, 1]))


def test_zero_trees_predicts_base_rate():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 1, 1, 1])
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=0))
    assert np.allclose(predict_gbt(model, X), 0.75)


def test_empty_ensemble_with_zero_base_score():
    model = TreeEnsemble(trees=[], base_score=0.0, hp=GbtHyperparams(), n_features=3)
    assert np.allclose(predict_gbt(model, np.zeros((2, 3))), 0.5)


def test_depth1_matches_exhaustive_search_exactly():
    # Balanced labels make every intermediate quantity dyadic, so the fitted
    # tree and the brute-force oracle must agree bit for bit.
    rng = np.random.default_rng(77)
    for _ in range(60):
        n = int(rng.integers(2, 26)) * 2
        d = int(rng.integers(1, 7))
        X = np.round(rng.normal(0, 10, (n, d)), int(rng.integers(0, 3)))
        y = rng.permutation(np.repeat([0, 1], n // 2)).astype(float)
        model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=1, max_depth=1))
        root = fitted_root(model)
        oracle = exhaustive_depth1_fit(X, y)
        if isinstance(root, Leaf):
            assert np.isscalar(oracle)
            assert root.weight == oracle
        else:
            f, thr, wl, wr = oracle
            assert (root.feature, root.threshold) == (f, thr)
            assert root.left.weight == wl
            assert root.right.weight == wr


def test_depth1_close_to_exhaustive_search_on_unbalanced_labels():
    # With an irrational base score the sums are not exactly associative, so
    # this variant allows float tolerance while demanding the same split.
    rng = np.random.default_rng(78)
    for _ in range(40):
        n = int(rng.integers(5, 50))
        d = int(rng.integers(1, 5))
        X = rng.normal(0, 5, (n, d))
        y = np.zeros(n)
        y[: int(rng.integers(1, n))] = 1.0
        rng.shuffle(y)
        if len(np.unique(y)) < 2:
            continue
        model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=1, max_depth=1))
        root = fitted_root(model)
        oracle = exhaustive_depth1_fit(X, y)
        if isinstance(root, Leaf):
            assert np.isscalar(oracle)
            assert root.weight == pytest.approx(oracle, abs=1e-12)
        else:
            f, thr, wl, wr = oracle
            assert (root.feature, root.threshold) == (f, thr)
            assert root.left.weight == pytest.approx(wl, abs=1e-12)
            assert root.right.weight == pytest.approx(wr, abs=1e-12)


def test_training_log_loss_non_increasing():
    rng = np.random.default_rng(3)
    X = rng.normal(0, 1, (40, 6))
    y = (X[:, 0] + 0.3 * rng.normal(size=40) > 0).astype(int)
    _, log = fit_gbt(X, y, GbtHyperparams(n_trees=25, max_depth=3))
    losses = np.array(log.train_loss)
    assert len(losses) == 26  # includes the pre-boosting baseline loss
    assert np.all(np.diff(losses) <= 1e-12)


def test_monotone_feature_transform_preserves_predictions():
    rng = np.random.default_rng(8)
    X = rng.normal(0, 1, (30, 4))
    y = (X[:, 1] > 0.2).astype(int)
    hp = GbtHyperparams(n_trees=10, max_depth=2)
    model_a, _ = fit_gbt(X, y, hp)
    X2 = X.copy()
    X2[:, 1] = np.exp(X2[:, 1])  # strictly increasing transform
    model_b, _ = fit_gbt(X2, y, hp)
    pred_a = predict_gbt(model_a, X) >= 0.5
    pred_b = predict_gbt(model_b, X2) >= 0.5
    assert np.array_equal(pred_a, pred_b)


def test_deterministic_refit_is_bit_identical():
    rng = np.random.default_rng(12)
    X = rng.normal(0, 1, (25, 5))
    y = (X[:, 2] > 0).astype(int)
    hp = GbtHyperparams(n_trees=8, max_depth=3)
    a, log_a = fit_gbt(X, y, hp, rng_seed=1)
    b, log_b = fit_gbt(X, y, hp, rng_seed=1)
    assert raw_scores(a, X).tobytes() == raw_scores(b, X).tobytes()
    assert log_a.train_loss == log_b.train_loss


def test_staged_predictions_match_truncated_ensembles():
    rng = np.random.default_rng(4)
    X = rng.normal(0, 1, (20, 3))
    y = (X[:, 0] > 0).astype(int)
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=6, max_depth=2))
    staged = staged_predict_gbt(model, X)
    assert staged.shape == (6, 20)
    for m in range(6):
        assert np.array_equal(staged[m], predict_gbt(model, X, n_trees=m + 1))


def test_feature_width_mismatch_rejected():
    model = TreeEnsemble(trees=[], base_score=0.0, hp=GbtHyperparams(), n_features=4)
    with pytest.raises(ValueError, match="4"):
        predict_gbt(model, np.zeros((2, 3)))


def test_min_child_weight_blocks_small_children():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    hp = GbtHyperparams(n_trees=1, max_depth=1, min_child_weight=10.0)
    model, _ = fit_gbt(X, y, hp)
    assert isinstance(fitted_root(model), Leaf)


def test_gamma_penalty_prunes_weak_splits():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=1, max_depth=1, gamma=1e6))
    assert isinstance(fitted_root(model), Leaf)


def test_importance_bookkeeping():
    X = np.array([[1.0, 9.0], [2.0, 9.0], [3.0, 9.0], [4.0, 9.0]])
    y = np.array([0, 0, 1, 1])
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=1, max_depth=1))
    root = fitted_root(model)
    gain = importance_gain(model)
    weight = importance_weight(model)
    assert weight == {0: 1}
    assert gain == {0: pytest.approx(root.gain)}
    vec = importance_vector(model, "gain")
    assert vec.shape == (2,)
    assert vec[1] == 0.0  # unused feature reports zero


def test_channel_aggregation_partitions_total_gain():
    rng = np.random.default_rng(10)
    X = rng.normal(50, 10, (40, 315))
    y = (X[:, 100] > 50).astype(int)
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=5, max_depth=2))
    vec = importance_vector(model, "gain")
    agg = aggregate_importance(vec, "channel")
    assert sum(agg.values()) == pytest.approx(vec.sum())


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    X = rng.normal(0, 1, (30, 4))
    y = (X[:, 0] + X[:, 3] > 0).astype(int)
    model, _ = fit_gbt(X, y, GbtHyperparams(n_trees=7, max_depth=3), rng_seed=5)
    path = tmp_path / "model.json"
    save_gbt(model, path, feature_layout={"n_features": 4})
    back = load_gbt(path)
    assert back.base_score == model.base_score
    assert back.hp == model.hp
    assert back.seed == 5
    assert np.array_equal(predict_gbt(back, X), predict_gbt(model, X))

    with pytest.raises(ValueError, match="bundle"):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        load_gbt(bad)
