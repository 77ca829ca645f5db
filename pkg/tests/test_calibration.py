import csv
import itertools
import math

import numpy as np
import pytest
from sklearn.metrics import precision_recall_curve
from sklearn.tree import DecisionTreeClassifier

from amlgen.calibration import (CalibrationError, DataInformedObjective, Dimension, Journal,
                                KnowledgeFreeObjective, ParetoArchive, SearchSpace,
                                TrialRecord, compare_stats, default_space, dominates,
                                evaluate_metrics, false_positive_rate, gini, gini_importance,
                                importance_spread, nondominated_mask, nondomination_rank,
                                optimize, pr_curve, precision_at_recall, train_tree)
from amlgen.calibration.metrics import alert_false_share, confusion
from amlgen.calibration.objectives import (DI_SENTINEL, KF_SENTINEL, Evaluation,
                                           ks_histograms, patch_document, scale_document)
from amlgen.config import config_from_dict, get_path, preset_document
from amlgen.rng import RandomStream
from amlgen.simulation import run_pipeline
from amlgen.stats import graph_stats


# ---------------------------------------------------------------- tree

def test_gini_values():
    assert gini(1, 1) == 0.5
    assert gini(5, 0) == 0.0 and gini(0, 0) == 0.0


def test_separable_1d_needs_one_split():
    x = np.linspace(-1, 1, 20).reshape(-1, 1)
    y = (x[:, 0] >= 0).astype(int)
    t = train_tree(x, y, max_depth=5)
    assert t.n_splits == 1 and max(t.depth) == 1
    assert (t.predict(x) == y).all()
    assert -0.06 < t.threshold[0] < 0.06


def test_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
    y = np.array([0, 1, 1, 0])
    assert (train_tree(X, y, max_depth=2).predict(X) == y).all()
    assert (train_tree(X, y, max_depth=1).predict(X) == y).mean() <= 0.75


def test_single_class_is_flagged_leaf():
    t = train_tree(np.random.default_rng(0).random((10, 3)), np.zeros(10, int))
    assert t.single_class and t.n_nodes == 1
    assert (gini_importance(t) == 0).all()


def test_split_partitions_strictly_and_respects_min_leaf():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 4, (300, 4)).astype(float)
    y = (X[:, 0] + rng.random(300) > 2.5).astype(int)
    t = train_tree(X, y, max_depth=6, min_samples_leaf=7)
    for i, f in enumerate(t.feature):
        v = t.value[i]
        if f >= 0:
            l, r = t.value[t.left[i]], t.value[t.right[i]]
            assert sum(l) > 0 and sum(r) > 0
            assert (l[0] + r[0], l[1] + r[1]) == tuple(v)
        assert sum(v) >= 7


def test_tree_determinism():
    rng = np.random.default_rng(2)
    X = rng.integers(0, 3, (200, 5)).astype(float)
    y = rng.integers(0, 2, 200)
    a, b = train_tree(X, y, 6, 2), train_tree(X, y, 6, 2)
    assert (a.feature, a.threshold, a.left, a.value) == (b.feature, b.threshold, b.left, b.value)


def test_tie_prefers_lowest_feature_then_threshold():
    X = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
    y = np.array([0, 0, 1, 1])
    t = train_tree(X, y, 1)
    assert t.feature[0] == 0 and t.threshold[0] == 1.5
    X = np.array([[0], [1], [2], [3]], float)
    t = train_tree(X, np.array([0, 1, 0, 1]), 1)
    # three splits of equal impurity: lowest threshold wins
    assert t.threshold[0] == 0.5


def _node_masks(tree, X):
    """Rows reaching each node, by walking the fitted tree."""
    masks = [None] * tree.n_nodes
    masks[0] = np.ones(len(X), bool)
    for i in range(tree.n_nodes):
        f = tree.feature[i]
        if f >= 0:
            go_left = X[:, f] <= tree.threshold[i]
            masks[tree.left[i]] = masks[i] & go_left
            masks[tree.right[i]] = masks[i] & ~go_left
    return masks


def _weighted_gini(y):
    if len(y) == 0:
        return 0.0
    p = y.mean()
    return len(y) * 2 * p * (1 - p)


@pytest.mark.parametrize("seed", range(8))
def test_every_split_is_brute_force_optimal(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(150, 4)), 1)
    y = ((X[:, 0] > 0.3) ^ (X[:, 2] < -0.5) | (rng.random(150) < 0.1)).astype(int)
    t = train_tree(X, y, max_depth=4, min_samples_leaf=3)
    for i, m in enumerate(_node_masks(t, X)):
        if t.feature[i] < 0:
            continue
        best = math.inf
        for f in range(X.shape[1]):
            vals = np.unique(X[m, f])
            for lo, hi in zip(vals[:-1], vals[1:]):
                left = m & (X[:, f] <= (lo + hi) / 2)
                right = m & ~left
                if left.sum() >= 3 and right.sum() >= 3:
                    best = min(best, _weighted_gini(y[left]) + _weighted_gini(y[right]))
        f, thr = t.feature[i], t.threshold[i]
        left = m & (X[:, f] <= thr)
        got = _weighted_gini(y[left]) + _weighted_gini(y[m & ~left])
        assert got == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_matches_reference_cart_on_continuous_data(seed):
    # the reference casts to float32 and breaks impurity ties with a random
    # feature order, so data is float32-exact and some random_state must agree
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(400, 6)).astype(np.float32).astype(float)
    y = ((X[:, 0] > 0.3) ^ (X[:, 2] < -0.5) | (rng.random(400) < 0.1)).astype(int)
    ours = train_tree(X, y, max_depth=4, min_samples_leaf=5)
    Xt = rng.normal(size=(500, 6)).astype(np.float32).astype(float)
    agree = []
    for rs in range(50):
        ref = DecisionTreeClassifier(max_depth=4, min_samples_leaf=5, random_state=rs).fit(X, y)
        if ours.feature == [max(int(f), -1) for f in ref.tree_.feature]:
            agree.append(ref)
    assert agree
    ref = agree[0]
    np.testing.assert_allclose(ours.predict_proba(Xt), ref.predict_proba(Xt)[:, 1], atol=1e-12)
    np.testing.assert_allclose(gini_importance(ours), ref.feature_importances_, atol=1e-12)


def test_importance_hand_computed_two_splits():
    X = np.array([[1, 1], [2, 0], [3, 1], [4, 0], [5, 1], [6, 0]], float)
    y = np.array([0, 0, 0, 1, 0, 1])
    t = train_tree(X, y, max_depth=2)
    # root: 6*gini(4,2)=8/3 -> f0 at 3.5 leaves 0 + 3*gini(1,2)=4/3 (ties f1, lower index wins)
    # right child: 4/3 -> f1 at 0.5 leaves 0
    assert t.feature[0] == 0 and t.threshold[0] == 3.5
    assert sorted(f for f in t.feature if f >= 0) == [0, 1]
    np.testing.assert_allclose(gini_importance(t), [0.5, 0.5], atol=1e-12)


def test_importance_one_hot_and_normalised():
    X = np.zeros((10, 5))
    X[:, 3] = np.arange(10)
    y = (np.arange(10) >= 5).astype(int)
    assert gini_importance(train_tree(X, y, 3)).tolist() == [0, 0, 0, 1, 0]
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.integers(0, 5, (80, 6)).astype(float)
        y = rng.integers(0, 2, 80)
        psi = gini_importance(train_tree(X, y, 5))
        assert psi.sum() == pytest.approx(1.0, abs=1e-9) and (psi >= 0).all()


# ---------------------------------------------------------------- metrics

def test_exhaustive_confusion_identities():
    for y in itertools.product([0, 1], repeat=4):
        for pred in itertools.product([0, 1], repeat=4):
            tp = sum(a and b for a, b in zip(y, pred))
            fp = sum((not a) and b for a, b in zip(y, pred))
            tn = sum((not a) and (not b) for a, b in zip(y, pred))
            fn = sum(a and (not b) for a, b in zip(y, pred))
            assert confusion(y, pred) == (tp, fp, tn, fn)
            if fp + tn:
                assert false_positive_rate(y, pred) == fp / (fp + tn)
            else:
                with pytest.raises(ValueError):
                    false_positive_rate(y, pred)
            if sum(y):
                p, r, t = pr_curve(y, pred)
                # the point at threshold 1 is the hard prediction itself
                if sum(pred):
                    assert p[0] == tp / (tp + fp) and r[0] == tp / (tp + fn)


def test_curve_matches_reference_implementation():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(5, 60))
        y = rng.integers(0, 2, n)
        if y.sum() == 0:
            continue
        s = rng.integers(0, 8, n) / 8.0
        p, r, t = pr_curve(y, s)
        rp, rr, rt = precision_recall_curve(y, s)
        rp, rr, rt = rp[:-1][::-1], rr[:-1][::-1], rt[::-1]
        stop = int(np.argmax(rr == 1.0)) + 1  # truncate at full recall
        np.testing.assert_allclose(p, rp[:stop])
        np.testing.assert_allclose(r, rr[:stop])
        np.testing.assert_allclose(t, rt[:stop])


def test_metric_examples():
    y = np.array([1, 0, 1, 0])
    assert false_positive_rate(y, np.zeros(4)) == 0.0
    assert false_positive_rate(np.array([1, 0, 0, 1]), np.array([1, 1, 0, 0])) == 0.5
    assert precision_at_recall(y, y.astype(float)) == 1.0
    assert alert_false_share(y, y.astype(float)) == 0.0
    with pytest.raises(ValueError):
        false_positive_rate(np.ones(3), np.ones(3))


def test_evaluate_metrics_perfect_tree():
    X = np.arange(8, dtype=float).reshape(-1, 1)
    y = (X[:, 0] > 3).astype(int)
    m = evaluate_metrics(train_tree(X, y, 2), X, y)
    assert m["fpr"] == 0 and m["p_at_r"] == 1 and m["alert_fpr"] == 0
    with pytest.raises(ValueError):
        evaluate_metrics(train_tree(X, y, 2), X[4:], y[4:])


# ---------------------------------------------------------------- pareto

class R:
    def __init__(self, f, i=0):
        self.objectives = tuple(f)
        self.trial_id = i


def test_dominance_examples():
    a = ParetoArchive()
    assert a.add(R((1, 2)))
    assert not a.add(R((2, 3)))
    b = ParetoArchive()
    assert b.add(R((1, 3))) and b.add(R((3, 1))) and len(b) == 2
    assert b.add(R((0, 0))) and len(b) == 1
    assert dominates((1, 2), (1, 3)) and not dominates((1, 2), (1, 2))


@pytest.mark.parametrize("seed", range(10))
def test_archive_equals_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 12, (200, int(rng.integers(2, 4))))
    arch = ParetoArchive()
    for i, p in enumerate(pts):
        arch.add(R(p, i))
    brute = {i for i, p in enumerate(pts)
             if not any(dominates(q, p) for q in pts)}
    assert {r.trial_id for r in arch} == brute
    assert set(np.flatnonzero(nondominated_mask(pts))) == brute


def test_nondomination_rank_layers():
    pts = np.array([[0, 0], [1, 1], [2, 2], [0, 3], [3, 0]])
    assert nondomination_rank(pts).tolist() == [0, 1, 2, 1, 1]


# ---------------------------------------------------------------- objectives

def test_spread_bounds():
    assert importance_spread(np.full(7, 1 / 7)) == pytest.approx(0.0)
    for n in (2, 5, 76):
        psi = np.zeros(n)
        psi[0] = 1
        assert importance_spread(psi) == pytest.approx(2 * (n - 1) / n)
        rng = np.random.default_rng(n)
        for _ in range(100):
            q = rng.dirichlet(np.full(n, 0.3))
            assert 0 <= importance_spread(q) <= 2 * (n - 1) / n + 1e-12


def _synthetic_table(n=400, seed=0):
    import pandas as pd
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.3).astype(int)
    X = rng.normal(size=(n, 4)) + y[:, None] * np.array([1.5, 0.0, 0.5, 0.0])
    df = pd.DataFrame(X, columns=[f"c{i}" for i in range(4)])
    df.insert(0, "label", y)
    df.insert(0, "fi", 0)
    df.insert(0, "account_id", np.arange(n))
    return df


def test_f1_zero_when_on_target():
    t = _synthetic_table()
    ev = KnowledgeFreeObjective({}, 0.5).score_table(t, 0.25, 3)
    assert not ev.degenerate
    target = ev.info["alert_fpr"]
    ev2 = KnowledgeFreeObjective({}, target).score_table(t, 0.25, 3)
    assert ev2.objectives[0] == 0.0
    assert ev2.objectives[1] == ev.objectives[1]
    assert 0 <= ev.objectives[1] <= 2 * 3 / 4


def test_degenerate_table_gives_sentinel():
    t = _synthetic_table()
    t["label"] = 0
    ev = KnowledgeFreeObjective({}).score_table(t, 0.25, 0)
    assert ev.degenerate and ev.objectives == KF_SENTINEL


def test_scale_and_patch_documents():
    doc = preset_document("swedish")
    small = scale_document(doc, 0.1)
    assert small["n_accounts"] == 10_000
    assert all(s["count"] >= 1 for s in small["alert_typologies"])
    assert scale_document({"n_accounts": 100}, 0.01)["n_accounts"] == 50
    p = patch_document(doc, {"alert_tx.mean": 500.0, "lifecycle.alert.bank_change.std": 9.0})
    assert get_path(p, "alert_tx.mean") == 500.0 and doc["alert_tx"]["mean"] == 799.0
    config_from_dict(p)


def test_reference_comparison():
    ref = {"in_degree_hist": {1: 5, 2: 5}, "mean_in_degree": 1.5, "mean_out_degree": 2.0,
           "mean_amount": 637.0}
    gen = dict(ref, mean_amount=700.0)
    vec = compare_stats(gen, ref)
    assert vec[:3] == (0.0, 0.0, 0.0)
    assert vec[3] == pytest.approx(63 / 637) and vec[3] == pytest.approx(0.0989, abs=1e-4)
    assert ks_histograms({1: 1, 2: 1}, {"1": 2}) == 0.5
    with pytest.raises(ValueError):
        DataInformedObjective({}, dict(ref, in_degree_hist={}))
    with pytest.raises(KeyError):
        DataInformedObjective({}, {"mean_amount": 1.0})


def test_data_informed_self_match():
    doc = {"n_accounts": 400, "n_steps": 56, "master_seed": 1}
    cfg = config_from_dict(doc, seed_override=77)
    ref = graph_stats(run_pipeline(cfg).log)
    ev = DataInformedObjective(doc, ref)({}, 1.0, 77)
    assert ev.objectives == (0.0, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------- search

class Toy:
    """f1 decreases monotonically as ``x`` approaches 0.3; f2 prefers large ``x``."""
    names = ("f1", "f2")

    def __call__(self, params, fidelity, seed):
        x = params["x"]
        noise = 0.0 if fidelity >= 1 else 0.01 * (seed % 7)
        if params.get("exact"):
            noise = 0.0
        return Evaluation((abs(x - 0.3) + noise, 1 - x), False, {})


class AlwaysDegenerate:
    def __call__(self, params, fidelity, seed):
        return Evaluation(KF_SENTINEL, True, {})


TOY = SearchSpace([Dimension("x", "continuous", 0.0, 1.0)])


def test_budget_one():
    res = optimize(TOY, Toy(), 1, RandomStream(0))
    assert len(res.archive) == 1 and res.best is res.archive.members[0]


def test_more_budget_never_hurts():
    # without screening noise the f1-best candidate is always promoted
    space = SearchSpace([Dimension("x", "continuous", 0.0, 1.0),
                         Dimension("exact", "categorical", categories=(True,))])
    for seed in range(10):
        small = optimize(space, Toy(), 10, RandomStream(seed))
        big = optimize(space, Toy(), 50, RandomStream(seed))
        assert big.best.objectives[0] <= small.best.objectives[0]


def test_archive_invariant_and_selection():
    res = optimize(TOY, Toy(), 30, RandomStream(3))
    objs = res.archive.objectives()
    assert nondominated_mask(objs).all()
    assert res.best.objectives[0] == objs[:, 0].min()
    full = [r for r in res.trials if r.fidelity == 1.0]
    assert len(full) == 10 and len(res.trials) == 40
    sel = optimize(TOY, Toy(), 30, RandomStream(3), select="sum")
    assert sum(sel.best.objectives) == objs.sum(axis=1).min()


def test_all_degenerate_raises():
    with pytest.raises(CalibrationError):
        optimize(TOY, AlwaysDegenerate(), 4, RandomStream(0))
    with pytest.raises(ValueError):
        optimize(TOY, Toy(), 0, RandomStream(0))


def test_workers_do_not_change_results():
    a = optimize(TOY, Toy(), 6, RandomStream(5))
    b = optimize(TOY, Toy(), 6, RandomStream(5), workers=2)
    assert [(r.trial_id, r.objectives, r.seed) for r in a.trials] == \
        [(r.trial_id, r.objectives, r.seed) for r in b.trials]


def test_journal(tmp_path):
    path = tmp_path / "trials.csv"
    j = Journal(path, ["x"], ["f1", "f2"])
    res = optimize(TOY, Toy(), 6, RandomStream(1), journal=j)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.trials)
    assert list(rows[0]) == ["trial_id", "x", "f1", "f2", "fidelity", "seed", "ms", "degenerate"]
    assert all(math.isfinite(float(r["f1"])) for r in rows)


def test_space_definitions():
    doc = preset_document("swedish")
    space = default_space()
    space.validate(doc)
    again = SearchSpace.from_document(space.to_document())
    assert again.names == space.names
    with pytest.raises(KeyError):
        SearchSpace([Dimension("alert_tx.nope", "continuous", 0, 1)]).validate(doc)
    with pytest.raises(ValueError):
        Dimension("a", "continuous", 2, 1)
    with pytest.raises(ValueError):
        Dimension("a", "categorical")
    rng = np.random.default_rng(0)
    assert Dimension("k", "integer", 2, 4).sample(rng) in (2, 3, 4)
    assert Dimension("c", "categorical", categories=("u", "v")).sample(rng) in ("u", "v")
    for _ in range(20):
        s = space.sample(rng)
        for d in space.dimensions:
            assert d.low <= s[d.name] <= d.high


def test_trial_record_fields():
    r = TrialRecord(0, {"x": 1.0}, (0.1, 0.2), 1.0, 5, 3.0)
    assert not r.degenerate and r.info == {}
    assert DI_SENTINEL[0] == 1.0 and all(math.isfinite(v) for v in DI_SENTINEL)
