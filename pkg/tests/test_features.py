import numpy as np
import pandas as pd
import pytest

from amlgen.config import config_from_dict
from amlgen.features import (FEATURE_NAMES, INTEGER_FEATURES, aggregate, build_train_test,
                             compute_features, feature_columns, subwindows)
from amlgen.records import SINK, SOURCE, TransactionLog
from amlgen.rng import RandomStream

from feature_oracle import compare, oracle_table, random_case, write_log


def tiny_log(rows, fi):
    """rows: (step, src, dst, amount_cents, is_sar[, channel])"""
    r = [tuple(x) + (0,) * (6 - len(x)) for x in rows]
    a = np.array(r, dtype=np.int64).reshape(-1, 6)
    return TransactionLog(a[:, 0].astype(np.int32), a[:, 1].astype(np.int32),
                          a[:, 2].astype(np.int32), a[:, 3], a[:, 5].astype(np.int8),
                          a[:, 4].astype(np.int8), np.full(len(a), -1, np.int32),
                          np.asarray(fi, np.int32))


def accounts_for(fi, open_step=0):
    n = len(fi)
    return pd.DataFrame({"account_id": np.arange(n), "fi": fi, "open_step": np.full(n, open_step)})


def test_feature_names_and_order():
    assert len(FEATURE_NAMES) == 19
    cols = feature_columns(4)
    assert len(cols) == 76
    assert cols[0] == "sum_spending_w0" and cols[19] == "sum_spending_w1"
    assert cols[-1] == "count_phone_changes_w3"


def test_subwindow_split():
    assert subwindows((0, 111), 112, 4) == [(0, 27), (28, 55), (56, 83), (84, 111)]
    assert subwindows((0, 112), 112, 4) == [(0, 27), (28, 55), (56, 83), (84, 111)]
    assert subwindows((0, 9), 112, 3) == [(0, 2), (3, 5), (6, 9)]
    with pytest.raises(ValueError):
        subwindows((0, 2), 112, 4)
    with pytest.raises(ValueError):
        subwindows((200, 210), 112, 1)


def test_hand_computed_incoming_amounts():
    log = tiny_log([(1, 1, 0, 10_000, 0), (2, 2, 0, 20_000, 0), (3, 1, 0, 20_000, 0)], [0, 0, 0])
    wg = aggregate(log, (0, 9), n_steps=10)
    t = compute_features(wg, 1, accounts_for([0, 0, 0]), None, 10).set_index("account_id")
    assert t.loc[0, "sum_w0"] == 500 and t.loc[0, "count_in_w0"] == 3
    assert t.loc[0, "count_unique_in_w0"] == 2 and t.loc[0, "count_out_w0"] == 0
    log = tiny_log([(1, 1, 0, 10_000, 0), (2, 2, 0, 20_000, 0)], [0, 0, 0])
    t = compute_features(aggregate(log, (0, 9), n_steps=10), 1, accounts_for([0, 0, 0]),
                         None, 10).set_index("account_id")
    assert (t.loc[0, "sum_w0"], t.loc[0, "mean_w0"], t.loc[0, "count_in_w0"]) == (300, 150, 2)
    assert t.loc[0, "std_w0"] == 50 and t.loc[0, "median_w0"] == 150


def test_idle_subwindow_is_all_zero():
    log = tiny_log([(1, 1, 0, 10_000, 0), (1, 0, SINK, 5_000, 0)], [0, 0])
    t = compute_features(aggregate(log, (0, 9), n_steps=10), 2, accounts_for([0, 0], 0),
                         None, 10).set_index("account_id")
    activity = [c for c in feature_columns(2) if c.endswith("_w1") and "days" not in c]
    assert (t.loc[:, activity] == 0).all().all()
    assert t.loc[0, "count_days_in_bank_w1"] == 10 and t.loc[0, "count_days_in_bank_w0"] == 5


def test_empty_window():
    log = tiny_log([(5, 1, 0, 10_000, 0)], [0, 0])
    wg = aggregate(log, (0, 3), n_steps=10)
    assert len(wg.nodes) == 0 and len(wg.edges) == 0
    t = compute_features(wg, 2, accounts_for([0, 0]), None, 10)
    assert len(t) == 0 and list(t.columns[3:]) == feature_columns(2)
    with pytest.raises(ValueError):
        aggregate(log, (4, 3))


def test_cash_and_source_records_are_not_edges():
    log = tiny_log([(0, SOURCE, 0, 10_000, 0), (1, 0, 1, 500, 0), (2, 1, SINK, 300, 0, 1)],
                   [0, 0])
    wg = aggregate(log, (0, 5), n_steps=6)
    assert wg.edges[["src", "dst"]].values.tolist() == [[0, 1]]
    assert len(wg.records) == 2


def test_worked_window_example():
    a, b, d, f = 0, 1, 2, 3
    log = tiny_log([(1, a, b, 100, 1), (1, a, f, 100, 1), (2, f, d, 100, 0), (3, 4, d, 100, 0),
                    (5, f, b, 100, 1), (6, a, SINK, 100, 0), (6, b, d, 100, 0),
                    (7, b, SINK, 100, 0), (7, b, a, 100, 1), (8, f, SINK, 100, 0)],
                   [0] * 5)
    wg = aggregate(log, (4, 8), n_steps=9)
    pairs = set(map(tuple, wg.edges[["src", "dst"]].values.tolist()))
    assert pairs == {(f, b), (b, d), (b, a)}
    lab = dict(zip(wg.nodes.tolist(), wg.labels.tolist()))
    assert lab == {a: 1, b: 1, d: 0, f: 1}


def test_fi_scope_keeps_boundary_records():
    fi = [0, 0, 1, 1]
    log = tiny_log([(0, 0, 1, 100, 0), (0, 0, 2, 100, 0), (1, 2, 3, 100, 0), (1, 3, 1, 100, 0),
                    (2, 1, SINK, 100, 0), (2, 3, SINK, 100, 0)], fi)
    wg = aggregate(log, (0, 2), scope=0, n_steps=3)
    sf, df = log.src_fi, log.dst_fi
    brute = [i for i in range(len(log)) if sf[i] == 0 or df[i] == 0]
    internal = sum(1 for i in brute if sf[i] == 0 and (df[i] == 0 or log.dst[i] < 0))
    boundary = len(brute) - internal
    assert len(wg.records) == len(brute) == internal + boundary == 4
    assert wg.nodes.tolist() == [0, 1]


@pytest.mark.parametrize("seed", range(6))
def test_oracle_equivalence_random_logs(tmp_path, seed):
    log, accounts, events, n_steps, window, m = random_case(seed)
    path = write_log(log, tmp_path / "tx.csv")
    wg = aggregate(log, window, n_steps=n_steps)
    table = compute_features(wg, m, accounts, events, n_steps)
    compare(table, oracle_table(path, accounts, events, n_steps, window, m), feature_columns(m))
    for f in range(3):
        wg = aggregate(log, window, scope=f, n_steps=n_steps)
        table = compute_features(wg, m, accounts, events, n_steps)
        compare(table, oracle_table(path, accounts, events, n_steps, window, m, scope=f),
                feature_columns(m))


def test_row_invariants(small_run, small_cfg):
    wg = aggregate(small_run.log, (0, 111), n_steps=112)
    t = compute_features(wg, 4, small_run.accounts, small_run.events, 112)
    for k in range(4):
        for pre in ("", "_spending"):
            lo = t[f"min{pre}_w{k}"]
            md = t[f"median{pre}_w{k}"]
            hi = t[f"max{pre}_w{k}"]
            assert (lo <= md).all() and (md <= hi).all()
            assert (t[f"std{pre}_w{k}"] >= 0).all()
    for c in feature_columns(4):
        if c.rsplit("_w", 1)[0] in INTEGER_FEATURES:
            assert t[c].dtype == np.int64 and (t[c] >= 0).all()


def test_labels_match_raw_sar_flags(small_run):
    lg = small_run.log
    wg = aggregate(lg, (30, 80), n_steps=112)
    keep = (lg.step >= 30) & (lg.step <= 80) & (lg.channel == 0) & (lg.is_sar == 1)
    flagged = set(lg.src[keep].tolist()) | set(lg.dst[keep].tolist())
    flagged.discard(SOURCE)
    assert {int(v) for v, y in zip(wg.nodes, wg.labels) if y} == flagged


def test_fi_locality(small_run):
    lg = small_run.log
    g = compute_features(aggregate(lg, (0, 111), n_steps=112), 4, small_run.accounts,
                         small_run.events, 112).set_index("account_id")
    fi = small_run.accounts["fi"].to_numpy()
    a2a = (lg.src >= 0) & (lg.dst >= 0)
    cross = set(lg.src[a2a & (fi[lg.src] != fi[np.maximum(lg.dst, 0)])].tolist()) | \
        set(lg.dst[a2a & (fi[lg.src] != fi[np.maximum(lg.dst, 0)])].tolist())
    checked = 0
    for f in range(3):
        loc = compute_features(aggregate(lg, (0, 111), scope=f, n_steps=112), 4,
                               small_run.accounts, small_run.events, 112).set_index("account_id")
        local_only = [v for v in loc.index if v not in cross]
        pd.testing.assert_frame_equal(loc.loc[local_only], g.loc[local_only])
        checked += len(local_only)
    assert checked > 0


def test_permuting_records_within_a_step(small_run):
    lg = small_run.log
    rng = np.random.default_rng(0)
    key = lg.step.astype(float) + rng.random(len(lg)) * 0.5
    shuffled = lg.select(np.argsort(key, kind="stable"))
    assert not np.array_equal(shuffled.amount, lg.amount)
    t1 = compute_features(aggregate(lg, (0, 111), n_steps=112), 4, small_run.accounts,
                          small_run.events, 112)
    t2 = compute_features(aggregate(shuffled, (0, 111), n_steps=112), 4, small_run.accounts,
                          small_run.events, 112)
    pd.testing.assert_frame_equal(t1, t2, check_exact=False, rtol=1e-12)


def test_build_train_test_transductive_and_holdout(small_run, small_cfg):
    res = build_train_test(small_run.log, small_run.accounts, small_run.events, small_cfg,
                           RandomStream(1), train=(0, 111), test=(0, 111))
    g = res["global"]
    pd.testing.assert_frame_equal(g["train"], g["test"])
    val = g["validation"]
    assert len(val) == round(0.25 * len(g["train"]))
    assert set(val) <= set(g["train"]["account_id"]) and len(set(val)) == len(val)
    assert sorted(res["fi"]) == [0, 1, 2]
    again = build_train_test(small_run.log, small_run.accounts, small_run.events, small_cfg,
                             RandomStream(1), train=(0, 111), test=(0, 111))
    assert np.array_equal(again["fi"][1]["validation"], res["fi"][1]["validation"])


def test_zero_holdout_and_disjoint_windows(small_run):
    cfg = config_from_dict({"n_accounts": 1000, "n_steps": 112, "master_seed": 5, "n_fis": 3,
                            "windows": {"train": [0, 55], "test": [56, 111],
                                        "validation_fraction": 0.0, "m_subwindows": 2}})
    res = build_train_test(small_run.log, small_run.accounts, small_run.events, cfg,
                           RandomStream(2), fis=[])
    g = res["global"]
    assert len(g["validation"]) == 0 and res["fi"] == {}
    shared = np.intersect1d(g["train"]["account_id"], g["test"]["account_id"])
    tr = g["train"].set_index("account_id").loc[shared, feature_columns(2)]
    te = g["test"].set_index("account_id").loc[shared, feature_columns(2)]
    assert (tr.to_numpy() != te.to_numpy()).any(axis=1).all()
