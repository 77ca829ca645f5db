"""Windowed per-account features and train/test table construction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import kernels
from .records import SINK, TRANSFER, TransactionLog
from .rng import RandomStream

FEATURE_NAMES = (
    "sum_spending", "mean_spending", "median_spending", "std_spending",
    "max_spending", "min_spending", "count_spending",
    "sum", "mean", "median", "std", "max", "min",
    "count_in", "count_out", "count_unique_in", "count_unique_out",
    "count_days_in_bank", "count_phone_changes",
)
INTEGER_FEATURES = frozenset({"count_spending", "count_in", "count_out", "count_unique_in",
                              "count_unique_out", "count_days_in_bank",
                              "count_phone_changes"})


def feature_columns(m: int) -> list[str]:
    return [f"{name}_w{k}" for k in range(m) for name in FEATURE_NAMES]


def subwindows(window: tuple[int, int], n_steps: int, m: int) -> list[tuple[int, int]]:
    """Inclusive step ranges; the last one absorbs any remainder."""
    a, b = window
    b = min(b, n_steps - 1)
    length = b - a + 1
    if length < 1:
        raise ValueError(f"window {window} is empty within horizon {n_steps}")
    if m < 1 or m > length:
        raise ValueError(f"cannot split a {length}-step window into {m} sub-windows")
    base = length // m
    out = [(a + k * base, a + (k + 1) * base - 1) for k in range(m)]
    out[-1] = (out[-1][0], b)
    return out


@dataclass
class WindowedGraph:
    """Bank-visible records of one window and the accounts they touch."""
    window: tuple[int, int]
    records: TransactionLog
    nodes: np.ndarray
    labels: np.ndarray
    edges: pd.DataFrame
    scope: int | None = None


def aggregate(log: TransactionLog, window: tuple[int, int], scope: int | None = None,
              n_steps: int | None = None) -> WindowedGraph:
    """Restrict the log to a window (and optionally one FI).

    Only bank-visible (TRANSFER) records are retained.  For an FI scope a
    record is kept when either endpoint belongs to that FI, and the node set
    is limited to the FI's own accounts.
    """
    a, b = window
    if b < a:
        raise ValueError("empty window")
    if n_steps is not None:
        b = min(b, n_steps - 1)
    mask = (log.step >= a) & (log.step <= b) & (log.channel == TRANSFER)
    if scope is not None:
        mask &= (log.src_fi == scope) | (log.dst_fi == scope)
    rec = log.select(mask)
    ends = np.concatenate([rec.src[rec.src >= 0], rec.dst[rec.dst >= 0]])
    nodes = np.unique(ends).astype(np.int64)
    if scope is not None:
        nodes = nodes[log.fi[nodes] == scope]
    sar = rec.is_sar == 1
    flagged = np.unique(np.concatenate([rec.src[sar], rec.dst[sar]]))
    labels = np.isin(nodes, flagged).astype(np.int8)
    internal = (rec.src >= 0) & (rec.dst >= 0)
    if internal.any():
        e = pd.DataFrame({"src": rec.src[internal], "dst": rec.dst[internal]})
        edges = e.groupby(["src", "dst"], sort=True).size().rename("count").reset_index()
    else:
        edges = pd.DataFrame({"src": [], "dst": [], "count": []}, dtype=np.int64)
    return WindowedGraph((a, b), rec, nodes, labels, edges, scope)


def _stats_block(acct, sub, values, n_nodes: int, m: int) -> np.ndarray:
    """``(n_nodes, m, 7)`` group statistics of ``values`` keyed by (account, sub-window)."""
    key = acct * m + sub
    order = np.lexsort((values, key))
    key = key[order]
    vals = values[order].astype(float)
    starts = np.searchsorted(key, np.arange(n_nodes * m + 1))
    return kernels.group_stats(starts.astype(np.int64), vals).reshape(n_nodes, m, 7)


def compute_features(wg: WindowedGraph, m: int, accounts: pd.DataFrame,
                     events: pd.DataFrame | None, n_steps: int) -> pd.DataFrame:
    """Feature table (one row per node of ``wg``), account-id ordered."""
    subs = subwindows(wg.window, n_steps, m)
    nodes = wg.nodes
    n = len(nodes)
    cols = feature_columns(m)
    base = pd.DataFrame({"account_id": nodes,
                         "fi": accounts["fi"].to_numpy()[nodes] if n else np.zeros(0, np.int64),
                         "label": wg.labels})
    if n == 0:
        return pd.concat([base, pd.DataFrame(np.zeros((0, len(cols))), columns=cols)], axis=1)
    n_total = len(accounts)
    local = np.full(n_total, -1, dtype=np.int64)
    local[nodes] = np.arange(n)
    rec = wg.records
    bounds = np.array([s for s, _ in subs] + [subs[-1][1] + 1])
    sub = np.searchsorted(bounds, rec.step, side="right") - 1
    amount = rec.amount / 100.0
    feats = np.zeros((n, m, len(FEATURE_NAMES)))

    # spending: account -> sink
    sp = (rec.dst == SINK) & (rec.src >= 0)
    sp &= local[np.maximum(rec.src, 0)] >= 0
    st = _stats_block(local[rec.src[sp]], sub[sp], amount[sp], n, m)
    feats[:, :, 0:7] = st

    # account-to-account amounts, both directions
    a2a = (rec.src >= 0) & (rec.dst >= 0)
    s_loc = np.where(a2a, local[np.maximum(rec.src, 0)], -1)
    d_loc = np.where(a2a, local[np.maximum(rec.dst, 0)], -1)
    out_m = s_loc >= 0
    in_m = d_loc >= 0
    acct = np.concatenate([s_loc[out_m], d_loc[in_m]])
    sw = np.concatenate([sub[out_m], sub[in_m]])
    vals = np.concatenate([amount[out_m], amount[in_m]])
    st = _stats_block(acct, sw, vals, n, m)
    feats[:, :, 7:13] = st[:, :, 0:6]
    feats[:, :, 13] = np.bincount(d_loc[in_m] * m + sub[in_m], minlength=n * m).reshape(n, m)
    feats[:, :, 14] = np.bincount(s_loc[out_m] * m + sub[out_m], minlength=n * m).reshape(n, m)
    uin = np.unique(np.stack([d_loc[in_m] * m + sub[in_m], rec.src[in_m]]), axis=1)[0] \
        if in_m.any() else np.zeros(0, np.int64)
    uout = np.unique(np.stack([s_loc[out_m] * m + sub[out_m], rec.dst[out_m]]), axis=1)[0] \
        if out_m.any() else np.zeros(0, np.int64)
    feats[:, :, 15] = np.bincount(uin, minlength=n * m).reshape(n, m)
    feats[:, :, 16] = np.bincount(uout, minlength=n * m).reshape(n, m)

    # account age and phone changes
    open0 = accounts["open_step"].to_numpy()[nodes]
    ev = events if events is not None else pd.DataFrame({"step": [], "account_id": [], "event": []})
    ev_step = ev["step"].to_numpy(dtype=np.int64)
    ev_acc = ev["account_id"].to_numpy(dtype=np.int64)
    ev_kind = ev["event"].to_numpy()
    bank_ev = ev_kind == "bank_change"
    phone_ev = ev_kind == "phone_change"
    for k, (s, e) in enumerate(subs):
        open_eff = open0.copy()
        sel = bank_ev & (ev_step <= e)
        if sel.any():
            latest = pd.Series(ev_step[sel]).groupby(ev_acc[sel]).max()
            idx = local[latest.index.to_numpy()]
            ok = idx >= 0
            open_eff[idx[ok]] = latest.to_numpy()[ok]
        feats[:, k, 17] = (e + 1) - open_eff
        sel = phone_ev & (ev_step >= s) & (ev_step <= e)
        li = local[ev_acc[sel]]
        feats[:, k, 18] = np.bincount(li[li >= 0], minlength=n)

    table = pd.DataFrame(feats.reshape(n, m * len(FEATURE_NAMES)), columns=cols)
    for c in cols:
        if c.rsplit("_w", 1)[0] in INTEGER_FEATURES:
            table[c] = table[c].astype(np.int64)
    return pd.concat([base, table], axis=1)


def build_train_test(log: TransactionLog, accounts: pd.DataFrame, events: pd.DataFrame | None,
                     cfg, stream: RandomStream, fis=None, train=None, test=None,
                     m: int | None = None) -> dict:
    """Global and per-FI train/test tables plus the validation holdout.

    Returns ``{"global": {...}, "fi": {f: {...}}}``.  Each entry holds
    ``train`` and ``test`` tables, ``validation`` (account ids held out of
    train) and the aggregated ``edges_train`` / ``edges_test``.  Windows
    and ``m`` default to the configuration.
    """
    w = cfg.windows
    train = tuple(w.train) if train is None else tuple(train)
    test = tuple(w.test) if test is None else tuple(test)
    m = w.m_subwindows if m is None else m

    def build(scope):
        wg_tr = aggregate(log, train, scope, cfg.n_steps)
        tr = compute_features(wg_tr, m, accounts, events, cfg.n_steps)
        if test == train:
            wg_te, te = wg_tr, tr.copy()
        else:
            wg_te = aggregate(log, test, scope, cfg.n_steps)
            te = compute_features(wg_te, m, accounts, events, cfg.n_steps)
        rng = stream.derive("validation", -1 if scope is None else scope).rng()
        k = int(round(w.validation_fraction * len(tr)))
        val = np.sort(rng.choice(tr["account_id"].to_numpy(), size=k, replace=False)) \
            if k else np.zeros(0, np.int64)
        return {"train": tr, "test": te, "validation": val,
                "edges_train": wg_tr.edges, "edges_test": wg_te.edges}

    out = {"global": build(None)}
    if fis is None:
        fis = range(cfg.n_fis)
    out["fi"] = {f: build(f) for f in fis}
    return out
