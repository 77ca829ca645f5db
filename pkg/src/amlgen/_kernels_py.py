"""Pure numpy/Python versions of the compiled kernels (same results)."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .distributions import truncnorm_cents


def truncnorm_cents_scalar(u, mean, std, lo_c, hi_c):
    return int(truncnorm_cents(np.array([u]), mean, std, lo_c, hi_c)[0])


def settle_sampled(src, dst, u, balance, mean, std, lo_c, hi_c):
    """Sequential balance-capped transfers; returns amounts (0 = skipped).

    See the compiled twin for the candidate/clamp rule.  All candidates are
    drawn up front in one vectorised call; the loop only applies balances.
    """
    n = len(src)
    out = np.zeros(n, dtype=np.int64)
    if n == 0:
        return out
    u = np.asarray(u, dtype=float)
    cand = truncnorm_cents(u.ravel(), mean, std, lo_c, hi_c).reshape(u.shape).tolist()
    bal = balance
    src_l = np.asarray(src).tolist()
    dst_l = np.asarray(dst).tolist()
    amt = [0] * n
    for i in range(n):
        s = src_l[i]
        cap = int(bal[s])
        if cap > hi_c:
            cap = hi_c
        if cap < lo_c:
            continue
        a = cap
        for c in cand[i]:
            if c <= cap:
                a = c
                break
        bal[s] -= a
        bal[dst_l[i]] += a
        amt[i] = a
    out[:] = amt
    return out


def group_stats(starts, values):
    """Per-group sum, mean, median, population std, max, min, count."""
    starts = np.asarray(starts, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    ng = len(starts) - 1
    out = np.zeros((ng, 7))
    if ng == 0:
        return out
    k = np.diff(starts)
    nz = k > 0
    if not nz.any():
        return out
    a = starts[:-1][nz]
    kk = k[nz]
    # sequential per-group sums, same summation order as the compiled loop
    s = np.zeros(len(a))
    for off in range(int(kk.max())):
        m = off < kk
        s[m] = s[m] + values[a[m] + off]
    mean = s / kk
    v = np.zeros(len(a))
    for off in range(int(kk.max())):
        m = off < kk
        d = values[a[m] + off] - mean[m]
        v[m] = v[m] + d * d
    half = kk // 2
    odd = kk % 2 == 1
    med = np.where(odd, values[a + half], 0.5 * (values[a + np.maximum(half - 1, 0)] + values[a + half]))
    res = np.column_stack([s, mean, med, np.sqrt(v / kk), values[a + kk - 1], values[a],
                           kk.astype(float)])
    out[nz] = res
    return out


def best_split(x, y, min_leaf):
    """Best Gini split of one sorted feature column (see compiled twin)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n = len(x)
    if n < 2:
        return 1e300, 0.0, -1
    c1 = np.cumsum(y)[:-1].astype(float)
    nl = np.arange(1, n, dtype=float)
    c0 = nl - c1
    t1 = float(y.sum())
    nr = n - nl
    r1 = t1 - c1
    r0 = nr - r1
    ok = (x[:-1] != x[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not ok.any():
        return 1e300, 0.0, -1
    score = c0 * c1 / nl + r0 * r1 / nr
    score = np.where(ok, score, np.inf)
    i = int(np.argmin(score))
    return float(score[i]), float(0.5 * (x[i] + x[i + 1])), i + 1


def format_tx_csv(first_id, step, src, dst, amount, channel, is_sar, pattern, src_fi, dst_fi):
    """Transaction rows as CSV bytes (no header); pattern -1 is written empty."""
    n = len(step)
    if n == 0:
        return b""
    pat = pd.array(np.asarray(pattern, dtype=np.int64), dtype="Int64")
    pat[np.asarray(pattern) < 0] = pd.NA
    df = pd.DataFrame({
        "tx_id": np.arange(first_id, first_id + n, dtype=np.int64),
        "step": step, "src": src, "dst": dst, "amount_cents": amount,
        "channel": np.where(np.asarray(channel) == 1, "CASH", "TRANSFER"),
        "is_sar": is_sar, "pattern_id": pat, "src_fi": src_fi, "dst_fi": dst_fi,
    })
    return df.to_csv(index=False, header=False, lineterminator="\n").encode()
