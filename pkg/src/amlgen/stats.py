"""Dataset statistics computed from a transaction log alone (no RNG)."""
from __future__ import annotations

from collections import Counter

import numpy as np
import pandas as pd
from scipy.optimize import curve_fit

from .records import SINK, SOURCE, TRANSFER, TransactionLog


def visible_a2a(log: TransactionLog) -> TransactionLog:
    """Bank-visible account-to-account transfers."""
    return log.select((log.channel == TRANSFER) & (log.src >= 0) & (log.dst >= 0))


def node_labels(log: TransactionLog) -> pd.Series:
    """Account -> 1 if it touches any SAR record, else 0 (over accounts in the log)."""
    ends = np.concatenate([log.src, log.dst])
    sar = np.concatenate([log.is_sar, log.is_sar]).astype(bool)
    keep = ends >= 0
    ends, sar = ends[keep], sar[keep]
    ids = np.unique(ends)
    flagged = np.unique(ends[sar])
    return pd.Series(np.isin(ids, flagged).astype(np.int8), index=ids)


def edge_list(log: TransactionLog) -> pd.DataFrame:
    """Distinct directed account pairs with multiplicity and SAR flag."""
    a = visible_a2a(log)
    df = pd.DataFrame({"src": a.src, "dst": a.dst, "is_sar": a.is_sar})
    if df.empty:
        return pd.DataFrame({"src": [], "dst": [], "count": [], "is_sar": []}, dtype=np.int64)
    g = df.groupby(["src", "dst"], sort=True)["is_sar"]
    return pd.DataFrame({"count": g.size(), "is_sar": g.max()}).reset_index()


def degrees(edges: pd.DataFrame, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = pd.Index(nodes)
    d_in = np.bincount(idx.get_indexer(edges["dst"].to_numpy()), minlength=len(nodes))
    d_out = np.bincount(idx.get_indexer(edges["src"].to_numpy()), minlength=len(nodes))
    return d_in, d_out


def homophily(edges: pd.DataFrame, labels: pd.Series) -> dict[int, float]:
    """Per class, the node-averaged share of distinct neighbours with the same label.

    Direction is ignored; nodes without neighbours are skipped.
    """
    if len(edges) == 0:
        return {0: float("nan"), 1: float("nan")}
    s = edges["src"].to_numpy()
    d = edges["dst"].to_numpy()
    pairs = np.unique(np.stack([np.concatenate([s, d]), np.concatenate([d, s])], axis=1), axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lab_a = labels.reindex(pairs[:, 0]).fillna(0).to_numpy()
    lab_b = labels.reindex(pairs[:, 1]).fillna(0).to_numpy()
    df = pd.DataFrame({"node": pairs[:, 0], "same": lab_a == lab_b, "label": lab_a})
    per_node = df.groupby("node").agg(share=("same", "mean"), label=("label", "first"))
    out = {}
    for c in (0, 1):
        v = per_node.loc[per_node["label"] == c, "share"]
        out[c] = float(v.mean()) if len(v) else float("nan")
    return out


def classify_pattern(edges: set[tuple[int, int]]) -> str:
    """Structural kind of one pattern's distinct directed edge set."""
    nodes = sorted({u for e in edges for u in e})
    n, m = len(nodes), len(edges)
    din = Counter(v for _, v in edges)
    dout = Counter(u for u, _ in edges)
    if n == 2:
        return "mutual" if m == 2 else "direct"
    if m == n and all(din[v] == 1 and dout[v] == 1 for v in nodes):
        # a single cycle iff following successors visits every node
        succ = dict(edges)
        v, seen = nodes[0], set()
        while v not in seen:
            seen.add(v)
            v = succ[v]
        if len(seen) == n:
            return "cycle"
    if m == n - 1:
        hubs_out = [v for v in nodes if dout[v] == n - 1]
        hubs_in = [v for v in nodes if din[v] == n - 1]
        if hubs_out:
            return "fan_out"
        if hubs_in:
            return "fan_in"
        if n == 3 and all(din[v] <= 1 and dout[v] <= 1 for v in nodes):
            return "forward"
        mids = [v for v in nodes if din[v] > 0 and dout[v] > 0]
        if len(mids) == 1 and din[mids[0]] + dout[mids[0]] == n - 1:
            return "gather_scatter"
    sources = [v for v in nodes if din[v] == 0]
    sinks = [v for v in nodes if dout[v] == 0]
    if len(sources) == 1 and len(sinks) == 1 and m == 2 * (n - 2):
        mids = [v for v in nodes if din[v] == 1 and dout[v] == 1]
        if len(mids) == n - 2:
            return "scatter_gather"
    # layered DAG with complete bipartite links between consecutive layers
    layer = {v: 0 for v in sources}
    frontier = list(sources)
    while frontier:
        nxt = []
        for u, v in sorted(edges):
            if u in frontier and v not in layer:
                layer[v] = layer[u] + 1
                nxt.append(v)
        frontier = nxt
    if len(layer) == n and len(sources) > 0:
        groups = Counter(layer.values())
        expected = sum(groups[i] * groups[i + 1] for i in range(len(groups) - 1))
        if len(groups) >= 3 and m == expected and all(layer[v] == layer[u] + 1 for u, v in edges):
            return "stacked_bipartite"
    return "other"


def pattern_census(log: TransactionLog) -> dict[str, int]:
    """Counts of SAR patterns per structural kind.

    Records are grouped by pattern id; SAR records without one are grouped by
    weakly connected component.
    """
    sar = log.select((log.is_sar == 1) & (log.src >= 0) & (log.dst >= 0))
    groups: dict = {}
    no_id = sar.pattern < 0
    for pid, u, v in zip(sar.pattern[~no_id].tolist(), sar.src[~no_id].tolist(),
                         sar.dst[~no_id].tolist()):
        groups.setdefault(("p", pid), set()).add((u, v))
    if no_id.any():
        parent: dict = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        pairs = list(zip(sar.src[no_id].tolist(), sar.dst[no_id].tolist()))
        for u, v in pairs:
            parent[find(u)] = find(v)
        for u, v in pairs:
            groups.setdefault(("c", find(u)), set()).add((u, v))
    census = Counter(classify_pattern(e) for e in groups.values())
    return dict(sorted(census.items()))


def _powerlaw_log_pmf(k, log_c, alpha, scale, loc):
    return log_c - alpha * np.log((k - loc) / scale + 1.0)


def fit_power_law(deg: np.ndarray) -> dict:
    """Least squares on the log of a log-binned PMF of degrees ``k >= loc``.

    ``loc`` is the smallest positive degree.  Bins double in width from
    ``loc``; each bin contributes its mean per-degree mass at the geometric
    centre.  The fitted tail exponent of the PMF is ``gamma + 1``.
    """
    deg = np.asarray(deg)
    deg = deg[deg > 0]
    if len(deg) == 0:
        raise ValueError("no positive degrees to fit")
    loc = int(deg.min())
    out = {"loc": loc, "gamma": float("nan"), "scale": float("nan"), "n_points": 0}
    hi = int(deg.max())
    edges = [loc]
    while edges[-1] <= hi:
        edges.append(loc + 2 * (edges[-1] - loc) + 1)
    edges = np.asarray(edges)
    counts, _ = np.histogram(deg, bins=edges)
    width = np.diff(edges)
    ok = counts > 0
    k = np.sqrt(edges[:-1] * (edges[1:] - 1.0))[ok]
    y = np.log(counts[ok] / (width[ok] * len(deg)))
    out["n_points"] = int(ok.sum())
    if ok.sum() < 3:
        return out
    f = lambda k, c, a, s: _powerlaw_log_pmf(k, c, a, s, loc)  # noqa: E731
    try:
        p, _ = curve_fit(f, k, y, p0=(y[0], 3.0, 1.0),
                         bounds=([-np.inf, 1.0, 1e-3], [np.inf, 20.0, 1e3]), maxfev=20000)
        out.update(gamma=float(p[1] - 1.0), scale=float(p[2]))
    except RuntimeError:
        pass
    return out


def degree_histogram(deg: np.ndarray) -> pd.DataFrame:
    k, c = np.unique(np.asarray(deg), return_counts=True)
    return pd.DataFrame({"degree": k, "count": c, "pmf": c / max(c.sum(), 1)})


def amount_histograms(log: TransactionLog, bins: int = 50) -> pd.DataFrame:
    """Histogram of visible account-to-account amounts (currency units) per class."""
    a = visible_a2a(log)
    amt = a.amount / 100.0
    if len(amt) == 0:
        return pd.DataFrame({"class": [], "left": [], "right": [], "count": []})
    edges = np.linspace(amt.min(), amt.max() + 1e-9, bins + 1)
    rows = []
    for c in (0, 1):
        h, _ = np.histogram(amt[a.is_sar == c], bins=edges)
        rows.append(pd.DataFrame({"class": c, "left": edges[:-1], "right": edges[1:], "count": h}))
    return pd.concat(rows, ignore_index=True)


def balance_traces(log: TransactionLog, accounts, n_steps: int | None = None) -> pd.DataFrame:
    """End-of-step bank-visible balances for the given accounts (starting from zero)."""
    accounts = np.asarray(accounts, dtype=np.int64)
    T = int(log.step.max()) + 1 if n_steps is None and len(log) else (n_steps or 0)
    vis = log.select(log.channel == TRANSFER)
    pos = pd.Index(accounts)
    out = np.zeros((T, len(accounts)), dtype=np.int64)
    for ends, sign in ((vis.dst, 1), (vis.src, -1)):
        j = pos.get_indexer(ends)
        ok = j >= 0
        np.add.at(out, (vis.step[ok], j[ok]), sign * vis.amount[ok])
    out = np.cumsum(out, axis=0)
    df = pd.DataFrame(out / 100.0, columns=[str(a) for a in accounts])
    df.insert(0, "step", np.arange(T))
    return df


def graph_stats(log: TransactionLog) -> dict:
    """Summary statistics used by the stats report and data-informed calibration.

    ``benign_edge_share`` counts multigraph edges (visible account-to-account
    transfers); ``benign_pair_share`` counts distinct directed pairs.
    """
    if len(log) == 0:
        raise ValueError("empty transaction log")
    edges = edge_list(log)
    labels = node_labels(log)
    nodes = labels.index.to_numpy()
    d_in, d_out = degrees(edges, nodes)
    a = visible_a2a(log)
    amt = a.amount / 100.0
    hom = homophily(edges, labels)
    sar_edges = int(edges["is_sar"].sum()) if len(edges) else 0
    return {
        "n_records": int(len(log)),
        "n_accounts": int(len(nodes)),
        "n_alert_accounts": int(labels.sum()),
        "alert_account_share": float(labels.mean()) if len(labels) else 0.0,
        "n_edges": int(len(edges)),
        "n_sar_edges": sar_edges,
        "benign_edge_share": float(1 - a.is_sar.mean()) if len(a) else float("nan"),
        "benign_pair_share": float(1 - sar_edges / len(edges)) if len(edges) else float("nan"),
        "n_a2a_records": int(len(a)),
        "n_sar_records": int(log.is_sar.sum()),
        "n_cash_records": int((log.channel != TRANSFER).sum()),
        "n_source_records": int((log.src == SOURCE).sum()),
        "n_sink_records": int((log.dst == SINK).sum()),
        "mean_in_degree": float(d_in.mean()) if len(nodes) else 0.0,
        "mean_out_degree": float(d_out.mean()) if len(nodes) else 0.0,
        "in_degree_hist": {int(k): int(c) for k, c in zip(*np.unique(d_in, return_counts=True))},
        "out_degree_hist": {int(k): int(c) for k, c in zip(*np.unique(d_out, return_counts=True))},
        "mean_amount": float(amt.mean()) if len(amt) else 0.0,
        "mean_amount_normal": float(amt[a.is_sar == 0].mean()) if (a.is_sar == 0).any() else 0.0,
        "mean_amount_alert": float(amt[a.is_sar == 1].mean()) if (a.is_sar == 1).any() else 0.0,
        "homophily_normal": hom[0],
        "homophily_alert": hom[1],
        "in_degree_fit": fit_power_law(d_in),
        "out_degree_fit": fit_power_law(d_out),
        "pattern_census": pattern_census(log),
    }


def dot_subgraph(log: TransactionLog, max_nodes: int) -> str:
    """DOT text for the subgraph induced by the ``max_nodes`` lowest account ids.

    SAR edges are drawn red and suspicious accounts filled.
    """
    edges = edge_list(log)
    labels = node_labels(log)
    nodes = labels.index.to_numpy()[:max_nodes]
    keep = np.isin(edges["src"], nodes) & np.isin(edges["dst"], nodes)
    sub = edges[keep]
    lines = ["digraph transactions {"]
    for v in nodes.tolist():
        attr = ' [style=filled, fillcolor="#f4a6a6"]' if labels[v] else ""
        lines.append(f"  n{v}{attr};")
    for u, v, c, s in sub[["src", "dst", "count", "is_sar"]].itertuples(index=False):
        color = "red" if s else "gray40"
        lines.append(f'  n{u} -> n{v} [weight={c}, color="{color}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
