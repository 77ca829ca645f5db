import networkx as nx
import numpy as np
import pandas as pd
import pytest

from amlgen.records import SINK, SOURCE, TRANSFER, CASH, TransactionLog
from amlgen.stats import (balance_traces, classify_pattern, dot_subgraph, edge_list,
                          fit_power_law, graph_stats, homophily, node_labels, pattern_census)


def make_log(rows, n_accounts=None):
    """rows: (step, src, dst, amount_cents, is_sar, pattern[, channel])."""
    cols = list(zip(*[r if len(r) == 7 else (*r, TRANSFER) for r in rows]))
    n = n_accounts or max(max(r[1], r[2]) for r in rows) + 1
    return TransactionLog(step=np.array(cols[0], np.int32), src=np.array(cols[1], np.int32),
                          dst=np.array(cols[2], np.int32), amount=np.array(cols[3], np.int64),
                          channel=np.array(cols[6], np.int8), is_sar=np.array(cols[4], np.int8),
                          pattern=np.array(cols[5], np.int32), fi=np.zeros(n, np.int32))


def test_three_cycle():
    log = make_log([(0, 0, 1, 100, 1, 7), (1, 1, 2, 90, 1, 7), (2, 2, 0, 80, 1, 7)])
    s = graph_stats(log)
    assert s["pattern_census"] == {"cycle": 1}
    assert s["homophily_alert"] == 1.0
    assert np.isnan(s["homophily_normal"])
    assert s["benign_edge_share"] == 0.0 and s["alert_account_share"] == 1.0


def test_star_homophily():
    # 1 -> {2, 3}; only 1 -> 2 is SAR, so 1 and 2 are suspicious and 3 is not
    log = make_log([(0, 1, 2, 100, 1, 0), (0, 1, 3, 100, 0, -1)], n_accounts=4)
    labels = node_labels(log)
    assert labels.to_dict() == {1: 1, 2: 1, 3: 0}
    h = homophily(edge_list(log), labels)
    # node 1: {2 same, 3 diff} -> 0.5; node 2: {1 same} -> 1
    assert h[1] == pytest.approx(0.75)
    assert h[0] == 0.0


def test_homophily_against_networkx():
    rng = np.random.default_rng(0)
    rows = [(0, int(a), int(b), 100, int(s), -1)
            for a, b, s in zip(rng.integers(0, 60, 300), rng.integers(0, 60, 300),
                               rng.random(300) < 0.1) if a != b]
    log = make_log(rows, 60)
    labels = node_labels(log)
    G = nx.Graph()
    G.add_edges_from((r[1], r[2]) for r in rows)
    expect = {}
    for c in (0, 1):
        shares = [np.mean([labels[u] == labels[v] for u in G[v]])
                  for v in G if labels[v] == c]
        expect[c] = float(np.mean(shares))
    got = homophily(edge_list(log), labels)
    assert got[0] == pytest.approx(expect[0]) and got[1] == pytest.approx(expect[1])


@pytest.mark.parametrize("edges,kind", [
    ({(0, 1)}, "direct"),
    ({(0, 1), (1, 0)}, "mutual"),
    ({(0, 1), (0, 2), (0, 3)}, "fan_out"),
    ({(1, 0), (2, 0), (3, 0)}, "fan_in"),
    ({(0, 1), (1, 2)}, "forward"),
    ({(0, 1), (1, 2), (2, 3), (3, 0)}, "cycle"),
    ({(0, 1), (0, 2), (1, 3), (2, 3)}, "scatter_gather"),
    ({(1, 0), (2, 0), (0, 3), (0, 4)}, "gather_scatter"),
    ({(0, 2), (0, 3), (1, 2), (1, 3), (2, 4), (3, 4)}, "stacked_bipartite"),
    ({(0, 1), (1, 0), (1, 2)}, "other"),
])
def test_classify(edges, kind):
    assert classify_pattern(edges) == kind


def test_census_ignores_normal_and_groups_by_component_without_id():
    log = make_log([(0, 0, 1, 5, 1, -1), (1, 1, 2, 5, 1, -1),
                    (0, 5, 6, 5, 1, -1), (0, 7, 8, 5, 0, 3)])
    assert pattern_census(log) == {"forward": 1, "direct": 1}


def test_dot_round_trip():
    pydot = pytest.importorskip("pydot")
    log = make_log([(0, 0, 1, 100, 1, 0), (0, 1, 2, 100, 0, -1), (1, 0, 1, 50, 1, 0),
                    (1, 3, 4, 10, 0, -1)])
    text = dot_subgraph(log, max_nodes=4)
    (g,) = pydot.graph_from_dot_data(text)
    assert {n.get_name() for n in g.get_nodes()} == {"n0", "n1", "n2", "n3"}
    edges = {(e.get_source(), e.get_destination()): e for e in g.get_edges()}
    assert set(edges) == {("n0", "n1"), ("n1", "n2")}
    assert edges[("n0", "n1")].get("color").strip('"') == "red"
    assert edges[("n0", "n1")].get("weight") == "2"


def test_empty_log_raises():
    with pytest.raises(ValueError):
        graph_stats(TransactionLog.empty())


def test_counts_by_channel_and_endpoint():
    log = make_log([(0, SOURCE, 0, 500, 0, -1), (1, 0, SINK, 100, 0, -1),
                    (2, 0, 1, 100, 0, -1, CASH), (3, 0, 1, 200, 0, -1)], n_accounts=2)
    s = graph_stats(log)
    assert (s["n_source_records"], s["n_sink_records"], s["n_cash_records"]) == (1, 1, 1)
    assert s["n_a2a_records"] == 1 and s["mean_amount"] == 2.0


def test_balance_traces():
    log = make_log([(0, SOURCE, 0, 500, 0, -1), (1, 0, 1, 200, 0, -1),
                    (2, 1, SINK, 50, 0, -1)], n_accounts=2)
    tr = balance_traces(log, [0, 1])
    assert tr["0"].tolist() == [5.0, 3.0, 3.0] and tr["1"].tolist() == [0.0, 2.0, 1.5]


def test_power_law_fit_recovers_exponent():
    from scipy.stats import zipf
    deg = zipf.rvs(2.6, size=200_000, random_state=np.random.default_rng(1))
    fit = fit_power_law(deg)
    assert fit["loc"] == 1 and fit["n_points"] >= 5
    assert fit["gamma"] + 1 == pytest.approx(2.6, abs=0.2)
    with pytest.raises(ValueError):
        fit_power_law(np.zeros(5))
