"""Time-stepped agent simulation producing the transaction log.

Per step the order is: salaries (paydays), alert-pattern transfers (with
placement at each pattern's first step), normal traffic, spending and finally
lifecycle events.  All money is integer cents.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import kernels
from .blueprint import (BlueprintGraph, fit_normal_patterns, generate_blueprint,
                        inject_alert_patterns, prune_unused)
from .config import AmountModel, GaussianModel, SimulationConfig
from .distributions import truncnorm_cents
from .records import CASH, SINK, SOURCE, TRANSFER, TransactionLog
from .rng import RandomStream
from .typologies import PatternInstance

N_CANDIDATES = 8  # bounded retries for the balance cap before clamping

PHONE_CHANGE = 0
BANK_CHANGE = 1
EVENT_NAMES = ("phone_change", "bank_change")


class ScheduleError(ValueError):
    """The requested timing scheme cannot satisfy the pattern's ordering."""


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def assign_demographics(n: int, rows, rng: np.random.Generator):
    """Ages by inverse CDF over groups (uniform within a group) and salary params.

    Returns ``(age, mu, sigma)`` arrays.
    """
    shares = np.array([r.share for r in rows])
    if abs(shares.sum() - 1.0) > 1e-9:
        raise ValueError("population shares must sum to 1")
    params = [r.params() for r in rows]
    cum = np.cumsum(shares)
    u = rng.random(n)
    g = np.minimum(np.searchsorted(cum, u, side="right"), len(rows) - 1)
    lo = np.array([r.age_min for r in rows])[g]
    span = np.array([r.age_max - r.age_min + 1 for r in rows])[g]
    age = lo + np.minimum((rng.random(n) * span).astype(np.int64), span - 1)
    mu = np.array([p[0] for p in params])[g]
    sigma = np.array([p[1] for p in params])[g]
    return age.astype(np.int64), mu, sigma


def monthly_salary_cents(mu, sigma, z, min_cents: int,
                         max_cents: int | None = None) -> np.ndarray:
    """Annual lognormal draw divided by 12, in cents, clipped to ``[min_cents, max_cents]``."""
    annual = np.exp(mu + sigma * z)
    c = np.maximum(np.floor(annual * 100.0 / 12.0 + 0.5), min_cents)
    if max_cents is not None:
        c = np.minimum(c, max_cents)
    return c.astype(np.int64)


def sample_kyc(attrs, is_alert: np.ndarray, rng: np.random.Generator) -> dict:
    """One category per attribute from the class-conditional distribution."""
    out = {}
    for a in attrs:
        codes = np.empty(len(is_alert), dtype=np.int64)
        u = rng.random(len(is_alert))
        for flag, dist in ((False, a.normal), (True, a.alert)):
            m = is_alert == flag
            cum = np.cumsum(dist)
            codes[m] = np.minimum(np.searchsorted(cum, u[m], side="right"), len(dist) - 1)
        out[a.name] = np.asarray(a.categories, dtype=object)[codes]
    return out


def spend_probability(d, scale: float):
    """Logistic spending propensity of the balance deviation ``d``."""
    x = np.clip(np.asarray(d, dtype=float) / scale, -700.0, 700.0)
    return 1.0 / (1.0 + np.exp(-x))


def sample_amount(model: AmountModel | GaussianModel, cap_cents, u,
                  lo_cents: int | None = None, hi_cents: int | None = None):
    """Truncated Gaussian amounts in cents limited by a balance cap.

    ``u`` has shape ``(n, k)``: candidate ``j`` is the draw on the static
    interval ``[min_amount, x_max]``; the first candidate not above the cap
    wins and otherwise the last is clamped.  Entries whose cap is below the
    minimum return -1 (no feasible amount).
    """
    if lo_cents is None:
        lo_cents = model.min_cents
    if hi_cents is None:
        hi_cents = model.max_cents
    u = np.atleast_2d(np.asarray(u, dtype=float))
    cap = np.minimum(np.asarray(cap_cents, dtype=np.int64).reshape(-1), hi_cents)
    n = u.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    todo = np.flatnonzero(cap >= lo_cents)
    for j in range(u.shape[1]):
        if len(todo) == 0:
            break
        cand = truncnorm_cents(u[todo, j], model.mean, model.std, lo_cents, hi_cents)
        ok = cand <= cap[todo]
        out[todo[ok]] = cand[ok]
        if j == u.shape[1] - 1:
            out[todo[~ok]] = cap[todo[~ok]]
        todo = todo[~ok]
    return out


def split_forward(received_cents: int, keep_fraction: float, weights) -> np.ndarray:
    """Share of ``received`` forwarded on each out-edge, proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    total = (1.0 - keep_fraction) * received_cents
    if w.sum() <= 0:
        w = np.ones_like(w)
    return np.floor(total * w / w.sum() + 1e-9).astype(np.int64)


def gauss_gap(rng: np.random.Generator, model: GaussianModel, size) -> np.ndarray:
    x = rng.normal(model.mean, model.std, size) if model.std > 0 else np.full(size, model.mean)
    return np.maximum(1, np.floor(x + 0.5)).astype(np.int64)


def schedule_pattern(inst: PatternInstance, t_s: int, t_e: int, scheme: str,
                     rng: np.random.Generator) -> np.ndarray:
    """Assign a step in ``[t_s, t_e]`` to each template edge.

    Edges of rank ``r`` all finish before any edge of rank ``r + 1`` starts.
    """
    if t_e < t_s:
        raise ScheduleError("window end before start")
    ranks = inst.ranks
    m = len(ranks)
    n_ranks = int(ranks.max()) + 1 if m else 0
    length = t_e - t_s + 1
    if scheme == "simultaneous":
        if n_ranks > 1:
            raise ScheduleError(f"{inst.kind} needs {n_ranks} ordered steps; simultaneous is infeasible")
        return np.full(m, t_s, dtype=np.int64)
    if n_ranks > length:
        raise ScheduleError(f"{inst.kind} needs {n_ranks} distinct steps, window has {length}")
    if scheme == "fixed_interval":
        if n_ranks > 1:
            slot = np.array([t_s + (r * (length - 1)) // (n_ranks - 1) for r in range(n_ranks)])
            return slot[ranks].astype(np.int64)
        if m == 1:
            return np.array([t_s], dtype=np.int64)
        return np.array([t_s + (j * (length - 1)) // (m - 1) for j in range(m)], dtype=np.int64)
    if scheme not in ("random_interval", "unordered"):
        raise ScheduleError(f"unknown scheme {scheme!r}")
    if n_ranks <= 1:
        return rng.integers(t_s, t_e + 1, size=m).astype(np.int64)
    starts = np.sort(rng.choice(length, size=n_ranks, replace=False)) + t_s
    ends = np.append(starts[1:] - 1, t_e)
    lo = starts[ranks]
    hi = ends[ranks]
    return (lo + (rng.random(m) * (hi - lo + 1)).astype(np.int64)).astype(np.int64)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


@dataclass
class SimulationResult:
    log: TransactionLog
    accounts: pd.DataFrame
    events: pd.DataFrame
    patterns: pd.DataFrame
    graph: BlueprintGraph
    normal_instances: list
    alert_instances: list
    bank: np.ndarray
    cash: np.ndarray
    counts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _normal_units(instances, graph: BlueprintGraph):
    """Edge lists of the recurring normal relationships.

    Returns CSR arrays for random-firing units plus the periodic units.
    Mutual replies and forward second hops carry ``hop = 1`` (next step).
    """
    ptr, es, ed, hop = [0], [], [], []
    per_src, per_dst = [], []
    for inst in instances:
        e = inst.edges
        if inst.kind == "periodic":
            per_src.append(int(e[0, 0]))
            per_dst.append(int(e[0, 1]))
            continue
        es.append(e[:, 0])
        ed.append(e[:, 1])
        hop.append(inst.ranks if inst.kind in ("mutual", "forward") else np.zeros(len(e), np.int64))
        ptr.append(ptr[-1] + len(e))
    spare = np.flatnonzero(~graph.consumed & ~graph.alert)
    for e in spare.tolist():
        es.append(graph.src[e:e + 1])
        ed.append(graph.dst[e:e + 1])
        hop.append(np.zeros(1, np.int64))
        ptr.append(ptr[-1] + 1)
    cat = lambda xs: np.concatenate(xs).astype(np.int64) if xs else np.zeros(0, np.int64)
    return (np.asarray(ptr, dtype=np.int64), cat(es), cat(ed), cat(hop),
            np.asarray(per_src, dtype=np.int64), np.asarray(per_dst, dtype=np.int64))


def _expand(ptr: np.ndarray, units: np.ndarray) -> np.ndarray:
    counts = ptr[units + 1] - ptr[units]
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(ptr[units] - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return np.arange(total, dtype=np.int64) + offs


class _AlertPlan:
    """Scheduled alert transfers plus the laundering bookkeeping."""

    def __init__(self, cfg: SimulationConfig, instances, stream: RandomStream):
        self.cfg = cfg
        self.instances = instances
        m = cfg.alert_tx
        self.by_step: dict[int, list] = {}
        self.start: dict[int, list] = {}
        self.weights = []
        self.cash_mode = []
        self.received = []
        for i, inst in enumerate(instances):
            rng = stream.derive("pattern", inst.pattern_id).rng()
            dur = min(inst.duration, cfg.n_steps)
            t_s = int(rng.integers(0, cfg.n_steps - dur + 1))
            inst.steps = schedule_pattern(inst, t_s, t_s + dur - 1, inst.scheme, rng)
            w = truncnorm_cents(rng.random(len(inst.edges)), m.mean, m.std,
                                m.min_cents, m.max_cents)
            self.weights.append(w)
            self.cash_mode.append(bool(rng.random() < cfg.cash_placement_fraction))
            self.received.append({})
            t0 = int(inst.steps.min())
            self.start.setdefault(t0, []).append(i)
            order = np.lexsort((np.arange(len(inst.edges)), inst.ranks, inst.steps))
            for j in order.tolist():
                self.by_step.setdefault(int(inst.steps[j]), []).append((i, j))

    def run_step(self, t: int, bank: np.ndarray, cash: np.ndarray, out: list):
        cfg = self.cfg
        keep = cfg.keep_fraction
        lo, hi = cfg.alert_tx.min_cents, cfg.alert_tx.max_cents
        for i in self.start.get(t, []):
            inst = self.instances[i]
            w = self.weights[i]
            recv = self.received[i]
            for s in inst.sources().tolist():
                outs = inst.edges[:, 0] == s
                x0 = min(int(math.ceil(w[outs].sum() / (1.0 - keep))), hi)
                recv[s] = recv.get(s, 0) + x0
                if self.cash_mode[i]:
                    cash[s] += x0
                    out.append((t, SOURCE, s, x0, CASH, 1, inst.pattern_id))
                else:
                    bank[s] += x0
                    out.append((t, SOURCE, s, x0, TRANSFER, 1, inst.pattern_id))
        for i, j in self.by_step.get(t, []):
            inst = self.instances[i]
            u, v = int(inst.edges[j, 0]), int(inst.edges[j, 1])
            recv = self.received[i]
            outs = np.flatnonzero(inst.edges[:, 0] == u)
            w = self.weights[i][outs]
            share = split_forward(recv.get(u, 0), keep, w)[int(np.searchsorted(outs, j))]
            cap = min(int(bank[u]), hi)
            if cap < lo:
                continue
            amount = int(min(max(share, lo), cap))
            bank[u] -= amount
            bank[v] += amount
            recv[v] = recv.get(v, 0) + amount
            out.append((t, u, v, amount, TRANSFER, 1, inst.pattern_id))


def simulate(cfg: SimulationConfig, graph: BlueprintGraph, normal_instances,
             alert_instances, stream: RandomStream, debug: bool = False) -> SimulationResult:
    """Run the step loop on a pruned graph and its pattern instances."""
    t_begin = time.perf_counter()
    n = graph.n
    T = cfg.n_steps
    is_alert = graph.ml_count > 0

    # static account attributes
    rng = stream.derive("fi").rng()
    if cfg.fi_weights is None:
        fi = rng.integers(0, cfg.n_fis, size=n).astype(np.int32)
    else:
        p = np.asarray(cfg.fi_weights) / np.sum(cfg.fi_weights)
        fi = rng.choice(cfg.n_fis, size=n, p=p).astype(np.int32)
    age, mu, sigma = assign_demographics(n, cfg.salary_tables, stream.derive("demographics").rng())
    kyc = sample_kyc(cfg.kyc_attributes, is_alert, stream.derive("kyc").rng())
    rng = stream.derive("open").rng()
    open_step = -rng.integers(0, cfg.max_account_age + 1, size=n).astype(np.int64)

    # lifecycle renewal processes, fast-forwarded to the horizon start
    lc = {}
    for code, name in enumerate(EVENT_NAMES):
        rng = stream.derive("lifecycle", code).rng()
        models = (cfg.lifecycle["normal"][name], cfg.lifecycle["alert"][name])
        nxt = open_step.copy()
        last = open_step.copy()
        pending = np.ones(n, dtype=bool)
        while pending.any():
            idx = np.flatnonzero(pending)
            gap = np.empty(len(idx), dtype=np.int64)
            for flag in (0, 1):
                m = is_alert[idx] == bool(flag)
                gap[m] = gauss_gap(rng, models[flag], int(m.sum()))
            last[idx] = nxt[idx]
            nxt[idx] += gap
            pending[idx] = nxt[idx] < 0
        lc[code] = (nxt, models, rng)
        if code == BANK_CHANGE:
            # relationship with the current bank started at the last pre-horizon change
            open_step = last
    open_eff = open_step.copy()

    # normal traffic units
    ptr, e_src, e_dst, e_hop, per_src, per_dst = _normal_units(normal_instances, graph)
    n_units = len(ptr) - 1
    total_edges = len(e_src) + len(per_src)
    q = min(1.0, cfg.mean_tx_per_month * n / (28.0 * total_edges)) if total_edges else 0.0
    period = max(1, int(round(1.0 / q))) if q > 0 else 0
    per_offset = stream.derive("periodic").rng().integers(0, max(period, 1), size=len(per_src))

    plan = _AlertPlan(cfg, alert_instances, stream.derive("alert"))

    bank = np.zeros(n, dtype=np.int64)
    cash = np.zeros(n, dtype=np.int64)
    ring = np.zeros((cfg.spend_window, n), dtype=np.int64)
    ring_sum = np.zeros(n, dtype=np.int64)
    ring_count = 0
    spend_model = (cfg.normal_spending, cfg.alert_spending)
    spend_hi = (cfg.normal_tx.max_cents, cfg.alert_tx.max_cents)
    lo_c = cfg.normal_tx.min_cents
    accounts = np.arange(n, dtype=np.int64)

    chunks: list[dict] = []
    ev_step, ev_acct, ev_kind = [], [], []
    pend_src = np.zeros(0, np.int64)
    pend_dst = np.zeros(0, np.int64)

    def emit(step, src, dst, amount, channel, sar, pattern):
        chunks.append({"step": np.full(len(src), step, dtype=np.int32), "src": src, "dst": dst,
                       "amount": amount, "channel": np.full(len(src), channel, dtype=np.int8),
                       "is_sar": np.full(len(src), sar, dtype=np.int8),
                       "pattern": np.full(len(src), pattern, dtype=np.int32)
                       if np.isscalar(pattern) else pattern})

    for t in range(T):
        # salaries
        if t % cfg.payday_period == 0 and n:
            z = stream.derive("salary", t).rng().standard_normal(n)
            pay = monthly_salary_cents(mu, sigma, z, lo_c, cfg.normal_tx.max_cents)
            bank += pay
            emit(t, np.full(n, SOURCE, np.int64), accounts, pay, TRANSFER, 0, -1)

        # alert patterns
        rows: list = []
        plan.run_step(t, bank, cash, rows)
        if rows:
            a = np.asarray(rows, dtype=np.int64)
            chunks.append({"step": a[:, 0].astype(np.int32), "src": a[:, 1], "dst": a[:, 2],
                           "amount": a[:, 3], "channel": a[:, 4].astype(np.int8),
                           "is_sar": a[:, 5].astype(np.int8), "pattern": a[:, 6].astype(np.int32)})

        # normal traffic
        rng = stream.derive("normal", t).rng()
        fired = np.flatnonzero(rng.random(n_units) < q) if n_units else np.zeros(0, np.int64)
        eidx = _expand(ptr, fired)
        now = e_hop[eidx] == 0
        due = np.flatnonzero((t - per_offset) % period == 0) if period and len(per_src) else \
            np.zeros(0, np.int64)
        src = np.concatenate([pend_src, e_src[eidx[now]], per_src[due]])
        dst = np.concatenate([pend_dst, e_dst[eidx[now]], per_dst[due]])
        pend_src, pend_dst = e_src[eidx[~now]], e_dst[eidx[~now]]
        if len(src):
            u = rng.random((len(src), N_CANDIDATES))
            amt = kernels.settle_sampled(src, dst, u, bank, cfg.normal_tx.mean,
                                         cfg.normal_tx.std, cfg.normal_tx.min_cents,
                                         cfg.normal_tx.max_cents)
            ok = amt > 0
            emit(t, src[ok], dst[ok], amt[ok], TRANSFER, 0, -1)

        # spending against the trailing balance window
        if ring_count > 0 and n:
            rng = stream.derive("spend", t).rng()
            u_go, u_chan = rng.random(n), rng.random(n)
            u_amt = rng.random((n, N_CANDIDATES))
            avg = ring_sum / ring_count
            p_spend = spend_probability((bank - avg) / 100.0, cfg.spend_scale)
            go = u_go < p_spend
            use_cash = go & is_alert & (cash > 0) & (u_chan >= cfg.p_spend_bank)
            use_bank = go & ~use_cash
            for flag in (0, 1):
                cls = is_alert == bool(flag)
                for mask, bal, channel in ((use_bank & cls, bank, TRANSFER),
                                           (use_cash & cls, cash, CASH)):
                    idx = np.flatnonzero(mask)
                    if len(idx) == 0:
                        continue
                    amt = sample_amount(spend_model[flag], bal[idx], u_amt[idx], lo_c,
                                        spend_hi[flag])
                    ok = amt > 0
                    idx, amt = idx[ok], amt[ok]
                    bal[idx] -= amt
                    chunks.append(_spend_chunk(t, idx, amt, channel))

        # lifecycle
        for code in (PHONE_CHANGE, BANK_CHANGE):
            nxt, models, lrng = lc[code]
            hit = np.flatnonzero(nxt == t)
            if len(hit):
                ev_step.append(np.full(len(hit), t, dtype=np.int64))
                ev_acct.append(hit)
                ev_kind.append(np.full(len(hit), code, dtype=np.int64))
                for flag in (0, 1):
                    m = is_alert[hit] == bool(flag)
                    nxt[hit[m]] += gauss_gap(lrng, models[flag], int(m.sum()))
                if code == BANK_CHANGE:
                    open_eff[hit] = t

        # trailing window of end-of-step balances
        slot = t % cfg.spend_window
        if ring_count == cfg.spend_window:
            ring_sum -= ring[slot]
        else:
            ring_count += 1
        ring[slot] = bank
        ring_sum += bank
        if debug and ((bank < 0).any() or (cash < 0).any()):
            raise AssertionError(f"negative balance at step {t}")

    log = _sorted_log(chunks, fi)
    events = pd.DataFrame({
        "step": np.concatenate(ev_step) if ev_step else np.zeros(0, np.int64),
        "account_id": np.concatenate(ev_acct) if ev_acct else np.zeros(0, np.int64),
        "event": np.asarray(EVENT_NAMES, dtype=object)[np.concatenate(ev_kind)]
        if ev_kind else np.zeros(0, dtype=object),
    })
    acc = pd.DataFrame({"account_id": accounts, "fi": fi, "age": age,
                        "is_alert": is_alert.astype(np.int8), "open_step": open_step})
    for name, vals in kyc.items():
        acc[f"kyc_{name}"] = vals
    patterns = patterns_frame(normal_instances, alert_instances)
    res = SimulationResult(log, acc, events, patterns, graph, normal_instances,
                           alert_instances, bank, cash)
    res.timings["simulate"] = time.perf_counter() - t_begin
    return res


def _spend_chunk(t, idx, amt, channel):
    k = len(idx)
    return {"step": np.full(k, t, np.int32), "src": idx, "dst": np.full(k, SINK, np.int64),
            "amount": amt, "channel": np.full(k, channel, np.int8),
            "is_sar": np.zeros(k, np.int8), "pattern": np.full(k, -1, np.int32)}


def _sorted_log(chunks, fi) -> TransactionLog:
    # chunks are produced in step order already; a stable sort guards the contract
    log = TransactionLog.from_chunks(chunks, fi)
    if len(log) and (np.diff(log.step) < 0).any():
        order = np.argsort(log.step, kind="stable")
        log = log.select(order)
    return log


def patterns_frame(normal_instances, alert_instances) -> pd.DataFrame:
    rows = []
    for inst in list(normal_instances) + list(alert_instances):
        steps = inst.steps
        rows.append({
            "pattern_id": inst.pattern_id, "kind": inst.kind, "is_alert": int(inst.is_alert),
            "members": " ".join(map(str, inst.members.tolist())),
            "edges": " ".join(f"{u}>{v}" for u, v in inst.edges.tolist()),
            "t_start": int(steps.min()) if steps is not None and len(steps) else -1,
            "t_end": int(steps.max()) if steps is not None and len(steps) else -1,
        })
    return pd.DataFrame(rows, columns=["pattern_id", "kind", "is_alert", "members", "edges",
                                       "t_start", "t_end"])


def run_pipeline(cfg: SimulationConfig, debug: bool = False) -> SimulationResult:
    """Blueprint, pattern fitting, alert injection, pruning and simulation."""
    root = RandomStream(cfg.master_seed)
    timings = {}
    t0 = time.perf_counter()
    if cfg.n_accounts == 0:
        g = BlueprintGraph(0, np.zeros(0, np.int64), np.zeros(0, np.int64),
                           np.zeros(0, np.int64), np.zeros(0, np.int64))
        res = simulate(cfg, g, [], [], root.derive("simulation"), debug)
        res.counts = {"accounts": 0}
        return res
    bp = generate_blueprint(cfg.degree, cfg.n_accounts, root.derive("blueprint"))
    timings["blueprint"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    normal, placed, discarded = fit_normal_patterns(bp, cfg.normal_typologies,
                                                    root.derive("normal_fit"))
    timings["fit_normal"] = time.perf_counter() - t1
    t1 = time.perf_counter()
    alerts = inject_alert_patterns(bp, cfg.alert_typologies, cfg.reuse_p,
                                   root.derive("alert_inject"), start_id=len(normal))
    timings["inject_alert"] = time.perf_counter() - t1
    blueprint_edges = bp.n_edges
    g, normal, alerts = prune_unused(bp, normal, alerts)
    res = simulate(cfg, g, normal, alerts, root.derive("simulation"), debug)
    timings.update(res.timings)
    res.timings = timings
    res.counts = {
        "blueprint_accounts": cfg.n_accounts, "blueprint_edges": blueprint_edges,
        "dropped_edges": bp.dropped_edges, "accounts": g.n, "edges": g.n_edges,
        "alert_accounts": int((g.ml_count > 0).sum()),
        "normal_placed": placed, "normal_discarded": discarded,
        "alert_patterns": len(alerts), "transactions": len(res.log),
        "sar_transactions": int(res.log.is_sar.sum()),
    }
    return res
