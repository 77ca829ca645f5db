"""Blueprint network: degree sampling, wiring, pattern fitting and pruning."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import DegreeParams, TypologySpec
from .distributions import sample_degrees
from .rng import RandomStream, UniformPool
from .typologies import PatternInstance, instantiate, template


@dataclass
class BlueprintGraph:
    """Directed simple graph with per-node capacities and reuse counters.

    ``consumed`` marks edges taken by a normal pattern; ``alert`` marks edges
    that carry at least one alert pattern.
    """
    n: int
    src: np.ndarray
    dst: np.ndarray
    in_target: np.ndarray
    out_target: np.ndarray
    consumed: np.ndarray = None
    alert: np.ndarray = None
    ml_count: np.ndarray = None
    dropped_edges: int = 0
    node_ids: np.ndarray = None
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        m = len(self.src)
        if self.consumed is None:
            self.consumed = np.zeros(m, dtype=bool)
        if self.alert is None:
            self.alert = np.zeros(m, dtype=bool)
        if self.ml_count is None:
            self.ml_count = np.zeros(self.n, dtype=np.int64)
        if self.node_ids is None:
            self.node_ids = np.arange(self.n, dtype=np.int64)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n)

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n)

    def residual_in(self) -> np.ndarray:
        return np.bincount(self.dst[~self.consumed], minlength=self.n)

    def residual_out(self) -> np.ndarray:
        return np.bincount(self.src[~self.consumed], minlength=self.n)

    def edge_id(self, u: int, v: int) -> int:
        """Index of edge ``u -> v`` or -1."""
        if self._index is None:
            keys = (self.src * self.n + self.dst).tolist()
            self._index = dict(zip(keys, range(len(keys))))
        return self._index.get(u * self.n + v, -1)

    def add_edges(self, us, vs) -> np.ndarray:
        """Append edges (caller guarantees they are new); return their ids."""
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        start = len(self.src)
        self.src = np.concatenate([self.src, us])
        self.dst = np.concatenate([self.dst, vs])
        self.consumed = np.concatenate([self.consumed, np.zeros(len(us), dtype=bool)])
        self.alert = np.concatenate([self.alert, np.zeros(len(us), dtype=bool)])
        ids = np.arange(start, start + len(us))
        if self._index is not None:
            for k, i in zip((us * self.n + vs).tolist(), ids.tolist()):
                self._index[k] = i
        return ids


# ---------------------------------------------------------------------------
# degrees and wiring
# ---------------------------------------------------------------------------


def balance_degrees(in_deg: np.ndarray, out_deg: np.ndarray, loc: int,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Decrement random nodes of the larger side (never below ``loc``)."""
    in_deg = in_deg.copy()
    out_deg = out_deg.copy()
    diff = int(in_deg.sum() - out_deg.sum())
    big = in_deg if diff > 0 else out_deg
    excess = abs(diff)
    while excess > 0:
        eligible = np.flatnonzero(big > loc)
        take = min(excess, len(eligible))
        if take == 0:
            break
        chosen = rng.choice(eligible, size=take, replace=False)
        big[chosen] -= 1
        excess -= take
    return in_deg, out_deg


def sample_degree_sequence(params: DegreeParams, n: int, stream: RandomStream):
    """Independent in/out degree draws, balanced so both sums agree."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ind = sample_degrees(stream.derive("in").rng(), n, params.loc, params.scale, params.gamma)
    outd = sample_degrees(stream.derive("out").rng(), n, params.loc, params.scale, params.gamma)
    return balance_degrees(ind, outd, params.loc, stream.derive("balance").rng())


def _bad_pairs(src: np.ndarray, dst: np.ndarray, n: int) -> np.ndarray:
    bad = src == dst
    keys = src * n + dst
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    dup = np.zeros(len(keys), dtype=bool)
    dup[order[1:]] = sk[1:] == sk[:-1]
    return bad | dup


def realize_blueprint(in_deg, out_deg, stream: RandomStream,
                      max_rounds: int = 100) -> BlueprintGraph:
    """Configuration-model stub matching without self-loops or multi-edges.

    Bad pairs are released together with as many random good pairs and
    re-matched, for at most ``max_rounds`` rounds.  Whatever is still bad
    afterwards is dropped and reported in ``dropped_edges``.
    """
    in_deg = np.asarray(in_deg, dtype=np.int64)
    out_deg = np.asarray(out_deg, dtype=np.int64)
    if in_deg.sum() != out_deg.sum():
        raise ValueError("in/out degree sums differ")
    n = len(in_deg)
    rng = stream.rng()
    src = np.repeat(np.arange(n, dtype=np.int64), out_deg)
    dst = np.repeat(np.arange(n, dtype=np.int64), in_deg)
    rng.shuffle(dst)
    bad = _bad_pairs(src, dst, n)
    for _ in range(max_rounds):
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        good = np.flatnonzero(~bad)
        extra = rng.choice(good, size=min(n_bad, len(good)), replace=False)
        release = np.concatenate([np.flatnonzero(bad), extra])
        dst[release] = rng.permutation(dst[release])
        bad = _bad_pairs(src, dst, n)
    keep = ~bad
    return BlueprintGraph(n, src[keep], dst[keep], in_deg, out_deg,
                          dropped_edges=int(bad.sum()))


def generate_blueprint(params: DegreeParams, n: int, stream: RandomStream) -> BlueprintGraph:
    ind, outd = sample_degree_sequence(params, n, stream.derive("degrees"))
    return realize_blueprint(ind, outd, stream.derive("wiring"))


# ---------------------------------------------------------------------------
# normal-pattern fitting
# ---------------------------------------------------------------------------


class _NodeSet:
    """Set of node ids with O(1) insert, remove and uniform sampling."""

    __slots__ = ("items", "pos")

    def __init__(self, n: int):
        self.items: list[int] = []
        self.pos = [-1] * n

    def add(self, v: int):
        if self.pos[v] < 0:
            self.pos[v] = len(self.items)
            self.items.append(v)

    def discard(self, v: int):
        i = self.pos[v]
        if i >= 0:
            last = self.items.pop()
            if last != v:
                self.items[i] = last
                self.pos[last] = i
            self.pos[v] = -1

    def __len__(self):
        return len(self.items)

    def __contains__(self, v):
        return self.pos[v] >= 0

    def sample(self, pool: UniformPool) -> int:
        return self.items[pool.randint(len(self.items))]


class _Residual:
    """Unconsumed edges per node plus capacity buckets for anchor sampling."""

    def __init__(self, bp: BlueprintGraph, max_need: int):
        n = bp.n
        self.src = bp.src.tolist()
        self.dst = bp.dst.tolist()
        self.consumed = bp.consumed
        self.out_e: list[list[int]] = [[] for _ in range(n)]
        self.in_e: list[list[int]] = [[] for _ in range(n)]
        self.opos = [0] * len(self.src)
        self.ipos = [0] * len(self.src)
        for e, (u, v) in enumerate(zip(self.src, self.dst)):
            if self.consumed[e]:
                continue
            self.opos[e] = len(self.out_e[u])
            self.out_e[u].append(e)
            self.ipos[e] = len(self.in_e[v])
            self.in_e[v].append(e)
        self.r = max(1, max_need)
        self.out_ge = [None] + [_NodeSet(n) for _ in range(self.r)]
        self.in_ge = [None] + [_NodeSet(n) for _ in range(self.r)]
        self.both = _NodeSet(n)
        for v in range(n):
            do, di = len(self.out_e[v]), len(self.in_e[v])
            for t in range(1, min(do, self.r) + 1):
                self.out_ge[t].add(v)
            for t in range(1, min(di, self.r) + 1):
                self.in_ge[t].add(v)
            if do and di:
                self.both.add(v)

    def consume(self, e: int):
        u, v = self.src[e], self.dst[e]
        self.consumed[e] = True
        lst = self.out_e[u]
        i = self.opos[e]
        last = lst.pop()
        if last != e:
            lst[i] = last
            self.opos[last] = i
        lst = self.in_e[v]
        i = self.ipos[e]
        last = lst.pop()
        if last != e:
            lst[i] = last
            self.ipos[last] = i
        do = len(self.out_e[u]) + 1
        if do <= self.r:
            self.out_ge[do].discard(u)
        di = len(self.in_e[v]) + 1
        if di <= self.r:
            self.in_ge[di].discard(v)
        if not self.out_e[u]:
            self.both.discard(u)
        if not self.in_e[v]:
            self.both.discard(v)


def _pick_distinct(lst: list[int], k: int, pool: UniformPool) -> list[int]:
    """``k`` distinct entries of ``lst`` by a partial Fisher-Yates shuffle."""
    tmp = list(lst)
    n = len(tmp)
    for i in range(k):
        j = i + pool.randint(n - i)
        tmp[i], tmp[j] = tmp[j], tmp[i]
    return tmp[:k]


def fit_normal_patterns(bp: BlueprintGraph, specs, stream: RandomStream,
                        attempts: int = 50, start_id: int = 0):
    """Place normal patterns on unconsumed blueprint edges (edge-disjoint).

    Returns ``(instances, placed, discarded)`` where the last two map kind to
    counts.  Requests of all kinds are interleaved in random order.
    """
    rng = stream.rng()
    pool = UniformPool(stream.derive("uniforms").rng())
    specs = [s for s in specs if s.count > 0]
    for s in specs:
        if s.is_alert:
            raise ValueError("fit_normal_patterns takes normal specs only")
    placed = {s.kind: 0 for s in specs}
    discarded = {s.kind: 0 for s in specs}
    if not specs:
        return [], placed, discarded
    max_need = max(s.size_max - 1 for s in specs)
    res = _Residual(bp, max_need)
    requests = np.repeat(np.arange(len(specs)), [s.count for s in specs])
    requests = rng.permutation(requests)
    sizes = {}
    for i, s in enumerate(specs):
        mask = requests == i
        sizes[i] = rng.integers(s.size_min, s.size_max + 1, size=int(mask.sum())).tolist()
    size_iter = {i: iter(v) for i, v in sizes.items()}
    mutual_pairs = None
    instances: list[PatternInstance] = []
    pid = start_id
    for si in requests.tolist():
        spec = specs[si]
        kind = spec.kind
        size = next(size_iter[si])
        members = None
        used: list[int] = []
        if kind in ("direct", "periodic"):
            if len(res.out_ge[1]):
                u = res.out_ge[1].sample(pool)
                e = res.out_e[u][pool.randint(len(res.out_e[u]))]
                members, used = [u, res.dst[e]], [e]
        elif kind == "fan_out":
            if len(res.out_ge[size - 1]):
                u = res.out_ge[size - 1].sample(pool)
                used = _pick_distinct(res.out_e[u], size - 1, pool)
                members = [u] + [res.dst[e] for e in used]
        elif kind == "fan_in":
            if len(res.in_ge[size - 1]):
                v = res.in_ge[size - 1].sample(pool)
                used = _pick_distinct(res.in_e[v], size - 1, pool)
                members = [v] + [res.src[e] for e in used]
        elif kind == "forward":
            for _ in range(attempts):
                if not len(res.both):
                    break
                b = res.both.sample(pool)
                ins, outs = res.in_e[b], res.out_e[b]
                ei = ins[pool.randint(len(ins))]
                eo = outs[pool.randint(len(outs))]
                a, c = res.src[ei], res.dst[eo]
                if a == c:
                    alt = [x for x in outs if res.dst[x] != a]
                    if alt:
                        eo = alt[pool.randint(len(alt))]
                    else:
                        alt = [x for x in ins if res.src[x] != c]
                        if not alt:
                            continue
                        ei = alt[pool.randint(len(alt))]
                    a, c = res.src[ei], res.dst[eo]
                members, used = [a, b, c], [ei, eo]
                break
        elif kind == "mutual":
            if mutual_pairs is None:
                mutual_pairs = _reciprocal_pairs(bp)
            while mutual_pairs:
                j = pool.randint(len(mutual_pairs))
                e1, e2 = mutual_pairs[j]
                mutual_pairs[j] = mutual_pairs[-1]
                mutual_pairs.pop()
                if not (res.consumed[e1] or res.consumed[e2]):
                    members, used = [res.src[e1], res.dst[e1]], [e1, e2]
                    break
        if members is None:
            discarded[kind] += 1
            continue
        for e in used:
            res.consume(e)
        inst = instantiate(pid, kind, False, members, spec.layers, spec.scheme)
        instances.append(inst)
        placed[kind] += 1
        pid += 1
    return instances, placed, discarded


def _reciprocal_pairs(bp: BlueprintGraph) -> list[tuple[int, int]]:
    keys = bp.src * bp.n + bp.dst
    rev = bp.dst * bp.n + bp.src
    order = np.argsort(keys)
    pos = np.searchsorted(keys[order], rev)
    pos = np.minimum(pos, len(keys) - 1)
    hit = (keys[order][pos] == rev) & (bp.src < bp.dst) & ~bp.consumed
    e1 = np.flatnonzero(hit)
    e2 = order[pos[hit]]
    ok = ~bp.consumed[e2]
    return list(zip(e1[ok].tolist(), e2[ok].tolist()))


# ---------------------------------------------------------------------------
# alert patterns
# ---------------------------------------------------------------------------


class AlertMemberSelector:
    """Draw alert members with logarithmic reuse of earlier participants.

    Each draw picks the unused pool with probability ``c = 1/E[n]`` and
    otherwise escalates through the participation groups: having reached
    group ``k`` it stops there with probability ``s_k / sum_{j>=k} s_j``
    where ``s_k = c * P[n > k]`` under ``Log(p)``.  In the long run this
    makes per-account participation counts ``Log(p)`` distributed.  Empty
    target groups fall back to the nearest lower non-empty group, then to the
    pool.  Selected accounts have their counter incremented immediately.
    """

    def __init__(self, bp: BlueprintGraph, reuse_p: float, stream: RandomStream):
        if not 0.0 < reuse_p < 1.0:
            raise ValueError("reuse_p must lie in (0, 1)")
        self.bp = bp
        self.p = reuse_p
        self.pool = UniformPool(stream.rng())
        n = bp.n
        self.unused = _NodeSet(n)
        self.groups: list[_NodeSet] = [None]
        counts = bp.ml_count.tolist()
        for v in range(n):
            c = counts[v]
            if c == 0:
                self.unused.add(v)
            else:
                self._group(c).add(v)
        mean = reuse_p / ((1.0 - reuse_p) * -math.log1p(-reuse_p))
        self.c = 1.0 / mean
        # cumulative selection probabilities: pool, then group 1, 2, ...
        lp = -1.0 / math.log1p(-reuse_p)
        cum = [self.c]
        surv = 1.0
        k = 1
        while cum[-1] < 1.0 - 1e-15 and k < 10000:
            surv -= lp * reuse_p ** k / k
            cum.append(cum[-1] + self.c * max(surv, 0.0))
            k += 1
        self.cum = np.asarray(cum)

    def _group(self, k: int) -> _NodeSet:
        while len(self.groups) <= k:
            self.groups.append(_NodeSet(self.bp.n))
        return self.groups[k]

    def _level(self) -> int:
        u = self.pool.random()
        return int(np.searchsorted(self.cum, u, side="right"))

    def select(self, k: int) -> np.ndarray:
        n_avail = self.bp.n
        if k > n_avail:
            raise ValueError(f"cannot select {k} distinct members from {n_avail} accounts")
        chosen: list[int] = []
        taken = set()
        for _ in range(k):
            v = self._draw(taken)
            chosen.append(v)
            taken.add(v)
        counts = self.bp.ml_count
        for v in chosen:
            c = int(counts[v])
            if c == 0:
                self.unused.discard(v)
            else:
                self.groups[c].discard(v)
            counts[v] = c + 1
            self._group(c + 1).add(v)
        return np.asarray(chosen, dtype=np.int64)

    def _from_set(self, s: _NodeSet, taken) -> int:
        if len(s) == 0:
            return -1
        for _ in range(8):
            v = s.sample(self.pool)
            if v not in taken:
                return v
        rest = [v for v in s.items if v not in taken]
        return rest[self.pool.randint(len(rest))] if rest else -1

    def _draw(self, taken) -> int:
        level = self._level()
        for g in range(min(level, len(self.groups) - 1), 0, -1):
            v = self._from_set(self.groups[g], taken)
            if v >= 0:
                return v
        v = self._from_set(self.unused, taken)
        if v >= 0:
            return v
        # pool exhausted: any participant not yet in this instance
        for g in range(len(self.groups) - 1, 0, -1):
            v = self._from_set(self.groups[g], taken)
            if v >= 0:
                return v
        raise ValueError("alert member pool exhausted")


def select_alert_members(bp: BlueprintGraph, k: int, reuse_p: float,
                         stream: RandomStream) -> np.ndarray:
    """One-shot selection of ``k`` distinct members (counters updated)."""
    return AlertMemberSelector(bp, reuse_p, stream).select(k)


def inject_alert_patterns(bp: BlueprintGraph, specs, reuse_p: float, stream: RandomStream,
                          start_id: int = 0) -> list[PatternInstance]:
    """Place every requested alert pattern, adding missing edges."""
    selector = AlertMemberSelector(bp, reuse_p, stream.derive("members"))
    rng = stream.derive("sizes").rng()
    instances = []
    pid = start_id
    for spec in specs:
        if not spec.is_alert:
            raise ValueError("inject_alert_patterns takes alert specs only")
        sizes = rng.integers(spec.size_min, spec.size_max + 1, size=spec.count)
        for size in sizes.tolist():
            members = selector.select(size)
            inst = instantiate(pid, spec.kind, True, members, spec.layers, spec.scheme,
                               spec.duration)
            new_u, new_v = [], []
            seen = set()
            for u, v in inst.edges.tolist():
                e = bp.edge_id(u, v)
                if e < 0 and (u, v) not in seen:
                    new_u.append(u)
                    new_v.append(v)
                    seen.add((u, v))
                elif e >= 0:
                    bp.alert[e] = True
            if new_u:
                ids = bp.add_edges(new_u, new_v)
                bp.alert[ids] = True
            instances.append(inst)
            pid += 1
    return instances


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------


def prune_unused(bp: BlueprintGraph, normal_instances, alert_instances):
    """Drop accounts outside every pattern and relabel the survivors.

    Returns ``(graph, normal_instances, alert_instances)`` on compact ids;
    ``graph.node_ids`` maps new ids back to blueprint ids.
    """
    member = np.zeros(bp.n, dtype=bool)
    for inst in list(normal_instances) + list(alert_instances):
        member[inst.members] = True
    keep = np.flatnonzero(member)
    remap = np.full(bp.n, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    ekeep = member[bp.src] & member[bp.dst]
    g = BlueprintGraph(
        len(keep), remap[bp.src[ekeep]], remap[bp.dst[ekeep]],
        bp.in_target[keep], bp.out_target[keep],
        consumed=bp.consumed[ekeep].copy(), alert=bp.alert[ekeep].copy(),
        ml_count=bp.ml_count[keep].copy(), dropped_edges=bp.dropped_edges,
        node_ids=bp.node_ids[keep].copy(),
    )

    def move(insts):
        out = []
        for inst in insts:
            out.append(PatternInstance(inst.pattern_id, inst.kind, inst.is_alert,
                                       remap[inst.members], remap[inst.edges], inst.ranks,
                                       inst.scheme, inst.steps, inst.duration))
        return out

    return g, move(normal_instances), move(alert_instances)
