"""Random search with successive-halving fidelity promotion."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..config import get_path
from ..rng import RandomStream
from .pareto import ParetoArchive, nondomination_rank

KINDS = ("continuous", "integer", "categorical")


class CalibrationError(RuntimeError):
    """Every trial was degenerate."""


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str = "continuous"
    low: float | None = None
    high: float | None = None
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.categories:
                raise ValueError(f"{self.name}: categorical dimension needs categories")
        elif self.low is None or self.high is None or self.low > self.high:
            raise ValueError(f"{self.name}: bounds must satisfy low <= high")

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.categories[int(rng.integers(len(self.categories)))]
        if self.kind == "integer":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return float(rng.uniform(self.low, self.high))


@dataclass
class SearchSpace:
    dimensions: list

    @classmethod
    def from_document(cls, doc: dict) -> "SearchSpace":
        dims = []
        for d in doc["dimensions"]:
            dims.append(Dimension(d["name"], d.get("kind", "continuous"), d.get("low"),
                                  d.get("high"), tuple(d.get("categories", ()))))
        return cls(dims)

    def to_document(self) -> dict:
        return {"dimensions": [{"name": d.name, "kind": d.kind, "low": d.low, "high": d.high,
                                "categories": list(d.categories)} for d in self.dimensions]}

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def validate(self, config_doc: dict) -> None:
        """Every dimension must name an existing numeric or categorical config entry."""
        for d in self.dimensions:
            if get_path(config_doc, d.name) is None:
                raise KeyError(f"search dimension {d.name!r} is not a configuration path")

    def sample(self, rng: np.random.Generator) -> dict:
        return {d.name: d.sample(rng) for d in self.dimensions}


def default_space() -> SearchSpace:
    """Laundering amount, spending, lifecycle, reuse and cash-spending parameters.

    Each box spans half to one and a half times the matching normal-class
    value of the Swedish preset.
    """
    c = "continuous"
    return SearchSpace([
        Dimension("alert_tx.mean", c, 318.5, 955.5),
        Dimension("alert_tx.std", c, 150.0, 450.0),
        Dimension("alert_spending.mean", c, 250.0, 750.0),
        Dimension("alert_spending.std", c, 50.0, 150.0),
        Dimension("lifecycle.alert.phone_change.mean", c, 730.0, 2190.0),
        Dimension("lifecycle.alert.phone_change.std", c, 182.5, 547.5),
        Dimension("lifecycle.alert.bank_change.mean", c, 730.0, 2190.0),
        Dimension("lifecycle.alert.bank_change.std", c, 182.5, 547.5),
        Dimension("reuse_p", c, 0.05, 0.5),
        Dimension("p_spend_bank", c, 0.5, 1.0),
    ])


@dataclass
class TrialRecord:
    trial_id: int
    params: dict
    objectives: tuple
    fidelity: float
    seed: int
    ms: float
    degenerate: bool = False
    info: dict = field(default_factory=dict)


@dataclass
class SearchResult:
    archive: ParetoArchive
    best: TrialRecord
    trials: list


def _run(objective, trial_id, params, fidelity, seed):
    t0 = time.perf_counter()
    ev = objective(params, fidelity, seed)
    ms = (time.perf_counter() - t0) * 1000.0
    return TrialRecord(trial_id, params, tuple(float(x) for x in ev.objectives), fidelity,
                       seed, ms, ev.degenerate, ev.info)


class Journal:
    """Append-only CSV of finished trials."""

    def __init__(self, path, param_names, objective_names):
        self.path = path
        self.params = list(param_names)
        self.objectives = list(objective_names)
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(["trial_id", *self.params, *self.objectives,
                                     "fidelity", "seed", "ms", "degenerate"])

    def append(self, rec: TrialRecord) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([rec.trial_id, *(rec.params[p] for p in self.params),
                                     *(repr(x) for x in rec.objectives), rec.fidelity,
                                     rec.seed, f"{rec.ms:.1f}", int(rec.degenerate)])


def selection_key(select: str):
    if select == "f1":
        return lambda r: (r.objectives[0], r.trial_id)
    if select == "sum":
        return lambda r: (sum(r.objectives), r.trial_id)
    raise ValueError(f"unknown selection rule {select!r}")


def optimize(space: SearchSpace, objective, budget: int, stream: RandomStream,
             low_fidelity: float = 0.1, promote_fraction: float = 1.0 / 3.0,
             select: str = "f1", journal: Journal | None = None,
             workers: int = 1) -> SearchResult:
    """Sample ``budget`` configurations, screen them cheaply, promote the best.

    All candidates run at ``low_fidelity``; the top ``ceil(budget *
    promote_fraction)`` by nondomination rank (then the selection key) are
    rerun at full fidelity.  The archive holds the full-fidelity trials.
    Results do not depend on ``workers``.
    """
    if budget < 1:
        raise ValueError("budget must be at least one trial")
    key = selection_key(select)
    cands = [space.sample(stream.derive("sample", i).rng()) for i in range(budget)]
    seeds = [stream.derive("trial", i).seed_int() for i in range(budget)]

    def run_batch(ids, fidelity):
        args = [(objective, i, cands[i], fidelity, seeds[i]) for i in ids]
        if workers > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                recs = list(ex.map(_run, *zip(*args)))
        else:
            recs = [_run(*a) for a in args]
        for r in recs:
            if journal is not None:
                journal.append(r)
        return recs

    trials = []
    if low_fidelity < 1.0:
        screen = run_batch(range(budget), low_fidelity)
        trials += screen
        rank = nondomination_rank([r.objectives for r in screen])
        order = sorted(range(budget),
                       key=lambda i: (rank[i], screen[i].degenerate, *key(screen[i])))
        n_promote = max(1, math.ceil(budget * promote_fraction))
        promoted = sorted(order[:n_promote])
    else:
        promoted = list(range(budget))
    full = run_batch(promoted, 1.0)
    trials += full
    archive = ParetoArchive()
    for r in full:
        if not r.degenerate:
            archive.add(r)
    if len(archive) == 0:
        raise CalibrationError("all full-fidelity trials were degenerate")
    best = min(archive, key=key)
    return SearchResult(archive, best, trials)
