"""Label corruption applied to training tables only.

Operations run in a fixed order: label removal, class flips, typology
flips, neighbour flags.  Each uses its own substream so enabling one does
not shift the draws of another.  ``-1`` marks an unlabeled node.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .rng import RandomStream

UNLABELED = -1


@dataclass
class NoiseReport:
    n_nodes: int = 0
    unlabeled: int = 0
    class_flips: int = 0
    typology_flips: int = 0
    flipped_patterns: list = field(default_factory=list)
    neighbor_flags: int = 0


def drop_labels(labels: np.ndarray, labeled_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Each node keeps its label with probability ``labeled_fraction``."""
    out = labels.astype(np.int8).copy()
    if labeled_fraction >= 1.0:
        return out
    lost = rng.random(len(out)) >= labeled_fraction
    out[lost] = UNLABELED
    return out


def class_flips(labels: np.ndarray, p_benign: float, p_alert: float,
                rng: np.random.Generator) -> np.ndarray:
    """Flip labeled nodes independently with a per-class probability."""
    out = labels.copy()
    u = rng.random(len(out))
    flip = ((out == 0) & (u < p_benign)) | ((out == 1) & (u < p_alert))
    out[flip] = 1 - out[flip]
    return out


def typology_flips(labels: np.ndarray, account_ids: np.ndarray, alert_instances,
                   prob: float, rng: np.random.Generator) -> tuple[np.ndarray, list]:
    """Relabel every member of a flipped alert instance as benign."""
    out = labels.copy()
    if prob <= 0 or not alert_instances:
        return out, []
    hit = rng.random(len(alert_instances)) < prob
    flipped = [inst.pattern_id for inst, h in zip(alert_instances, hit) if h]
    if flipped:
        members = np.unique(np.concatenate(
            [np.asarray(inst.members) for inst, h in zip(alert_instances, hit) if h]))
        sel = np.isin(account_ids, members) & (out != UNLABELED)
        out[sel] = 0
    return out, flipped


def neighbor_flags(labels: np.ndarray, true_labels: np.ndarray, account_ids: np.ndarray,
                   edges: pd.DataFrame, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Benign-labeled neighbours of truly suspicious nodes become suspicious."""
    out = labels.copy()
    if prob <= 0 or len(edges) == 0:
        return out
    pos = pd.Index(account_ids)
    s = pos.get_indexer(edges["src"].to_numpy())
    d = pos.get_indexer(edges["dst"].to_numpy())
    ok = (s >= 0) & (d >= 0)
    s, d = s[ok], d[ok]
    near = np.zeros(len(out), dtype=bool)
    near[d[true_labels[s] == 1]] = True
    near[s[true_labels[d] == 1]] = True
    cand = near & (out == 0)
    u = rng.random(len(out))
    out[cand & (u < prob)] = 1
    return out


def apply_noise(table: pd.DataFrame, edges: pd.DataFrame, alert_instances, spec,
                stream: RandomStream) -> tuple[pd.DataFrame, NoiseReport]:
    """Return a copy of ``table`` with ``label_true`` and ``label_observed``.

    ``spec`` is a :class:`~amlgen.config.NoiseSpec`.  The input table is
    left untouched.
    """
    ids = table["account_id"].to_numpy()
    true = table["label"].to_numpy().astype(np.int8)
    obs = drop_labels(true, spec.labeled_fraction, stream.derive("drop").rng())
    rep = NoiseReport(n_nodes=len(true), unlabeled=int((obs == UNLABELED).sum()))
    before = obs.copy()
    obs = class_flips(obs, spec.flip_prob_benign, spec.flip_prob_alert,
                      stream.derive("class").rng())
    rep.class_flips = int((obs != before).sum())
    before = obs.copy()
    obs, rep.flipped_patterns = typology_flips(obs, ids, alert_instances, spec.typology_flip_prob,
                                               stream.derive("typology").rng())
    rep.typology_flips = int((obs != before).sum())
    before = obs.copy()
    obs = neighbor_flags(obs, true, ids, edges, spec.neighbor_flag_prob,
                         stream.derive("neighbor").rng())
    rep.neighbor_flags = int((obs != before).sum())
    out = table.copy()
    out = out.rename(columns={"label": "label_true"})
    out.insert(out.columns.get_loc("label_true") + 1, "label_observed", obs)
    return out, rep


def noise_active(spec) -> bool:
    return (spec.labeled_fraction < 1.0 or spec.flip_prob_benign > 0 or spec.flip_prob_alert > 0
            or spec.typology_flip_prob > 0 or spec.neighbor_flag_prob > 0)
