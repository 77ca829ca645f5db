"""Command-line entry points: generate, features, calibrate, stats."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pandas as pd

from . import __version__
from .calibration import (CalibrationError, DataInformedObjective, Journal,
                          KnowledgeFreeObjective, SearchSpace, default_space, optimize)
from .calibration.objectives import patch_document
from .config import ConfigError, config_from_dict, load_config_file, preset_document
from .features import build_train_test, subwindows
from .noise import apply_noise, noise_active
from .records import (EVENT_COLUMNS, PATTERN_COLUMNS, SchemaError, atomic_write_text,
                      read_accounts, read_frame, read_transactions, write_frame,
                      write_transactions)
from .rng import RandomStream
from .simulation import run_pipeline
from .stats import (amount_histograms, balance_traces, degree_histogram, degrees, dot_subgraph,
                    edge_list, graph_stats, node_labels, pattern_census)

log = logging.getLogger("amlgen")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DEGENERATE = 0, 1, 2, 3


class DegenerateError(RuntimeError):
    """Generation or calibration produced nothing usable."""


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _line_count(path) -> int:
    with open(path, "rb") as fh:
        return sum(block.count(b"\n") for block in iter(lambda: fh.read(1 << 20), b""))


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    write_frame(df, tmp)
    os.replace(tmp, path)


def _artifact_entry(path: Path, out: Path) -> dict:
    return {"path": str(path.relative_to(out)), "sha256": _sha256(path),
            "rows": _line_count(path) - 1}


def _begin(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.json"
    if manifest.exists():
        manifest.unlink()
    return manifest


def _load_cfg(args):
    if getattr(args, "preset", None):
        return config_from_dict(preset_document(args.preset), seed_override=args.seed)
    if not args.config:
        raise ConfigError("--config", "a configuration file or --preset is required")
    return load_config_file(args.config, seed_override=args.seed)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    manifest = _begin(out)
    t0 = time.perf_counter()
    res = run_pipeline(cfg, debug=args.debug)
    if cfg.n_accounts > 0 and len(res.log) == 0:
        raise DegenerateError("generation produced no transactions")
    timings = dict(res.timings)
    t1 = time.perf_counter()
    tx = out / "transactions.csv"
    tmp = out / "transactions.csv.tmp"
    write_transactions(res.log, tmp)
    os.replace(tmp, tx)
    _write_csv(res.accounts, out / "accounts.csv")
    _write_csv(res.patterns, out / "patterns.csv")
    _write_csv(res.events, out / "events.csv")
    atomic_write_text(out / "config.json", _json(cfg.to_document()))
    timings["write"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0
    names = ("transactions.csv", "accounts.csv", "patterns.csv", "events.csv", "config.json")
    doc = {
        "command": "generate", "version": __version__, "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "artifacts": {n: _artifact_entry(out / n, out) for n in names},
        "counts": res.counts, "timings": timings,
    }
    atomic_write_text(manifest, _json(doc))
    log.info("generated %d transactions in %.1f s", len(res.log), timings["total"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def _sibling(path: Path, given, name: str) -> Path:
    return Path(given) if given else path.parent / name


def _alert_instances(patterns: pd.DataFrame) -> list:
    alert = patterns[patterns["is_alert"] == 1]
    return [SimpleNamespace(pattern_id=int(p),
                            members=np.array(str(m).split(), dtype=np.int64))
            for p, m in zip(alert["pattern_id"], alert["members"])]


def cmd_features(args) -> int:
    tx_path = Path(args.transactions)
    cfg_path = _sibling(tx_path, args.config, "config.json")
    cfg = load_config_file(cfg_path, seed_override=args.seed)
    accounts = read_accounts(_sibling(tx_path, args.accounts, "accounts.csv"))
    ev_path = _sibling(tx_path, args.events, "events.csv")
    events = read_frame(ev_path, EVENT_COLUMNS) if ev_path.exists() else None
    lg = read_transactions(tx_path, fi=accounts["fi"].to_numpy())

    w = cfg.windows
    train = tuple(args.train_window) if args.train_window else tuple(w.train)
    test = tuple(args.test_window) if args.test_window else tuple(w.test)
    m = args.m or w.m_subwindows
    horizon = cfg.n_steps
    for name, win in (("train", train), ("test", test)):
        if win[0] < 0 or win[0] >= horizon or win[1] < win[0]:
            raise ConfigError(f"--{name}-window", f"{list(win)} outside log horizon [0, {horizon}]")
        try:
            subwindows(win, horizon, m)
        except ValueError as e:
            raise ConfigError(f"--{name}-window", str(e)) from None

    noise = cfg.noise
    overrides = {}
    if args.labeled_fraction is not None:
        overrides["labeled_fraction"] = args.labeled_fraction
    if args.class_noise is not None:
        pb, pa = (args.class_noise * 2)[:2]
        overrides.update(flip_prob_benign=pb, flip_prob_alert=pa)
    if args.typology_noise is not None:
        overrides["typology_flip_prob"] = args.typology_noise
    if args.neighbor_noise is not None:
        overrides["neighbor_flag_prob"] = args.neighbor_noise
    for k, v in overrides.items():
        if not 0.0 <= v <= 1.0:
            raise ConfigError(k, f"probability {v} outside [0, 1]")
    noise = type(noise)(**{**noise.__dict__, **overrides})
    noisy = noise_active(noise)
    alerts = []
    if noisy and noise.typology_flip_prob > 0:
        alerts = _alert_instances(read_frame(_sibling(tx_path, args.patterns, "patterns.csv"),
                                             PATTERN_COLUMNS))

    if args.fi == "all":
        fis = sorted(int(f) for f in np.unique(accounts["fi"]))
    elif args.fi == "none":
        fis = []
    else:
        fis = [int(args.fi)]
    out = Path(args.out)
    manifest = _begin(out)
    stream = RandomStream(cfg.master_seed).derive("features")
    tables = build_train_test(lg, accounts, events, cfg, stream, fis, train, test, m)
    artifacts, reports = {}, {}
    scopes = [(None, tables["global"])] + [(f, tables["fi"][f]) for f in fis]
    for scope, t in scopes:
        tag = "global" if scope is None else f"fi_{scope}"
        d = out / tag
        d.mkdir(exist_ok=True)
        tr = t["train"]
        if noisy:
            tr, rep = apply_noise(tr, t["edges_train"], alerts, noise,
                                  stream.derive("noise", -1 if scope is None else scope))
            reports[tag] = rep.__dict__
            if args.blind:
                tr = tr.drop(columns=["label_true"])
        elif args.blind:
            tr = tr.drop(columns=["label"])
        files = {"train.csv": tr, "test.csv": t["test"],
                 "validation_ids.csv": pd.DataFrame({"account_id": t["validation"]}),
                 "edges_train.csv": t["edges_train"], "edges_test.csv": t["edges_test"]}
        for name, df in files.items():
            _write_csv(df, d / name)
            artifacts[f"{tag}/{name}"] = _artifact_entry(d / name, out)
    doc = {"command": "features", "version": __version__, "config_hash": cfg.config_hash(),
           "master_seed": cfg.master_seed, "transactions_sha256": _sha256(tx_path),
           "train_window": list(train), "test_window": list(test), "m_subwindows": m,
           "noise": noise.__dict__, "noise_report": reports, "artifacts": artifacts}
    atomic_write_text(manifest, _json(doc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args)
    doc = cfg.to_document()
    space = SearchSpace.from_document(json.loads(Path(args.space).read_text())) \
        if args.space else default_space()
    space.validate(doc)
    if args.mode == "knowledge-free":
        objective = KnowledgeFreeObjective(doc, fpr_target=args.fpr_target)
        select = "f1"
    else:
        if not args.reference_stats:
            raise ConfigError("--reference-stats", "required in data-informed mode")
        objective = DataInformedObjective(doc, json.loads(Path(args.reference_stats).read_text()))
        select = "sum"
    out = Path(args.out)
    manifest = _begin(out)
    journal = Journal(out / "trials.csv", space.names, objective.names)
    res = optimize(space, objective, args.budget, RandomStream(cfg.master_seed).derive("calibrate"),
                   low_fidelity=args.low_fidelity, select=select, journal=journal,
                   workers=args.workers)
    front = pd.DataFrame([{"trial_id": r.trial_id, **r.params,
                           **dict(zip(objective.names, r.objectives))}
                          for r in sorted(res.archive, key=lambda r: r.trial_id)])
    _write_csv(front, out / "pareto.csv")
    best_doc = patch_document(doc, res.best.params)
    config_from_dict(best_doc)
    atomic_write_text(out / "best_config.json", _json(best_doc))
    atomic_write_text(manifest, _json({
        "command": "calibrate", "mode": args.mode, "version": __version__,
        "config_hash": cfg.config_hash(), "master_seed": cfg.master_seed,
        "budget": args.budget, "best_trial": res.best.trial_id,
        "best_objectives": list(res.best.objectives), "best_info": res.best.info,
        "best_params": res.best.params,
        "artifacts": {n: _artifact_entry(out / n, out)
                      for n in ("trials.csv", "pareto.csv", "best_config.json")},
    }))
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    lg = read_transactions(args.transactions)
    if len(lg) == 0:
        raise DegenerateError("empty transaction log")
    out = Path(args.out)
    manifest = _begin(out)
    report = graph_stats(lg)
    edges = edge_list(lg)
    labels = node_labels(lg)
    d_in, d_out = degrees(edges, labels.index.to_numpy())
    files = {
        "in_degree_hist.csv": degree_histogram(d_in),
        "out_degree_hist.csv": degree_histogram(d_out),
        "amount_hist.csv": amount_histograms(lg),
        "pattern_census.csv": pd.DataFrame(sorted(pattern_census(lg).items()),
                                           columns=["kind", "count"]),
    }
    ids = labels.index.to_numpy()
    sample = np.concatenate([ids[labels.to_numpy() == 1][:args.trace_accounts],
                             ids[labels.to_numpy() == 0][:args.trace_accounts]])
    files["balance_traces.csv"] = balance_traces(lg, np.sort(sample))
    for name, df in files.items():
        _write_csv(df, out / name)
    atomic_write_text(out / "graph.dot", dot_subgraph(lg, args.dot_nodes))
    atomic_write_text(out / "stats.json", _json(report))
    names = [*files, "graph.dot", "stats.json"]
    atomic_write_text(manifest, _json({
        "command": "stats", "version": __version__,
        "transactions_sha256": _sha256(args.transactions),
        "artifacts": {n: _artifact_entry(out / n, out) for n in names}}))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amlgen", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a transaction network")
    g.add_argument("--config")
    g.add_argument("--preset", choices=("swedish", "us"))
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--debug", action="store_true", help="assert balance invariants every step")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("features", help="build windowed feature tables")
    f.add_argument("--transactions", required=True)
    f.add_argument("--config", help="defaults to config.json next to the transactions")
    f.add_argument("--accounts")
    f.add_argument("--events")
    f.add_argument("--patterns")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--train-window", type=int, nargs=2, metavar=("START", "END"))
    f.add_argument("--test-window", type=int, nargs=2, metavar=("START", "END"))
    f.add_argument("-m", "--subwindows", dest="m", type=int)
    f.add_argument("--labeled-fraction", type=float)
    f.add_argument("--class-noise", type=float, nargs="+", metavar="P",
                   help="flip probability, or benign then alert probabilities")
    f.add_argument("--typology-noise", type=float)
    f.add_argument("--neighbor-noise", type=float)
    f.add_argument("--blind", action="store_true", help="drop true labels from train tables")
    f.add_argument("--fi", default="all", help="FI id, 'all' or 'none'")
    f.set_defaults(func=cmd_features)

    c = sub.add_parser("calibrate", help="search laundering parameters")
    c.add_argument("--mode", choices=("knowledge-free", "data-informed"), required=True)
    c.add_argument("--config")
    c.add_argument("--preset", choices=("swedish", "us"))
    c.add_argument("--space")
    c.add_argument("--budget", type=int, default=20)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--fpr-target", type=float, default=0.98)
    c.add_argument("--reference-stats")
    c.add_argument("--low-fidelity", type=float, default=0.1)
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("stats", help="summarise a transaction log")
    s.add_argument("--transactions", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dot-nodes", type=int, default=200)
    s.add_argument("--trace-accounts", type=int, default=5)
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except (DegenerateError, CalibrationError) as e:
        print(f"degenerate: {e}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
