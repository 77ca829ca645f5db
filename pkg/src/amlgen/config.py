"""Simulation configuration: schema, defaults, validation and presets.

Documents are JSON trees with a ``schema_version`` field.  Every optional key
has a default; validation errors carry the dotted path of the bad field.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .distributions import derive_scale, lognormal_params

SCHEMA_VERSION = 1

NORMAL_KINDS = ("direct", "mutual", "periodic", "forward", "fan_in", "fan_out")
ALERT_KINDS = ("fan_in", "fan_out", "cycle", "scatter_gather",
               "gather_scatter", "stacked_bipartite")
SCHEMES = ("fixed_interval", "random_interval", "unordered", "simultaneous")

# smallest legal pattern size per kind
MIN_SIZE = {"direct": 2, "mutual": 2, "periodic": 2, "forward": 3,
            "fan_in": 2, "fan_out": 2, "cycle": 3, "scatter_gather": 3,
            "gather_scatter": 3, "stacked_bipartite": 2}
FIXED_SIZE = {"direct": 2, "mutual": 2, "periodic": 2, "forward": 3}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class DegreeParams:
    loc: int = 1
    scale: float = 1.0
    gamma: float = 2.0


@dataclass(frozen=True)
class TypologySpec:
    kind: str
    is_alert: bool
    count: int
    size_min: int
    size_max: int
    scheme: str = "random_interval"
    layers: int = 3
    duration: int = 28


@dataclass(frozen=True)
class AmountModel:
    mean: float
    std: float
    min_amount: float = 1.0
    max_amount: float = 150000.0

    @property
    def min_cents(self) -> int:
        return int(round(self.min_amount * 100))

    @property
    def max_cents(self) -> int:
        return int(round(self.max_amount * 100))


@dataclass(frozen=True)
class GaussianModel:
    mean: float
    std: float


@dataclass(frozen=True)
class SalaryRow:
    age_min: int
    age_max: int
    share: float
    median: float
    mean: float

    def params(self) -> tuple[float, float]:
        return lognormal_params(self.median, self.mean)


@dataclass(frozen=True)
class KycAttribute:
    name: str
    categories: tuple[str, ...]
    normal: tuple[float, ...]
    alert: tuple[float, ...]


@dataclass(frozen=True)
class Windows:
    train: tuple[int, int]
    test: tuple[int, int]
    m_subwindows: int = 4
    validation_fraction: float = 0.25


@dataclass(frozen=True)
class NoiseSpec:
    labeled_fraction: float = 1.0
    flip_prob_benign: float = 0.0
    flip_prob_alert: float = 0.0
    typology_flip_prob: float = 0.0
    neighbor_flag_prob: float = 0.0


@dataclass(frozen=True)
class SimulationConfig:
    n_accounts: int
    n_steps: int
    master_seed: int
    degree: DegreeParams
    normal_typologies: tuple[TypologySpec, ...]
    alert_typologies: tuple[TypologySpec, ...]
    reuse_p: float
    normal_tx: AmountModel
    alert_tx: AmountModel
    normal_spending: GaussianModel
    alert_spending: GaussianModel
    mean_tx_per_month: float
    salary_tables: tuple[SalaryRow, ...]
    payday_period: int
    spend_window: int
    spend_scale: float
    keep_fraction: float
    cash_placement_fraction: float
    p_spend_bank: float
    lifecycle: dict
    max_account_age: int
    kyc_attributes: tuple[KycAttribute, ...]
    n_fis: int
    fi_weights: tuple[float, ...] | None
    windows: Windows
    noise: NoiseSpec
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def to_document(self) -> dict:
        """Canonical JSON-compatible document (round-trips through load)."""
        doc = {
            "schema_version": SCHEMA_VERSION,
            "n_accounts": self.n_accounts,
            "n_steps": self.n_steps,
            "master_seed": self.master_seed,
            "degree": dataclasses.asdict(self.degree),
            "normal_typologies": [_spec_doc(s) for s in self.normal_typologies],
            "alert_typologies": [_spec_doc(s) for s in self.alert_typologies],
            "reuse_p": self.reuse_p,
            "normal_tx": dataclasses.asdict(self.normal_tx),
            "alert_tx": dataclasses.asdict(self.alert_tx),
            "normal_spending": dataclasses.asdict(self.normal_spending),
            "alert_spending": dataclasses.asdict(self.alert_spending),
            "mean_tx_per_month": self.mean_tx_per_month,
            "salary_tables": [dataclasses.asdict(r) for r in self.salary_tables],
            "payday_period": self.payday_period,
            "spend_window": self.spend_window,
            "spend_scale": self.spend_scale,
            "keep_fraction": self.keep_fraction,
            "cash_placement_fraction": self.cash_placement_fraction,
            "p_spend_bank": self.p_spend_bank,
            "lifecycle": {c: {e: dataclasses.asdict(g) for e, g in ev.items()}
                          for c, ev in self.lifecycle.items()},
            "max_account_age": self.max_account_age,
            "kyc_attributes": [{"name": a.name, "categories": list(a.categories),
                                "normal": list(a.normal), "alert": list(a.alert)}
                               for a in self.kyc_attributes],
            "n_fis": self.n_fis,
            "fi_weights": None if self.fi_weights is None else list(self.fi_weights),
            "windows": {"train": list(self.windows.train),
                        "test": list(self.windows.test),
                        "m_subwindows": self.windows.m_subwindows,
                        "validation_fraction": self.windows.validation_fraction},
            "noise": dataclasses.asdict(self.noise),
        }
        return doc

    def config_hash(self) -> str:
        text = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)


def _spec_doc(s: TypologySpec) -> dict:
    return {"kind": s.kind, "count": s.count, "size": [s.size_min, s.size_max],
            "scheme": s.scheme, "layers": s.layers, "duration": s.duration}


# ---------------------------------------------------------------------------
# defaults
# ---------------------------------------------------------------------------

# Swedish salary groups, annual SEK.  Medians/means reproduce the lognormal
# (mu, sigma) pairs quoted for ages 20/40/60/80 in thousand-SEK units.
def _salary_row(age_min, age_max, share, mu, sigma):
    median = math.exp(mu) * 1000.0
    mean = median * math.exp(0.5 * sigma * sigma)
    return {"age_min": age_min, "age_max": age_max, "share": share,
            "median": round(median, 2), "mean": round(mean, 2)}


DEFAULT_SALARY_TABLE = [
    _salary_row(16, 29, 0.22, 4.69134788, 0.63443573),
    _salary_row(30, 49, 0.33, 5.96870756, 0.33667553),
    _salary_row(50, 69, 0.29, 5.94829605, 0.41757725),
    _salary_row(70, 95, 0.16, 5.35233195, 0.49318958),
]


def default_normal_typologies(n_accounts: int) -> list[dict]:
    count = int(0.8 * n_accounts)
    out = []
    for kind in NORMAL_KINDS:
        lo, hi = (3, 10) if kind in ("fan_in", "fan_out") else (FIXED_SIZE[kind],) * 2
        hi = min(hi, max(n_accounts, lo))
        out.append({"kind": kind, "count": count if hi <= n_accounts else 0,
                    "size": [lo, hi], "scheme": "unordered"})
    return out


def default_alert_typologies(n_accounts: int) -> list[dict]:
    count = max(1, n_accounts // 3300)
    out = []
    for kind in ALERT_KINDS:
        # tiny populations get smaller patterns, or none if even the minimum does not fit
        need = 3 if kind == "stacked_bipartite" else MIN_SIZE[kind]
        hi = max(min(20, n_accounts), need)
        lo = min(5, hi)
        out.append({"kind": kind, "count": count if hi <= n_accounts else 0,
                    "size": [lo, hi], "scheme": "random_interval", "duration": 28})
    return out


_DEFAULT_LIFECYCLE = {
    "normal": {"phone_change": {"mean": 1460.0, "std": 365.0},
               "bank_change": {"mean": 1460.0, "std": 365.0}},
    "alert": {"phone_change": {"mean": 1272.0, "std": 281.0},
              "bank_change": {"mean": 1335.0, "std": 368.0}},
}


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------


def _get(doc: dict, key: str, default: Any, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    return doc.get(key, default) if doc.get(key) is not None else default


def _int(v, path, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or float(v) != int(v):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    v = int(v)
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    return v


def _real(v, path, lo=None, hi=None, lo_open=False, hi_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    v = float(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(path, f"must be {'<' if hi_open else '<='} {hi}, got {v}")
    return v


def _prob(v, path):
    return _real(v, path, 0.0, 1.0)


def _amount(doc, path, defaults):
    d = dict(defaults)
    if doc is not None:
        if not isinstance(doc, dict):
            raise ConfigError(path, "expected an object")
        d.update(doc)
    m = AmountModel(
        mean=_real(d["mean"], path + ".mean", 0.0),
        std=_real(d["std"], path + ".std", 0.0),
        min_amount=_real(d.get("min_amount", 1.0), path + ".min_amount", 1.0),
        max_amount=_real(d.get("max_amount", 150000.0), path + ".max_amount"),
    )
    if m.max_amount < m.min_amount:
        raise ConfigError(path + ".max_amount", "must be >= min_amount")
    return m


def _gauss(doc, path, defaults):
    d = dict(defaults)
    if doc is not None:
        if not isinstance(doc, dict):
            raise ConfigError(path, "expected an object")
        d.update(doc)
    return GaussianModel(_real(d["mean"], path + ".mean", 0.0),
                         _real(d["std"], path + ".std", 0.0))


def _typologies(items, path, is_alert):
    if not isinstance(items, list):
        raise ConfigError(path, "expected a list")
    kinds = ALERT_KINDS if is_alert else NORMAL_KINDS
    out = []
    for i, item in enumerate(items):
        p = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(p, "expected an object")
        kind = item.get("kind")
        if kind not in kinds:
            raise ConfigError(p + ".kind", f"unknown kind {kind!r}; expected one of {kinds}")
        count = _int(item.get("count", 1), p + ".count", 0)
        size = item.get("size", FIXED_SIZE.get(kind, 3))
        if isinstance(size, (int, float)) and not isinstance(size, bool):
            size = [size, size]
        if not isinstance(size, list) or len(size) != 2:
            raise ConfigError(p + ".size", "expected an integer or [min, max]")
        lo = _int(size[0], p + ".size[0]")
        hi = _int(size[1], p + ".size[1]")
        layers = _int(item.get("layers", 3), p + ".layers", 2)
        need = max(MIN_SIZE[kind], layers if kind == "stacked_bipartite" else 0)
        if lo < need:
            raise ConfigError(p + ".size", f"{kind} needs size >= {need}, got {lo}")
        if kind in FIXED_SIZE and (lo != FIXED_SIZE[kind] or hi != FIXED_SIZE[kind]):
            raise ConfigError(p + ".size", f"{kind} has fixed size {FIXED_SIZE[kind]}")
        if hi < lo:
            raise ConfigError(p + ".size", "max below min")
        scheme = item.get("scheme", "random_interval")
        if scheme not in SCHEMES:
            raise ConfigError(p + ".scheme", f"unknown scheme {scheme!r}")
        if scheme == "simultaneous" and kind in ("cycle", "forward", "scatter_gather",
                                                 "gather_scatter", "stacked_bipartite"):
            raise ConfigError(p + ".scheme", f"{kind} is ordered; simultaneous is infeasible")
        duration = _int(item.get("duration", 28), p + ".duration", 1)
        out.append(TypologySpec(kind, is_alert, count, lo, hi, scheme, layers, duration))
    return tuple(out)


def _window(v, path, n_steps):
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError(path, "expected [start, end]")
    a = _int(v[0], path + "[0]", 0)
    b = _int(v[1], path + "[1]", 0)
    if b < a:
        raise ConfigError(path, "end before start")
    if b > n_steps:
        raise ConfigError(path, f"end {b} beyond horizon {n_steps}")
    return (a, b)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def config_from_dict(doc: dict, seed_override: int | None = None) -> SimulationConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a JSON object")
    src = copy.deepcopy(doc)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")

    n = _int(doc.get("n_accounts"), "n_accounts", 0) if "n_accounts" in doc else None
    if n is None:
        raise ConfigError("n_accounts", "required")
    if "n_steps" not in doc:
        raise ConfigError("n_steps", "required")
    n_steps = _int(doc["n_steps"], "n_steps", 1)
    seed = _int(_get(doc, "master_seed", 0, "master_seed"), "master_seed")
    env = os.environ.get("AMLGEN_SEED")
    if env is not None and env.strip() != "":
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError("AMLGEN_SEED", f"not an integer: {env!r}") from None
    if seed_override is not None:
        seed = int(seed_override)
    if not -(1 << 63) <= seed < (1 << 64):
        raise ConfigError("master_seed", "must fit in 64 bits")

    # degree law
    deg = _get(doc, "degree", {}, "degree")
    loc = _int(deg.get("loc", 1), "degree.loc", 0)
    gamma = _real(deg.get("gamma", 2.0), "degree.gamma", 0.0, lo_open=True)
    if "mean_degree" in deg and deg["mean_degree"] is not None:
        if gamma <= 1:
            raise ConfigError("degree.gamma", "mean_degree requires gamma > 1")
        d = _real(deg["mean_degree"], "degree.mean_degree")
        if d <= loc:
            raise ConfigError("degree.mean_degree", f"must exceed loc {loc}")
        scale = derive_scale(d, loc, gamma)
    else:
        scale = _real(deg.get("scale", 1.0), "degree.scale", 0.0, lo_open=True)
    degree = DegreeParams(loc, scale, gamma)

    normal_typ = _typologies(_get(doc, "normal_typologies", default_normal_typologies(n),
                                  "normal_typologies"), "normal_typologies", False)
    alert_typ = _typologies(_get(doc, "alert_typologies", default_alert_typologies(n),
                                 "alert_typologies"), "alert_typologies", True)
    for path, specs in (("normal_typologies", normal_typ), ("alert_typologies", alert_typ)):
        for i, s in enumerate(specs):
            if n > 0 and s.count > 0 and s.size_max > n:
                raise ConfigError(f"{path}[{i}].size",
                                  f"size {s.size_max} exceeds n_accounts {n}")

    reuse_p = _real(_get(doc, "reuse_p", 0.218, "reuse_p"), "reuse_p", 0.0, 1.0,
                    lo_open=True, hi_open=True)
    normal_tx = _amount(doc.get("normal_tx"), "normal_tx",
                        {"mean": 637.0, "std": 300.0, "min_amount": 1.0, "max_amount": 150000.0})
    alert_tx = _amount(doc.get("alert_tx"), "alert_tx",
                       {"mean": 799.0, "std": 163.0, "min_amount": 1.0, "max_amount": 150000.0})
    normal_sp = _gauss(doc.get("normal_spending"), "normal_spending", {"mean": 500.0, "std": 100.0})
    alert_sp = _gauss(doc.get("alert_spending"), "alert_spending", {"mean": 328.0, "std": 105.0})
    d_month = _real(_get(doc, "mean_tx_per_month", 4.0, "mean_tx_per_month"),
                    "mean_tx_per_month", 0.0)

    rows_doc = _get(doc, "salary_tables", DEFAULT_SALARY_TABLE, "salary_tables")
    if not isinstance(rows_doc, list) or not rows_doc:
        raise ConfigError("salary_tables", "expected a non-empty list")
    rows = []
    for i, r in enumerate(rows_doc):
        p = f"salary_tables[{i}]"
        if not isinstance(r, dict):
            raise ConfigError(p, "expected an object")
        try:
            row = SalaryRow(_int(r["age_min"], p + ".age_min", 0),
                            _int(r["age_max"], p + ".age_max", 0),
                            _prob(r["share"], p + ".share"),
                            _real(r["median"], p + ".median", 0.0, lo_open=True),
                            _real(r["mean"], p + ".mean", 0.0, lo_open=True))
        except KeyError as e:
            raise ConfigError(p + "." + e.args[0], "required") from None
        if row.age_max < row.age_min:
            raise ConfigError(p + ".age_max", "below age_min")
        if row.mean < row.median:
            raise ConfigError(p + ".mean", "mean salary below median: lognormal sigma undefined")
        rows.append(row)
    total = sum(r.share for r in rows)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError("salary_tables", f"shares sum to {total!r}, expected 1")

    payday = _int(_get(doc, "payday_period", 28, "payday_period"), "payday_period", 1)
    spend_window = _int(_get(doc, "spend_window", 28, "spend_window"), "spend_window", 1)
    spend_scale = _real(_get(doc, "spend_scale", normal_sp.mean, "spend_scale"),
                        "spend_scale", 0.0, lo_open=True)
    keep = _real(_get(doc, "keep_fraction", 0.1, "keep_fraction"), "keep_fraction",
                 0.0, 1.0, hi_open=True)
    cash_frac = _prob(_get(doc, "cash_placement_fraction", 0.5, "cash_placement_fraction"),
                      "cash_placement_fraction")
    p_bank = _prob(_get(doc, "p_spend_bank", 0.8, "p_spend_bank"), "p_spend_bank")

    lc_doc = copy.deepcopy(_DEFAULT_LIFECYCLE)
    for cls, events in (_get(doc, "lifecycle", {}, "lifecycle") or {}).items():
        if cls not in lc_doc:
            raise ConfigError(f"lifecycle.{cls}", "expected 'normal' or 'alert'")
        for ev, g in events.items():
            if ev not in lc_doc[cls]:
                raise ConfigError(f"lifecycle.{cls}.{ev}", "expected phone_change or bank_change")
            lc_doc[cls][ev].update(g)
    lifecycle = {cls: {ev: _gauss(g, f"lifecycle.{cls}.{ev}", g) for ev, g in evs.items()}
                 for cls, evs in lc_doc.items()}
    max_age = _int(_get(doc, "max_account_age", 3650, "max_account_age"), "max_account_age", 0)

    kyc = []
    for i, a in enumerate(_get(doc, "kyc_attributes", [], "kyc_attributes")):
        p = f"kyc_attributes[{i}]"
        cats = tuple(str(c) for c in a.get("categories", []))
        if not cats:
            raise ConfigError(p + ".categories", "expected a non-empty list")
        dists = {}
        for cls in ("normal", "alert"):
            dist = a.get(cls)
            dist = [1.0 / len(cats)] * len(cats) if dist is None else dist
            if len(dist) != len(cats):
                raise ConfigError(f"{p}.{cls}", "length differs from categories")
            vals = tuple(_prob(x, f"{p}.{cls}[{j}]") for j, x in enumerate(dist))
            if abs(sum(vals) - 1.0) > 1e-9:
                raise ConfigError(f"{p}.{cls}", "probabilities must sum to 1")
            dists[cls] = vals
        kyc.append(KycAttribute(str(a.get("name", f"attr{i}")), cats,
                                dists["normal"], dists["alert"]))

    n_fis = _int(_get(doc, "n_fis", 1, "n_fis"), "n_fis", 1)
    fw = doc.get("fi_weights")
    if fw is not None:
        if not isinstance(fw, list) or len(fw) != n_fis:
            raise ConfigError("fi_weights", f"expected a list of {n_fis} weights")
        fw = tuple(_real(w, f"fi_weights[{i}]", 0.0) for i, w in enumerate(fw))
        if sum(fw) <= 0:
            raise ConfigError("fi_weights", "weights must not all be zero")

    wdoc = _get(doc, "windows", {}, "windows")
    windows = Windows(
        train=_window(wdoc.get("train", [0, n_steps]), "windows.train", n_steps),
        test=_window(wdoc.get("test", [0, n_steps]), "windows.test", n_steps),
        m_subwindows=_int(wdoc.get("m_subwindows", 4), "windows.m_subwindows", 1),
        validation_fraction=_prob(wdoc.get("validation_fraction", 0.25),
                                  "windows.validation_fraction"),
    )

    ndoc = _get(doc, "noise", {}, "noise")
    noise = NoiseSpec(**{f.name: _prob(ndoc.get(f.name, f.default), f"noise.{f.name}")
                         for f in dataclasses.fields(NoiseSpec)})
    unknown = set(ndoc) - {f.name for f in dataclasses.fields(NoiseSpec)}
    if unknown:
        raise ConfigError("noise." + sorted(unknown)[0], "unknown field")

    return SimulationConfig(
        n_accounts=n, n_steps=n_steps, master_seed=seed, degree=degree,
        normal_typologies=normal_typ, alert_typologies=alert_typ, reuse_p=reuse_p,
        normal_tx=normal_tx, alert_tx=alert_tx, normal_spending=normal_sp,
        alert_spending=alert_sp, mean_tx_per_month=d_month, salary_tables=tuple(rows),
        payday_period=payday, spend_window=spend_window, spend_scale=spend_scale,
        keep_fraction=keep, cash_placement_fraction=cash_frac, p_spend_bank=p_bank,
        lifecycle=lifecycle, max_account_age=max_age, kyc_attributes=tuple(kyc),
        n_fis=n_fis, fi_weights=fw, windows=windows, noise=noise, source=src,
    )


def load_config(text: str, seed_override: int | None = None) -> SimulationConfig:
    """Parse and validate a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"malformed document: {e}") from None
    return config_from_dict(doc, seed_override)


def load_config_file(path, seed_override: int | None = None) -> SimulationConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read(), seed_override)


def preset_document(name: str) -> dict:
    """Bundled preset (``swedish`` or ``us``) as a mutable document."""
    try:
        text = resources.files("amlgen.presets").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError("preset", f"unknown preset {name!r}") from None
    return json.loads(text)


def set_path(doc: dict, path: str, value) -> dict:
    """Return a copy of ``doc`` with the dotted ``path`` set to ``value``.

    ``lifecycle.alert.phone_change.mean`` style paths are supported; list
    entries use ``name[i]``.
    """
    out = copy.deepcopy(doc)
    node = out
    parts = path.split(".")
    for part in parts[:-1]:
        key, idx = _split_index(part)
        if key not in node or node[key] is None:
            node[key] = {}
        node = node[key] if idx is None else node[key][idx]
    key, idx = _split_index(parts[-1])
    if idx is None:
        node[key] = value
    else:
        node[key][idx] = value
    return out


def get_path(doc: dict, path: str, default=None):
    node = doc
    for part in path.split("."):
        key, idx = _split_index(part)
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key] if idx is None else node[key][idx]
    return node


def _split_index(part: str):
    if part.endswith("]") and "[" in part:
        key, idx = part[:-1].split("[")
        return key, int(idx)
    return part, None
