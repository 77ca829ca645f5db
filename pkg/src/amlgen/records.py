"""Transaction log container and CSV readers/writers."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

SOURCE = -1
SINK = -2
TRANSFER = 0
CASH = 1
CHANNELS = ("TRANSFER", "CASH")

TX_COLUMNS = ["tx_id", "step", "src", "dst", "amount_cents", "channel", "is_sar",
              "pattern_id", "src_fi", "dst_fi"]
PATTERN_COLUMNS = ["pattern_id", "kind", "is_alert", "members", "edges", "t_start", "t_end"]
EVENT_COLUMNS = ["step", "account_id", "event"]

_DTYPES = {"step": np.int32, "src": np.int32, "dst": np.int32, "amount": np.int64,
           "channel": np.int8, "is_sar": np.int8, "pattern": np.int32}


class SchemaError(ValueError):
    """A CSV file does not match the expected layout."""


@dataclass
class TransactionLog:
    """Struct-of-arrays transaction log ordered by ``(step, tx_id)``.

    ``pattern`` is -1 for records outside any pattern.  ``tx_id`` is the row
    index.  ``fi`` maps account id to institution for the FI columns.
    """
    step: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    amount: np.ndarray
    channel: np.ndarray
    is_sar: np.ndarray
    pattern: np.ndarray
    fi: np.ndarray

    def __len__(self):
        return len(self.step)

    @classmethod
    def empty(cls, fi=None) -> "TransactionLog":
        z = {k: np.zeros(0, dtype=t) for k, t in _DTYPES.items()}
        return cls(fi=np.zeros(0, np.int32) if fi is None else fi, **z)

    @classmethod
    def from_chunks(cls, chunks: list[dict], fi: np.ndarray) -> "TransactionLog":
        if not chunks:
            return cls.empty(fi)
        cols = {k: np.concatenate([c[k] for c in chunks]).astype(t, copy=False)
                for k, t in _DTYPES.items()}
        return cls(fi=np.asarray(fi, dtype=np.int32), **cols)

    def endpoint_fi(self, ids: np.ndarray) -> np.ndarray:
        out = np.full(len(ids), -1, dtype=np.int32)
        internal = ids >= 0
        out[internal] = self.fi[ids[internal]]
        return out

    @property
    def src_fi(self) -> np.ndarray:
        return self.endpoint_fi(self.src)

    @property
    def dst_fi(self) -> np.ndarray:
        return self.endpoint_fi(self.dst)

    def select(self, mask) -> "TransactionLog":
        return TransactionLog(self.step[mask], self.src[mask], self.dst[mask],
                              self.amount[mask], self.channel[mask], self.is_sar[mask],
                              self.pattern[mask], self.fi)

    def bank_visible(self) -> "TransactionLog":
        return self.select(self.channel == TRANSFER)

    def to_frame(self, start: int = 0, stop: int | None = None) -> pd.DataFrame:
        sl = slice(start, stop)
        src, dst = self.src[sl], self.dst[sl]
        pat = pd.array(self.pattern[sl], dtype="Int64")
        pat[self.pattern[sl] < 0] = pd.NA
        n = len(src)
        return pd.DataFrame({
            "tx_id": np.arange(start, start + n, dtype=np.int64),
            "step": self.step[sl], "src": src, "dst": dst,
            "amount_cents": self.amount[sl],
            "channel": np.asarray(CHANNELS, dtype=object)[self.channel[sl]],
            "is_sar": self.is_sar[sl], "pattern_id": pat,
            "src_fi": self.endpoint_fi(src), "dst_fi": self.endpoint_fi(dst),
        }, columns=TX_COLUMNS)


def write_transactions(log: TransactionLog, path, chunk: int = 1_000_000) -> None:
    from .kernels import format_tx_csv
    with open(path, "wb") as fh:
        fh.write((",".join(TX_COLUMNS) + "\n").encode())
        for start in range(0, len(log), chunk):
            stop = min(start + chunk, len(log))
            fh.write(format_tx_csv(
                start, log.step[start:stop], log.src[start:stop], log.dst[start:stop],
                log.amount[start:stop], log.channel[start:stop], log.is_sar[start:stop],
                log.pattern[start:stop], log.endpoint_fi(log.src[start:stop]),
                log.endpoint_fi(log.dst[start:stop])))


def _check_header(path, expected: list[str]) -> None:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
    if header != expected:
        raise SchemaError(f"{path}: header {header} does not match expected {expected}")


def read_transactions(path, fi: np.ndarray | None = None) -> TransactionLog:
    """Load ``transactions.csv``; malformed rows raise with their line number."""
    _check_header(path, TX_COLUMNS)
    dtypes = {"tx_id": np.int64, "step": np.int32, "src": np.int32, "dst": np.int32,
              "amount_cents": np.int64, "channel": str, "is_sar": np.int8,
              "pattern_id": "Int64", "src_fi": np.int32, "dst_fi": np.int32}
    try:
        df = pd.read_csv(path, dtype=dtypes, keep_default_na=False, na_values={"pattern_id": [""]})
    except (ValueError, pd.errors.ParserError) as e:
        raise SchemaError(f"{path}: {_locate_bad_line(path, TX_COLUMNS) or e}") from None
    if len(df) and not np.array_equal(df["tx_id"].to_numpy(), np.arange(len(df))):
        bad = int(np.flatnonzero(df["tx_id"].to_numpy() != np.arange(len(df)))[0])
        raise SchemaError(f"{path}: line {bad + 2}: tx_id out of sequence")
    chan = df["channel"].to_numpy()
    code = np.full(len(df), -1, dtype=np.int8)
    for i, name in enumerate(CHANNELS):
        code[chan == name] = i
    if (code < 0).any():
        bad = int(np.flatnonzero(code < 0)[0])
        raise SchemaError(f"{path}: line {bad + 2}: unknown channel {chan[bad]!r}")
    src = df["src"].to_numpy()
    dst = df["dst"].to_numpy()
    if fi is None:
        n = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
        fi = np.full(n, -1, dtype=np.int32)
        fi[src[src >= 0]] = df["src_fi"].to_numpy()[src >= 0]
        fi[dst[dst >= 0]] = df["dst_fi"].to_numpy()[dst >= 0]
    pat = df["pattern_id"].fillna(-1).to_numpy(dtype=np.int64).astype(np.int32)
    return TransactionLog(df["step"].to_numpy(), src, dst, df["amount_cents"].to_numpy(),
                          code, df["is_sar"].to_numpy(), pat, np.asarray(fi, dtype=np.int32))


def _locate_bad_line(path, columns) -> str | None:
    ncol = len(columns)
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\r\n").split(",")
            if len(parts) != ncol:
                return f"line {lineno}: expected {ncol} fields, got {len(parts)}"
            for name, val in zip(columns, parts):
                if name in ("channel", "kind", "members", "edges", "event"):
                    continue
                if val == "" and name == "pattern_id":
                    continue
                try:
                    int(val)
                except ValueError:
                    return f"line {lineno}: column {name} is not an integer: {val!r}"
    return None


def write_frame(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def read_frame(path, columns: list[str] | None = None) -> pd.DataFrame:
    if columns is not None:
        _check_header(path, columns)
    try:
        return pd.read_csv(path, keep_default_na=False, na_values=[""])
    except (ValueError, pd.errors.ParserError) as e:
        raise SchemaError(f"{path}: {e}") from None


def read_accounts(path) -> pd.DataFrame:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
    base = ["account_id", "fi", "age", "is_alert", "open_step"]
    if header[:5] != base or not all(h.startswith("kyc_") for h in header[5:]):
        raise SchemaError(f"{path}: unexpected accounts header {header}")
    return pd.read_csv(path)


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
