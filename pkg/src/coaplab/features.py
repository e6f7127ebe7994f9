"""Per-packet feature extraction and window tensor preparation.

A packet becomes a row of 42 cells (Ethernet 3, IPv4 12, TCP 10, UDP 4,
CoAP 13).  Rows are reduced to the selected columns, string-valued cells are
tokenized against a first-seen vocabulary, each window's rows are padded to a
common length and every window matrix is scaled to unit Frobenius norm.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .capture import PacketRecord
from .coap import CoapError, decode_message

ABSENT = None
PAD_TOKEN = 0


class Kind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


class FeatureError(ValueError):
    pass


class NormalizationError(FeatureError):
    """Raised when a matrix has zero Frobenius norm."""


C, N = Kind.CATEGORICAL, Kind.NUMERIC

SCHEMA_COLUMNS: tuple[tuple[str, Kind], ...] = (
    # Ethernet
    ("eth_dst", C), ("eth_src", C), ("eth_type", N),
    # IPv4
    ("ip_version", N), ("ip_ihl", N), ("ip_tos", N), ("ip_len", N), ("ip_id", N),
    ("ip_flags", C), ("ip_frag", N), ("ip_ttl", N), ("ip_proto", N), ("ip_chksum", N),
    ("ip_src", C), ("ip_dst", C),
    # TCP
    ("tcp_sport", N), ("tcp_dport", N), ("tcp_seq", N), ("tcp_ack", N), ("tcp_dataofs", N),
    ("tcp_reserved", N), ("tcp_flags", C), ("tcp_window", N), ("tcp_chksum", N), ("tcp_urgptr", N),
    # UDP
    ("udp_sport", N), ("udp_dport", N), ("udp_len", N), ("udp_chksum", N),
    # CoAP
    ("coap_version", N), ("coap_type", C), ("coap_tkl", N), ("coap_code", C),
    ("coap_code_class", N), ("coap_code_detail", N), ("coap_mid", N), ("coap_token", C),
    ("coap_option_count", N), ("coap_uri_path", C), ("coap_payload_marker", N),
    ("coap_payload_len", N), ("coap_payload_head", C),
)

# human-readable names of the default selection -> schema column
SELECTED_FEATURE_LABELS: dict[str, str] = {
    "ethernet type": "eth_type",
    "IP version": "ip_version",
    "tos": "ip_tos",
    "length": "ip_len",
    "id": "ip_id",
    "flags (IP)": "ip_flags",
    "IP chksum": "ip_chksum",
    "source port": "udp_sport",
    "seq": "tcp_seq",
    "ack": "tcp_ack",
    "dataofs": "tcp_dataofs",
    "flags (TCP)": "tcp_flags",
    "window": "tcp_window",
    "UDP chksum": "udp_chksum",
    "urgptr": "tcp_urgptr",
    # not named in the original feature list; configurable
    "destination port": "udp_dport",
}


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[tuple[str, Kind], ...] = SCHEMA_COLUMNS

    def __post_init__(self):
        names = self.names
        if len(set(names)) != len(names):
            raise FeatureError("schema column names must be unique")

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.columns]

    @property
    def kinds(self) -> list[Kind]:
        return [k for _, k in self.columns]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def mask_for(self, names) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        for name in names:
            mask[self.index(name)] = True
        return mask

    def select(self, mask) -> "FeatureSchema":
        mask = check_mask(mask, len(self))
        return FeatureSchema(tuple(c for c, keep in zip(self.columns, mask) if keep))


DEFAULT_SCHEMA = FeatureSchema()


def default_mask(schema: FeatureSchema = DEFAULT_SCHEMA) -> np.ndarray:
    return schema.mask_for(SELECTED_FEATURE_LABELS.values())


def check_mask(mask, width: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (width,):
        raise FeatureError(f"mask width {mask.shape} does not match schema width {width}")
    return mask


def _ip_flags_name(flags: int) -> str:
    names = [n for bit, n in ((0x4, "RES"), (0x2, "DF"), (0x1, "MF")) if flags & bit]
    return "+".join(names)


def extract_features(p: PacketRecord, schema: FeatureSchema = DEFAULT_SCHEMA) -> list:
    """One raw row in schema order; cells of missing layers are ``None``."""
    cells = {
        "eth_dst": p.eth_dst, "eth_src": p.eth_src, "eth_type": p.eth_type,
        "ip_version": p.ip_version, "ip_ihl": p.ip_ihl, "ip_tos": p.ip_tos,
        "ip_len": p.ip_len, "ip_id": p.ip_id, "ip_flags": _ip_flags_name(p.ip_flags),
        "ip_frag": p.ip_frag, "ip_ttl": p.ip_ttl, "ip_proto": p.ip_proto,
        "ip_chksum": p.ip_chksum, "ip_src": p.src_ip, "ip_dst": p.dst_ip,
        "udp_sport": p.src_port, "udp_dport": p.dst_port, "udp_len": p.udp_len,
        "udp_chksum": p.udp_chksum,
    }
    try:
        msg = decode_message(p.payload)
    except CoapError:
        msg = None
    if msg is not None:
        cells.update({
            "coap_version": msg.version, "coap_type": msg.msg_type.name,
            "coap_tkl": len(msg.token), "coap_code": msg.code.dotted,
            "coap_code_class": int(msg.code) >> 5, "coap_code_detail": int(msg.code) & 0x1F,
            "coap_mid": msg.message_id, "coap_token": msg.token.hex(),
            "coap_option_count": len(msg.options), "coap_uri_path": msg.uri_path,
            "coap_payload_marker": int(bool(msg.payload)), "coap_payload_len": len(msg.payload),
            "coap_payload_head": msg.payload[:4].hex(),
        })
    return [cells.get(name, ABSENT) for name in schema.names]


def project_selected(row: Sequence, mask) -> list:
    mask = check_mask(mask, len(row))
    return [cell for cell, keep in zip(row, mask) if keep]


# -- tokenization --------------------------------------------------------------

@dataclass
class TokenVocabulary:
    """First-seen value lists per categorical column; token = 1 + position."""

    kinds: list[Kind]
    values: dict[int, list] = field(default_factory=dict)
    frozen: bool = False

    def __post_init__(self):
        self.kinds = [Kind(k) for k in self.kinds]
        self._lookup = {i: {v: t + 1 for t, v in enumerate(vals)} for i, vals in self.values.items()}

    def token(self, col: int, value) -> int:
        if value is ABSENT:
            return PAD_TOKEN
        table = self._lookup.setdefault(col, {})
        tok = table.get(value)
        if tok is None:
            if self.frozen:
                return PAD_TOKEN
            seen = self.values.setdefault(col, [])
            seen.append(value)
            tok = table[value] = len(seen)
        return tok

    def value(self, col: int, token: int):
        if token == PAD_TOKEN:
            return ABSENT
        return self.values[col][token - 1]

    def freeze(self) -> "TokenVocabulary":
        self.frozen = True
        return self

    def to_json(self) -> dict:
        return {"kinds": [k.value for k in self.kinds],
                "values": {str(i): v for i, v in sorted(self.values.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "TokenVocabulary":
        return cls(d["kinds"], {int(i): list(v) for i, v in d["values"].items()}, frozen=True)


def tokenize(rows: Sequence[Sequence], vocab: TokenVocabulary) -> np.ndarray:
    """Numeric matrix for ``rows``; categorical cells become tokens, absent cells 0.

    Unless the vocabulary is frozen, unseen categorical values are appended to
    their column's list as they are met.
    """
    width = len(vocab.kinds)
    out = np.zeros((len(rows), width), dtype=np.float64)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise FeatureError(f"row has {len(row)} cells, vocabulary expects {width}")
        for c, (cell, kind) in enumerate(zip(row, vocab.kinds)):
            if cell is ABSENT:
                continue
            out[r, c] = vocab.token(c, cell) if kind is Kind.CATEGORICAL else float(cell)
    return out


def detokenize(matrix: np.ndarray, vocab: TokenVocabulary) -> list[list]:
    rows = []
    for vec in np.asarray(matrix):
        rows.append([vocab.value(c, int(x)) if kind is Kind.CATEGORICAL else float(x)
                     for c, (x, kind) in enumerate(zip(vec, vocab.kinds))])
    return rows


# -- padding, normalization, flattening ------------------------------------------

def pad_windows(windows: Sequence[np.ndarray], pad_row=None, length: int | None = None) -> np.ndarray:
    """Stack ragged ``rows_j x d`` matrices into a ``(w, n, d)`` tensor.

    Shorter windows are extended with copies of ``pad_row`` (zeros by default)
    up to ``n = max rows``.  When ``length`` is given it replaces the maximum and
    longer windows are truncated to it.
    """
    if not len(windows):
        raise FeatureError("cannot pad an empty tensor")
    d = np.asarray(windows[0]).shape[1]
    pad = np.zeros(d) if pad_row is None else np.asarray(pad_row, dtype=np.float64)
    if pad.shape != (d,):
        raise FeatureError(f"pad row has shape {pad.shape}, expected ({d},)")
    n = max(len(w) for w in windows) if length is None else length
    out = np.empty((len(windows), n, d), dtype=np.float64)
    for j, w in enumerate(windows):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != d:
            raise FeatureError(f"window {j} has shape {w.shape}")
        k = min(len(w), n)
        out[j, :k] = w[:k]
        out[j, k:] = pad
    return out


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def frobenius_normalize(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    norm = frobenius_norm(a)
    if norm == 0.0 or not np.isfinite(norm):
        raise NormalizationError("matrix has zero (or non-finite) Frobenius norm")
    return a / norm


def normalize_windows(tensor: np.ndarray) -> np.ndarray:
    return np.stack([frobenius_normalize(w) for w in tensor])


def flatten_window(w: np.ndarray) -> np.ndarray:
    return np.asarray(w).reshape(-1)


def unflatten_window(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(-1, d)


# -- window featurizer ---------------------------------------------------------

@dataclass
class WindowFeaturizer:
    """Vocabulary and padding length learned on training windows only."""

    mask: np.ndarray = field(default_factory=default_mask)
    schema: FeatureSchema = DEFAULT_SCHEMA
    pad_row: np.ndarray | None = None
    vocab: TokenVocabulary | None = None
    length: int | None = None

    def __post_init__(self):
        self.mask = check_mask(self.mask, len(self.schema))
        self.selected = self.schema.select(self.mask)

    def rows(self, packets: Sequence[PacketRecord]) -> list[list]:
        return [project_selected(extract_features(p, self.schema), self.mask) for p in packets]

    def fit(self, windows: Sequence[Sequence[PacketRecord]]) -> "WindowFeaturizer":
        self.vocab = TokenVocabulary(self.selected.kinds)
        for pkts in windows:
            tokenize(self.rows(pkts), self.vocab)
        self.vocab.freeze()
        self.length = max(len(pkts) for pkts in windows)
        return self

    def transform(self, windows: Sequence[Sequence[PacketRecord]]) -> np.ndarray:
        """Padded, per-window normalized tensor of shape ``(w, n, d)``."""
        if self.vocab is None:
            raise FeatureError("featurizer is not fitted")
        mats = [tokenize(self.rows(pkts), self.vocab) for pkts in windows]
        return normalize_windows(pad_windows(mats, self.pad_row, self.length))


# -- tensor export -------------------------------------------------------------

TENSOR_HEADER = struct.Struct("<QQQ")


def write_tensor(path, tensor: np.ndarray, labels, sidecar: dict | None = None) -> Path:
    """Binary ``{count, n, d}`` header plus little-endian float64 body and a JSON sidecar."""
    tensor = np.ascontiguousarray(tensor, dtype="<f8")
    if tensor.ndim != 3:
        raise FeatureError("expected a (windows, n, d) tensor")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(TENSOR_HEADER.pack(*tensor.shape))
        fh.write(tensor.tobytes())
    meta = dict(sidecar or {})
    meta["labels"] = [int(y) for y in labels]
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return side


def read_tensor(path) -> tuple[np.ndarray, np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < TENSOR_HEADER.size:
        raise FeatureError("truncated tensor header")
    shape = TENSOR_HEADER.unpack_from(raw)
    if len(raw) - TENSOR_HEADER.size != 8 * shape[0] * shape[1] * shape[2]:
        raise FeatureError("tensor body does not match its header")
    body = np.frombuffer(raw, dtype="<f8", offset=TENSOR_HEADER.size)
    meta = json.loads(path.with_suffix(".json").read_text())
    return body.reshape(shape).copy(), np.asarray(meta["labels"], dtype=np.int64), meta
