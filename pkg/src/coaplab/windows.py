"""Fixed-width time windows and the packet-count labeling rule."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

from .capture import AttackEvent, PacketRecord

WINDOW_US = 10_000_000
DEFAULT_THRESHOLD = 350


class Label(IntEnum):
    BENIGN = 0
    MALICIOUS = 1


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowWindow:
    index: int
    start: int
    width: int
    packets: tuple[PacketRecord, ...]

    @property
    def end(self) -> int:
        return self.start + self.width


@dataclass(frozen=True)
class LabeledWindow:
    window: FlowWindow
    label: Label

    @property
    def index(self) -> int:
        return self.window.index


def split_windows(records: Sequence[PacketRecord], width: int = WINDOW_US) -> list[FlowWindow]:
    """Partition a time-ordered capture into half-open windows anchored at the first packet.

    Window ``k`` covers ``[first_ts + k*width, first_ts + (k+1)*width)``.  Windows with
    no packets are dropped, so indices can skip.
    """
    if width <= 0:
        raise WindowError("window width must be positive")
    if not records:
        raise WindowError("cannot split an empty capture")
    origin = records[0].ts
    buckets: dict[int, list[PacketRecord]] = {}
    prev = origin
    for rec in records:
        if rec.ts < prev:
            raise WindowError("records must be time-ordered")
        prev = rec.ts
        buckets.setdefault((rec.ts - origin) // width, []).append(rec)
    return [FlowWindow(k, origin + k * width, width, tuple(pkts)) for k, pkts in sorted(buckets.items())]


def malicious_count(window: FlowWindow, malicious_ips) -> int:
    return sum(1 for p in window.packets if p.src_ip in malicious_ips)


def label_window(window: FlowWindow, malicious_ips, threshold: float = DEFAULT_THRESHOLD) -> Label:
    # "in excess of" the threshold: strictly greater
    return Label.MALICIOUS if malicious_count(window, set(malicious_ips)) > threshold else Label.BENIGN


def label_dataset(records: Sequence[PacketRecord], malicious_ips, width: int = WINDOW_US,
                  threshold: float = DEFAULT_THRESHOLD) -> list[LabeledWindow]:
    ips = set(malicious_ips)
    return [LabeledWindow(w, label_window(w, ips, threshold)) for w in split_windows(records, width)]


@dataclass(frozen=True)
class Disagreement:
    window_index: int
    start: int
    count_label: Label
    log_label: Label


def overlaps(window: FlowWindow, event: AttackEvent) -> bool:
    # window is [start, end), event is the closed interval [start, end]
    return event.start < window.end and event.end >= window.start


def crosscheck_labels(labeled: Iterable[LabeledWindow], events: Iterable[AttackEvent]) -> list[Disagreement]:
    """Windows whose count-rule label differs from "overlaps a logged burst"."""
    events = sorted(events, key=lambda e: e.start)
    out = []
    for lw in labeled:
        w = lw.window
        hit = any(overlaps(w, e) for e in events)
        log_label = Label.MALICIOUS if hit else Label.BENIGN
        if log_label != lw.label:
            out.append(Disagreement(w.index, w.start, lw.label, log_label))
    return out


def windows_overlapping(windows: Iterable[FlowWindow], events: Iterable[AttackEvent]) -> set[int]:
    events = list(events)
    return {w.index for w in windows if any(overlaps(w, e) for e in events)}


def packet_labels(labeled: Iterable[LabeledWindow]) -> list[tuple[PacketRecord, Label]]:
    """Per-packet labels, each packet inheriting its window's label."""
    return [(p, lw.label) for lw in labeled for p in lw.window.packets]


# -- NDJSON export -------------------------------------------------------------

def write_windows_ndjson(labeled: Iterable[LabeledWindow], path) -> dict:
    """Write one line per window and return the summary counts."""
    labeled = list(labeled)
    with open(path, "w") as fh:
        for lw in labeled:
            fh.write(json.dumps({
                "window_index": lw.window.index,
                "start_us": lw.window.start,
                "label": lw.label.name.lower(),
                "packet_count": len(lw.window.packets),
            }) + "\n")
    return summarize(labeled)


def read_windows_ndjson(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def summarize(labeled: Sequence[LabeledWindow]) -> dict:
    mal = sum(lw.label == Label.MALICIOUS for lw in labeled)
    return {"windows": len(labeled), "malicious": mal, "benign": len(labeled) - mal}


def relabel_from_rows(records: Sequence[PacketRecord], rows: Sequence[dict], width: int = WINDOW_US) -> list[LabeledWindow]:
    """Rebuild labeled windows from a capture and its exported NDJSON labels."""
    wins = {w.index: w for w in split_windows(records, width)}
    out = []
    for row in rows:
        w = wins.get(row["window_index"])
        if w is None or w.start != row["start_us"] or len(w.packets) != row["packet_count"]:
            raise WindowError(f"window {row['window_index']} does not match the capture")
        out.append(LabeledWindow(w, Label[row["label"].upper()]))
    return out

