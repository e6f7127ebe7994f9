"""Ethernet/IPv4/UDP framing, classic pcap files and attack logs.

Frames are kept as :class:`PacketRecord` values whose header fields are
explicit, so the feature extractor never has to re-parse bytes.  ``to_bytes``
and :func:`parse_frame` convert between the two forms exactly.
"""

from __future__ import annotations

import ipaddress
import json
import struct
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

ETH_TYPE_IPV4 = 0x0800
IP_PROTO_UDP = 17
IP_FLAG_DF = 0x2
ETH_HEADER_LEN = 14
IP_HEADER_LEN = 20
UDP_HEADER_LEN = 8
MAX_UDP_PAYLOAD = 65507

PCAP_MAGIC = 0xA1B2C3D4
PCAP_MAGIC_SWAPPED = 0xD4C3B2A1
PCAP_VERSION = (2, 4)
PCAP_SNAPLEN = 65535
LINKTYPE_ETHERNET = 1
PCAP_GLOBAL_HEADER = struct.Struct("<IHHiIII")
PCAP_RECORD_HEADER = struct.Struct("<IIII")

ATTACK_LOG_SCHEMA = 1


class CaptureError(ValueError):
    """Malformed frame, pcap file or attack log."""


# -- checksums -------------------------------------------------------------

def ones_complement_sum(data: bytes) -> int:
    """16-bit ones'-complement sum of ``data`` (odd lengths zero-padded)."""
    if len(data) % 2:
        data = bytes(data) + b"\x00"
    total = int(np.frombuffer(data, dtype=">u2").sum(dtype=np.uint64))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def internet_checksum(data: bytes) -> int:
    return ~ones_complement_sum(data) & 0xFFFF


def _ip_bytes(addr: str) -> bytes:
    return ipaddress.IPv4Address(addr).packed


def _udp_pseudo_header(src_ip: str, dst_ip: str, udp_len: int) -> bytes:
    return _ip_bytes(src_ip) + _ip_bytes(dst_ip) + struct.pack("!BBH", 0, IP_PROTO_UDP, udp_len)


def udp_checksum(src_ip: str, dst_ip: str, src_port: int, dst_port: int, payload: bytes) -> int:
    udp_len = UDP_HEADER_LEN + len(payload)
    segment = struct.pack("!HHHH", src_port, dst_port, udp_len, 0) + payload
    value = internet_checksum(_udp_pseudo_header(src_ip, dst_ip, udp_len) + segment)
    # 0 means "no checksum" on the wire
    return value or 0xFFFF


# -- packet records --------------------------------------------------------

def mac_bytes(mac: str) -> bytes:
    return bytes(int(part, 16) for part in mac.split(":"))


def mac_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


@dataclass(frozen=True)
class PacketRecord:
    ts: int  # microseconds since the capture epoch
    eth_src: str
    eth_dst: str
    eth_type: int
    ip_version: int
    ip_ihl: int
    ip_tos: int
    ip_len: int
    ip_id: int
    ip_flags: int
    ip_frag: int
    ip_ttl: int
    ip_proto: int
    ip_chksum: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    udp_len: int
    udp_chksum: int
    payload: bytes

    def ip_header(self, checksum: int | None = None) -> bytes:
        chk = self.ip_chksum if checksum is None else checksum
        return struct.pack(
            "!BBHHHBBH4s4s",
            self.ip_version << 4 | self.ip_ihl,
            self.ip_tos,
            self.ip_len,
            self.ip_id,
            self.ip_flags << 13 | self.ip_frag,
            self.ip_ttl,
            self.ip_proto,
            chk,
            _ip_bytes(self.src_ip),
            _ip_bytes(self.dst_ip),
        )

    def to_bytes(self) -> bytes:
        eth = mac_bytes(self.eth_dst) + mac_bytes(self.eth_src) + struct.pack("!H", self.eth_type)
        udp = struct.pack("!HHHH", self.src_port, self.dst_port, self.udp_len, self.udp_chksum)
        return eth + self.ip_header() + udp + self.payload

    @property
    def frame_len(self) -> int:
        return ETH_HEADER_LEN + self.ip_len


def frame_packet(payload: bytes, src, dst, ts: int, ip_id: int = 0, ttl: int = 64) -> PacketRecord:
    """Wrap an application payload (e.g. encoded CoAP) in UDP/IPv4/Ethernet.

    ``src`` and ``dst`` are endpoint objects with ``ip``, ``port`` and ``mac``.
    Length and checksum fields are filled in consistently.
    """
    payload = bytes(payload)
    if len(payload) > MAX_UDP_PAYLOAD:
        raise CaptureError(f"payload of {len(payload)} bytes does not fit one datagram")
    udp_len = UDP_HEADER_LEN + len(payload)
    rec = PacketRecord(
        ts=int(ts), eth_src=src.mac, eth_dst=dst.mac, eth_type=ETH_TYPE_IPV4,
        ip_version=4, ip_ihl=5, ip_tos=0, ip_len=IP_HEADER_LEN + udp_len,
        ip_id=ip_id & 0xFFFF, ip_flags=IP_FLAG_DF, ip_frag=0, ip_ttl=ttl,
        ip_proto=IP_PROTO_UDP, ip_chksum=0, src_ip=src.ip, dst_ip=dst.ip,
        src_port=src.port, dst_port=dst.port, udp_len=udp_len, udp_chksum=0,
        payload=payload,
    )
    ip_chk = internet_checksum(rec.ip_header(checksum=0))
    udp_chk = udp_checksum(src.ip, dst.ip, src.port, dst.port, payload)
    return replace(rec, ip_chksum=ip_chk, udp_chksum=udp_chk)


def frame_coap(msg, src, dst, ts: int, ip_id: int = 0) -> PacketRecord:
    from .coap import encode_message
    return frame_packet(encode_message(msg), src, dst, ts, ip_id)


def parse_frame(frame: bytes, ts: int) -> PacketRecord:
    if len(frame) < ETH_HEADER_LEN + IP_HEADER_LEN + UDP_HEADER_LEN:
        raise CaptureError(f"frame too short ({len(frame)} bytes)")
    eth_type = struct.unpack_from("!H", frame, 12)[0]
    if eth_type != ETH_TYPE_IPV4:
        raise CaptureError(f"unsupported ethertype 0x{eth_type:04x}")
    (vihl, tos, ip_len, ip_id, flags_frag, ttl, proto, chk,
     src, dst) = struct.unpack_from("!BBHHHBBH4s4s", frame, ETH_HEADER_LEN)
    if vihl >> 4 != 4 or vihl & 0xF != 5:
        raise CaptureError("only IPv4 without options is supported")
    if proto != IP_PROTO_UDP:
        raise CaptureError(f"unsupported IP protocol {proto}")
    off = ETH_HEADER_LEN + IP_HEADER_LEN
    sport, dport, udp_len, udp_chk = struct.unpack_from("!HHHH", frame, off)
    end = ETH_HEADER_LEN + ip_len
    if end > len(frame) or udp_len != ip_len - IP_HEADER_LEN:
        raise CaptureError("inconsistent IP/UDP lengths")
    return PacketRecord(
        ts=int(ts), eth_src=mac_str(frame[6:12]), eth_dst=mac_str(frame[0:6]),
        eth_type=eth_type, ip_version=4, ip_ihl=5, ip_tos=tos, ip_len=ip_len,
        ip_id=ip_id, ip_flags=flags_frag >> 13, ip_frag=flags_frag & 0x1FFF,
        ip_ttl=ttl, ip_proto=proto, ip_chksum=chk,
        src_ip=str(ipaddress.IPv4Address(src)), dst_ip=str(ipaddress.IPv4Address(dst)),
        src_port=sport, dst_port=dport, udp_len=udp_len, udp_chksum=udp_chk,
        payload=bytes(frame[off + UDP_HEADER_LEN:end]),
    )


def ip_checksum_ok(rec: PacketRecord) -> bool:
    return ones_complement_sum(rec.ip_header()) == 0xFFFF


def udp_checksum_ok(rec: PacketRecord) -> bool:
    segment = struct.pack("!HHHH", rec.src_port, rec.dst_port, rec.udp_len, rec.udp_chksum)
    pseudo = _udp_pseudo_header(rec.src_ip, rec.dst_ip, rec.udp_len)
    return ones_complement_sum(pseudo + segment + rec.payload) == 0xFFFF


def verify_checksums(rec: PacketRecord) -> bool:
    lengths_ok = (rec.udp_len == UDP_HEADER_LEN + len(rec.payload)
                  and rec.ip_len == IP_HEADER_LEN + rec.udp_len)
    return lengths_ok and ip_checksum_ok(rec) and udp_checksum_ok(rec)


# -- pcap ------------------------------------------------------------------

def write_pcap(records: Iterable[PacketRecord], path) -> None:
    prev = None
    with open(path, "wb") as fh:
        fh.write(PCAP_GLOBAL_HEADER.pack(PCAP_MAGIC, *PCAP_VERSION, 0, 0,
                                         PCAP_SNAPLEN, LINKTYPE_ETHERNET))
        for rec in records:
            if prev is not None and rec.ts < prev:
                raise CaptureError("records must be time-ordered")
            prev = rec.ts
            frame = rec.to_bytes()
            sec, usec = divmod(rec.ts, 1_000_000)
            fh.write(PCAP_RECORD_HEADER.pack(sec, usec, len(frame), len(frame)))
            fh.write(frame)


def iter_pcap(path):
    """Yield ``(ts_us, frame_bytes)`` from a classic Ethernet pcap file."""
    data = Path(path).read_bytes()
    if len(data) < PCAP_GLOBAL_HEADER.size:
        raise CaptureError("truncated pcap global header")
    magic = struct.unpack_from("<I", data)[0]
    if magic == PCAP_MAGIC:
        endian = "<"
    elif magic == PCAP_MAGIC_SWAPPED:
        endian = ">"
    else:
        raise CaptureError(f"bad pcap magic 0x{magic:08x}")
    _, major, minor, _, _, _, linktype = struct.unpack_from(endian + "IHHiIII", data)
    if (major, minor) != PCAP_VERSION:
        raise CaptureError(f"unsupported pcap version {major}.{minor}")
    if linktype != LINKTYPE_ETHERNET:
        raise CaptureError(f"unsupported linktype {linktype}")
    rec_hdr = struct.Struct(endian + "IIII")
    pos = PCAP_GLOBAL_HEADER.size
    while pos < len(data):
        if pos + rec_hdr.size > len(data):
            raise CaptureError("truncated pcap record header")
        sec, usec, incl, _orig = rec_hdr.unpack_from(data, pos)
        pos += rec_hdr.size
        if pos + incl > len(data):
            raise CaptureError("truncated pcap record")
        yield sec * 1_000_000 + usec, data[pos:pos + incl]
        pos += incl


def read_pcap(path) -> list[PacketRecord]:
    return [parse_frame(frame, ts) for ts, frame in iter_pcap(path)]


# -- NDJSON debug export ---------------------------------------------------

def write_packets_ndjson(records: Iterable[PacketRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            row = asdict(rec)
            row["payload"] = rec.payload.hex()
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_packets_ndjson(path) -> list[PacketRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                row["payload"] = bytes.fromhex(row["payload"])
                out.append(PacketRecord(**row))
    return out


# -- attack log ------------------------------------------------------------

@dataclass(frozen=True)
class AttackEvent:
    attacker_ip: str
    start: int  # microseconds
    end: int
    packets_sent: int

    def to_json(self) -> dict:
        return {"attacker_ip": self.attacker_ip, "start_us": self.start,
                "end_us": self.end, "packets_sent": self.packets_sent}


def sort_events(events: Iterable[AttackEvent]) -> list[AttackEvent]:
    return sorted(events, key=lambda e: (e.start, e.attacker_ip))


def attack_log_json(events: Iterable[AttackEvent]) -> str:
    events = list(events)
    if events != sort_events(events):
        raise CaptureError("attack events must be sorted by start time")
    doc = {"schema_version": ATTACK_LOG_SCHEMA, "events": [e.to_json() for e in events]}
    return json.dumps(doc, separators=(",", ":"))


def write_attack_log(events: Iterable[AttackEvent], path) -> None:
    Path(path).write_text(attack_log_json(events) + "\n")


def parse_attack_log(text: str) -> list[AttackEvent]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaptureError(f"malformed attack log: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != ATTACK_LOG_SCHEMA:
        raise CaptureError(f"unknown attack log schema: {doc.get('schema_version') if isinstance(doc, dict) else doc!r}")
    try:
        return [AttackEvent(str(e["attacker_ip"]), int(e["start_us"]), int(e["end_us"]),
                            int(e["packets_sent"])) for e in doc["events"]]
    except (KeyError, TypeError) as exc:
        raise CaptureError(f"malformed attack event: {exc}") from None


def read_attack_log(path) -> list[AttackEvent]:
    return parse_attack_log(Path(path).read_text())


# -- statistics ------------------------------------------------------------

@dataclass(frozen=True)
class DatasetStats:
    total: int
    attack_requests: int
    attack_fraction: float

    @property
    def attack_percent(self) -> float:
        return 100.0 * self.attack_fraction


def stats_from_counts(counts_by_src: Mapping[str, int], malicious_ips, total: int | None = None) -> DatasetStats:
    """Attack share given per-source packet counts.

    ``total`` defaults to the sum of ``counts_by_src``; pass it explicitly when
    the counts cover only part of the capture.
    """
    malicious_ips = set(malicious_ips)
    attack = sum(n for ip, n in counts_by_src.items() if ip in malicious_ips)
    total = sum(counts_by_src.values()) if total is None else total
    if total <= 0:
        raise CaptureError("attack fraction undefined for an empty capture")
    if attack > total:
        raise CaptureError("attack packets exceed total")
    return DatasetStats(total, attack, attack / total)


def dataset_stats(records: Iterable[PacketRecord], malicious_ips) -> DatasetStats:
    counts = Counter(rec.src_ip for rec in records)
    return stats_from_counts(counts, malicious_ips)


RECORD_FIELDS = tuple(f.name for f in fields(PacketRecord))
