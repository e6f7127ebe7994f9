"""Deterministic emulation of the four-host CoAP DoS testbed.

One CoAP server, one benign client and two attackers exchange traffic on a
virtual clock.  Every request is answered by the server after a fixed service
latency, and each frame is recorded as a :class:`~coaplab.capture.PacketRecord`.
A run is a pure function of its :class:`ScenarioConfig`, seed included.
"""

from __future__ import annotations

import heapq
import itertools
import json
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .capture import AttackEvent, PacketRecord, frame_coap, sort_events
from .coap import Code, CoapMessage, make_request, make_response

US = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * US))


class Role(str, Enum):
    SERVER = "server"
    BENIGN = "benign"
    ATTACKER = "attacker"


class AttackerMode(str, Enum):
    COORDINATED = "coordinated"
    MIXED = "mixed"


class ClockMode(str, Enum):
    INSTANT = "instant"
    REALTIME = "realtime"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    role: Role
    ip: str
    port: int
    mac: str

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))


def endpoint_mac(index: int) -> str:
    """Locally administered MAC derived from the endpoint's position."""
    return "02:00:00:00:00:%02x" % (index + 1)


def default_endpoints() -> list[EndpointConfig]:
    # addresses from the original testbed
    hosts = [
        (Role.SERVER, "192.168.1.9", 8080),
        (Role.ATTACKER, "192.168.1.12", 50012),
        (Role.ATTACKER, "192.168.1.5", 50005),
        (Role.BENIGN, "192.168.1.2", 50002),
    ]
    return [EndpointConfig(role, ip, port, endpoint_mac(i)) for i, (role, ip, port) in enumerate(hosts)]


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 3610.0
    attack_interval: float = 600.0
    attack_burst_count: int = 300
    attack_payload_len: int = 9203
    benign_payload_min: int = 100
    benign_payload_max: int = 300
    benign_sleep_min: float = 2.0
    benign_sleep_max: float = 7.0
    attacker_mode: AttackerMode = AttackerMode.COORDINATED
    rng_seed: int = 0
    endpoints: tuple[EndpointConfig, ...] = field(default_factory=lambda: tuple(default_endpoints()))
    p_attack: float = 0.02
    burst_spacing: float = 0.001
    response_latency: float = 0.002
    uri_path: str = "data"
    clock: ClockMode = ClockMode.INSTANT

    def __post_init__(self):
        object.__setattr__(self, "attacker_mode", AttackerMode(self.attacker_mode))
        object.__setattr__(self, "clock", ClockMode(self.clock))
        eps = tuple(e if isinstance(e, EndpointConfig) else EndpointConfig(**e) for e in self.endpoints)
        object.__setattr__(self, "endpoints", eps)

    def validate(self) -> None:
        if self.duration < 0:
            raise ScenarioError("duration must be non-negative")
        if self.attack_interval <= 0:
            raise ScenarioError("attack_interval must be positive")
        if self.attack_burst_count <= 0:
            raise ScenarioError("attack_burst_count must be positive")
        if self.benign_payload_min > self.benign_payload_max:
            raise ScenarioError("benign_payload_min exceeds benign_payload_max")
        if self.benign_sleep_min > self.benign_sleep_max:
            raise ScenarioError("benign_sleep_min exceeds benign_sleep_max")
        if not 0.0 <= self.p_attack <= 1.0:
            raise ScenarioError("p_attack must be a probability")
        ips = [e.ip for e in self.endpoints]
        if len(set(ips)) != len(ips):
            raise ScenarioError("endpoint IPs must be unique")
        if sum(e.role == Role.SERVER for e in self.endpoints) != 1:
            raise ScenarioError("scenario needs exactly one server endpoint")

    @property
    def server(self) -> EndpointConfig:
        return next(e for e in self.endpoints if e.role == Role.SERVER)

    @property
    def attackers(self) -> list[EndpointConfig]:
        return [e for e in self.endpoints if e.role == Role.ATTACKER]

    @property
    def malicious_ips(self) -> frozenset[str]:
        return frozenset(e.ip for e in self.attackers)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attacker_mode"] = self.attacker_mode.value
        d["clock"] = self.clock.value
        d["endpoints"] = [dict(asdict(e), role=e.role.value) for e in self.endpoints]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        d = dict(d)
        if "endpoints" in d:
            d["endpoints"] = tuple(EndpointConfig(**e) for e in d["endpoints"])
        return cls(**d)


def load_config(path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid scenario JSON: {exc}") from None
    cfg = ScenarioConfig.from_dict(raw)
    cfg.validate()
    return cfg


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


# -- virtual clock and event loop --------------------------------------------

class VirtualClock:
    """Monotone microsecond clock.

    In ``INSTANT`` mode advancing is free; in ``REALTIME`` mode ``advance_to``
    sleeps so that virtual time tracks wall time from the first call.
    """

    def __init__(self, mode: ClockMode = ClockMode.INSTANT, start: int = 0):
        self.mode = ClockMode(mode)
        self.now = start
        self._origin = start
        self._wall0 = None

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise ScenarioError(f"clock cannot move backwards ({t} < {self.now})")
        if self.mode is ClockMode.REALTIME:
            if self._wall0 is None:
                self._wall0 = time.monotonic()
            lag = (t - self._origin) / US - (time.monotonic() - self._wall0)
            if lag > 0:
                time.sleep(lag)
        self.now = t


class Simulator:
    """Minimal discrete-event loop over generator processes.

    A process yields the absolute virtual time at which it wants to resume;
    ties are resolved by scheduling order, which keeps runs reproducible.
    """

    def __init__(self, clock: VirtualClock | None = None):
        self.clock = clock or VirtualClock()
        self._queue: list = []
        self._seq = itertools.count()

    def spawn(self, process, at: int = 0) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), process))

    def run(self, until: int | None = None) -> None:
        while self._queue:
            t, _, proc = heapq.heappop(self._queue)
            if until is not None and t > until:
                break
            self.clock.advance_to(t)
            try:
                resume = next(proc)
            except StopIteration:
                continue
            heapq.heappush(self._queue, (resume, next(self._seq), proc))


# -- client behaviour --------------------------------------------------------

@dataclass(frozen=True)
class BenignAction:
    method: Code
    payload_len: int
    sleep: float


@dataclass(frozen=True)
class DosBurst:
    pass


def benign_next_action(rng: np.random.Generator, cfg: ScenarioConfig) -> BenignAction:
    method = (Code.GET, Code.PUT, Code.POST)[int(rng.integers(3))]
    payload_len = int(rng.integers(cfg.benign_payload_min, cfg.benign_payload_max + 1))
    sleep = float(rng.uniform(cfg.benign_sleep_min, cfg.benign_sleep_max))
    return BenignAction(method, payload_len, sleep)


def text_payload(rng: np.random.Generator, n: int) -> bytes:
    return rng.integers(ord("a"), ord("z") + 1, size=n, dtype=np.uint8).tobytes()


def attacker_burst(rng: np.random.Generator, cfg: ScenarioConfig, first_message_id: int = 0) -> list[CoapMessage]:
    out = []
    for i in range(cfg.attack_burst_count):
        mid = (first_message_id + i) & 0xFFFF
        out.append(make_request(Code.PUT, text_payload(rng, cfg.attack_payload_len), mid,
                                token=mid.to_bytes(2, "big"), path=cfg.uri_path))
    return out


def attack_schedule(cfg: ScenarioConfig) -> list[tuple[str, int]]:
    """Coordinated burst starts: every attacker at 0, interval, 2*interval, ... < duration."""
    if cfg.attack_interval <= 0:
        raise ScenarioError("attack_interval must be positive")
    duration, step = to_us(cfg.duration), to_us(cfg.attack_interval)
    starts = range(0, duration, step)
    return [(a.ip, t) for t in starts for a in cfg.attackers]


def mixed_attacker_step(rng: np.random.Generator, cfg: ScenarioConfig):
    if cfg.attacker_mode is not AttackerMode.MIXED:
        raise ScenarioError("mixed_attacker_step requires attacker_mode='mixed'")
    if rng.random() < cfg.p_attack:
        return DosBurst()
    return benign_next_action(rng, cfg)


# -- scenario ----------------------------------------------------------------

class _Run:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.server = cfg.server
        self.duration = to_us(cfg.duration)
        self.latency = to_us(cfg.response_latency)
        self.spacing = to_us(cfg.burst_spacing)
        self.frames: list[tuple[int, int, PacketRecord]] = []
        self.events: list[AttackEvent] = []
        self._order = itertools.count()
        self._ip_id = {e.ip: 1000 * i for i, e in enumerate(cfg.endpoints)}
        self._mid = {e.ip: 0 for e in cfg.endpoints}

    def fits(self, t: int) -> bool:
        # the whole exchange, response included, must land inside the capture
        return t + self.latency <= self.duration

    def next_mid(self, ep: EndpointConfig) -> int:
        mid = self._mid[ep.ip]
        self._mid[ep.ip] = (mid + 1) & 0xFFFF
        return mid

    def _emit(self, msg: CoapMessage, src: EndpointConfig, dst: EndpointConfig, t: int) -> None:
        ip_id = self._ip_id[src.ip]
        self._ip_id[src.ip] = (ip_id + 1) & 0xFFFF
        self.frames.append((t, next(self._order), frame_coap(msg, src, dst, t, ip_id)))

    def exchange(self, req: CoapMessage, client: EndpointConfig, t: int) -> None:
        self._emit(req, client, self.server, t)
        body = b"ok" if req.code == Code.GET else b""
        self._emit(make_response(req, body), self.server, client, t + self.latency)

    def benign_request(self, rng, ep: EndpointConfig, action: BenignAction, t: int) -> None:
        payload = b"" if action.method == Code.GET else text_payload(rng, action.payload_len)
        mid = self.next_mid(ep)
        req = make_request(action.method, payload, mid, token=mid.to_bytes(2, "big"), path=self.cfg.uri_path)
        self.exchange(req, ep, t)

    def burst(self, rng, ep: EndpointConfig, t0: int) -> int:
        """Send one DoS burst starting at ``t0``; returns the time of the last packet."""
        msgs = attacker_burst(rng, self.cfg, self._mid[ep.ip])
        self._mid[ep.ip] = (self._mid[ep.ip] + len(msgs)) & 0xFFFF
        sent, last = 0, t0
        for i, msg in enumerate(msgs):
            t = t0 + i * self.spacing
            if not self.fits(t):
                break
            self.exchange(msg, ep, t)
            sent, last = sent + 1, t
        if sent:
            self.events.append(AttackEvent(ep.ip, t0, last, sent))
        return last

    # processes ------------------------------------------------------------

    def benign_client(self, rng, ep):
        t = 0
        while True:
            action = benign_next_action(rng, self.cfg)
            if not self.fits(t):
                return
            self.benign_request(rng, ep, action, t)
            t += self.latency + to_us(action.sleep)
            yield t

    def coordinated_attacker(self, rng, ep, starts):
        for t0 in starts:
            if t0 > 0:
                yield t0
            self.burst(rng, ep, t0)

    def mixed_attacker(self, rng, ep):
        t = 0
        while self.fits(t):
            step = mixed_attacker_step(rng, self.cfg)
            if isinstance(step, DosBurst):
                last = self.burst(rng, ep, t)
                sleep = float(rng.uniform(self.cfg.benign_sleep_min, self.cfg.benign_sleep_max))
                t = last + self.latency + to_us(sleep)
            else:
                self.benign_request(rng, ep, step, t)
                t += self.latency + to_us(step.sleep)
            yield t


def endpoint_rngs(cfg: ScenarioConfig) -> dict[str, np.random.Generator]:
    seqs = np.random.SeedSequence(cfg.rng_seed).spawn(len(cfg.endpoints))
    return {e.ip: np.random.default_rng(s) for e, s in zip(cfg.endpoints, seqs)}


def run_scenario(cfg: ScenarioConfig) -> tuple[list[PacketRecord], list[AttackEvent]]:
    cfg.validate()
    if cfg.duration == 0:
        return [], []
    run = _Run(cfg)
    rngs = endpoint_rngs(cfg)
    sim = Simulator(VirtualClock(cfg.clock))
    schedule = attack_schedule(cfg)
    for ep in cfg.endpoints:
        rng = rngs[ep.ip]
        if ep.role == Role.BENIGN:
            sim.spawn(run.benign_client(rng, ep))
        elif ep.role == Role.ATTACKER:
            if cfg.attacker_mode is AttackerMode.COORDINATED:
                starts = [t for ip, t in schedule if ip == ep.ip]
                sim.spawn(run.coordinated_attacker(rng, ep, starts))
            else:
                sim.spawn(run.mixed_attacker(rng, ep))
    sim.run()
    run.frames.sort(key=lambda f: (f[0], f[1]))
    return [f[2] for f in run.frames], sort_events(run.events)


def desk_scale_config(**overrides) -> ScenarioConfig:
    """The default one-hour scenario used for desk-scale verification."""
    return replace(ScenarioConfig(), **overrides)
