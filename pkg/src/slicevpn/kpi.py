"""Service-creation KPI measurement and tunnel benchmarks.

KPIs come off the instance record: the on-boarding delay (OPD) is the
infrastructure deployment span in the event log, and the deployment delay
(DPD) is the initial-configuration span plus the first add-peer round, the
point at which the service is actually able to carry traffic. Both are exact
simulated-clock quantities.

Benchmarks drive real traffic through the live tunnel: every byte counted
was sealed by one gateway table and authenticated by the other — there is no
plaintext shortcut. Over the in-memory backend results are simulated and
deterministic; over the UDP backend they are honest wall-clock measurements
of this host, and absolute numbers carry no contract.
"""

from __future__ import annotations

import statistics
import struct
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

from slicevpn.cryptokey import (
    CryptokeyError,
    CryptokeyRoutingTable,
    EncryptedEnvelope,
    PlainPacket,
)
from slicevpn.errors import SliceVpnError
from slicevpn.lifecycle import NetworkServiceInstance, Orchestrator
from slicevpn.transport import Handle, InMemoryBackend
from slicevpn.vimsim import format_seconds

_ECHO = struct.Struct(">QQ")  # sequence number, send timestamp (ns)


class KpiError(SliceVpnError):
    """Measurement preconditions not met (no events, tunnel not established)."""


@dataclass(frozen=True)
class KpiRecord:
    opd_s: Fraction
    dpd_s: Fraction
    per_action: dict[str, Fraction] = field(default_factory=dict)

    @property
    def total_s(self) -> Fraction:
        return self.opd_s + self.dpd_s


@dataclass(frozen=True)
class BenchResult:
    kind: str  # "throughput" | "latency"
    bytes_transferred: int
    duration_s: float
    latency_count: int = 0
    latency_mean_ms: float = 0.0
    latency_min_ms: float = 0.0
    latency_max_ms: float = 0.0
    latency_stddev_ms: float = 0.0
    timeouts: int = 0

    @property
    def throughput_bps(self) -> float:
        if not self.duration_s:
            return 0.0
        return 8 * self.bytes_transferred / self.duration_s

    @classmethod
    def from_latency_samples(cls, samples_ms: list[float], timeouts: int,
                             bytes_transferred: int, duration_s: float) -> "BenchResult":
        return cls(
            kind="latency",
            bytes_transferred=bytes_transferred,
            duration_s=duration_s,
            latency_count=len(samples_ms),
            latency_mean_ms=statistics.fmean(samples_ms) if samples_ms else 0.0,
            latency_min_ms=min(samples_ms) if samples_ms else 0.0,
            latency_max_ms=max(samples_ms) if samples_ms else 0.0,
            latency_stddev_ms=statistics.stdev(samples_ms) if len(samples_ms) > 1 else 0.0,
            timeouts=timeouts,
        )


# --- KPI measurement ------------------------------------------------------------


def measure_kpis(instance: NetworkServiceInstance) -> KpiRecord:
    """KPIs for one instance.

    OPD is the deploy-start..deploy-complete span. DPD is the span of the
    initial-config-primitive phase plus the first add-peer round (the
    per-member first add-peer durations overlap in parallel accounting, so
    the round contributes their maximum). Spans missing from a partial
    (Failed) log contribute zero.
    """
    if not instance.events:
        raise KpiError(f"instance {instance.id} has no events")
    ro_start = _event_ts(instance, "RO", "deploy-start")
    ro_end = _event_ts(instance, "RO", "deploy-complete")
    opd = (ro_end - ro_start) if ro_start is not None and ro_end is not None else Fraction(0)

    starts = []
    ends = []
    for record in instance.vnf_records:
        for prim in record.executed_primitives[:record.initial_count]:
            starts.append(prim.started_at)
            ends.append(prim.finished_at)
    initial_span = (max(ends) - min(starts)) if starts else Fraction(0)

    add_peer_durations = []
    per_action: dict[str, Fraction] = {}
    for record in instance.vnf_records:
        first = record.first_action("add-peer")
        if first is not None:
            add_peer_durations.append(first.duration)
        for prim in record.executed_primitives[record.initial_count:]:
            per_action.setdefault(prim.name, prim.duration)
    dpd = initial_span + (max(add_peer_durations) if add_peer_durations else Fraction(0))
    return KpiRecord(opd_s=opd, dpd_s=dpd, per_action=per_action)


def _event_ts(instance: NetworkServiceInstance, source: str, message: str) -> Fraction | None:
    for e in instance.events:
        if e.source == source and e.message == message:
            return e.ts
    return None


# --- tunnel harness -------------------------------------------------------------


@dataclass
class TunnelSide:
    table: CryptokeyRoutingTable
    handle: Handle
    inner_ip: str  # address this side sources echo traffic from


@dataclass
class TunnelPair:
    """The two live gateway datapaths a benchmark drives traffic between."""

    a: TunnelSide
    b: TunnelSide
    backend: object

    @classmethod
    def from_instance(cls, orch: Orchestrator, instance_id: str,
                      member_a: int | None = None, member_b: int | None = None,
                      inner_a: str | None = None, inner_b: str | None = None) -> "TunnelPair":
        instance = orch.instances.get(instance_id)
        if instance is None:
            raise KpiError(f"instance not found: {instance_id}")
        gateways = [r.member_index for r in instance.vnf_records if r.table is not None]
        defaults = [m for m in gateways if m not in (member_a, member_b)]
        if member_a is None:
            if not defaults:
                raise KpiError(f"instance {instance_id} has fewer than two gateways")
            member_a = defaults.pop(0)
        if member_b is None:
            if not defaults:
                raise KpiError(f"instance {instance_id} has fewer than two gateways")
            member_b = defaults.pop(0)
        rec_a = instance.record(member_a)
        rec_b = instance.record(member_b)
        sides = []
        for rec, inner in ((rec_a, inner_a), (rec_b, inner_b)):
            if rec.table is None:
                raise KpiError(f"member {rec.member_index} is not a gateway")
            if rec.handle is None or rec.handle.closed:
                raise KpiError(f"member {rec.member_index} has no bound transport (start-wg not run?)")
            sides.append(TunnelSide(rec.table, rec.handle, inner or rec.table.tunnel_address))
        return cls(a=sides[0], b=sides[1], backend=orch.backend)

    @property
    def simulated(self) -> bool:
        return isinstance(self.backend, InMemoryBackend)


def _deliver(side: TunnelSide, packet: PlainPacket):
    envelope, endpoint = side.table.send(packet)
    side.handle.send(endpoint, envelope.to_bytes())


def _reflect_one(side: TunnelSide, timeout_s: float | None) -> int:
    """Receive one datagram on a side, authenticate it, and echo it back.
    Returns the number of payload bytes reflected (0 on timeout/reject)."""
    datagram = side.handle.recv(timeout_s)
    if datagram is None:
        return 0
    try:
        packet = side.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src)
    except CryptokeyError:
        return 0
    reply = PlainPacket(src_ip=packet.dst_ip, dst_ip=packet.src_ip, payload=packet.payload)
    _deliver(side, reply)
    return len(packet.payload)


class _UdpReflector:
    """Background echo service owning side B while a benchmark probes from A."""

    def __init__(self, side: TunnelSide):
        self.side = side
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        while not self._stop.is_set():
            _reflect_one(self.side, timeout_s=0.05)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        self._thread.join()


def _recv_matching(side: TunnelSide, seq: int, deadline: float) -> PlainPacket | None:
    """Wait for the authenticated echo of a given sequence number."""
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return None
        datagram = side.handle.recv(remaining)
        if datagram is None:
            return None
        try:
            packet = side.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src)
        except CryptokeyError:
            continue
        if len(packet.payload) >= _ECHO.size and _ECHO.unpack_from(packet.payload)[0] == seq:
            return packet
        # stale echo of an earlier probe: keep waiting


def run_latency(pair: TunnelPair, n_requests: int, timeout_s: float = 2.0) -> BenchResult:
    """Round-trip n echo requests through the tunnel, one at a time."""
    if pair.simulated:
        return _run_latency_sim(pair, n_requests)
    samples_ms: list[float] = []
    timeouts = 0
    bytes_ok = 0
    started = time.perf_counter()
    with _UdpReflector(pair.b):
        for seq in range(n_requests):
            payload = _ECHO.pack(seq, time.perf_counter_ns())
            t0 = time.perf_counter()
            _deliver(pair.a, PlainPacket(pair.a.inner_ip, pair.b.inner_ip, payload))
            packet = _recv_matching(pair.a, seq, t0 + timeout_s)
            if packet is None:
                timeouts += 1
                continue
            samples_ms.append((time.perf_counter() - t0) * 1000.0)
            bytes_ok += len(packet.payload)
    duration = time.perf_counter() - started
    return BenchResult.from_latency_samples(samples_ms, timeouts, bytes_ok, duration)


def _run_latency_sim(pair: TunnelPair, n_requests: int) -> BenchResult:
    clock = pair.backend.clock
    samples_ms: list[float] = []
    timeouts = 0
    bytes_ok = 0
    started = clock.now
    for seq in range(n_requests):
        payload = _ECHO.pack(seq, 0)
        t0 = clock.now
        _deliver(pair.a, PlainPacket(pair.a.inner_ip, pair.b.inner_ip, payload))
        _reflect_one(pair.b, None)
        datagram = pair.a.handle.recv(None)
        if datagram is None:
            timeouts += 1
            continue
        try:
            packet = pair.a.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src)
        except CryptokeyError:
            timeouts += 1
            continue
        samples_ms.append(float((clock.now - t0) * 1000))
        bytes_ok += len(packet.payload)
    duration = float(clock.now - started)
    return BenchResult.from_latency_samples(samples_ms, timeouts, bytes_ok, duration)


def _probe(pair: TunnelPair):
    """One echo round-trip; raises if the tunnel is not established."""
    try:
        result = run_latency(pair, 1, timeout_s=2.0)
    except CryptokeyError as exc:
        raise KpiError(f"tunnel not established: {exc}") from exc
    if result.latency_count != 1:
        raise KpiError("tunnel not established (echo probe got no authenticated reply)")


_WINDOW = 8  # packets per burst; bursts must fit the receive buffer or they drop


def run_throughput(pair: TunnelPair, duration_s: float = 10.0,
                   payload_size: int = 8192) -> BenchResult:
    """Stream traffic one way through the tunnel at the maximum sustainable
    rate and report the authenticated goodput at the receiver.

    The sender self-clocks on small authenticated acks (one per window), so
    goodput measures the datapath instead of kernel buffer drop patterns;
    a lost ack only stalls one window until the retry timer fires.
    """
    _probe(pair)
    payload = bytes(payload_size)
    if pair.simulated:
        return _run_throughput_sim(pair, duration_s, payload)

    stop = threading.Event()
    packet = PlainPacket(pair.a.inner_ip, pair.b.inner_ip, payload)

    def pump():
        while not stop.is_set():
            for _ in range(_WINDOW):
                _deliver(pair.a, packet)
            while not stop.is_set():
                datagram = pair.a.handle.recv(0.2)
                if datagram is None:
                    break  # ack lost; optimistically send the next window
                try:
                    pair.a.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src)
                    break
                except CryptokeyError:
                    continue

    received = 0
    since_ack = 0
    ack = PlainPacket(pair.b.inner_ip, pair.a.inner_ip, b"ack")
    sender = threading.Thread(target=pump, daemon=True)
    started = time.perf_counter()
    deadline = started + duration_s
    sender.start()
    try:
        while True:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                break
            datagram = pair.b.handle.recv(min(remaining, 0.05))
            if datagram is None:
                continue
            try:
                pkt = pair.b.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src)
            except CryptokeyError:
                continue
            received += len(pkt.payload)
            since_ack += 1
            if since_ack >= _WINDOW:
                since_ack = 0
                _deliver(pair.b, ack)
    finally:
        stop.set()
        sender.join()
    elapsed = time.perf_counter() - started
    return BenchResult(kind="throughput", bytes_transferred=received, duration_s=elapsed)


def _run_throughput_sim(pair: TunnelPair, duration_s: float, payload: bytes) -> BenchResult:
    backend = pair.backend
    if backend.latency_s <= 0:
        raise KpiError("simulated throughput needs a backend latency > 0 to carry time")
    clock = backend.clock
    started = clock.now
    deadline = started + Fraction(duration_s)
    received = 0
    packet = PlainPacket(pair.a.inner_ip, pair.b.inner_ip, payload)
    while clock.now < deadline:
        _deliver(pair.a, packet)
        datagram = pair.b.handle.recv(None)
        if datagram is None:
            break
        try:
            pkt = pair.b.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src)
        except CryptokeyError:
            continue
        received += len(pkt.payload)
    elapsed = float(clock.now - started)
    return BenchResult(kind="throughput", bytes_transferred=received, duration_s=elapsed)


# --- reporting ------------------------------------------------------------------


class Report(NamedTuple):
    text: str
    machine: str  # line-delimited key=value


def _fmt_ms(value: float) -> str:
    return f"{value:.3f}"


def report(record: KpiRecord | BenchResult) -> Report:
    """Human text plus a line-delimited key=value machine record, with a
    stable field order; byte-identical across runs for equal records."""
    if isinstance(record, KpiRecord):
        lines = [
            "service creation KPIs",
            f"  OPD: {format_seconds(record.opd_s)} s",
            f"  DPD: {format_seconds(record.dpd_s)} s",
            f"  total: {format_seconds(record.total_s)} s",
        ]
        machine = [
            f"opd_s={format_seconds(record.opd_s)}",
            f"dpd_s={format_seconds(record.dpd_s)}",
            f"total_s={format_seconds(record.total_s)}",
        ]
        for name in sorted(record.per_action):
            lines.append(f"  action {name}: {format_seconds(record.per_action[name])} s")
            machine.append(f"action.{name}={format_seconds(record.per_action[name])}")
        return Report("\n".join(lines), "\n".join(machine))
    if isinstance(record, BenchResult):
        lines = [
            f"benchmark: {record.kind}",
            f"  samples: {record.latency_count}",
            f"  timeouts: {record.timeouts}",
            f"  bytes: {record.bytes_transferred}",
            f"  duration: {record.duration_s:.3f} s",
            f"  throughput: {record.throughput_bps:.0f} bit/s",
            "  latency mean/min/max/stddev: "
            f"{_fmt_ms(record.latency_mean_ms)}/{_fmt_ms(record.latency_min_ms)}/"
            f"{_fmt_ms(record.latency_max_ms)}/{_fmt_ms(record.latency_stddev_ms)} ms",
        ]
        machine = [
            f"kind={record.kind}",
            f"samples={record.latency_count}",
            f"timeouts={record.timeouts}",
            f"bytes={record.bytes_transferred}",
            f"duration_s={record.duration_s:.6f}",
            f"throughput_bps={record.throughput_bps:.3f}",
            f"latency_mean_ms={_fmt_ms(record.latency_mean_ms)}",
            f"latency_min_ms={_fmt_ms(record.latency_min_ms)}",
            f"latency_max_ms={_fmt_ms(record.latency_max_ms)}",
            f"latency_stddev_ms={_fmt_ms(record.latency_stddev_ms)}",
        ]
        return Report("\n".join(lines), "\n".join(machine))
    raise KpiError(f"cannot report a {type(record).__name__}")
