"""The NAT device model.

A NatBox rewrites outbound client traffic to its public address, keeps a
session-mapping table keyed both by internal tuple and by external port,
translates inbound packets and ICMP errors back, and answers pings to the
public address itself.  The policy axes decide whether the device is
vulnerable: how it reacts to inbound RSTs, what it does with unmapped
inbound segments, how external ports are allocated, and whether its own
path-MTU cache follows translated Fragmentation Needed messages.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from . import wire
from .endpoint import DEFAULT_RCV_WND, PathMtuCache
from .fabric import Simulator, derive_rng
from .wire import (
    EchoReply,
    EchoRequest,
    FragNeeded,
    Ipv4Datagram,
    Protocol,
    TcpFlag,
    TcpSegment,
    seq_add,
    seq_in_range,
)


class RstHandling(Enum):
    VULNERABLE_REMOVE = "vulnerable-remove"
    FORWARD_ONLY = "forward-only"
    STRICT_VALIDATE = "strict-validate"


class UnmappedInbound(Enum):
    RST_REPLY = "rst-reply"
    SILENT_DROP = "silent-drop"


class PortAllocation(Enum):
    PRESERVING = "preserving"
    SEQUENTIAL = "sequential"
    SEEDED_RANDOM = "seeded-random"


class PmtudSync(Enum):
    LEAKY_SIDE_CHANNEL = "leaky"
    SYNCHRONIZED = "synchronized"


@dataclass(frozen=True)
class NatPolicy:
    rst_handling: RstHandling = RstHandling.VULNERABLE_REMOVE
    require_ack_flag_on_rst: bool = False
    unmapped_inbound: UnmappedInbound = UnmappedInbound.RST_REPLY
    port_allocation: PortAllocation = PortAllocation.SEQUENTIAL
    sequential_start: int = 1024
    pmtud_sync: PmtudSync = PmtudSync.LEAKY_SIDE_CHANNEL

    def summary(self) -> str:
        bits = [
            self.rst_handling.value,
            self.unmapped_inbound.value,
            self.port_allocation.value,
            self.pmtud_sync.value,
        ]
        if self.require_ack_flag_on_rst:
            bits.insert(1, "ack-checked")
        return "/".join(bits)


class MappingState:
    SYN_SENT = "SYN_SENT"
    ESTABLISHED = "ESTABLISHED"
    FIN_WAIT = "FIN_WAIT"
    CLOSED = "CLOSED"


@dataclass
class NatMapping:
    internal: tuple[str, int]
    external_port: int
    remote: tuple[str, int]
    state: str
    last_tick: int
    # per-direction acceptable sequence windows, tracked under strict
    # validation only: inbound guards server->client seq numbers
    inbound_seq_window: tuple[int, int] | None = None
    outbound_seq_window: tuple[int, int] | None = None

    def dump_line(self) -> str:
        lo, hi = self.inbound_seq_window or ("-", "-")
        return (
            f"{self.internal[0]}:{self.internal[1]} ext:{self.external_port} "
            f"{self.remote[0]}:{self.remote[1]} {self.state} {lo} {hi} {self.last_tick}"
        )


class NatTableError(Exception):
    pass


class NatBox:
    """Session-mapping NAT attached to one simulator node."""

    MIN_PORT = 1024

    def __init__(
        self,
        node_id: str,
        public_ip: str,
        policy: NatPolicy,
        internal_addrs: set[str],
        *,
        seed: int = 0,
    ):
        self.node_id = node_id
        self.public_ip = public_ip
        self.policy = policy
        self.internal_addrs = set(internal_addrs)
        self.pmtu = PathMtuCache()
        self.by_internal: dict[tuple, NatMapping] = {}
        self.by_external: dict[tuple, NatMapping] = {}
        self.mappings_removed_by_rst = 0
        self.removal_log: list[tuple[int, int, int]] = []  # (tick, external port, rst seq)
        self._rng = derive_rng(seed, "nat", node_id)
        self._next_sequential = policy.sequential_start
        self._used_ports: set[int] = set()
        self._frag_buffers: dict[tuple, list] = {}
        self._ip_ident = 0

    # -- fabric handler (sees every packet crossing the node) --------------------

    def on_datagram(self, sim: Simulator, node: str, d: Ipv4Datagram) -> None:
        if d.dst == self.public_ip:
            self._inbound(sim, d)
        elif d.src in self.internal_addrs:
            self._outbound(sim, d)
        else:
            sim.record(self.node_id, "drop", "no-route", d)

    # -- outbound -----------------------------------------------------------------

    def _outbound(self, sim: Simulator, d: Ipv4Datagram) -> None:
        if d.protocol is not Protocol.TCP or not isinstance(d.payload, TcpSegment):
            sim.record(self.node_id, "drop", "unsupported-outbound", d)
            return
        seg = d.payload
        key = ((d.src, seg.src_port), (d.dst, seg.dst_port))
        mapping = self.by_internal.get(key)
        if mapping is None:
            port = self._allocate_port(seg.src_port)
            if port is None:
                sim.record(self.node_id, "drop", "nat-ports-exhausted", d)
                return
            state = MappingState.SYN_SENT if TcpFlag.SYN in seg.flags else MappingState.ESTABLISHED
            mapping = NatMapping(
                internal=(d.src, seg.src_port),
                external_port=port,
                remote=(d.dst, seg.dst_port),
                state=state,
                last_tick=sim.now,
            )
            self._insert(mapping)
        mapping.last_tick = sim.now
        if mapping.state == MappingState.SYN_SENT and TcpFlag.ACK in seg.flags:
            mapping.state = MappingState.ESTABLISHED
        if TcpFlag.FIN in seg.flags:
            mapping.state = MappingState.FIN_WAIT
        if self.policy.rst_handling is RstHandling.STRICT_VALIDATE and TcpFlag.ACK in seg.flags:
            mapping.inbound_seq_window = (seg.ack, seq_add(seg.ack, DEFAULT_RCV_WND))
        translated = Ipv4Datagram(
            src=self.public_ip,
            dst=d.dst,
            protocol=d.protocol,
            payload=wire.TcpSegment(
                src_port=mapping.external_port,
                dst_port=seg.dst_port,
                seq=seg.seq,
                ack=seg.ack,
                flags=seg.flags,
                payload_length=seg.payload_length,
            ),
            identification=d.identification,
            df=d.df,
        )
        sim.forward_from(self.node_id, translated)

    # -- inbound ------------------------------------------------------------------

    def _inbound(self, sim: Simulator, d: Ipv4Datagram) -> None:
        p = d.payload
        if isinstance(p, bytes):
            self._on_fragment(sim, d)
        elif isinstance(p, TcpSegment):
            self._inbound_tcp(sim, d, p)
        elif isinstance(p, FragNeeded):
            self._translate_icmp_error(sim, d, p)
        elif isinstance(p, EchoRequest):
            self._echo_reply(sim, d, p)
        else:
            sim.record(self.node_id, "drop", "no-mapping", d)

    def _inbound_tcp(self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment) -> None:
        mapping = self.by_external.get((seg.dst_port, (d.src, seg.src_port)))
        if TcpFlag.RST in seg.flags:
            if mapping is None:
                sim.record(self.node_id, "drop", "no-mapping", d)
                return
            forward = self._on_inbound_rst(sim, d, seg, mapping)
            if forward:
                self._forward_inward(sim, d, seg, mapping)
            return
        if mapping is None:
            if self.policy.unmapped_inbound is UnmappedInbound.SILENT_DROP:
                sim.record(self.node_id, "drop", "no-mapping", d)
                return
            self._rst_reply(sim, d, seg)
            return
        mapping.last_tick = sim.now
        if TcpFlag.FIN in seg.flags:
            mapping.state = MappingState.FIN_WAIT
        if self.policy.rst_handling is RstHandling.STRICT_VALIDATE and TcpFlag.ACK in seg.flags:
            mapping.outbound_seq_window = (seg.ack, seq_add(seg.ack, DEFAULT_RCV_WND))
        self._forward_inward(sim, d, seg, mapping)

    def _on_inbound_rst(
        self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment, mapping: NatMapping
    ) -> bool:
        """Apply the RST-handling policy; returns True when the segment
        should still be forwarded to the internal client."""
        policy = self.policy.rst_handling
        if policy is RstHandling.FORWARD_ONLY:
            return True
        if policy is RstHandling.VULNERABLE_REMOVE:
            if self.policy.require_ack_flag_on_rst and TcpFlag.ACK not in seg.flags:
                return True
            self._remove(sim, mapping, seg.seq)
            return True
        # strict validation: only an in-window sequence number may remove
        window = mapping.inbound_seq_window
        if window is not None and seq_in_range(seg.seq, window[0], seq_add(window[1], 1)):
            self._remove(sim, mapping, seg.seq)
            return True
        sim.record(self.node_id, "drop", "rst-out-of-window", d)
        return False

    def _forward_inward(self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment, mapping) -> None:
        translated = Ipv4Datagram(
            src=d.src,
            dst=mapping.internal[0],
            protocol=d.protocol,
            payload=wire.TcpSegment(
                src_port=seg.src_port,
                dst_port=mapping.internal[1],
                seq=seg.seq,
                ack=seg.ack,
                flags=seg.flags,
                payload_length=seg.payload_length,
            ),
            identification=d.identification,
            df=d.df,
        )
        sim.forward_from(self.node_id, translated)

    def _rst_reply(self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment) -> None:
        # RFC 793 reflection for a non-RST segment with no matching mapping
        if TcpFlag.ACK in seg.flags:
            reply = TcpSegment(seg.dst_port, seg.src_port, seq=seg.ack, flags=TcpFlag.RST)
        else:
            reply = TcpSegment(
                seg.dst_port,
                seg.src_port,
                seq=0,
                ack=seq_add(seg.seq, seg.seg_len),
                flags=TcpFlag.RST | TcpFlag.ACK,
            )
        sim.send_from(
            self.node_id,
            Ipv4Datagram(
                src=self.public_ip,
                dst=d.src,
                protocol=Protocol.TCP,
                payload=reply,
                identification=self._next_ident(),
                df=True,
            ),
        )

    # -- ICMP ------------------------------------------------------------------------

    def _translate_icmp_error(self, sim: Simulator, d: Ipv4Datagram, msg: FragNeeded) -> None:
        quote = wire.parse_embedded(msg.embedded)
        if quote is None or quote.src != self.public_ip:
            sim.record(self.node_id, "drop", "icmp-no-mapping", d)
            return
        mapping = self.by_external.get((quote.src_port, (quote.dst, quote.dst_port)))
        if mapping is None:
            sim.record(self.node_id, "drop", "icmp-no-mapping", d)
            return
        if self.policy.pmtud_sync is PmtudSync.SYNCHRONIZED:
            # countermeasure: keep the device's own path MTU in step with
            # what the internal client is told
            self.pmtu.shrink(quote.dst, msg.next_hop_mtu)
        rewritten = wire.rewrite_embedded_source(
            msg.embedded, mapping.internal[0], mapping.internal[1]
        )
        sim.forward_from(
            self.node_id,
            Ipv4Datagram(
                src=d.src,
                dst=mapping.internal[0],
                protocol=Protocol.ICMP,
                payload=FragNeeded(next_hop_mtu=msg.next_hop_mtu, embedded=rewritten),
                identification=d.identification,
            ),
        )

    def _echo_reply(self, sim: Simulator, d: Ipv4Datagram, req: EchoRequest) -> None:
        reply = Ipv4Datagram(
            src=self.public_ip,
            dst=d.src,
            protocol=Protocol.ICMP,
            payload=EchoReply(req.ident, req.seq_no, req.padding_length),
            identification=self._next_ident(),
        )
        for piece in wire.fragment(reply, self.pmtu.get(d.src)):
            sim.send_from(self.node_id, piece)

    def _on_fragment(self, sim: Simulator, d: Ipv4Datagram) -> None:
        key = d.group_key()
        group = self._frag_buffers.setdefault(key, [])
        group.append(d)
        try:
            whole = wire.reassemble(group)
        except wire.IncompleteGroupError:
            return
        except wire.MixedGroupError:
            return
        del self._frag_buffers[key]
        self._inbound(sim, whole)

    # -- table maintenance ---------------------------------------------------------

    def _insert(self, mapping: NatMapping) -> None:
        ikey = (mapping.internal, mapping.remote)
        ekey = (mapping.external_port, mapping.remote)
        if ikey in self.by_internal or ekey in self.by_external:
            raise NatTableError(f"duplicate mapping {ikey}")
        self.by_internal[ikey] = mapping
        self.by_external[ekey] = mapping
        self._used_ports.add(mapping.external_port)
        self._check_table()

    def _remove(self, sim: Simulator, mapping: NatMapping, rst_seq: int) -> None:
        mapping.state = MappingState.CLOSED
        del self.by_internal[(mapping.internal, mapping.remote)]
        del self.by_external[(mapping.external_port, mapping.remote)]
        self._used_ports.discard(mapping.external_port)
        self.mappings_removed_by_rst += 1
        self.removal_log.append((sim.now, mapping.external_port, rst_seq))
        self._check_table()

    def _check_table(self) -> None:
        if len(self.by_internal) != len(self.by_external):
            raise NatTableError("mapping indexes out of sync")

    def _allocate_port(self, internal_port: int) -> int | None:
        alloc = self.policy.port_allocation
        if alloc is PortAllocation.PRESERVING:
            if internal_port >= self.MIN_PORT and internal_port not in self._used_ports:
                return internal_port
            return self._scan_free(self.MIN_PORT)
        if alloc is PortAllocation.SEQUENTIAL:
            port = self._scan_free(self._next_sequential)
            if port is not None:
                self._next_sequential = port + 1
            return port
        for _ in range(64):
            port = self.MIN_PORT + self._rng.randrange(0x10000 - self.MIN_PORT)
            if port not in self._used_ports:
                return port
        return self._scan_free(self.MIN_PORT)

    def _scan_free(self, start: int) -> int | None:
        for port in range(max(start, self.MIN_PORT), 0x10000):
            if port not in self._used_ports:
                return port
        for port in range(self.MIN_PORT, max(start, self.MIN_PORT)):
            if port not in self._used_ports:
                return port
        return None

    def _next_ident(self) -> int:
        self._ip_ident = (self._ip_ident + 1) % 0x10000
        return self._ip_ident

    # -- external interface -----------------------------------------------------------

    def dump_mappings(self) -> str:
        lines = [m.dump_line() for m in sorted(self.by_internal.values(), key=lambda m: m.external_port)]
        return "\n".join(lines)

    def mapping_snapshot(self) -> tuple:
        return tuple(
            (m.internal, m.external_port, m.remote, m.state)
            for m in sorted(self.by_internal.values(), key=lambda m: m.external_port)
        )
