"""Simulated host TCP/IP stack.

Each Host owns a per-destination path-MTU cache, a minimal TCP connection
table, an echo responder, and the closed-socket reset behavior of RFC 793
plus the duplicate-ACK reaction of RFC 5681.  OS quirks are expressed via
StackProfile: an openbsd-like profile stays silent on stray PUSH/ACKs.

No congestion control, no retransmission timers, no SACK or options;
application protocols are reduced to "send N octets now".
"""

from __future__ import annotations

from dataclasses import dataclass

from . import wire
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

REASSEMBLY_TIMEOUT_TICKS = 30
DEFAULT_EPHEMERAL_RANGE = (32768, 61000)  # linux-like; windows-like is 49152-65535
DEFAULT_RCV_WND = 65535


class StackError(Exception):
    pass


class PortsExhaustedError(StackError):
    """No free port remains in the configured ephemeral range."""


class ConnectionResetSimError(StackError):
    """The simulated application tried to use a closed connection."""


@dataclass(frozen=True)
class StackProfile:
    name: str = "linux-like"
    emits_dup_ack_on_stray_push_ack: bool = True


LINUX_LIKE = StackProfile()
OPENBSD_LIKE = StackProfile(name="openbsd-like", emits_dup_ack_on_stray_push_ack=False)


class PathMtuCache:
    """Per-destination path MTU; entries only shrink between resets."""

    def __init__(self, default: int = wire.DEFAULT_MTU):
        self.default = default
        self.entries: dict[str, int] = {}

    def get(self, dst: str) -> int:
        return self.entries.get(dst, self.default)

    def shrink(self, dst: str, mtu: int) -> int:
        new = max(wire.MIN_MTU, min(mtu, self.get(dst)))
        self.entries[dst] = new
        return new

    def reset(self, dst: str) -> None:
        self.entries.pop(dst, None)


class TcpState:
    LISTEN = "LISTEN"
    SYN_SENT = "SYN_SENT"
    ESTABLISHED = "ESTABLISHED"
    CLOSED = "CLOSED"


ConnKey = tuple[int, str, int]  # (local port, remote addr, remote port)


@dataclass
class Socket:
    local_port: int
    remote: tuple[str, int]
    state: str
    snd_una: int
    snd_nxt: int
    rcv_nxt: int = 0
    rcv_wnd: int = DEFAULT_RCV_WND
    # ground truth for assessors: (tick, rst seq, rcv_nxt at acceptance, src addr)
    reset_record: tuple[int, int, int, str] | None = None
    established_tick: int | None = None

    @property
    def key(self) -> ConnKey:
        return (self.local_port, self.remote[0], self.remote[1])


@dataclass(frozen=True, slots=True)
class TcpObservation:
    """One TCP arrival as seen by an observing host (a vantage point)."""

    tick: int
    dgram: Ipv4Datagram
    segment: TcpSegment

    @property
    def size(self) -> int:
        return self.dgram.total_length


class Host:
    """A host endpoint attached to one simulator node."""

    def __init__(
        self,
        node_id: str,
        address: str,
        *,
        seed: int = 0,
        profile: StackProfile = LINUX_LIKE,
        ephemeral_range: tuple[int, int] = DEFAULT_EPHEMERAL_RANGE,
        ack_data: bool = True,
        observe: bool = False,
    ):
        self.node_id = node_id
        self.address = address
        self.profile = profile
        self.ephemeral_range = ephemeral_range
        self.ack_data = ack_data
        self.observe = observe
        self.pmtu = PathMtuCache()
        self.sockets: dict[ConnKey, Socket] = {}
        self.listeners: set[int] = set()
        self.dup_acks_sent = 0
        self.dup_ack_log: list[tuple[int, ConnKey, int]] = []  # (tick, key, ack value)
        self.observations: list[TcpObservation] = []
        self.echo_log: list[tuple[int, str, int, int, int]] = []  # tick, src, total, ident, seq_no
        self._rng = derive_rng(seed, "host", node_id)
        self._used_ports: set[int] = set()
        self._ip_ident = 0
        self._frag_buffers: dict[tuple, dict] = {}

    # -- application surface ---------------------------------------------------

    def listen(self, port: int) -> None:
        self.listeners.add(port)

    def open_connection(self, sim: Simulator, remote: tuple[str, int]) -> ConnKey:
        """Start the three-way handshake toward remote; returns the
        connection key (ESTABLISHED only after the SYN/ACK round trip)."""
        port = self._alloc_ephemeral()
        isn = self._rng.getrandbits(32)
        sock = Socket(
            local_port=port,
            remote=remote,
            state=TcpState.SYN_SENT,
            snd_una=isn,
            snd_nxt=seq_add(isn, 1),
        )
        self.sockets[sock.key] = sock
        self._emit_tcp(sim, sock.remote, TcpSegment(port, remote[1], seq=isn, flags=TcpFlag.SYN))
        return sock.key

    def send_data(self, sim: Simulator, key: ConnKey, length: int) -> None:
        """Send `length` octets split into segments no larger than the
        path MTU for the peer."""
        sock = self.sockets.get(key)
        if sock is None or sock.state != TcpState.ESTABLISHED:
            raise ConnectionResetSimError("connection-reset")
        mss = self.pmtu.get(sock.remote[0]) - wire.IP_HEADER_LEN - wire.TCP_HEADER_LEN
        remaining = length
        while remaining > 0:
            chunk = min(remaining, mss)
            self._emit_tcp(
                sim,
                sock.remote,
                TcpSegment(
                    sock.local_port,
                    sock.remote[1],
                    seq=sock.snd_nxt,
                    ack=sock.rcv_nxt,
                    flags=TcpFlag.PSH | TcpFlag.ACK,
                    payload_length=chunk,
                ),
            )
            sock.snd_nxt = seq_add(sock.snd_nxt, chunk)
            remaining -= chunk

    def reset_path_mtu(self, dst: str) -> None:
        self.pmtu.reset(dst)

    # -- fabric handler ----------------------------------------------------------

    def on_datagram(self, sim: Simulator, node: str, d: Ipv4Datagram) -> None:
        p = d.payload
        if isinstance(p, bytes):
            self._on_fragment(sim, d)
        elif isinstance(p, TcpSegment):
            if self.observe:
                self.observations.append(TcpObservation(sim.now, d, p))
            self._on_tcp(sim, d, p)
        elif isinstance(p, EchoRequest):
            self._on_echo_request(sim, d, p)
        elif isinstance(p, EchoReply):
            self.echo_log.append((sim.now, d.src, d.total_length, p.ident, p.seq_no))
        elif isinstance(p, FragNeeded):
            self._on_frag_needed(sim, d, p)

    # -- reassembly ----------------------------------------------------------------

    def _on_fragment(self, sim: Simulator, d: Ipv4Datagram) -> None:
        key = d.group_key()
        buf = self._frag_buffers.get(key)
        if buf is None:
            buf = {"frags": [], "first_tick": sim.now}
            self._frag_buffers[key] = buf
            sim.schedule_call(
                sim.now + REASSEMBLY_TIMEOUT_TICKS, lambda s, k=key: self._expire_group(s, k)
            )
        buf["frags"].append(d)
        try:
            whole = wire.reassemble(buf["frags"])
        except wire.IncompleteGroupError:
            return
        except wire.MixedGroupError:
            return
        del self._frag_buffers[key]
        self.on_datagram(sim, self.node_id, whole)

    def _expire_group(self, sim: Simulator, key: tuple) -> None:
        buf = self._frag_buffers.pop(key, None)
        if buf is not None:
            sim.record(self.node_id, "drop", "reassembly-timeout", buf["frags"][0])

    # -- ICMP ---------------------------------------------------------------------

    def _on_echo_request(self, sim: Simulator, d: Ipv4Datagram, req: EchoRequest) -> None:
        reply = Ipv4Datagram(
            src=self.address,
            dst=d.src,
            protocol=Protocol.ICMP,
            payload=EchoReply(req.ident, req.seq_no, req.padding_length),
            identification=self._next_ident(),
        )
        for piece in wire.fragment(reply, self.pmtu.get(d.src)):
            sim.send_from(self.node_id, piece)

    def _on_frag_needed(self, sim: Simulator, d: Ipv4Datagram, msg: FragNeeded) -> None:
        # the outer source is never validated: any router may emit these
        quote = wire.parse_embedded(msg.embedded)
        if quote is None or quote.src != self.address or quote.protocol is not Protocol.TCP:
            sim.record(self.node_id, "drop", "icmp-validation-failed", d)
            return
        sock = self.sockets.get((quote.src_port, quote.dst, quote.dst_port))
        if (
            sock is None
            or sock.state == TcpState.CLOSED
            or not seq_in_range(quote.seq, sock.snd_una, sock.snd_nxt)
        ):
            sim.record(self.node_id, "drop", "icmp-validation-failed", d)
            return
        self.pmtu.shrink(quote.dst, msg.next_hop_mtu)

    # -- TCP -------------------------------------------------------------------------

    def _on_tcp(self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment) -> None:
        key = (seg.dst_port, d.src, seg.src_port)
        sock = self.sockets.get(key)

        if sock is None or sock.state == TcpState.CLOSED:
            if sock is None and TcpFlag.SYN in seg.flags and TcpFlag.ACK not in seg.flags:
                if seg.dst_port in self.listeners:
                    self._accept(sim, d, seg)
                    return
            self._closed_port_reply(sim, d, seg)
            return

        if TcpFlag.RST in seg.flags:
            # exact-sequence acceptance only: a robust stack discards the rest
            if sock.state == TcpState.ESTABLISHED and seg.seq == sock.rcv_nxt:
                sock.reset_record = (sim.now, seg.seq, sock.rcv_nxt, d.src)
                sock.state = TcpState.CLOSED
            return

        if sock.state == TcpState.SYN_SENT:
            if (
                TcpFlag.SYN in seg.flags
                and TcpFlag.ACK in seg.flags
                and seg.ack == sock.snd_nxt
            ):
                sock.rcv_nxt = seq_add(seg.seq, 1)
                sock.snd_una = seg.ack
                sock.state = TcpState.ESTABLISHED
                sock.established_tick = sim.now
                self._emit_tcp(
                    sim,
                    sock.remote,
                    TcpSegment(
                        sock.local_port,
                        sock.remote[1],
                        seq=sock.snd_nxt,
                        ack=sock.rcv_nxt,
                        flags=TcpFlag.ACK,
                    ),
                )
            return

        if sock.state != TcpState.ESTABLISHED:
            return

        if seg.seq == sock.rcv_nxt:
            if TcpFlag.ACK in seg.flags and seq_in_range(
                seg.ack, sock.snd_una, seq_add(sock.snd_nxt, 1)
            ):
                sock.snd_una = seg.ack
            if seg.payload_length > 0:
                sock.rcv_nxt = seq_add(sock.rcv_nxt, seg.payload_length)
                if self.ack_data:
                    self._emit_tcp(
                        sim,
                        sock.remote,
                        TcpSegment(
                            sock.local_port,
                            sock.remote[1],
                            seq=sock.snd_nxt,
                            ack=sock.rcv_nxt,
                            flags=TcpFlag.ACK,
                        ),
                    )
            return

        if TcpFlag.PSH in seg.flags and TcpFlag.ACK in seg.flags:
            # out-of-window PUSH/ACK: fast-retransmit style duplicate ACK,
            # whose ack field necessarily exposes rcv_nxt
            if self.profile.emits_dup_ack_on_stray_push_ack:
                self.dup_acks_sent += 1
                self.dup_ack_log.append((sim.now, key, sock.rcv_nxt))
                self._emit_tcp(
                    sim,
                    sock.remote,
                    TcpSegment(
                        sock.local_port,
                        sock.remote[1],
                        seq=sock.snd_nxt,
                        ack=sock.rcv_nxt,
                        flags=TcpFlag.ACK,
                    ),
                )

    def _accept(self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment) -> None:
        isn = self._rng.getrandbits(32)
        sock = Socket(
            local_port=seg.dst_port,
            remote=(d.src, seg.src_port),
            state=TcpState.ESTABLISHED,
            snd_una=isn,
            snd_nxt=seq_add(isn, 1),
            rcv_nxt=seq_add(seg.seq, 1),
            established_tick=sim.now,
        )
        self.sockets[sock.key] = sock
        self._emit_tcp(
            sim,
            sock.remote,
            TcpSegment(
                sock.local_port,
                sock.remote[1],
                seq=isn,
                ack=sock.rcv_nxt,
                flags=TcpFlag.SYN | TcpFlag.ACK,
            ),
        )

    def _closed_port_reply(self, sim: Simulator, d: Ipv4Datagram, seg: TcpSegment) -> None:
        if TcpFlag.RST in seg.flags:
            return  # never reset in response to a reset
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
        self._emit_tcp(sim, (d.src, seg.src_port), reply)

    # -- helpers ------------------------------------------------------------------

    def _emit_tcp(self, sim: Simulator, remote: tuple[str, int], seg: TcpSegment) -> None:
        sim.send_from(
            self.node_id,
            Ipv4Datagram(
                src=self.address,
                dst=remote[0],
                protocol=Protocol.TCP,
                payload=seg,
                identification=self._next_ident(),
                df=True,
            ),
        )

    def _next_ident(self) -> int:
        self._ip_ident = (self._ip_ident + 1) % 0x10000
        return self._ip_ident

    def _alloc_ephemeral(self) -> int:
        lo, hi = self.ephemeral_range
        span = hi - lo + 1
        if len(self._used_ports) >= span:
            raise PortsExhaustedError("ports-exhausted")
        for _ in range(64):
            port = lo + self._rng.randrange(span)
            if port not in self._used_ports:
                self._used_ports.add(port)
                return port
        for port in range(lo, hi + 1):
            if port not in self._used_ports:
                self._used_ports.add(port)
                return port
        raise PortsExhaustedError("ports-exhausted")

    # -- queries used by orchestrators ---------------------------------------------

    def socket(self, key: ConnKey) -> Socket | None:
        return self.sockets.get(key)

    def observations_after(self, tick: int, src: str) -> list[TcpObservation]:
        return [o for o in self.observations if o.tick > tick and o.dgram.src == src]
