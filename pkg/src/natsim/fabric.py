"""Deterministic discrete-event topology simulator.

Nodes exchange Ipv4Datagrams over directed links with an MTU, a delay in
integer ticks, and optional seeded loss and middlebox filtering.  Any hop
forwarding a too-large DF datagram drops it and answers with an ICMP
Fragmentation Needed carrying the link MTU; DF-clear datagrams are split
per RFC 791 and forwarded in offset order.

A simulator instance is single-threaded and owns all of its state; for a
fixed seed two runs of the same scenario produce bit-identical traces.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol as TypingProtocol

from . import wire
from .wire import Ipv4Datagram, FragNeeded, Protocol, TcpFlag


class FabricError(Exception):
    pass


class NoSuchNodeError(FabricError):
    pass


def derive_rng(seed: int, *tags) -> random.Random:
    """A process-independent RNG keyed on the scenario seed plus tags."""
    material = repr((seed,) + tags).encode()
    return random.Random(int.from_bytes(hashlib.sha256(material).digest()[:8], "big"))


class DropClass(Enum):
    ICMP_ERROR = "icmp-error"
    ICMP_ECHO = "icmp-echo"
    TCP_RST_INBOUND = "tcp-rst-inbound"
    ALL = "all"


@dataclass(frozen=True)
class MiddleboxFilter:
    drop_classes: frozenset[DropClass]

    def matches(self, d: Ipv4Datagram) -> DropClass | None:
        if DropClass.ALL in self.drop_classes:
            return DropClass.ALL
        p = d.payload
        if DropClass.ICMP_ERROR in self.drop_classes and isinstance(p, FragNeeded):
            return DropClass.ICMP_ERROR
        if DropClass.ICMP_ECHO in self.drop_classes and isinstance(
            p, (wire.EchoRequest, wire.EchoReply)
        ):
            return DropClass.ICMP_ECHO
        if (
            DropClass.TCP_RST_INBOUND in self.drop_classes
            and isinstance(p, wire.TcpSegment)
            and TcpFlag.RST in p.flags
        ):
            return DropClass.TCP_RST_INBOUND
        return None


@dataclass
class LinkSpec:
    frm: str
    to: str
    mtu: int = wire.DEFAULT_MTU
    delay: int = 1
    loss: float = 0.0
    filter: MiddleboxFilter | None = None

    def __post_init__(self):
        if self.mtu < wire.MIN_MTU:
            raise ValueError(f"link {self.frm}->{self.to}: mtu {self.mtu} below {wire.MIN_MTU}")
        if self.delay < 1:
            raise ValueError(f"link {self.frm}->{self.to}: delay must be >= 1")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"link {self.frm}->{self.to}: loss outside [0, 1]")


class PacketHandler(TypingProtocol):
    def on_datagram(self, sim: "Simulator", node: str, d: Ipv4Datagram) -> None: ...


@dataclass
class Node:
    node_id: str
    address: str
    handler: PacketHandler | None = None
    transit: bool = False  # router: forwards packets not addressed to it
    intercept: bool = False  # NAT: handler sees every arriving packet


@dataclass(slots=True)
class Counters:
    packets_sent: int = 0
    octets_sent: int = 0
    packets_delivered: int = 0
    octets_delivered: int = 0
    packets_dropped: int = 0


_FLAG_ORDER = (
    (TcpFlag.FIN, "F"),
    (TcpFlag.SYN, "S"),
    (TcpFlag.RST, "R"),
    (TcpFlag.PSH, "P"),
    (TcpFlag.ACK, "A"),
)


def packet_summary(d: Ipv4Datagram) -> str:
    """`proto src:port>dst:port flags seq ack len df off` trace column."""
    p = d.payload
    if isinstance(p, wire.TcpSegment):
        flags = "".join(ch for fl, ch in _FLAG_ORDER if fl in p.flags) or "-"
        sp, dp, seq, ack = p.src_port, p.dst_port, p.seq, p.ack
        proto = "TCP"
    elif isinstance(p, wire.EchoRequest):
        proto, flags, sp, dp, seq, ack = "ICMP", "EQ", 0, 0, p.seq_no, p.ident
    elif isinstance(p, wire.EchoReply):
        proto, flags, sp, dp, seq, ack = "ICMP", "EP", 0, 0, p.seq_no, p.ident
    elif isinstance(p, wire.FragNeeded):
        proto, flags, sp, dp, seq, ack = "ICMP", "FN", 0, 0, p.next_hop_mtu, 0
    else:
        proto = d.protocol.name
        flags, sp, dp, seq, ack = "-", 0, 0, 0, 0
    df = "DF" if d.df else ("MF" if d.more_fragments else "-")
    return (
        f"{proto} {d.src}:{sp}>{d.dst}:{dp} {flags} {seq} {ack} "
        f"{d.total_length} {df} {d.fragment_offset}"
    )


@dataclass(frozen=True, slots=True)
class TraceRecord:
    tick: int
    node: str
    action: str  # send | forward | fragment | drop | deliver
    reason: str
    dgram: Ipv4Datagram

    def line(self) -> str:
        return f"{self.tick}\t{self.node}\t{self.action}\t{self.reason}\t{packet_summary(self.dgram)}"


class Simulator:
    """Event loop, topology, routing, and the packet trace."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0
        self.nodes: dict[str, Node] = {}
        self.links: dict[tuple[str, str], LinkSpec] = {}
        self.routes: dict[str, dict[str, str]] = {}
        self.addr_to_node: dict[str, str] = {}
        self.trace: list[TraceRecord] = []
        self.counters: dict[str, Counters] = {}
        self._heap: list = []
        self._eventseq = 0
        self._neighbors: dict[str, list[str]] = {}
        self._loss_rng: dict[tuple[str, str], random.Random] = {}

    # -- topology ------------------------------------------------------------

    def add_node(
        self,
        node_id: str,
        address: str,
        handler: PacketHandler | None = None,
        *,
        transit: bool = False,
        intercept: bool = False,
    ) -> Node:
        if node_id in self.nodes:
            raise FabricError(f"duplicate node {node_id}")
        if address in self.addr_to_node:
            raise FabricError(f"duplicate address {address}")
        node = Node(node_id, address, handler, transit, intercept)
        self.nodes[node_id] = node
        self.addr_to_node[address] = node_id
        self.counters[node_id] = Counters()
        self._neighbors[node_id] = []
        return node

    def add_link(self, spec: LinkSpec) -> None:
        if spec.frm not in self.nodes or spec.to not in self.nodes:
            raise NoSuchNodeError(f"no-such-node: link {spec.frm}->{spec.to}")
        self.links[(spec.frm, spec.to)] = spec
        if spec.to not in self._neighbors[spec.frm]:
            self._neighbors[spec.frm].append(spec.to)

    def set_link_mtu(self, frm: str, to: str, mtu: int) -> None:
        link = self.links.get((frm, to))
        if link is None:
            raise NoSuchNodeError(f"no-such-node: link {frm}->{to}")
        if mtu < wire.MIN_MTU:
            raise ValueError(f"mtu {mtu} below {wire.MIN_MTU}")
        link.mtu = mtu

    def finalize_routes(self) -> None:
        """Build the static next-hop table with per-source BFS; neighbor
        order follows link insertion so routing is deterministic."""
        for origin in self.nodes:
            nxt: dict[str, str] = {}
            parent: dict[str, str] = {origin: origin}
            queue = [origin]
            while queue:
                cur = queue.pop(0)
                for nb in self._neighbors[cur]:
                    if nb not in parent:
                        parent[nb] = cur
                        queue.append(nb)
            for dest, via in parent.items():
                if dest == origin:
                    continue
                hop = dest
                while parent[hop] != origin:
                    hop = parent[hop]
                nxt[self.nodes[dest].address] = hop
            self.routes[origin] = nxt

    def path_min_mtu(self, from_node: str, dst_addr: str) -> int | None:
        """Smallest link MTU along the current route toward dst_addr."""
        node = from_node
        best: int | None = None
        seen = set()
        while self.nodes[node].address != dst_addr:
            if node in seen:
                return None
            seen.add(node)
            hop = self.routes.get(node, {}).get(dst_addr)
            if hop is None:
                return None
            link = self.links[(node, hop)]
            best = link.mtu if best is None else min(best, link.mtu)
            node = hop
        return best

    # -- event queue -----------------------------------------------------------

    def _schedule(self, tick: int, item: tuple) -> int:
        self._eventseq += 1
        heapq.heappush(self._heap, (tick, self._eventseq, item))
        return self._eventseq

    def schedule_call(self, tick: int, fn: Callable[["Simulator"], None]) -> int:
        return self._schedule(tick, ("call", fn))

    @property
    def idle(self) -> bool:
        return not self._heap

    def inject(self, at: str, d: Ipv4Datagram) -> int:
        """Originate a datagram at a node; counted against its totals."""
        if at not in self.nodes:
            raise NoSuchNodeError(f"no-such-node: {at}")
        self._count_sent(at, d)
        self.record(at, "send", "", d)
        return self._schedule(self.now, ("emit", at, d))

    def run(self, until: int | None = None):
        """Process events up to `until` inclusive (None = quiescence);
        returns the full trace accumulated so far."""
        while self._heap and (until is None or self._heap[0][0] <= until):
            tick, _, item = heapq.heappop(self._heap)
            self.now = max(self.now, tick)
            kind = item[0]
            if kind == "emit":
                self._traverse(item[1], item[2])
            elif kind == "arrive":
                self._arrive(item[1], item[2])
            else:
                item[1](self)
        if until is not None:
            self.now = max(self.now, until)
        return self.trace

    # -- emission helpers used by node handlers --------------------------------

    def send_from(self, node: str, d: Ipv4Datagram) -> None:
        """Node-originated packet: counted, traced as a send, then routed."""
        self._count_sent(node, d)
        self.record(node, "send", "", d)
        self._traverse(node, d)

    def forward_from(self, node: str, d: Ipv4Datagram) -> None:
        """Transit packet re-emitted by a handler (e.g. after NAT rewrite)."""
        self._traverse(node, d)

    def record(self, node: str, action: str, reason: str, d: Ipv4Datagram) -> None:
        self.trace.append(TraceRecord(self.now, node, action, reason, d))
        if action == "drop":
            self.counters[node].packets_dropped += 1

    # -- internals ---------------------------------------------------------------

    def _count_sent(self, node: str, d: Ipv4Datagram) -> None:
        c = self.counters[node]
        c.packets_sent += 1
        c.octets_sent += d.total_length

    def _traverse(self, node: str, d: Ipv4Datagram) -> None:
        hop = self.routes.get(node, {}).get(d.dst)
        if hop is None:
            self.record(node, "drop", "no-route", d)
            return
        link = self.links[(node, hop)]
        if link.filter is not None:
            cls = link.filter.matches(d)
            if cls is not None:
                self.record(node, "drop", f"filtered-{cls.value}", d)
                return
        if d.total_length > link.mtu:
            if d.df:
                self.record(node, "drop", "needs-fragmentation", d)
                self._emit_frag_needed(node, d, link.mtu)
                return
            self.record(node, "fragment", "", d)
            for piece in wire.fragment(d, link.mtu):
                self._link_send(node, hop, link, piece)
            return
        self._link_send(node, hop, link, d)

    def _emit_frag_needed(self, node: str, dropped: Ipv4Datagram, mtu: int) -> None:
        notice = Ipv4Datagram(
            src=self.nodes[node].address,
            dst=dropped.src,
            protocol=Protocol.ICMP,
            payload=FragNeeded(next_hop_mtu=mtu, embedded=wire.quote_of(dropped)),
        )
        self.send_from(node, notice)

    def _link_send(self, node: str, hop: str, link: LinkSpec, d: Ipv4Datagram) -> None:
        if link.loss > 0.0:
            rng = self._loss_rng.get((node, hop))
            if rng is None:
                rng = derive_rng(self.seed, "loss", node, hop)
                self._loss_rng[(node, hop)] = rng
            if rng.random() < link.loss:
                self.record(node, "drop", "loss", d)
                return
        self._schedule(self.now + link.delay, ("arrive", hop, d))

    def _arrive(self, node_id: str, d: Ipv4Datagram) -> None:
        node = self.nodes[node_id]
        if node.intercept and node.handler is not None:
            action = "deliver" if d.dst == node.address else "forward"
            if action == "deliver":
                self._count_delivered(node_id, d)
            self.record(node_id, action, "", d)
            node.handler.on_datagram(self, node_id, d)
            return
        if d.dst == node.address:
            self._count_delivered(node_id, d)
            self.record(node_id, "deliver", "", d)
            if node.handler is not None:
                node.handler.on_datagram(self, node_id, d)
            return
        if node.transit:
            self.record(node_id, "forward", "", d)
            self._traverse(node_id, d)
            return
        self.record(node_id, "drop", "no-route", d)

    def _count_delivered(self, node: str, d: Ipv4Datagram) -> None:
        c = self.counters[node]
        c.packets_delivered += 1
        c.octets_delivered += d.total_length


def render_trace(trace: list[TraceRecord]) -> str:
    return "\n".join(rec.line() for rec in trace)
