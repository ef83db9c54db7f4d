"""Remote NAT-device identification over the path-MTU side channel.

The engine runs two stages against a public address that already has a
TCP session with the vantage host.  Stage one plants a forged ICMP
Fragmentation Needed built from an observed segment and waits for the
target's TCP to shrink below the planted MTU.  Stage two pings the
address with a full-sized echo request and classifies the reply: a
NAT device answers from its own untouched path-MTU cache, so its reply
stays large, while a directly addressed host pre-fragments at the
planted value.

Engine functions are stateless over a simulator handle; run one probe
per simulator instance at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from . import wire
from .endpoint import Host
from .fabric import Simulator, derive_rng
from .wire import EchoReply, EchoRequest, FragNeeded, Ipv4Datagram, Protocol

# spoofed source for the crafted ICMP error; any on-path router could
# legitimately have sent it, so targets cannot validate the outer source
ROUTER_LIKE_SRC = "203.0.113.99"


class ProbeError(Exception):
    pass


class NoBaselineError(ProbeError):
    """No TCP segment from the target has been observed yet."""


@dataclass(frozen=True)
class ProbeConfig:
    forged_mtu: int = 600
    baseline_size: int = 1500
    timeout_ticks: int = 200
    vantage: str = "vantage"

    def __post_init__(self):
        if not wire.MIN_MTU <= self.forged_mtu < self.baseline_size:
            raise ValueError("forged_mtu must lie in [68, baseline_size)")


class VerdictKind(Enum):
    NAT_DEVICE = "nat-device"
    SEPARATE_HOST = "separate-host"
    UNKNOWN = "unknown"


class VerdictReason(Enum):
    SINGLE_LARGE_REPLY = "single-large-reply"
    FRAG_SIZE_MATCHES_MTU = "frag-size-matches-mtu"
    FRAG_SIZE_MISMATCH = "frag-size-mismatch"
    NO_PMTU_SHRINK = "no-pmtu-shrink"
    NO_ECHO_REPLY = "no-echo-reply"
    AMBIGUOUS_SIZES = "ambiguous-sizes"


_UNKNOWN_REASONS = {
    VerdictReason.NO_PMTU_SHRINK,
    VerdictReason.NO_ECHO_REPLY,
    VerdictReason.AMBIGUOUS_SIZES,
}


@dataclass
class Observation:
    baseline_tcp_size: int = 0
    post_probe_tcp_size: int | None = None
    echo_reply_fragments: list[int] = field(default_factory=list)
    echo_reply_total: int | None = None
    # interior fragment boundaries in octets, for the classifier
    echo_reply_boundaries: frozenset[int] = frozenset()


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    reason: VerdictReason
    evidence: Observation

    def __post_init__(self):
        unknown = self.kind is VerdictKind.UNKNOWN
        if unknown != (self.reason in _UNKNOWN_REASONS):
            raise ValueError(f"reason {self.reason} inconsistent with kind {self.kind}")

    def csv_row(self, target: str) -> str:
        ev = self.evidence
        frags = "+".join(str(s) for s in ev.echo_reply_fragments) or "-"
        post = ev.post_probe_tcp_size if ev.post_probe_tcp_size is not None else "-"
        return f"{target},{self.kind.value},{self.reason.value},{ev.baseline_tcp_size},{post},{frags}"


def craft_frag_needed(observed: Ipv4Datagram, forged_mtu: int) -> FragNeeded:
    """Build the forged ICMP error from a previously observed segment:
    the embedded quote is the segment's first 28 wire octets, so it names
    the live 4-tuple and an in-window sequence number."""
    if not isinstance(observed.payload, wire.TcpSegment):
        raise NoBaselineError("no-baseline")
    return FragNeeded(next_hop_mtu=forged_mtu, embedded=wire.quote_of(observed))


def frag_cap(mtu: int) -> int:
    """Largest 8-aligned fragment payload for an MTU (RFC 791 arithmetic)."""
    return ((mtu - wire.IP_HEADER_LEN) // 8) * 8


def run_identification(
    sim: Simulator,
    vantage: Host,
    target_addr: str,
    cfg: ProbeConfig,
    *,
    before_echo: Callable[[Simulator], None] | None = None,
) -> Verdict:
    """Run both stages and classify; every outcome is a Verdict.

    `before_echo` runs between the stages, letting scenarios adjust link
    MTUs the way a testbed operator would between experiments.
    """
    obs = Observation()

    first = _wait_for_observation(
        sim, vantage, target_addr, after_tick=-1, deadline=sim.now + cfg.timeout_ticks
    )
    if first is None:
        return Verdict(VerdictKind.UNKNOWN, VerdictReason.NO_PMTU_SHRINK, obs)
    obs.baseline_tcp_size = first.size

    # stage 1: plant the forged next-hop MTU
    crafted = craft_frag_needed(first.dgram, cfg.forged_mtu)
    probe_tick = sim.now
    sim.send_from(
        vantage.node_id,
        Ipv4Datagram(
            src=ROUTER_LIKE_SRC,
            dst=target_addr,
            protocol=Protocol.ICMP,
            payload=crafted,
        ),
    )
    if not _confirm_shrink(sim, vantage, target_addr, cfg, probe_tick, obs):
        return Verdict(VerdictKind.UNKNOWN, VerdictReason.NO_PMTU_SHRINK, obs)

    if before_echo is not None:
        before_echo(sim)

    # stage 2: full-sized echo, classify the reply shape; ambiguity
    # depends on the reply path, where the router fragments
    target_node = sim.addr_to_node[target_addr]
    path_mtu = sim.path_min_mtu(target_node, vantage.address)
    echo_tick = sim.now
    ident = derive_rng(sim.seed, "probe-echo", echo_tick).randrange(0x10000)
    sim.send_from(
        vantage.node_id,
        Ipv4Datagram(
            src=vantage.address,
            dst=target_addr,
            protocol=Protocol.ICMP,
            payload=EchoRequest(ident=ident, seq_no=1, padding_length=cfg.baseline_size - 28),
        ),
    )
    deadline = sim.now + cfg.timeout_ticks
    while sim.now < deadline:
        if any(t > echo_tick and src == target_addr for t, src, *_ in vantage.echo_log):
            break
        if sim.idle:
            break
        sim.run(until=sim.now + 1)
    completed = [e for e in vantage.echo_log if e[0] > echo_tick and e[1] == target_addr]

    frags = _reply_fragments(sim, vantage.node_id, target_addr, echo_tick)
    obs.echo_reply_fragments = [total for total, _, _ in frags]
    obs.echo_reply_boundaries = frozenset(off * 8 for _, off, _ in frags if off > 0)
    if not completed:
        return Verdict(VerdictKind.UNKNOWN, VerdictReason.NO_ECHO_REPLY, obs)
    obs.echo_reply_total = completed[0][2]

    return _classify(obs, cfg, path_mtu)


def _classify(obs: Observation, cfg: ProbeConfig, path_mtu: int | None) -> Verdict:
    total = obs.echo_reply_total or 0
    frags = obs.echo_reply_fragments
    if len(frags) == 1 and frags[0] == total:
        return Verdict(VerdictKind.NAT_DEVICE, VerdictReason.SINGLE_LARGE_REPLY, obs)
    cap = frag_cap(cfg.forged_mtu)
    if path_mtu is not None and path_mtu < total and frag_cap(path_mtu) == cap:
        # en-route fragmentation at the planted value is indistinguishable
        # from host-level fragmentation
        return Verdict(VerdictKind.UNKNOWN, VerdictReason.AMBIGUOUS_SIZES, obs)
    payload_total = total - wire.IP_HEADER_LEN
    expected = set(range(cap, payload_total, cap))
    if expected and expected <= obs.echo_reply_boundaries:
        # the reply was split at the planted MTU before any router touched
        # it: the sender's own path MTU cache shrank
        return Verdict(VerdictKind.SEPARATE_HOST, VerdictReason.FRAG_SIZE_MATCHES_MTU, obs)
    return Verdict(VerdictKind.NAT_DEVICE, VerdictReason.FRAG_SIZE_MISMATCH, obs)


def restore_path_mtu(sim: Simulator, target_addr: str, vantage_addr: str) -> int:
    """Explicit restore event undoing the probe's side effect: every cache
    shrunk for the vantage (client, host, or a synchronizing NAT) returns
    to the default.  No-op when nothing was probed; returns the number of
    entries cleared."""
    cleared = 0
    for node in sim.nodes.values():
        pmtu = getattr(node.handler, "pmtu", None)
        if pmtu is not None and vantage_addr in pmtu.entries:
            pmtu.reset(vantage_addr)
            cleared += 1
    return cleared


# -- helpers -------------------------------------------------------------------


def _wait_for_observation(sim, vantage: Host, target: str, *, after_tick: int, deadline: int):
    """Next data-carrying segment from the target; pure ACKs say nothing
    about the sender's path MTU sizing."""
    while True:
        hits = [
            o for o in vantage.observations_after(after_tick, target) if o.segment.payload_length > 0
        ]
        if hits:
            return hits[0]
        if sim.now >= deadline or sim.idle:
            return None
        sim.run(until=sim.now + 1)


def _confirm_shrink(sim, vantage, target, cfg, probe_tick, obs) -> bool:
    """First post-probe segment, with one retry for anything already in
    flight when the forged message landed."""
    deadline = sim.now + cfg.timeout_ticks
    seen = probe_tick
    for _ in range(2):
        nxt = _wait_for_observation(sim, vantage, target, after_tick=seen, deadline=deadline)
        if nxt is None:
            return False
        obs.post_probe_tcp_size = nxt.size
        if nxt.size <= cfg.forged_mtu:
            return True
        seen = nxt.tick
    return False


def _reply_fragments(sim, vantage_node: str, target: str, echo_tick: int):
    out = []
    for rec in sim.trace:
        if (
            rec.tick > echo_tick
            and rec.node == vantage_node
            and rec.action == "deliver"
            and rec.dgram.protocol is Protocol.ICMP
            and rec.dgram.src == target
        ):
            d = rec.dgram
            if isinstance(d.payload, (EchoReply, bytes)):
                out.append((d.total_length, d.fragment_offset, d.more_fragments))
    return out
