"""Identification engine: crafting, both stages, classifier, restoration."""

import pytest

from natsim import assess, wire
from natsim import scenario as sc
from natsim.probe import (
    NoBaselineError,
    ProbeConfig,
    VerdictKind,
    VerdictReason,
    craft_frag_needed,
    restore_path_mtu,
)
from natsim.wire import EchoRequest, Ipv4Datagram, Protocol, TcpFlag, TcpSegment


def observed_segment():
    return Ipv4Datagram(
        src="6.6.6.6", dst="8.8.8.8", protocol=Protocol.TCP,
        payload=TcpSegment(4444, 80, seq=314159, flags=TcpFlag.PSH | TcpFlag.ACK,
                           payload_length=1460),
        df=True,
    )


class TestCraft:
    def test_embeds_observed_tuple_and_seq(self):
        msg = craft_frag_needed(observed_segment(), 600)
        q = wire.parse_embedded(msg.embedded)
        assert (q.src_port, q.dst_port, q.seq) == (4444, 80, 314159)
        assert msg.next_hop_mtu == 600

    def test_embedded_length_constant(self):
        for payload in (0, 1, 1460):
            d = observed_segment()
            d = Ipv4Datagram(src=d.src, dst=d.dst, protocol=d.protocol,
                             payload=TcpSegment(4444, 80, seq=1, payload_length=payload), df=True)
            assert len(craft_frag_needed(d, 600).embedded) == 28

    def test_requires_tcp_baseline(self):
        bad = Ipv4Datagram(src="6.6.6.6", dst="8.8.8.8", protocol=Protocol.ICMP,
                           payload=EchoRequest(1, 1, 0))
        with pytest.raises(NoBaselineError):
            craft_frag_needed(bad, 600)

    def test_config_bounds(self):
        with pytest.raises(ValueError):
            ProbeConfig(forged_mtu=2000, baseline_size=1500)
        with pytest.raises(ValueError):
            ProbeConfig(forged_mtu=60)


def identify(doc, seed=None):
    return assess.identify_scenario(sc.load_scenario(doc), seed=seed)


class TestIdentification:
    def test_nat_device_default_path(self):
        v, _ = identify(sc.nat_scenario_doc("p-nat"))
        assert v.kind is VerdictKind.NAT_DEVICE
        assert v.reason is VerdictReason.SINGLE_LARGE_REPLY
        assert v.evidence.echo_reply_fragments == [1500]
        assert v.evidence.baseline_tcp_size == 1500
        assert v.evidence.post_probe_tcp_size <= 600

    def test_separate_host_default_path(self):
        v, _ = identify(sc.host_scenario_doc("p-host"))
        assert v.kind is VerdictKind.SEPARATE_HOST
        assert v.reason is VerdictReason.FRAG_SIZE_MATCHES_MTU
        assert v.evidence.echo_reply_fragments == [596, 596, 348]

    def test_icmp_error_filter_blocks_stage_one(self):
        v, handles = identify(sc.nat_scenario_doc("p-mb", nat_inbound_filter=["icmp-error"]))
        assert v.kind is VerdictKind.UNKNOWN
        assert v.reason is VerdictReason.NO_PMTU_SHRINK
        echo_sent = any(
            r.action == "send" and r.node == "vantage"
            and isinstance(r.dgram.payload, EchoRequest)
            for r in handles.sim.trace
        )
        assert not echo_sent  # stage-2 gate

    def test_echo_filter_yields_no_reply(self):
        doc = sc.nat_scenario_doc("p-echo")
        for link in doc["links"]:
            if link["from"] == "r1" and link["to"] == "vantage":
                link["filter"] = ["icmp-echo"]
        v, _ = identify(doc)
        assert v.kind is VerdictKind.UNKNOWN
        assert v.reason is VerdictReason.NO_ECHO_REPLY

    def test_router_mtu_equal_to_planted_is_ambiguous(self):
        for doc in (sc.nat_scenario_doc("p-amb-n", router_vantage_mtu=600),
                    sc.host_scenario_doc("p-amb-h", router_vantage_mtu=600)):
            v, _ = identify(doc)
            assert v.kind is VerdictKind.UNKNOWN
            assert v.reason is VerdictReason.AMBIGUOUS_SIZES

    def test_verdict_deterministic(self):
        doc = sc.nat_scenario_doc("p-det", router_vantage_mtu=1492)
        a, _ = identify(doc, seed=9)
        b, _ = identify(doc, seed=9)
        assert (a.kind, a.reason) == (b.kind, b.reason)
        assert a.evidence.echo_reply_fragments == b.evidence.echo_reply_fragments

    def test_synchronized_closes_side_channel(self):
        nat_v, _ = identify(sc.nat_scenario_doc("p-sync", pmtud_sync="synchronized"))
        host_v, _ = identify(sc.host_scenario_doc("p-sync-h"))
        assert (nat_v.kind, nat_v.reason) == (host_v.kind, host_v.reason)
        assert nat_v.evidence.echo_reply_fragments == host_v.evidence.echo_reply_fragments


class TestRestore:
    def test_restore_then_large_segments_return(self):
        scn = sc.load_scenario(sc.nat_scenario_doc("p-rst"))
        handles = sc.build(scn)
        sc.establish(handles)
        from natsim.probe import run_identification

        v = run_identification(handles.sim, handles.vantage_host, scn.target_addr,
                               scn.probe.config)
        assert v.evidence.post_probe_tcp_size <= 600
        cleared = restore_path_mtu(handles.sim, scn.target_addr, handles.vantage_host.address)
        assert cleared == 1
        tick = handles.sim.now
        handles.sim.run(until=tick + 60)  # periodic session sends continue
        post = [o for o in handles.vantage_host.observations
                if o.tick > tick and o.segment.payload_length > 0]
        assert post and post[0].size == 1500

    def test_restore_without_probe_is_noop(self):
        scn = sc.load_scenario(sc.nat_scenario_doc("p-noop"))
        handles = sc.build(scn)
        sc.establish(handles)
        assert restore_path_mtu(handles.sim, scn.target_addr, "8.8.8.8") == 0

    def test_reprobe_matches_first_probe(self):
        doc = sc.nat_scenario_doc("p-again", router_vantage_mtu=1492)
        a, _ = identify(doc)
        b, _ = identify(doc)
        assert (a.kind, a.reason, a.evidence.echo_reply_fragments) == (
            b.kind, b.reason, b.evidence.echo_reply_fragments)


class TestVerdictInvariant:
    def test_unknown_must_carry_unknown_reason(self):
        from natsim.probe import Observation, Verdict

        with pytest.raises(ValueError):
            Verdict(VerdictKind.UNKNOWN, VerdictReason.SINGLE_LARGE_REPLY, Observation())
        with pytest.raises(ValueError):
            Verdict(VerdictKind.NAT_DEVICE, VerdictReason.NO_ECHO_REPLY, Observation())

    def test_csv_row_shape(self):
        v, _ = identify(sc.nat_scenario_doc("p-csv"))
        row = v.csv_row("6.6.6.6")
        assert row.startswith("6.6.6.6,nat-device,single-large-reply,1500,")
