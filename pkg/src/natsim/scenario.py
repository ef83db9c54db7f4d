"""Scenario documents: a declarative topology + policy + workload +
probe/attack plan, loaded from JSON-compatible dicts into validated
Scenario objects, then built into a live simulator.

Schema top-level keys: name, seed, tick_duration, nodes[], links[],
nat{}, server{}, clients[], ephemeral_range, workload{}, probe{},
attack{}, force_attack, expect{}.  All defaults are filled at load time
so a minimal document only names the topology.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .endpoint import DEFAULT_EPHEMERAL_RANGE, Host, LINUX_LIKE, OPENBSD_LIKE, StackProfile, TcpState
from .fabric import DropClass, LinkSpec, MiddleboxFilter, Simulator
from .natbox import NatBox, NatPolicy, PmtudSync, PortAllocation, RstHandling, UnmappedInbound
from .probe import ProbeConfig
from .strike import AttackPlan

NODE_KINDS = ("client", "nat", "router", "server", "vantage", "attacker")
PROFILES = {"linux-like": LINUX_LIKE, "openbsd-like": OPENBSD_LIKE}
SESSION_PAYLOAD = 1460  # guarantees one full-sized baseline segment


class ScenarioError(Exception):
    """A document violated the schema; the message names the field."""


def _enum_value(field_name: str, value: str, enum_cls):
    for member in enum_cls:
        if member.value == value:
            return member
    valid = ", ".join(m.value for m in enum_cls)
    raise ScenarioError(f"{field_name}: unknown value {value!r} (valid: {valid})")


def _require(doc: dict, key: str, typ, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}.{key}: required field missing")
    value = doc[key]
    if typ is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, typ):
        names = typ.__name__ if isinstance(typ, type) else "/".join(t.__name__ for t in typ)
        raise ScenarioError(f"{where}.{key}: expected {names}, got {type(value).__name__}")
    return value


def _optional(doc: dict, key: str, typ, default, where: str):
    if key not in doc or doc[key] is None:
        return default
    return _require(doc, key, typ, where)


def _port_range(doc: dict, key: str, default, where: str) -> tuple[int, int]:
    raw = _optional(doc, key, list, None, where)
    if raw is None:
        return default
    if len(raw) != 2 or not all(isinstance(x, int) for x in raw):
        raise ScenarioError(f"{where}.{key}: expected [lo, hi]")
    lo, hi = raw
    if lo > hi or lo < 0 or hi > 0xFFFF:
        raise ScenarioError(f"{where}.{key}: range [{lo}, {hi}] empty or out of bounds")
    return (lo, hi)


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    kind: str
    address: str


def _check_connected(nodes, links) -> None:
    if not nodes:
        return
    adjacency: dict[str, set[str]] = {n.node_id: set() for n in nodes}
    for link in links:
        adjacency[link.frm].add(link.to)
        adjacency[link.to].add(link.frm)
    seen = {nodes[0].node_id}
    queue = [nodes[0].node_id]
    while queue:
        for nb in adjacency[queue.pop()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    stranded = sorted(set(adjacency) - seen)
    if stranded:
        raise ScenarioError(f"links: topology not connected; unreachable nodes {stranded}")


@dataclass(frozen=True)
class WorkloadSpec:
    connections: int = 4
    send_period: int = 10
    payload: int = 512


@dataclass(frozen=True)
class ProbeSpec:
    config: ProbeConfig
    # applied between the probe stages, like re-dialing a testbed router
    pre_echo_mtu: tuple[str, str, int] | None = None


@dataclass(frozen=True)
class AttackSpec:
    dst_port_range: tuple[int, int]
    push_ack_src_port_range: tuple[int, int]
    interleave_batch: int = 1024
    rounds: int = 1
    forged_seq: int = 0
    set_ack_flag_on_rst: bool = True
    new_connection_attempts: int = 2
    settle_ticks: int = 60


@dataclass(frozen=True)
class Expectation:
    verdict: str | None = None
    attack_success: bool | None = None
    diagnosis: str | None = None


@dataclass
class Scenario:
    name: str
    seed: int
    tick_duration: float
    nodes: list[NodeSpec]
    links: list[LinkSpec]
    nat_node: str | None
    nat_policy: NatPolicy | None
    server_node: str | None
    server_profile: StackProfile
    server_port: int
    clients: list[str]
    ephemeral_range: tuple[int, int]
    workload: WorkloadSpec
    probe: ProbeSpec | None
    attack: AttackSpec | None
    force_attack: bool
    expect: Expectation | None
    doc: dict

    @property
    def target_addr(self) -> str:
        node_map = {n.node_id: n for n in self.nodes}
        if self.nat_node:
            return node_map[self.nat_node].address
        return node_map[self.clients[0]].address

    def policy_summary(self) -> str:
        policy = self.nat_policy.summary() if self.nat_policy else "no-nat"
        return f"{policy}/{self.server_profile.name}"


def load_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and fill every default."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: expected an object")
    name = _require(doc, "name", str, "scenario")
    seed = _optional(doc, "seed", int, 1, "scenario")
    tick_duration = float(_optional(doc, "tick_duration", (int, float), 0.001, "scenario"))

    nodes = []
    seen_ids: set[str] = set()
    raw_nodes = _require(doc, "nodes", list, "scenario")
    for i, nd in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        node_id = _require(nd, "id", str, where)
        kind = _require(nd, "kind", str, where)
        if kind not in NODE_KINDS:
            raise ScenarioError(f"{where}.kind: unknown value {kind!r} (valid: {', '.join(NODE_KINDS)})")
        address = _require(nd, "address", str, where)
        if node_id in seen_ids:
            raise ScenarioError(f"{where}.id: duplicate node id {node_id!r}")
        seen_ids.add(node_id)
        nodes.append(NodeSpec(node_id, kind, address))
    if not nodes:
        raise ScenarioError("scenario.nodes: at least one node required")

    links = []
    for i, ld in enumerate(_require(doc, "links", list, "scenario")):
        where = f"links[{i}]"
        frm = _require(ld, "from", str, where)
        to = _require(ld, "to", str, where)
        for end in (frm, to):
            if end not in seen_ids:
                raise ScenarioError(f"{where}: unknown node {end!r}")
        filt = None
        raw_filter = ld.get("filter")
        if raw_filter:
            classes = frozenset(
                _enum_value(f"{where}.filter[{j}]", c, DropClass) for j, c in enumerate(raw_filter)
            )
            filt = MiddleboxFilter(classes)
        try:
            links.append(
                LinkSpec(
                    frm=frm,
                    to=to,
                    mtu=_optional(ld, "mtu", int, 1500, where),
                    delay=_optional(ld, "delay", int, 1, where),
                    loss=float(_optional(ld, "loss", (int, float), 0.0, where)),
                    filter=filt,
                )
            )
        except ValueError as e:
            raise ScenarioError(f"{where}: {e}") from None

    nat_kind_nodes = [n.node_id for n in nodes if n.kind == "nat"]
    if len(nat_kind_nodes) > 1:
        raise ScenarioError("nodes: at most one NAT node per scenario")
    _check_connected(nodes, links)

    nat_node = None
    nat_policy = None
    nat_doc = doc.get("nat")
    if nat_doc is not None:
        nat_node = _optional(nat_doc, "node", str, "nat", "nat")
        if nat_node not in seen_ids:
            raise ScenarioError(f"nat.node: unknown node {nat_node!r}")
        nat_policy = NatPolicy(
            rst_handling=_enum_value(
                "nat.rst_handling",
                _optional(nat_doc, "rst_handling", str, "vulnerable-remove", "nat"),
                RstHandling,
            ),
            require_ack_flag_on_rst=_optional(nat_doc, "require_ack_on_rst", bool, False, "nat"),
            unmapped_inbound=_enum_value(
                "nat.unmapped_inbound",
                _optional(nat_doc, "unmapped_inbound", str, "rst-reply", "nat"),
                UnmappedInbound,
            ),
            port_allocation=_enum_value(
                "nat.port_allocation",
                _optional(nat_doc, "port_allocation", str, "sequential", "nat"),
                PortAllocation,
            ),
            sequential_start=_optional(nat_doc, "sequential_start", int, 1024, "nat"),
            pmtud_sync=_enum_value(
                "nat.pmtud_sync", _optional(nat_doc, "pmtud_sync", str, "leaky", "nat"), PmtudSync
            ),
        )

    server_node = None
    server_profile = LINUX_LIKE
    server_port = 80
    server_doc = doc.get("server")
    if server_doc is not None:
        server_node = _optional(server_doc, "node", str, "server", "server")
        if server_node not in seen_ids:
            raise ScenarioError(f"server.node: unknown node {server_node!r}")
        profile_name = _optional(server_doc, "profile", str, "linux-like", "server")
        if profile_name not in PROFILES:
            raise ScenarioError(
                f"server.profile: unknown value {profile_name!r} (valid: {', '.join(PROFILES)})"
            )
        server_profile = PROFILES[profile_name]
        server_port = _optional(server_doc, "port", int, 80, "server")

    default_clients = [n.node_id for n in nodes if n.kind == "client"]
    clients = _optional(doc, "clients", list, default_clients, "scenario")
    for c in clients:
        if c not in seen_ids:
            raise ScenarioError(f"clients: unknown node {c!r}")
    if not clients:
        raise ScenarioError("clients: at least one client node required")

    ephemeral = _port_range(doc, "ephemeral_range", DEFAULT_EPHEMERAL_RANGE, "scenario")

    wl_doc = doc.get("workload") or {}
    workload = WorkloadSpec(
        connections=_optional(wl_doc, "connections", int, 4, "workload"),
        send_period=_optional(wl_doc, "send_period", int, 10, "workload"),
        payload=_optional(wl_doc, "payload", int, 512, "workload"),
    )

    probe_spec = None
    probe_doc = doc.get("probe")
    if probe_doc is not None:
        vantage = _optional(probe_doc, "vantage", str, "vantage", "probe")
        if vantage not in seen_ids:
            raise ScenarioError(f"probe.vantage: unknown node {vantage!r}")
        baseline = _optional(probe_doc, "baseline_size", int, 1500, "probe")
        forged = _optional(probe_doc, "forged_mtu", int, 600, "probe")
        if not 68 <= forged < baseline:
            raise ScenarioError(
                f"probe.forged_mtu: {forged} must lie in [68, baseline_size {baseline})"
            )
        pre_echo = None
        pe_doc = probe_doc.get("pre_echo_mtu")
        if pe_doc is not None:
            link = _require(pe_doc, "link", list, "probe.pre_echo_mtu")
            if len(link) != 2 or any(l not in seen_ids for l in link):
                raise ScenarioError("probe.pre_echo_mtu.link: expected [from, to] naming nodes")
            pre_echo = (link[0], link[1], _require(pe_doc, "mtu", int, "probe.pre_echo_mtu"))
        probe_spec = ProbeSpec(
            config=ProbeConfig(
                forged_mtu=forged,
                baseline_size=baseline,
                timeout_ticks=_optional(probe_doc, "timeout_ticks", int, 200, "probe"),
                vantage=vantage,
            ),
            pre_echo_mtu=pre_echo,
        )

    attack_spec = None
    attack_doc = doc.get("attack")
    if attack_doc is not None:
        attack_spec = AttackSpec(
            dst_port_range=_port_range(attack_doc, "dst_port_range", DEFAULT_EPHEMERAL_RANGE, "attack"),
            push_ack_src_port_range=_port_range(
                attack_doc, "push_ack_src_port_range", DEFAULT_EPHEMERAL_RANGE, "attack"
            ),
            interleave_batch=_optional(attack_doc, "interleave_batch", int, 1024, "attack"),
            rounds=_optional(attack_doc, "rounds", int, 1, "attack"),
            forged_seq=_optional(attack_doc, "forged_seq", int, 0, "attack"),
            set_ack_flag_on_rst=_optional(attack_doc, "set_ack_flag_on_rst", bool, True, "attack"),
            new_connection_attempts=_optional(attack_doc, "new_connection_attempts", int, 2, "attack"),
            settle_ticks=_optional(attack_doc, "settle_ticks", int, 60, "attack"),
        )

    expect = None
    exp_doc = doc.get("expect")
    if exp_doc is not None:
        expect = Expectation(
            verdict=_optional(exp_doc, "verdict", str, None, "expect"),
            attack_success=_optional(exp_doc, "attack_success", bool, None, "expect"),
            diagnosis=_optional(exp_doc, "diagnosis", str, None, "expect"),
        )

    return Scenario(
        name=name,
        seed=seed,
        tick_duration=tick_duration,
        nodes=nodes,
        links=links,
        nat_node=nat_node,
        nat_policy=nat_policy,
        server_node=server_node,
        server_profile=server_profile,
        server_port=server_port,
        clients=clients,
        ephemeral_range=ephemeral,
        workload=workload,
        probe=probe_spec,
        attack=attack_spec,
        force_attack=_optional(doc, "force_attack", bool, False, "scenario"),
        expect=expect,
        doc=doc,
    )


@dataclass
class Handles:
    """Everything the orchestrators need after a scenario is built."""

    scenario: Scenario
    sim: Simulator
    hosts: dict[str, Host]
    nat: NatBox | None
    server_host: Host | None
    vantage_host: Host | None
    attacker_node: str | None
    victims: list[tuple[Host, tuple]] = field(default_factory=list)
    plan: AttackPlan | None = None


def build(scenario: Scenario, seed: int | None = None) -> Handles:
    """Construct the simulator for a scenario, without running anything."""
    seed = scenario.seed if seed is None else seed
    sim = Simulator(seed=seed)
    hosts: dict[str, Host] = {}
    nat: NatBox | None = None
    attacker_node = None
    node_map = {n.node_id: n for n in scenario.nodes}
    internal_addrs = (
        {node_map[c].address for c in scenario.clients} if scenario.nat_node else set()
    )
    vantage_id = scenario.probe.config.vantage if scenario.probe else None

    for spec in scenario.nodes:
        if spec.kind == "router":
            sim.add_node(spec.node_id, spec.address, transit=True)
        elif spec.kind == "attacker":
            sim.add_node(spec.node_id, spec.address)
            attacker_node = spec.node_id
        elif spec.kind == "nat":
            if scenario.nat_node != spec.node_id:
                raise ScenarioError(f"nat: node {spec.node_id!r} present but not configured")
            nat = NatBox(
                spec.node_id,
                spec.address,
                scenario.nat_policy,
                internal_addrs,
                seed=seed,
            )
            sim.add_node(spec.node_id, spec.address, handler=nat, intercept=True)
        else:
            profile = LINUX_LIKE
            observe = False
            ack_data = True
            if spec.kind == "server" and spec.node_id == scenario.server_node:
                profile = scenario.server_profile
            if spec.kind == "vantage" or spec.node_id == vantage_id:
                observe = True
                ack_data = False  # leave probe-relevant segments unacknowledged
            host = Host(
                spec.node_id,
                spec.address,
                seed=seed,
                profile=profile,
                ephemeral_range=scenario.ephemeral_range,
                ack_data=ack_data,
                observe=observe,
            )
            hosts[spec.node_id] = host
            sim.add_node(spec.node_id, spec.address, handler=host)

    for link in scenario.links:
        sim.add_link(replace(link))
    sim.finalize_routes()

    server_host = hosts.get(scenario.server_node) if scenario.server_node else None
    if server_host is not None:
        server_host.listen(scenario.server_port)
    vantage_host = hosts.get(vantage_id) if vantage_id else None
    if vantage_host is not None:
        vantage_host.listen(80)

    plan = None
    if scenario.attack is not None and scenario.server_node is not None:
        a = scenario.attack
        plan = AttackPlan(
            nat_public_ip=scenario.target_addr,
            victim_server=(node_map[scenario.server_node].address, scenario.server_port),
            dst_port_range=a.dst_port_range,
            push_ack_src_port_range=a.push_ack_src_port_range,
            interleave_batch=a.interleave_batch,
            rounds=a.rounds,
            forged_seq=a.forged_seq,
            set_ack_flag_on_rst=a.set_ack_flag_on_rst,
            new_connection_attempts=a.new_connection_attempts,
            seed=seed,
        )

    return Handles(
        scenario=scenario,
        sim=sim,
        hosts=hosts,
        nat=nat,
        server_host=server_host,
        vantage_host=vantage_host,
        attacker_node=attacker_node,
        plan=plan,
    )


class EstablishError(Exception):
    pass


def establish(handles: Handles) -> None:
    """Open the victim connections, push one round of data through each,
    and start the vantage session workload."""
    scn = handles.scenario
    sim = handles.sim
    node_map = {n.node_id: n for n in scn.nodes}

    if handles.server_host is not None and scn.workload.connections > 0:
        server_addr = node_map[scn.server_node].address
        for i in range(scn.workload.connections):
            client = handles.hosts[scn.clients[i % len(scn.clients)]]
            sim.schedule_call(
                sim.now + 1 + i,
                lambda s, c=client: handles.victims.append(
                    (c, c.open_connection(s, (server_addr, scn.server_port)))
                ),
            )
        deadline = sim.now + 40 + 4 * scn.workload.connections
        while sim.now < deadline:
            sim.run(until=sim.now + 1)
            if len(handles.victims) == scn.workload.connections and all(
                h.socket(k) and h.socket(k).state == TcpState.ESTABLISHED
                for h, k in handles.victims
            ):
                break
        else:
            raise EstablishError(f"{scn.name}: victim connections failed to establish")
        for host, key in handles.victims:
            host.send_data(sim, key, scn.workload.payload)
        sim.run(until=sim.now + 20)

    if handles.vantage_host is not None and scn.probe is not None:
        client = handles.hosts[scn.clients[0]]
        vantage_addr = handles.vantage_host.address
        key = client.open_connection(sim, (vantage_addr, 80))
        deadline = sim.now + 40
        while sim.now < deadline:
            sim.run(until=sim.now + 1)
            sock = client.socket(key)
            if sock and sock.state == TcpState.ESTABLISHED:
                break
        else:
            raise EstablishError(f"{scn.name}: vantage session failed to establish")
        horizon = sim.now + 4 * scn.probe.config.timeout_ticks

        def periodic(s: Simulator):
            sock = client.socket(key)
            if sock and sock.state == TcpState.ESTABLISHED:
                client.send_data(s, key, SESSION_PAYLOAD)
            if s.now + scn.workload.send_period <= horizon:
                s.schedule_call(s.now + scn.workload.send_period, periodic)

        sim.schedule_call(sim.now + 1, periodic)


# -- canonical documents and the shipped default suite ---------------------------


def nat_scenario_doc(
    name: str,
    *,
    seed: int = 1,
    clients: int = 4,
    rst_handling: str = "vulnerable-remove",
    unmapped_inbound: str = "rst-reply",
    port_allocation: str = "sequential",
    sequential_start: int = 40000,
    pmtud_sync: str = "leaky",
    require_ack_on_rst: bool = False,
    server_profile: str = "linux-like",
    server_port: int = 80,
    router_vantage_mtu: int = 1500,
    pre_echo_mtu: int | None = None,
    nat_inbound_filter: list[str] | None = None,
    ephemeral_range: tuple[int, int] = (40000, 42047),
    port_range: tuple[int, int] = (40000, 42047),
    rounds: int = 2,
    interleave_batch: int = 64,
    forged_mtu: int = 600,
    loss: float = 0.0,
    with_probe: bool = True,
    force_attack: bool = False,
    expect: dict | None = None,
) -> dict:
    """The canonical NATed topology: clients - nat - router - {server,
    vantage, attacker}, all links 1500/delay 1 unless overridden."""
    nodes = [
        {"id": f"client{i + 1}", "kind": "client", "address": f"10.0.0.{i + 2}"}
        for i in range(clients)
    ]
    nodes += [
        {"id": "nat", "kind": "nat", "address": "6.6.6.6"},
        {"id": "r1", "kind": "router", "address": "198.51.100.1"},
        {"id": "server", "kind": "server", "address": "7.7.7.7"},
        {"id": "vantage", "kind": "vantage", "address": "8.8.8.8"},
        {"id": "attacker", "kind": "attacker", "address": "9.9.9.9"},
    ]
    links = []
    for i in range(clients):
        links += [
            {"from": f"client{i + 1}", "to": "nat"},
            {"from": "nat", "to": f"client{i + 1}"},
        ]
    links += [
        {"from": "nat", "to": "r1"},
        {"from": "r1", "to": "nat", "filter": nat_inbound_filter},
        {"from": "r1", "to": "server"},
        {"from": "server", "to": "r1"},
        {"from": "r1", "to": "vantage", "mtu": router_vantage_mtu},
        {"from": "vantage", "to": "r1"},
        {"from": "attacker", "to": "r1"},
        {"from": "r1", "to": "attacker"},
    ]
    if loss:
        for link in links:
            if link["from"] == "attacker":
                link["loss"] = loss
    doc = {
        "name": name,
        "seed": seed,
        "nodes": nodes,
        "links": links,
        "nat": {
            "node": "nat",
            "rst_handling": rst_handling,
            "require_ack_on_rst": require_ack_on_rst,
            "unmapped_inbound": unmapped_inbound,
            "port_allocation": port_allocation,
            "sequential_start": sequential_start,
            "pmtud_sync": pmtud_sync,
        },
        "server": {"node": "server", "profile": server_profile, "port": server_port},
        "ephemeral_range": list(ephemeral_range),
        "workload": {"connections": clients, "send_period": 10, "payload": 512},
        "attack": {
            "dst_port_range": list(port_range),
            "push_ack_src_port_range": list(port_range),
            "interleave_batch": interleave_batch,
            "rounds": rounds,
        },
        "force_attack": force_attack,
        "expect": expect,
    }
    if with_probe:
        doc["probe"] = {"forged_mtu": forged_mtu, "vantage": "vantage"}
        if pre_echo_mtu is not None:
            doc["probe"]["pre_echo_mtu"] = {"link": ["r1", "vantage"], "mtu": pre_echo_mtu}
    return doc


def host_scenario_doc(
    name: str,
    *,
    seed: int = 1,
    router_vantage_mtu: int = 1500,
    pre_echo_mtu: int | None = None,
    forged_mtu: int = 600,
    expect: dict | None = None,
) -> dict:
    """A directly addressed host talking to the vantage: the probe's
    separate-host twin of the NATed topology."""
    doc = {
        "name": name,
        "seed": seed,
        "nodes": [
            {"id": "host", "kind": "client", "address": "5.5.5.5"},
            {"id": "r1", "kind": "router", "address": "198.51.100.1"},
            {"id": "vantage", "kind": "vantage", "address": "8.8.8.8"},
        ],
        "links": [
            {"from": "host", "to": "r1"},
            {"from": "r1", "to": "host"},
            {"from": "r1", "to": "vantage", "mtu": router_vantage_mtu},
            {"from": "vantage", "to": "r1"},
        ],
        "nat": None,
        "server": None,
        "workload": {"connections": 0, "send_period": 10, "payload": 512},
        "probe": {"forged_mtu": forged_mtu, "vantage": "vantage"},
        "expect": expect,
    }
    if pre_echo_mtu is not None:
        doc["probe"]["pre_echo_mtu"] = {"link": ["r1", "vantage"], "mtu": pre_echo_mtu}
    return doc


def default_suite() -> list[Scenario]:
    """The shipped assessment matrix: every RST-handling x unmapped-inbound
    policy under both server profiles, the three router-fragmentation
    identification scenarios (plus their separate-host twins), and the two
    observed failure classes."""
    docs = []
    for rst in ("vulnerable-remove", "forward-only", "strict-validate"):
        for unmapped in ("rst-reply", "silent-drop"):
            for profile in ("linux-like", "openbsd-like"):
                vulnerable = rst == "vulnerable-remove" and profile == "linux-like"
                if profile == "openbsd-like":
                    allocation, start = "preserving", 40000
                    diagnosis = {
                        "vulnerable-remove": "no-dup-ack-from-server",
                        "forward-only": "forwarded-rst-no-removal",
                        "strict-validate": "no-dup-ack-from-server",
                    }[rst]
                else:
                    allocation, start = "sequential", 40000
                    diagnosis = {
                        "vulnerable-remove": "none",
                        "forward-only": "forwarded-rst-no-removal",
                        "strict-validate": "none",
                    }[rst]
                docs.append(
                    nat_scenario_doc(
                        f"matrix-{rst}-{unmapped}-{profile}",
                        rst_handling=rst,
                        unmapped_inbound=unmapped,
                        port_allocation=allocation,
                        sequential_start=start,
                        server_profile=profile,
                        expect={
                            "verdict": "nat-device",
                            "attack_success": vulnerable,
                            "diagnosis": "none" if vulnerable else diagnosis,
                        },
                    )
                )
    for mtu in (1500, 1492, 576):
        pre_echo = mtu if mtu < 600 else None
        static = mtu if mtu >= 600 else 1500
        docs.append(
            nat_scenario_doc(
                f"frag-router-{mtu}-nat",
                router_vantage_mtu=static,
                pre_echo_mtu=pre_echo,
                with_probe=True,
                expect={"verdict": "nat-device", "attack_success": True, "diagnosis": "none"},
            )
        )
        docs.append(
            host_scenario_doc(
                f"frag-router-{mtu}-host",
                router_vantage_mtu=static,
                pre_echo_mtu=pre_echo,
                expect={"verdict": "separate-host"},
            )
        )
    docs.append(
        nat_scenario_doc(
            "failure-forwarding-wifi",
            rst_handling="forward-only",
            expect={
                "verdict": "nat-device",
                "attack_success": False,
                "diagnosis": "forwarded-rst-no-removal",
            },
        )
    )
    docs.append(
        nat_scenario_doc(
            "failure-middlebox-cloud",
            nat_inbound_filter=["tcp-rst-inbound", "icmp-error"],
            force_attack=True,
            expect={
                "verdict": "unknown",
                "attack_success": False,
                "diagnosis": "rst-blocked-by-middlebox",
            },
        )
    )
    return [load_scenario(d) for d in docs]
