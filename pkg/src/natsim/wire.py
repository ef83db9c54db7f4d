"""Wire-level packet model: IPv4 datagrams carrying TCP or ICMP, with
RFC 791 fragmentation/reassembly and a canonical big-endian byte codec.

Everything in this module is a plain value: pure functions over frozen
dataclasses, safe to share across threads.  No checksums, no IP/TCP
options, no TTL handling; headers are fixed at 20 octets each.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import Enum, IntFlag

IP_HEADER_LEN = 20
TCP_HEADER_LEN = 20
ICMP_HEADER_LEN = 8
MIN_MTU = 68  # IPv4 floor
EMBEDDED_QUOTE_LEN = 28  # embedded IP header + first 8 transport octets
DEFAULT_MTU = 1500
SEQ_MOD = 1 << 32


class WireError(Exception):
    """Base class for packet-model errors."""


class NeedsFragmentationError(WireError):
    """DF-set datagram exceeds the given MTU; caller should drop and
    report ICMP Fragmentation Needed."""

    def __init__(self, mtu: int):
        super().__init__(f"needs-fragmentation: datagram exceeds mtu {mtu} with DF set")
        self.mtu = mtu


class IncompleteGroupError(WireError):
    """Fragment offsets leave a gap or overlap."""


class MixedGroupError(WireError):
    """Fragments from different datagrams were mixed."""


class MalformedPacketError(WireError):
    """Buffer is truncated or internally inconsistent."""


class Protocol(Enum):
    TCP = 6
    ICMP = 1


class TcpFlag(IntFlag):
    # values match the wire bit layout of the TCP flags octet
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10


def seq_add(a: int, b: int) -> int:
    return (a + b) % SEQ_MOD


def seq_in_range(seq: int, lo: int, hi: int) -> bool:
    """True when seq lies in the modular half-open interval [lo, hi)."""
    return (seq - lo) % SEQ_MOD < (hi - lo) % SEQ_MOD


@dataclass(frozen=True, slots=True)
class TcpSegment:
    """A TCP segment; only the payload length is modeled, not its bytes."""

    src_port: int
    dst_port: int
    seq: int
    ack: int = 0
    flags: TcpFlag = TcpFlag(0)
    payload_length: int = 0

    def __post_init__(self):
        if not 0 <= self.src_port <= 0xFFFF or not 0 <= self.dst_port <= 0xFFFF:
            raise ValueError("port out of range")
        if self.payload_length < 0:
            raise ValueError("negative payload length")

    @property
    def wire_payload_length(self) -> int:
        return TCP_HEADER_LEN + self.payload_length

    @property
    def seg_len(self) -> int:
        """Sequence-space length: payload plus SYN/FIN."""
        n = self.payload_length
        if TcpFlag.SYN in self.flags:
            n += 1
        if TcpFlag.FIN in self.flags:
            n += 1
        return n


@dataclass(frozen=True, slots=True)
class EchoRequest:
    ident: int
    seq_no: int
    padding_length: int = 0


@dataclass(frozen=True, slots=True)
class EchoReply:
    ident: int
    seq_no: int
    padding_length: int = 0


@dataclass(frozen=True, slots=True)
class FragNeeded:
    """ICMP type 3 / code 4 carrying the next-hop MTU and the first 28
    octets of the offending datagram."""

    next_hop_mtu: int
    embedded: bytes

    def __post_init__(self):
        if len(self.embedded) != EMBEDDED_QUOTE_LEN:
            raise ValueError("embedded quote must be exactly 28 octets")


IcmpMessage = EchoRequest | EchoReply | FragNeeded
Payload = TcpSegment | EchoRequest | EchoReply | FragNeeded | bytes


def _payload_octets(payload: Payload) -> int:
    if isinstance(payload, TcpSegment):
        return payload.wire_payload_length
    if isinstance(payload, (EchoRequest, EchoReply)):
        return ICMP_HEADER_LEN + payload.padding_length
    if isinstance(payload, FragNeeded):
        return ICMP_HEADER_LEN + EMBEDDED_QUOTE_LEN
    return len(payload)


@dataclass(frozen=True, slots=True)
class Ipv4Datagram:
    src: str
    dst: str
    protocol: Protocol
    payload: Payload
    identification: int = 0
    df: bool = False
    more_fragments: bool = False
    fragment_offset: int = 0  # in 8-octet units

    def __post_init__(self):
        if self.df and (self.more_fragments or self.fragment_offset):
            raise ValueError("DF datagram cannot be a fragment")
        if self.fragment_offset < 0:
            raise ValueError("negative fragment offset")
        if not 0 <= self.identification <= 0xFFFF:
            raise ValueError("identification out of range")
        if isinstance(self.payload, TcpSegment) and self.protocol is not Protocol.TCP:
            raise ValueError("TCP payload on non-TCP datagram")
        if isinstance(self.payload, (EchoRequest, EchoReply, FragNeeded)):
            if self.protocol is not Protocol.ICMP:
                raise ValueError("ICMP payload on non-ICMP datagram")

    @property
    def total_length(self) -> int:
        return IP_HEADER_LEN + _payload_octets(self.payload)

    @property
    def is_fragment(self) -> bool:
        return self.more_fragments or self.fragment_offset > 0

    def group_key(self) -> tuple:
        return (self.src, self.dst, self.protocol, self.identification)


def fragment(d: Ipv4Datagram, mtu: int) -> list[Ipv4Datagram]:
    """Split a datagram into fragments that each fit within mtu.

    A fitting datagram is returned unchanged as a one-element list.  All
    fragments except the last carry the maximal 8-octet-aligned payload
    floor((mtu-20)/8)*8; offsets are contiguous and the identification is
    preserved, so the pieces reassemble to the original.  Fragments of
    fragments are supported: offsets accumulate and the final piece
    inherits the parent's more-fragments bit.
    """
    if mtu < MIN_MTU:
        raise ValueError(f"mtu {mtu} below IPv4 floor {MIN_MTU}")
    if d.total_length <= mtu:
        return [d]
    if d.df:
        raise NeedsFragmentationError(mtu)
    raw = encode(d)[IP_HEADER_LEN:]
    cap = ((mtu - IP_HEADER_LEN) // 8) * 8
    frags = []
    pos = 0
    while pos < len(raw):
        piece = raw[pos : pos + cap]
        last = pos + len(piece) >= len(raw)
        frags.append(
            replace(
                d,
                payload=piece,
                more_fragments=(not last) or d.more_fragments,
                fragment_offset=d.fragment_offset + pos // 8,
                df=False,
            )
        )
        pos += len(piece)
    return frags


def reassemble(frags: list[Ipv4Datagram]) -> Ipv4Datagram:
    """Reconstruct the original datagram from a complete fragment group.

    reassemble(fragment(d, m)) == d for every valid m.  Raises
    MixedGroupError when identifications differ and IncompleteGroupError
    on gaps, overlaps, or a missing final fragment.
    """
    if not frags:
        raise IncompleteGroupError("empty fragment group")
    key = frags[0].group_key()
    for f in frags[1:]:
        if f.group_key() != key:
            raise MixedGroupError(f"mixed-group: {f.group_key()} vs {key}")
    if len(frags) == 1 and not frags[0].is_fragment:
        return frags[0]
    ordered = sorted(frags, key=lambda f: f.fragment_offset)
    finals = [f for f in ordered if not f.more_fragments]
    if len(finals) != 1 or finals[0] is not ordered[-1]:
        raise IncompleteGroupError("incomplete-group: final fragment missing or misplaced")
    pos = 0
    parts = []
    for f in ordered:
        if f.fragment_offset * 8 != pos:
            raise IncompleteGroupError(f"incomplete-group: hole or overlap at offset {pos}")
        raw = f.payload if isinstance(f.payload, bytes) else encode(f)[IP_HEADER_LEN:]
        parts.append(raw)
        pos += len(raw)
    combined = b"".join(parts)
    header = _pack_header(
        frags[0].src,
        frags[0].dst,
        frags[0].protocol,
        IP_HEADER_LEN + len(combined),
        frags[0].identification,
        df=False,
        mf=False,
        offset=0,
    )
    return decode(header + combined)


# --- codec -----------------------------------------------------------------

_IP_STRUCT = struct.Struct(">BBHHHBBH4s4s")
_TCP_STRUCT = struct.Struct(">HHIIBBHHH")


def _ip_to_bytes(addr: str) -> bytes:
    parts = addr.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {addr!r}")
    try:
        octets = bytes(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"bad IPv4 address {addr!r}") from None
    if len(octets) != 4:
        raise ValueError(f"bad IPv4 address {addr!r}")
    return octets


def _bytes_to_ip(b: bytes) -> str:
    return ".".join(str(x) for x in b)


def _pack_header(src, dst, protocol, total_length, identification, *, df, mf, offset) -> bytes:
    if total_length > 0xFFFF:
        raise MalformedPacketError("total length exceeds 16 bits")
    flags_off = offset & 0x1FFF
    if df:
        flags_off |= 0x4000
    if mf:
        flags_off |= 0x2000
    return _IP_STRUCT.pack(
        0x45,
        0,
        total_length,
        identification,
        flags_off,
        64,
        protocol.value,
        0,
        _ip_to_bytes(src),
        _ip_to_bytes(dst),
    )


def encode_payload(d: Ipv4Datagram) -> bytes:
    p = d.payload
    if isinstance(p, bytes):
        return p
    if isinstance(p, TcpSegment):
        head = _TCP_STRUCT.pack(
            p.src_port,
            p.dst_port,
            p.seq,
            p.ack,
            0x50,  # data offset 5 words, no options
            int(p.flags),
            0,
            0,
            0,
        )
        return head + b"\x00" * p.payload_length
    if isinstance(p, EchoRequest):
        return struct.pack(">BBHHH", 8, 0, 0, p.ident, p.seq_no) + b"\x00" * p.padding_length
    if isinstance(p, EchoReply):
        return struct.pack(">BBHHH", 0, 0, 0, p.ident, p.seq_no) + b"\x00" * p.padding_length
    if isinstance(p, FragNeeded):
        # next-hop MTU sits in the low 16 bits of the second header word
        return struct.pack(">BBHHH", 3, 4, 0, 0, p.next_hop_mtu) + p.embedded
    raise TypeError(f"unsupported payload {type(p).__name__}")


def encode(d: Ipv4Datagram) -> bytes:
    body = encode_payload(d)
    header = _pack_header(
        d.src,
        d.dst,
        d.protocol,
        IP_HEADER_LEN + len(body),
        d.identification,
        df=d.df,
        mf=d.more_fragments,
        offset=d.fragment_offset,
    )
    return header + body


def decode(buf: bytes) -> Ipv4Datagram:
    if len(buf) < IP_HEADER_LEN:
        raise MalformedPacketError("malformed-packet: shorter than IP header")
    (ver_ihl, _tos, total, ident, flags_off, _ttl, proto, _cksum, src, dst) = _IP_STRUCT.unpack(
        buf[:IP_HEADER_LEN]
    )
    if ver_ihl != 0x45:
        raise MalformedPacketError("malformed-packet: only IPv4 with 20-octet header supported")
    if total != len(buf):
        raise MalformedPacketError(f"malformed-packet: total length {total} != buffer {len(buf)}")
    try:
        protocol = Protocol(proto)
    except ValueError:
        raise MalformedPacketError(f"malformed-packet: unknown protocol {proto}") from None
    df = bool(flags_off & 0x4000)
    mf = bool(flags_off & 0x2000)
    offset = flags_off & 0x1FFF
    body = buf[IP_HEADER_LEN:]
    payload: Payload
    if mf or offset:
        payload = body
    elif protocol is Protocol.TCP:
        payload = _decode_tcp(body)
    else:
        payload = _decode_icmp(body)
    return Ipv4Datagram(
        src=_bytes_to_ip(src),
        dst=_bytes_to_ip(dst),
        protocol=protocol,
        payload=payload,
        identification=ident,
        df=df,
        more_fragments=mf,
        fragment_offset=offset,
    )


def _decode_tcp(body: bytes) -> TcpSegment:
    if len(body) < TCP_HEADER_LEN:
        raise MalformedPacketError("malformed-packet: truncated TCP header")
    sp, dp, seq, ack, off, flags, _wnd, _ck, _urg = _TCP_STRUCT.unpack(body[:TCP_HEADER_LEN])
    if off != 0x50:
        raise MalformedPacketError("malformed-packet: TCP options not supported")
    return TcpSegment(
        src_port=sp,
        dst_port=dp,
        seq=seq,
        ack=ack,
        flags=TcpFlag(flags),
        payload_length=len(body) - TCP_HEADER_LEN,
    )


def _decode_icmp(body: bytes) -> IcmpMessage:
    if len(body) < ICMP_HEADER_LEN:
        raise MalformedPacketError("malformed-packet: truncated ICMP header")
    typ, code, _ck, w1, w2 = struct.unpack(">BBHHH", body[:ICMP_HEADER_LEN])
    rest = body[ICMP_HEADER_LEN:]
    if typ == 8 and code == 0:
        return EchoRequest(ident=w1, seq_no=w2, padding_length=len(rest))
    if typ == 0 and code == 0:
        return EchoReply(ident=w1, seq_no=w2, padding_length=len(rest))
    if typ == 3 and code == 4:
        if w1 != 0:
            raise MalformedPacketError("malformed-packet: nonzero unused field in ICMP error")
        if len(rest) != EMBEDDED_QUOTE_LEN:
            raise MalformedPacketError("malformed-packet: embedded quote must be 28 octets")
        return FragNeeded(next_hop_mtu=w2, embedded=rest)
    raise MalformedPacketError(f"malformed-packet: unsupported ICMP type {typ}/{code}")


# --- embedded quote helpers -------------------------------------------------


@dataclass(frozen=True, slots=True)
class EmbeddedQuote:
    """The parsed view of the 28 octets carried inside a FragNeeded."""

    src: str
    dst: str
    protocol: Protocol
    src_port: int
    dst_port: int
    seq: int


def quote_of(d: Ipv4Datagram) -> bytes:
    """First 28 octets of a datagram as they appear on the wire."""
    return encode(d)[:EMBEDDED_QUOTE_LEN]


def parse_embedded(quote: bytes) -> EmbeddedQuote | None:
    """Decode an embedded quote; returns None when it is not a plausible
    IP header plus transport prefix."""
    if len(quote) != EMBEDDED_QUOTE_LEN:
        return None
    (ver_ihl, _tos, _total, _ident, _fl, _ttl, proto, _ck, src, dst) = _IP_STRUCT.unpack(
        quote[:IP_HEADER_LEN]
    )
    if ver_ihl != 0x45:
        return None
    try:
        protocol = Protocol(proto)
    except ValueError:
        return None
    sp, dp, seq = struct.unpack(">HHI", quote[IP_HEADER_LEN:])
    return EmbeddedQuote(
        src=_bytes_to_ip(src),
        dst=_bytes_to_ip(dst),
        protocol=protocol,
        src_port=sp,
        dst_port=dp,
        seq=seq,
    )


def rewrite_embedded_source(quote: bytes, src: str, src_port: int) -> bytes:
    """Rewrite the source address and port inside an embedded quote,
    preserving every other octet."""
    if len(quote) != EMBEDDED_QUOTE_LEN:
        raise ValueError("embedded quote must be 28 octets")
    return (
        quote[:12]
        + _ip_to_bytes(src)
        + quote[16:IP_HEADER_LEN]
        + struct.pack(">H", src_port)
        + quote[22:]
    )
