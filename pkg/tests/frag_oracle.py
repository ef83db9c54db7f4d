"""Independent RFC 791 fragmentation oracle.

Deliberately knows nothing about natsim internals: it works on plain
(offset, length) tuples over a byte count, splitting greedily at the
largest 8-octet-aligned payload that fits the MTU, exactly as the RFC
describes.  Tests freeze values computed by this oracle and also use it
to re-concatenate implementation output back into the original payload.
"""

from __future__ import annotations

HEADER = 20


def oracle_split(total_length: int, mtu: int) -> list[tuple[int, int]]:
    """Fragment a datagram of `total_length` octets at `mtu`; returns
    (payload offset in octets, payload length) pairs in order."""
    payload = total_length - HEADER
    if total_length <= mtu:
        return [(0, payload)]
    cap = ((mtu - HEADER) // 8) * 8
    assert cap > 0, "mtu leaves no room for payload"
    pieces = []
    pos = 0
    while pos < payload:
        size = min(cap, payload - pos)
        pieces.append((pos, size))
        pos += size
    return pieces


def oracle_wire_sizes(total_length: int, mtu: int) -> list[int]:
    return [HEADER + size for _, size in oracle_split(total_length, mtu)]


def oracle_chain(total_length: int, mtus: list[int]) -> list[tuple[int, int]]:
    """Push a datagram through successive fragmentation points (a host
    pre-fragmenting, then routers re-fragmenting each piece)."""
    pieces = [(0, total_length - HEADER)]
    for mtu in mtus:
        nxt = []
        for off, size in pieces:
            if HEADER + size <= mtu:
                nxt.append((off, size))
                continue
            for sub_off, sub_size in oracle_split(HEADER + size, mtu):
                nxt.append((off + sub_off, sub_size))
        pieces = nxt
    return pieces


def reconcat(pieces: list[tuple[int, bytes]]) -> bytes:
    """Tile (offset, bytes) pieces back into one payload; asserts the
    tiling is gapless and non-overlapping."""
    pieces = sorted(pieces, key=lambda p: p[0])
    out = b""
    for off, chunk in pieces:
        assert off == len(out), f"hole or overlap at offset {off}"
        out += chunk
    return out
