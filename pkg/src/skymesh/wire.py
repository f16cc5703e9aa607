"""Binary codecs for the extended Hello and TC control messages.

Hello layout (all multi-byte fields big-endian):

    0               1               2               3
    +---------------+---------------+---------------+---------------+
    |            reserved           |     htime     |  willingness  |
    +---------------+---------------+---------------+---------------+
    |                x  (signed 32-bit fixed point, 2 frac bits)    |
    |                y                                              |
    |                z                                              |
    +---------------+---------------+---------------+---------------+
    |   link code   |    reserved   |       link message size       |
    +---------------+---------------+---------------+---------------+
    |                      neighbor address                         |
    +---------------+---------------+---------------+---------------+
    | lq forward    |                 padding (3 bytes)             |
    +---------------+---------------+---------------+---------------+
    ... further link messages ...

Each link message carries one neighbor entry, so its size field is always
12.  The decoder additionally accepts link messages holding several
8-byte neighbor entries and expands them into one block each.

TC layout: originator (u32), sequence (u16), reserved (u16), then 8-byte
entries of neighbor address (u32), lq forward (u8), lq reverse (u8) and
two padding bytes.

Receiving ratios are quantized to one byte (q = round(255 * r)), positions
to signed 32-bit fixed point with two fractional bits (0.25 m resolution).
Htime uses the classic mantissa/exponent byte: value = C*(1+a/16)*2^b with
C = 1/16 s; 0.5 s encodes as 0x03 and round-trips exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .model import NodeId, Position

HTIME_UNIT = 1.0 / 16.0  # seconds

# Link code = (neighbor type << 2) | link type.
UNSPEC_LINK = 0
ASYM_LINK = 1
SYM_LINK = 2
LOST_LINK = 3
NOT_NEIGH = 0
SYM_NEIGH = 1
MPR_NEIGH = 2

LINK_MESSAGE_HEADER = 4
NEIGHBOR_ENTRY_SIZE = 8
HELLO_HEADER = 16  # reserved + htime + willingness + position block
TC_HEADER = 8

_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1


class WireError(Exception):
    """Base class for every decode/encode failure."""


class TruncatedMessage(WireError):
    pass


class StructuralError(WireError):
    def __init__(self, message: str, block: int | None = None):
        super().__init__(message)
        self.block = block


class UnknownLinkCode(StructuralError):
    pass


def make_link_code(link_type: int, neighbor_type: int) -> int:
    return (neighbor_type << 2) | link_type


def is_valid_link_code(code: int) -> bool:
    return 0 <= code <= 0xFF and (code >> 2) <= MPR_NEIGH and (code & 0x3) <= LOST_LINK


def quantize_ratio(r: float) -> float:
    """The value a receiving ratio assumes after one encode/decode cycle."""
    return ratio_from_byte(ratio_to_byte(r))


def ratio_to_byte(r: float) -> int:
    if not 0.0 <= r <= 1.0:
        raise WireError(f"receiving ratio out of range: {r}")
    return round(255.0 * r)


def ratio_from_byte(q: int) -> float:
    return q / 255.0


def coord_to_fixed(meters: float) -> int:
    fp = round(meters * 4.0)
    if not _I32_MIN <= fp <= _I32_MAX:
        raise WireError(f"coordinate overflow: {meters} m")
    return fp


def coord_from_fixed(fp: int) -> float:
    return fp / 4.0


def encode_interval(seconds: float) -> int:
    """Mantissa/exponent byte for a time interval."""
    if seconds <= 0.0:
        raise WireError(f"interval must be positive: {seconds}")
    scaled = seconds / HTIME_UNIT
    b = 0
    while scaled >= 2 ** (b + 1) and b < 15:
        b += 1
    a = round(16.0 * (scaled / 2**b - 1.0))
    if a == 16:
        a = 0
        b += 1
    if a < 0:
        a = 0
    if b > 15:
        raise WireError(f"interval too large to encode: {seconds}")
    return (a << 4) | b


def decode_interval(byte: int) -> float:
    a = byte >> 4
    b = byte & 0x0F
    return HTIME_UNIT * (1.0 + a / 16.0) * 2**b


@dataclass(frozen=True)
class NeighborBlock:
    """One advertised neighbor: link code, address and measured forward ratio."""

    link_code: int
    neighbor_address: NodeId
    lq_forward: float


@dataclass(frozen=True)
class HelloMessage:
    htime: float = 0.5
    willingness: int = 3
    position: Position = Position(0.0, 0.0, 0.0)
    neighbors: tuple[NeighborBlock, ...] = ()


@dataclass(frozen=True)
class TcLink:
    neighbor_address: NodeId
    lq_forward: float
    lq_reverse: float


@dataclass(frozen=True)
class TcMessage:
    originator: NodeId
    sequence: int
    advertised: tuple[TcLink, ...] = ()


def encode_hello(msg: HelloMessage) -> bytes:
    if not 0 <= msg.willingness <= 7:
        raise WireError(f"willingness out of range: {msg.willingness}")
    if len(msg.neighbors) > 255:
        raise WireError(f"too many neighbor blocks: {len(msg.neighbors)}")
    parts = [
        struct.pack(
            ">HBBiii",
            0,
            encode_interval(msg.htime),
            msg.willingness,
            coord_to_fixed(msg.position.x),
            coord_to_fixed(msg.position.y),
            coord_to_fixed(msg.position.z),
        )
    ]
    for block in msg.neighbors:
        if not is_valid_link_code(block.link_code):
            raise WireError(f"invalid link code: {block.link_code}")
        parts.append(
            struct.pack(
                ">BBHIBxxx",
                block.link_code,
                0,
                LINK_MESSAGE_HEADER + NEIGHBOR_ENTRY_SIZE,
                block.neighbor_address,
                ratio_to_byte(block.lq_forward),
            )
        )
    return b"".join(parts)


def decode_hello(data: bytes) -> HelloMessage:
    """Parse a Hello message; raises a WireError subclass on malformed input."""
    if len(data) < HELLO_HEADER:
        raise TruncatedMessage(f"hello header needs {HELLO_HEADER} bytes, got {len(data)}")
    _, htime_byte, willingness, fx, fy, fz = struct.unpack_from(">HBBiii", data, 0)
    if willingness > 7:
        raise StructuralError(f"willingness out of range: {willingness}")
    position = Position(coord_from_fixed(fx), coord_from_fixed(fy), coord_from_fixed(fz))
    neighbors: list[NeighborBlock] = []
    offset = HELLO_HEADER
    index = 0
    while offset < len(data):
        if offset + LINK_MESSAGE_HEADER > len(data):
            raise TruncatedMessage(f"link message header truncated in block {index}")
        link_code, _, size = struct.unpack_from(">BBH", data, offset)
        if not is_valid_link_code(link_code):
            raise UnknownLinkCode(f"unknown link code {link_code} in block {index}", block=index)
        if size < LINK_MESSAGE_HEADER or (size - LINK_MESSAGE_HEADER) % NEIGHBOR_ENTRY_SIZE:
            raise StructuralError(f"bad link message size {size} in block {index}", block=index)
        if offset + size > len(data):
            raise StructuralError(
                f"link message size {size} exceeds remaining buffer in block {index}",
                block=index,
            )
        entry_offset = offset + LINK_MESSAGE_HEADER
        while entry_offset < offset + size:
            address, lq = struct.unpack_from(">IB", data, entry_offset)
            neighbors.append(NeighborBlock(link_code, address, ratio_from_byte(lq)))
            entry_offset += NEIGHBOR_ENTRY_SIZE
        offset += size
        index += 1
    return HelloMessage(
        htime=decode_interval(htime_byte),
        willingness=willingness,
        position=position,
        neighbors=tuple(neighbors),
    )


def encode_tc(msg: TcMessage) -> bytes:
    if not 0 <= msg.sequence <= 0xFFFF:
        raise WireError(f"sequence out of range: {msg.sequence}")
    parts = [struct.pack(">IHH", msg.originator, msg.sequence, 0)]
    for link in msg.advertised:
        parts.append(
            struct.pack(
                ">IBBxx",
                link.neighbor_address,
                ratio_to_byte(link.lq_forward),
                ratio_to_byte(link.lq_reverse),
            )
        )
    return b"".join(parts)


def decode_tc(data: bytes) -> TcMessage:
    """Parse a TC message; raises a WireError subclass on malformed input."""
    if len(data) < TC_HEADER:
        raise TruncatedMessage(f"tc header needs {TC_HEADER} bytes, got {len(data)}")
    if (len(data) - TC_HEADER) % NEIGHBOR_ENTRY_SIZE:
        raise StructuralError(f"tc body length {len(data) - TC_HEADER} not a multiple of 8")
    originator, sequence, _ = struct.unpack_from(">IHH", data, 0)
    advertised = []
    for offset in range(TC_HEADER, len(data), NEIGHBOR_ENTRY_SIZE):
        address, lq_f, lq_r = struct.unpack_from(">IBB", data, offset)
        advertised.append(TcLink(address, ratio_from_byte(lq_f), ratio_from_byte(lq_r)))
    return TcMessage(originator=originator, sequence=sequence, advertised=tuple(advertised))
