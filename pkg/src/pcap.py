from __future__ import annotations
import logging
import socket
import struct
from pathlib import Path
from typing import BinaryIO, Callable, NamedTuple

import dpkt

from src.ciphers import lookup_cipher
from src.errors import (
    DataError,
    NoNewkeysFound,
    TruncatedCapture,
    UnsupportedLinkType,
)
from src.packets import (
    HEAD_LEN,
    MAX_PACKET_LENGTH,
    SSH_MSG_NEWKEYS,
    Direction,
    ValidationPacket,
)

log = logging.getLogger(__name__)

SSH_PORT = 22
SEQ_MOD = 1 << 32
LINKTYPE_RAW = 101  # raw IP as written in pcap file headers

CLIENT_MAC = b"\x02\x00\x00\x00\x00\x01"
SERVER_MAC = b"\x02\x00\x00\x00\x00\x02"
CLIENT_ADDR = "10.0.0.1"
SERVER_ADDR = "10.0.0.2"


class Segment(NamedTuple):
    index: int  # capture order
    direction: Direction
    seq: int
    payload: bytes
    syn: bool = False


class Stream(NamedTuple):
    data: bytes
    # stream offsets at which the other direction started talking
    run_ends: list[int]


def raw_ip(buf: bytes):
    if not buf:
        return None
    if buf[0] >> 4 == 6:
        return dpkt.ip6.IP6(buf)
    return dpkt.ip.IP(buf)


# pcap link type -> decoder returning the network layer
LINK_LAYERS: dict[int, Callable[[bytes], object]] = {
    dpkt.pcap.DLT_EN10MB: lambda buf: dpkt.ethernet.Ethernet(buf).data,
    dpkt.pcap.DLT_NULL: lambda buf: dpkt.loopback.Loopback(buf).data,
    dpkt.pcap.DLT_LOOP: lambda buf: dpkt.loopback.Loopback(buf).data,
    dpkt.pcap.DLT_LINUX_SLL: lambda buf: dpkt.sll.SLL(buf).data,
    dpkt.pcap.DLT_RAW: raw_ip,
    LINKTYPE_RAW: raw_ip,
}


def read_segments(fp: BinaryIO, tcp_port: int = SSH_PORT) -> list[Segment]:
    """TCP segments to or from `tcp_port` that carry data or a SYN, in capture order."""
    try:
        reader = dpkt.pcap.Reader(fp)
    except (ValueError, dpkt.NeedData) as err:
        raise DataError(f"Not a classic pcap file: {err}") from err
    decode = LINK_LAYERS.get(reader.datalink())
    if decode is None:
        raise UnsupportedLinkType(f"Link type {reader.datalink()} is not supported")

    segments = []
    try:
        for index, (_, buf) in enumerate(reader):
            ip = decode(buf)
            if not isinstance(ip, (dpkt.ip.IP, dpkt.ip6.IP6)) or not isinstance(ip.data, dpkt.tcp.TCP):
                continue
            tcp = ip.data
            syn = bool(tcp.flags & dpkt.tcp.TH_SYN)
            if not tcp.data and not syn:
                continue
            if tcp.dport == tcp_port:
                direction = Direction.CLIENT_TO_SERVER
            elif tcp.sport == tcp_port:
                direction = Direction.SERVER_TO_CLIENT
            else:
                continue
            segments.append(Segment(index, direction, tcp.seq, bytes(tcp.data), syn))
    except (dpkt.NeedData, dpkt.UnpackError, struct.error) as err:
        raise TruncatedCapture(f"Capture ends inside a record: {err}") from err
    return segments


def initial_sequence(own: list[Segment]) -> int:
    """Sequence number of the first data byte: SYN + 1, else the earliest seq seen."""
    syn = next((s for s in own if s.syn), None)
    if syn is not None:
        return (syn.seq + 1) % SEQ_MOD
    ref = own[0].seq
    # signed distance from ref, so a wrap at 2**32 still orders correctly
    lowest = min((s.seq - ref + SEQ_MOD // 2) % SEQ_MOD - SEQ_MOD // 2 for s in own)
    return (ref + lowest) % SEQ_MOD


def reassemble(segments: list[Segment], direction: Direction) -> Stream:
    """
    Orders one direction's segments by sequence number. Retransmitted bytes
    are dropped; a hole in the sequence space is a truncated capture.
    """
    own = [s for s in segments if s.direction is direction]
    if not own:
        return Stream(b"", [])
    isn = initial_sequence(own)

    def relative(seq: int) -> int:
        return (seq - isn) % SEQ_MOD

    data = bytearray()
    for segment in sorted((s for s in own if s.payload), key=lambda s: (relative(s.seq), s.index)):
        start = relative(segment.seq)
        if start > len(data):
            raise TruncatedCapture(
                f"{direction} stream has a gap of {start - len(data)} bytes at offset {len(data)}"
            )
        data += segment.payload[len(data) - start :]

    # the furthest byte seen whenever the other side takes over ends a run
    run_ends, seen, previous = [], 0, None
    for segment in segments:
        if not segment.payload:
            continue
        if segment.direction is direction:
            seen = max(seen, relative(segment.seq) + len(segment.payload))
        elif previous is direction:
            run_ends.append(seen)
        previous = segment.direction
    return Stream(bytes(data), run_ends)


def skip_banner(data: bytes) -> int:
    # servers may send other lines before the identification string
    pos = 0
    while pos < len(data):
        end = data.find(b"\n", pos)
        if end < 0:
            break
        line = data[pos:end]
        pos = end + 1
        if line.startswith(b"SSH-"):
            return pos
    raise NoNewkeysFound("No SSH identification string in the stream")


def find_newkeys(data: bytes) -> tuple[int, int]:
    """Stream offset just past NEWKEYS and the number of packets before the next one."""
    pos = skip_banner(data)
    count = 0
    while pos + HEAD_LEN < len(data):
        packet_length = struct.unpack_from(">I", data, pos)[0]
        if packet_length < 2 or packet_length > MAX_PACKET_LENGTH:
            break
        msg_type = data[pos + HEAD_LEN]
        pos += 4 + packet_length
        count += 1
        if pos > len(data):
            break
        if msg_type == SSH_MSG_NEWKEYS:
            return pos, count
    raise NoNewkeysFound("No NEWKEYS message in the cleartext part of the stream")


def first_encrypted_packet(
    stream: Stream,
    cipher_name: str,
    direction: Direction,
    mac_len: int = 0,
) -> ValidationPacket:
    spec = lookup_cipher(cipher_name)
    start, count = find_newkeys(stream.data)
    end = next((e for e in stream.run_ends if e > start), len(stream.data))
    run = stream.data[start:end]
    log.debug(
        "%s: NEWKEYS ends at %d, encrypted run of %d bytes, %d packets before it",
        direction, start, len(run), count,
    )
    if mac_len:
        run = run[:-mac_len]
    block_len = max(spec.block_len, 8)
    run = run[: len(run) - len(run) % block_len]
    if len(run) < 16:
        raise TruncatedCapture(f"Only {len(run)} bytes follow NEWKEYS in the {direction} stream")
    return ValidationPacket(run, spec.name, direction, sequence_number=count)


def extract_first_encrypted_packet(
    pcap_path: str | Path,
    cipher_name: str,
    tcp_port: int = SSH_PORT,
    direction: Direction = Direction.CLIENT_TO_SERVER,
    mac_len: int = 0,
) -> ValidationPacket:
    with open(pcap_path, "rb") as fp:
        segments = read_segments(fp, tcp_port)
    if not segments:
        raise NoNewkeysFound(f"{pcap_path}: no TCP payload on port {tcp_port}")
    stream = reassemble(segments, direction)
    return first_encrypted_packet(stream, cipher_name, direction, mac_len)


class SessionWriter:
    """
    Writes a single client/server TCP conversation to a classic pcap file,
    one frame per write, framed for the given link type.
    """

    def __init__(
        self,
        fp: BinaryIO,
        client_isn: int,
        server_isn: int,
        client_port: int = 50022,
        linktype: int = dpkt.pcap.DLT_EN10MB,
    ) -> None:
        if linktype not in (dpkt.pcap.DLT_EN10MB, dpkt.pcap.DLT_NULL, LINKTYPE_RAW):
            raise UnsupportedLinkType(f"Cannot write link type {linktype}")
        self.writer = dpkt.pcap.Writer(fp, linktype=linktype)
        self.linktype = linktype
        self.client_port = client_port
        self.seq = {
            Direction.CLIENT_TO_SERVER: client_isn % SEQ_MOD,
            Direction.SERVER_TO_CLIENT: server_isn % SEQ_MOD,
        }
        self.ts = 1_600_000_000.0

    def frame(self, direction: Direction, ip: dpkt.ip.IP) -> bytes:
        if self.linktype == LINKTYPE_RAW:
            return bytes(ip)
        if self.linktype == dpkt.pcap.DLT_NULL:
            return bytes(dpkt.loopback.Loopback(family=socket.AF_INET, data=ip))
        client_side = direction is Direction.CLIENT_TO_SERVER
        return bytes(
            dpkt.ethernet.Ethernet(
                src=CLIENT_MAC if client_side else SERVER_MAC,
                dst=SERVER_MAC if client_side else CLIENT_MAC,
                type=dpkt.ethernet.ETH_TYPE_IP,
                data=ip,
            )
        )

    def send(self, direction: Direction, payload: bytes, flags: int = dpkt.tcp.TH_ACK | dpkt.tcp.TH_PUSH):
        client_side = direction is Direction.CLIENT_TO_SERVER
        other = Direction.SERVER_TO_CLIENT if client_side else Direction.CLIENT_TO_SERVER
        tcp = dpkt.tcp.TCP(
            sport=self.client_port if client_side else SSH_PORT,
            dport=SSH_PORT if client_side else self.client_port,
            seq=self.seq[direction],
            ack=self.seq[other],
            flags=flags,
            win=65535,
            data=payload,
        )
        ip = dpkt.ip.IP(
            src=socket.inet_aton(CLIENT_ADDR if client_side else SERVER_ADDR),
            dst=socket.inet_aton(SERVER_ADDR if client_side else CLIENT_ADDR),
            p=dpkt.ip.IP_PROTO_TCP,
            ttl=64,
            data=tcp,
        )
        ip.len = len(ip)
        self.writer.writepkt(self.frame(direction, ip), ts=self.ts)
        # a SYN takes one sequence number
        used = len(payload) + bool(flags & dpkt.tcp.TH_SYN)
        self.seq[direction] = (self.seq[direction] + used) % SEQ_MOD
        self.ts += 0.001

    def open(self):
        self.send(Direction.CLIENT_TO_SERVER, b"", dpkt.tcp.TH_SYN)
        self.send(Direction.SERVER_TO_CLIENT, b"", dpkt.tcp.TH_SYN | dpkt.tcp.TH_ACK)
        self.send(Direction.CLIENT_TO_SERVER, b"", dpkt.tcp.TH_ACK)


def write_session_pcap(
    path: str | Path,
    exchanges: list[tuple[Direction, bytes]],
    client_isn: int,
    server_isn: int,
    linktype: int = dpkt.pcap.DLT_EN10MB,
    handshake: bool = True,
) -> Path:
    path = Path(path)
    with open(path, "wb") as fp:
        session = SessionWriter(fp, client_isn, server_isn, linktype=linktype)
        if handshake:
            session.open()
        for direction, payload in exchanges:
            session.send(direction, payload)
    return path
