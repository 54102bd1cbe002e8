"""Frame codec and channels.

Frame: 1-byte type, 4-byte big-endian payload length, payload.

    0x01 Challenge   payload = x_s
    0x02 TagNonce    payload = x_t
    0x03 ServerAuth  payload = u32 count || (sigma || delta) * count
    0x04 TagAuth     payload = sigma'

Bit strings travel as raw MSB-first bytes, so the wire carries only
byte-aligned lengths.
"""

from __future__ import annotations

import queue
import socket
import struct
from collections import deque
from dataclasses import dataclass, field

from .errors import ChannelClosed, ChannelTimeout, DecodeError
from .primitives import BitString
from .protocol import Challenge, ServerAuth, SessionMsg, TagAuth, TagNonce

MSG_CHALLENGE = 0x01
MSG_TAG_NONCE = 0x02
MSG_SERVER_AUTH = 0x03
MSG_TAG_AUTH = 0x04

_HEADER = struct.Struct(">BI")
HEADER_LEN = _HEADER.size
_COUNT = struct.Struct(">I")


def _raw(b: BitString) -> bytes:
    if b.nbits % 8:
        raise ValueError(f"{b.nbits}-bit value is not byte aligned")
    return b.to_bytes()


def encode(msg: SessionMsg) -> bytes:
    if isinstance(msg, Challenge):
        t, payload = MSG_CHALLENGE, _raw(msg.x_s)
    elif isinstance(msg, TagNonce):
        t, payload = MSG_TAG_NONCE, _raw(msg.x_t)
    elif isinstance(msg, TagAuth):
        t, payload = MSG_TAG_AUTH, _raw(msg.sigma_prime)
    elif isinstance(msg, ServerAuth):
        parts = [_COUNT.pack(len(msg.entries))]
        for sigma, delta in msg.entries:
            parts += [_raw(sigma), _raw(delta)]
        t, payload = MSG_SERVER_AUTH, b"".join(parts)
    else:
        raise TypeError(f"not a session message: {msg!r}")
    return _HEADER.pack(t, len(payload)) + payload


def _decode_payload(t: int, payload: bytes, base: int) -> SessionMsg:
    if t == MSG_SERVER_AUTH:
        if len(payload) < _COUNT.size:
            raise DecodeError("ServerAuth payload shorter than entry count", base + len(payload))
        (count,) = _COUNT.unpack_from(payload)
        body = payload[_COUNT.size :]
        if count == 0:
            if body:
                raise DecodeError("ServerAuth with zero entries has a body", base + _COUNT.size)
            return ServerAuth(())
        size, rem = divmod(len(body), 2 * count)
        if rem or size == 0:
            raise DecodeError(
                f"{len(body)} body bytes do not divide into {count} entries", base + _COUNT.size
            )
        entries = []
        for n in range(count):
            off = 2 * size * n
            sigma = BitString.from_bytes(body[off : off + size])
            delta = BitString.from_bytes(body[off + size : off + 2 * size])
            entries.append((sigma, delta))
        return ServerAuth(tuple(entries))
    if not payload:
        raise DecodeError("empty payload", base)
    value = BitString.from_bytes(payload)
    if t == MSG_CHALLENGE:
        return Challenge(value)
    if t == MSG_TAG_NONCE:
        return TagNonce(value)
    return TagAuth(value)


def _split_frame(data: bytes, pos: int = 0):
    """Return ``(type, payload, end)`` or ``None`` if the frame is incomplete."""
    if len(data) - pos < HEADER_LEN:
        return None
    t, length = _HEADER.unpack_from(data, pos)
    if t not in (MSG_CHALLENGE, MSG_TAG_NONCE, MSG_SERVER_AUTH, MSG_TAG_AUTH):
        raise DecodeError(f"unknown message type 0x{t:02x}", pos)
    end = pos + HEADER_LEN + length
    if len(data) < end:
        return None
    return t, data[pos + HEADER_LEN : end], end


def decode(data: bytes) -> SessionMsg:
    """Decode exactly one complete frame."""
    data = bytes(data)
    if len(data) < HEADER_LEN:
        raise DecodeError("truncated frame header", len(data))
    parts = _split_frame(data)
    if parts is None:
        raise DecodeError("truncated payload", len(data))
    t, payload, end = parts
    if end != len(data):
        raise DecodeError("trailing bytes after frame", end)
    return _decode_payload(t, payload, HEADER_LEN)


class FrameReader:
    """Incremental decoder: feed arbitrary chunks, get whole messages."""

    def __init__(self):
        self._buf = bytearray()
        self._consumed = 0  # stream offset of _buf[0]

    def feed(self, chunk: bytes) -> list[SessionMsg]:
        self._buf += chunk
        out = []
        pos = 0
        try:
            while True:
                parts = _split_frame(self._buf, pos)
                if parts is None:
                    break
                t, payload, end = parts
                out.append(_decode_payload(t, bytes(payload), pos + HEADER_LEN))
                pos = end
        except DecodeError as exc:
            raise DecodeError(exc.reason, self._consumed + exc.offset) from None
        finally:
            del self._buf[:pos]
            self._consumed += pos
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


# fault injection


@dataclass(frozen=True)
class Drop:
    nth: int


@dataclass(frozen=True)
class FlipBit:
    nth: int
    bit_index: int  # into the whole frame, MSB-first


@dataclass(frozen=True)
class Delay:
    nth: int
    hold: int = 1  # delivered after this many later messages


@dataclass
class FaultScript:
    directives: list = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> FaultScript:
        """``drop:4,flip:3:40,delay:2:1`` -> directives."""
        out = []
        for item in filter(None, (p.strip() for p in text.split(","))):
            kind, *args = item.split(":")
            try:
                nums = [int(a) for a in args]
                if kind == "drop" and len(nums) == 1:
                    out.append(Drop(*nums))
                elif kind == "flip" and len(nums) == 2:
                    out.append(FlipBit(*nums))
                elif kind == "delay" and len(nums) in (1, 2):
                    out.append(Delay(*nums))
                else:
                    raise ValueError
            except ValueError:
                raise ValueError(f"bad fault directive {item!r}") from None
        return cls(out)

    def apply(self, ordinal: int, frame: bytes) -> tuple[bytes | None, int]:
        """Returns the frame to deliver (None if dropped) and its hold count."""
        hold = 0
        for d in self.directives:
            if d.nth != ordinal:
                continue
            if isinstance(d, Drop):
                return None, 0
            if isinstance(d, FlipBit):
                if not 0 <= d.bit_index < 8 * len(frame):
                    continue
                buf = bytearray(frame)
                buf[d.bit_index // 8] ^= 0x80 >> (d.bit_index % 8)
                frame = bytes(buf)
            elif isinstance(d, Delay):
                hold = max(hold, d.hold)
        return frame, hold


class MemoryEndpoint:
    def __init__(self, link: MemoryLink, inbox: queue.Queue, outbox: queue.Queue, name: str):
        self._link = link
        self._inbox = inbox
        self._outbox = outbox
        self.name = name

    def send(self, msg: SessionMsg) -> None:
        self._link._transmit(self, self._outbox, encode(msg))

    def recv(self, timeout: float | None = None) -> SessionMsg:
        if timeout is None:
            timeout = self._link.default_timeout
        try:
            if timeout is not None and timeout <= 0:
                frame = self._inbox.get_nowait()
            else:
                frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            if self._link.closed:
                raise ChannelClosed(f"{self.name}: channel closed") from None
            raise ChannelTimeout(f"{self.name}: nothing to receive") from None
        return decode(frame)

    def drain(self) -> int:
        """Discard queued frames; returns how many."""
        n = 0
        while True:
            try:
                self._inbox.get_nowait()
            except queue.Empty:
                return n
            n += 1

    def close(self) -> None:
        self._link.close()


class MemoryLink:
    """In-process duplex channel with a fault script keyed by message ordinal.

    Ordinals count every send on the link, both directions, from 1. With the
    default ``default_timeout=0`` a receive on an empty inbox fails at once,
    which suits single-threaded simulation.
    """

    def __init__(self, faults: FaultScript | None = None, default_timeout: float | None = 0.0):
        self.faults = faults or FaultScript()
        self.default_timeout = default_timeout
        self.ordinal = 0
        self.closed = False
        self.delivered: list[tuple[int, str, bytes]] = []
        self._held: list[list] = []
        to_tag: queue.Queue = queue.Queue()
        to_server: queue.Queue = queue.Queue()
        self.server = MemoryEndpoint(self, to_server, to_tag, "server")
        self.tag = MemoryEndpoint(self, to_tag, to_server, "tag")

    def _transmit(self, sender: MemoryEndpoint, outbox: queue.Queue, frame: bytes) -> None:
        if self.closed:
            raise ChannelClosed(f"{sender.name}: channel closed")
        self.ordinal += 1
        frame, hold = self.faults.apply(self.ordinal, frame)
        still_held = []
        for item in self._held:
            item[0] -= 1
            if item[0] <= 0:
                self._deliver(*item[1:])
            else:
                still_held.append(item)
        self._held = still_held
        if frame is None:
            return
        if hold:
            self._held.append([hold, self.ordinal, sender.name, outbox, frame])
        else:
            self._deliver(self.ordinal, sender.name, outbox, frame)

    def _deliver(self, ordinal: int, sender: str, outbox: queue.Queue, frame: bytes) -> None:
        self.delivered.append((ordinal, sender, frame))
        outbox.put(frame)

    def close(self) -> None:
        self.closed = True


class SocketEndpoint:
    def __init__(self, sock: socket.socket, name: str = "socket"):
        self.sock = sock
        self.name = name
        self._reader = FrameReader()
        self._ready: deque = deque()

    def send(self, msg: SessionMsg) -> None:
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise ChannelClosed(f"{self.name}: {exc}") from exc

    def recv(self, timeout: float | None = None) -> SessionMsg:
        while not self._ready:
            self.sock.settimeout(timeout)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise ChannelTimeout(f"{self.name}: receive timed out") from None
            except OSError as exc:
                raise ChannelClosed(f"{self.name}: {exc}") from exc
            if not chunk:
                raise ChannelClosed(f"{self.name}: peer closed the connection")
            self._ready.extend(self._reader.feed(chunk))
        return self._ready.popleft()

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


@dataclass
class SocketLink:
    server: SocketEndpoint
    tag: SocketEndpoint

    def close(self) -> None:
        self.server.close()
        self.tag.close()


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ValueError(f"address must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def loopback_link() -> SocketLink:
    """Both ends of a loopback TCP connection, for same-process use."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        client = socket.create_connection(listener.getsockname())
        server, _ = listener.accept()
    for s in (client, server):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketLink(SocketEndpoint(server, "server"), SocketEndpoint(client, "tag"))
