import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aprap import BitString, Prng
from aprap.errors import ChannelClosed, ChannelTimeout, DecodeError
from aprap.protocol import Challenge, Reason, ServerAuth, TagAuth, TagNonce, run_session
from aprap.transport import (
    Delay,
    Drop,
    FaultScript,
    FlipBit,
    FrameReader,
    MemoryLink,
    decode,
    encode,
    loopback_link,
    parse_address,
)


def random_messages(rnd, count):
    def b():
        return BitString(rnd.getrandbits(128), 128)

    out = []
    for _ in range(count):
        out += [
            Challenge(b()),
            TagNonce(b()),
            ServerAuth(tuple((b(), b()) for _ in range(rnd.randint(0, 5)))),
            TagAuth(b()),
        ]
    return out


def test_round_trip_1000_of_each():
    for msg in random_messages(random.Random(1), 1000):
        assert decode(encode(msg)) == msg


def test_challenge_zero_bytes():
    assert encode(Challenge(BitString.zeros(128))) == b"\x01\x00\x00\x00\x10" + bytes(16)


def test_server_auth_layout():
    s, d = BitString.ones(128), BitString.zeros(128)
    frame = encode(ServerAuth(((s, d),)))
    assert frame[:5] == b"\x03\x00\x00\x00\x24"
    assert frame[5:9] == b"\x00\x00\x00\x01"
    assert frame[9:] == b"\xff" * 16 + bytes(16)


@pytest.mark.parametrize(
    "frame, reason, offset",
    [
        (b"\x01\x00\x00\x00\x11" + bytes(16), "truncated payload", 21),
        (b"\x01\x00\x00", "truncated frame header", 3),
        (b"\x09\x00\x00\x00\x01\x00", "unknown message type", 0),
        (b"\x01\x00\x00\x00\x01\x00\x00", "trailing bytes", 6),
        (b"\x02\x00\x00\x00\x00", "empty payload", 5),
        (b"\x03\x00\x00\x00\x07\x00\x00\x00\x01abc", "do not divide", 9),
    ],
)
def test_decode_errors_name_offset(frame, reason, offset):
    with pytest.raises(DecodeError, match=reason) as info:
        decode(frame)
    assert info.value.offset == offset
    assert f"offset {offset}" in str(info.value)


@given(st.lists(st.integers(1, 50), min_size=1, max_size=40), st.integers(0, 2**32))
def test_frame_reader_independent_of_chunking(cuts, seed):
    msgs = random_messages(random.Random(seed), 3)
    stream = b"".join(encode(m) for m in msgs)
    reader, got, pos = FrameReader(), [], 0
    for c in cuts:
        got += reader.feed(stream[pos : pos + c])
        pos += c
    got += reader.feed(stream[pos:])
    assert got == msgs and reader.pending == 0


def test_frame_reader_reports_stream_offset():
    reader = FrameReader()
    good = encode(TagNonce(BitString.zeros(128)))
    reader.feed(good)
    with pytest.raises(DecodeError) as info:
        reader.feed(b"\x07\x00\x00\x00\x00")
    assert info.value.offset == len(good)


def test_fault_script_parse():
    fs = FaultScript.parse("drop:4, flip:3:40,delay:2:1,delay:5")
    assert fs.directives == [Drop(4), FlipBit(3, 40), Delay(2, 1), Delay(5)]
    for bad in ("drop", "flip:1", "zap:1", "drop:x"):
        with pytest.raises(ValueError):
            FaultScript.parse(bad)


def test_memory_link_drop_flip_delay():
    link = MemoryLink(FaultScript([Drop(1), FlipBit(2, 40), Delay(3, 1)]))
    z = BitString.zeros(128)
    link.server.send(Challenge(z))
    with pytest.raises(ChannelTimeout):
        link.tag.recv()
    link.server.send(Challenge(z))
    assert link.tag.recv().x_s == z.flip(0)
    link.server.send(Challenge(BitString.ones(128)))
    with pytest.raises(ChannelTimeout):
        link.tag.recv()
    link.tag.send(TagNonce(z))
    assert link.tag.recv().x_s == BitString.ones(128)
    assert link.server.recv().x_t == z
    assert [o for o, *_ in link.delivered] == [2, 3, 4]
    link.close()
    with pytest.raises(ChannelClosed):
        link.tag.recv()


def test_memory_and_socket_transcripts_identical(world):
    results = []
    for make_link in (MemoryLink, loopback_link):
        rng, reg, tags = world(n_tags=3, seed=77)
        link = make_link()
        try:
            results.append([run_session(tags[i % 3], reg, link, rng, timeout=5) for i in range(30)])
        finally:
            link.close()
        assert all(r.accepted for r in results[-1])
    mem, sock = results
    assert [r.transcript for r in mem] == [r.transcript for r in sock]
    assert [(r.tag, r.server) for r in mem] == [(r.tag, r.server) for r in sock]


def test_drop_fourth_message_desyncs(world):
    rng, reg, (tag,) = world()
    res = run_session(tag, reg, MemoryLink(FaultScript.parse("drop:4")), rng)
    assert res.tag.accepted and res.server.reason is Reason.LOST
    assert tag.period == reg.get(tag.tag_id).period + 1


def test_flip_in_sigma_makes_tag_emit_decoy(world):
    rng, reg, (tag,) = world()
    sigma_bit = (5 + 4) * 8 + 10  # header, entry count, then sigma
    res = run_session(tag, reg, MemoryLink(FaultScript([FlipBit(3, sigma_bit)])), rng)
    assert res.tag.reason is Reason.SIGMA_MISMATCH
    assert res.transcript.sigma_prime.nbits == 128
    assert not res.server.accepted and tag.period == 1


def test_flip_in_header_is_malformed(world):
    rng, reg, (tag,) = world()
    res = run_session(tag, reg, MemoryLink(FaultScript([FlipBit(3, 0)])), rng)
    assert res.failed_at == "server_auth" and res.tag.reason is Reason.MALFORMED


def test_parse_address():
    assert parse_address("127.0.0.1:80") == ("127.0.0.1", 80)
    assert parse_address(":81") == ("127.0.0.1", 81)
    with pytest.raises(ValueError):
        parse_address("nohost")


def test_socket_close_is_reported():
    link = loopback_link()
    link.tag.close()
    with pytest.raises(ChannelClosed):
        link.server.recv(1.0)
    link.close()


def test_unaligned_lengths_refused_on_wire():
    with pytest.raises(ValueError):
        encode(Challenge(Prng(1, 10).draw()))
