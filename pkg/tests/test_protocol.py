import asyncio
import json

from hypothesis import HealthCheck, given, settings, strategies as st
import pytest

import jexplore
from jexplore.model import (
    METER_NAMES,
    PAYLOAD_TYPES,
    ByePayload,
    ConfigPayload,
    ErrPayload,
    HelloPayload,
    Metrics,
    ResultPayload,
    WorkloadSpec,
)
from jexplore.protocol import (
    MAX_BODY_SIZE,
    Connection,
    FrameDecoder,
    frame_body,
    parse_address,
    parse_envelope,
)


def stream_of(data: bytes) -> asyncio.StreamReader:
    reader = asyncio.StreamReader()
    reader.feed_data(data)
    reader.feed_eof()
    return reader


def envelope(message_type, payload, seq=0) -> jexplore.MessageEnvelope:
    return jexplore.MessageEnvelope(type=message_type, seq=seq, payload=payload)


def config_envelope(space: jexplore.ConfigSpace, index: int = 0, seq: int = 0):
    return envelope(
        jexplore.MessageType.CONFIG,
        ConfigPayload(
            sample_id=f"{index:06d}",
            config=space.decode_index(index),
            workload=WorkloadSpec(name="llama", params={"batch": "1"}),
        ),
        seq,
    )


MESSAGE_TYPES = {payload: message for message, payload in PAYLOAD_TYPES.items()}

names = st.text(min_size=1, max_size=16)


def payloads() -> st.SearchStrategy:
    """Payloads of every message type."""
    space = jexplore.build_orin_space()
    hello = st.builds(
        HelloPayload,
        client_id=names,
        device=st.sampled_from(["sim", "jetson-orin"]),
        meters=st.lists(
            st.sampled_from(METER_NAMES), min_size=1, max_size=3, unique=True
        ).map(tuple),
    )
    config = st.builds(
        ConfigPayload,
        sample_id=names,
        config=st.integers(0, space.cardinality() - 1).map(space.decode_index),
        workload=st.builds(
            WorkloadSpec,
            name=names,
            params=st.dictionaries(names, st.text(max_size=8), max_size=3),
        ),
    )
    finite = {"allow_nan": False, "allow_infinity": False}
    metrics = st.builds(
        Metrics,
        time_s=st.none() | st.floats(min_value=0, **finite),
        power_w=st.none() | st.floats(min_value=0, exclude_min=True, **finite),
        memory_mb=st.none() | st.floats(min_value=0, **finite),
    )
    ok = st.builds(
        ResultPayload, sample_id=names, status=st.just("ok"), metrics=metrics
    )
    failed = st.builds(
        ResultPayload,
        sample_id=names,
        status=st.sampled_from(["error", "timeout"]),
        error_msg=names,
    )
    err = st.builds(ErrPayload, message=names)
    return st.one_of(hello, config, ok, failed, st.just(ByePayload()), err)


class TestFraming:
    def test_golden_frame(self):
        assert frame_body(b"{}") == b"\x00\x00\x00\x02{}"

    def test_length_prefix_is_big_endian(self):
        frame = jexplore.encode_frame(
            envelope(jexplore.MessageType.BYE, ByePayload(), seq=3)
        )

        body = b'{"type":"BYE","seq":3,"payload":{}}'
        assert frame == len(body).to_bytes(4, "big") + body

    def test_rejects_oversized_body(self):
        with pytest.raises(jexplore.FrameTooLargeException):
            frame_body(b" " * (MAX_BODY_SIZE + 1))

    def test_body_omits_absent_fields(self):
        result = ResultPayload(
            sample_id="000001", status="ok", metrics=Metrics(time_s=20.0)
        )
        frame = jexplore.encode_frame(envelope(jexplore.MessageType.RESULT, result))

        assert json.loads(frame[4:]) == {
            "type": "RESULT",
            "seq": 0,
            "payload": {
                "sample_id": "000001",
                "status": "ok",
                "metrics": {"time_s": 20.0},
            },
        }


class TestDecodeFrame:
    @pytest.mark.asyncio
    async def test_round_trip(self, orin_space):
        original = config_envelope(orin_space, 12345, seq=7)

        decoded = await jexplore.decode_frame(
            stream_of(jexplore.encode_frame(original))
        )

        assert decoded == original

    @pytest.mark.asyncio
    async def test_consumes_exactly_one_frame(self):
        bye = jexplore.encode_frame(
            envelope(jexplore.MessageType.BYE, ByePayload(), seq=0)
        )
        reader = stream_of(bye + bye[:3])

        await jexplore.decode_frame(reader)

        with pytest.raises(jexplore.IncompleteFrameException) as exc_info:
            await jexplore.decode_frame(reader)
        assert exc_info.value.received == 3

    @pytest.mark.asyncio
    async def test_truncated_body(self, orin_space):
        frame = jexplore.encode_frame(config_envelope(orin_space))

        with pytest.raises(jexplore.IncompleteFrameException):
            await jexplore.decode_frame(stream_of(frame[:-1]))

    @pytest.mark.asyncio
    async def test_announced_length_too_large(self):
        with pytest.raises(jexplore.FrameTooLargeException):
            await jexplore.decode_frame(stream_of(b"\xff\xff\xff\xff"))

    @pytest.mark.asyncio
    @pytest.mark.parametrize(
        "body",
        [
            b"\xff\xfe",
            b"not json",
            b"[]",
            b'{"type":"BYE","seq":0}',
            b'{"type":"BYE","seq":0,"payload":{},"extra":1}',
            b'{"type":"BYE","seq":-1,"payload":{}}',
            b'{"type":"BYE","seq":' + b"1" * 5000 + b',"payload":{}}',
            b'{"type":"RESULT","seq":0,"payload":{"sample_id":"1","status":"ok"}}',
        ],
    )
    async def test_malformed_body(self, body):
        with pytest.raises(jexplore.FrameParseException):
            await jexplore.decode_frame(stream_of(frame_body(body)))

    def test_unknown_message_type(self):
        with pytest.raises(jexplore.UnknownMessageTypeException):
            parse_envelope(b'{"type":"PING","seq":0,"payload":{}}')

    def test_unsupported_protocol_version(self):
        body = {
            "type": "HELLO",
            "seq": 0,
            "payload": {
                "client_id": "a",
                "protocol_version": 2,
                "device": "sim",
                "meters": ["time"],
            },
        }

        with pytest.raises(jexplore.ProtocolVersionException):
            parse_envelope(json.dumps(body).encode())

    @given(st.binary(max_size=64))
    @settings(max_examples=300)
    def test_garbage_yields_protocol_errors(self, data):
        """Arbitrary input never raises anything but protocol errors."""
        decoder = FrameDecoder()
        try:
            decoder.feed_envelopes(data)
            decoder.finish()
        except jexplore.ProtocolException:
            pass

    def test_oversized_integer(self):
        body = b'{"type":"BYE","seq":' + b"1" * 5000 + b',"payload":{}}'

        with pytest.raises(jexplore.FrameParseException):
            parse_envelope(body)

    @given(st.integers(min_value=0, max_value=2**31), payloads())
    @settings(
        max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow]
    )
    def test_envelopes_survive_the_wire(self, seq, payload):
        original = envelope(MESSAGE_TYPES[type(payload)], payload, seq)

        decoder = FrameDecoder()
        assert decoder.feed_envelopes(jexplore.encode_frame(original)) == [original]


class TestFrameDecoder:
    def test_byte_at_a_time(self, orin_space):
        frames = [config_envelope(orin_space, i, seq=i) for i in range(3)]
        data = b"".join(jexplore.encode_frame(f) for f in frames)
        decoder = FrameDecoder()

        decoded = []
        for i in range(len(data)):
            decoded.extend(decoder.feed_envelopes(data[i : i + 1]))

        assert decoded == frames
        assert decoder.pending == 0
        decoder.finish()

    def test_finish_with_partial_frame(self):
        decoder = FrameDecoder()
        decoder.feed(b"\x00\x00\x00\x05ab")

        with pytest.raises(jexplore.IncompleteFrameException) as exc_info:
            decoder.finish()

        assert exc_info.value.expected == 5
        assert exc_info.value.received == 2

    def test_finish_with_partial_prefix(self):
        decoder = FrameDecoder()
        decoder.feed(b"\x00\x00")

        with pytest.raises(jexplore.IncompleteFrameException):
            decoder.finish()


class TestParseAddress:
    def test_host_and_port(self):
        assert parse_address("10.0.0.2:5555") == ("10.0.0.2", 5555)

    def test_ipv6(self):
        assert parse_address("[::1]:80") == ("::1", 80)

    @pytest.mark.parametrize("address", ["localhost", ":80", "host:", "host:99999"])
    def test_invalid(self, address):
        with pytest.raises(ValueError):
            parse_address(address)


class TestConnection:
    @pytest.mark.asyncio
    async def test_sequence_numbers(self):
        """Both peers number their envelopes from 0 independently."""
        received = []

        async def handle(reader, writer):
            async with Connection(reader, writer) as peer:
                await peer.send(
                    jexplore.MessageType.HELLO,
                    HelloPayload(client_id="a", device="sim", meters=("time",)),
                )
                received.append(await peer.receive())
                received.append(await peer.receive())

        server = await asyncio.start_server(handle, "127.0.0.1", 0)
        host, port = server.sockets[0].getsockname()[:2]
        try:
            async with await Connection.open(f"{host}:{port}") as connection:
                hello = await connection.expect(
                    jexplore.MessageType.HELLO, HelloPayload
                )
                await connection.send(jexplore.MessageType.BYE, ByePayload())
                await connection.send(jexplore.MessageType.BYE, ByePayload())
                await asyncio.sleep(0.05)
        finally:
            server.close()
            await server.wait_closed()

        assert hello.client_id == "a"
        assert [e.seq for e in received] == [0, 1]

    @pytest.mark.asyncio
    async def test_out_of_sequence(self):
        bye = jexplore.encode_frame(
            envelope(jexplore.MessageType.BYE, ByePayload(), seq=1)
        )
        reader = stream_of(bye)
        connection = Connection(reader, None, peer="test")  # type: ignore[arg-type]

        with pytest.raises(jexplore.SequenceException):
            await connection.receive()

    @pytest.mark.asyncio
    async def test_err_is_raised(self):
        err = jexplore.encode_frame(
            envelope(jexplore.MessageType.ERR, ErrPayload(message="busy"))
        )
        reader = stream_of(err)
        connection = Connection(reader, None, peer="test")  # type: ignore[arg-type]

        with pytest.raises(jexplore.RemoteErrorException) as exc_info:
            await connection.receive()

        assert exc_info.value.remote_message == "busy"

    @pytest.mark.asyncio
    async def test_unexpected_type(self):
        bye = jexplore.encode_frame(
            envelope(jexplore.MessageType.BYE, ByePayload(), seq=0)
        )
        reader = stream_of(bye)
        connection = Connection(reader, None, peer="test")  # type: ignore[arg-type]

        with pytest.raises(jexplore.ProtocolException):
            await connection.expect(jexplore.MessageType.HELLO, HelloPayload)
