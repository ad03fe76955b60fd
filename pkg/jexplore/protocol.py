"""Wire protocol between host and clients.

Frame format::

    +-----------------+------------------------------------------+
    | length (4B, BE) | UTF-8 JSON body {"type","seq","payload"} |
    +-----------------+------------------------------------------+

The host sends only CONFIG and BYE, clients send only HELLO, RESULT and ERR.
Both directions share one TCP connection.
"""

import asyncio
import contextlib
import json
import logging
import struct
from typing import Any, Final, Optional

from pydantic import BaseModel, ValidationError

from .exceptions import (
    FrameParseException,
    FrameTooLargeException,
    IncompleteFrameException,
    ProtocolException,
    ProtocolVersionException,
    RemoteErrorException,
    SequenceException,
    UnknownMessageTypeException,
)
from .model import (
    PAYLOAD_TYPES,
    PROTOCOL_VERSION,
    ErrPayload,
    MessageEnvelope,
    MessageType,
    Payload,
)

_logger: Final = logging.getLogger(__name__)

LENGTH_PREFIX_SIZE: Final = 4
MAX_BODY_SIZE: Final = 1 << 24

_ENVELOPE_KEYS: Final = frozenset(("type", "seq", "payload"))
_LENGTH: Final = struct.Struct(">I")


def frame_body(body: bytes) -> bytes:
    """Prefix a body with its length.

    :raises FrameTooLargeException: if the body exceeds the size limit
    """
    if len(body) > MAX_BODY_SIZE:
        raise FrameTooLargeException(len(body), MAX_BODY_SIZE)
    return _LENGTH.pack(len(body)) + body


def envelope_body(envelope: MessageEnvelope) -> bytes:
    """Serialize an envelope to its canonical JSON body."""
    obj = {
        "type": envelope.type.value,
        "seq": envelope.seq,
        "payload": envelope.payload.model_dump(mode="json", exclude_none=True),
    }
    try:
        return json.dumps(
            obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        ).encode("utf-8")
    except (ValueError, UnicodeEncodeError) as e:
        raise ProtocolException(f"cannot serialize envelope: {e}") from e


def encode_frame(envelope: MessageEnvelope) -> bytes:
    """Encode an envelope to a complete frame."""
    return frame_body(envelope_body(envelope))


def parse_envelope(body: bytes) -> MessageEnvelope:
    """Parse a frame body into an envelope.

    :raises FrameParseException: if the body is not a valid envelope
    :raises UnknownMessageTypeException: if the message type is unknown
    :raises ProtocolVersionException: if a HELLO announces another version
    """
    try:
        obj = json.loads(body.decode("utf-8"))
    except (ValueError, RecursionError) as e:
        raise FrameParseException(f"malformed body: {e}") from e

    if not isinstance(obj, dict) or set(obj) != _ENVELOPE_KEYS:
        raise FrameParseException("body must be an object with type, seq, payload")

    try:
        message_type = MessageType(obj["type"])
    except (ValueError, TypeError):
        raise UnknownMessageTypeException(obj["type"]) from None

    payload_type = PAYLOAD_TYPES[message_type]
    raw_payload = obj["payload"]
    if (
        message_type == MessageType.HELLO
        and isinstance(raw_payload, dict)
        and raw_payload.get("protocol_version", PROTOCOL_VERSION) != PROTOCOL_VERSION
    ):
        raise ProtocolVersionException(
            raw_payload["protocol_version"], PROTOCOL_VERSION
        )

    try:
        payload = payload_type.model_validate(raw_payload)
        return MessageEnvelope(type=message_type, seq=obj["seq"], payload=payload)
    except ValidationError as e:
        raise FrameParseException(
            f"invalid {message_type.value} envelope: {e.error_count()} error(s)"
        ) from e


async def read_frame_body(reader: asyncio.StreamReader) -> bytes:
    """Read the body of exactly one frame.

    :raises IncompleteFrameException: if the stream ends within the frame
    :raises FrameTooLargeException: if the announced length exceeds the limit
    """
    try:
        prefix = await reader.readexactly(LENGTH_PREFIX_SIZE)
    except asyncio.IncompleteReadError as e:
        raise IncompleteFrameException(LENGTH_PREFIX_SIZE, len(e.partial)) from None

    (length,) = _LENGTH.unpack(prefix)
    if length > MAX_BODY_SIZE:
        raise FrameTooLargeException(length, MAX_BODY_SIZE)

    try:
        return await reader.readexactly(length)
    except asyncio.IncompleteReadError as e:
        raise IncompleteFrameException(length, len(e.partial)) from None


async def decode_frame(reader: asyncio.StreamReader) -> MessageEnvelope:
    """Read and parse exactly one frame from a stream."""
    return parse_envelope(await read_frame_body(reader))


class FrameDecoder:
    """Incremental decoder for frames arriving in arbitrary chunks."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        """Add data and return the bodies of all frames completed by it."""
        self._buffer.extend(data)
        bodies: list[bytes] = []
        while len(self._buffer) >= LENGTH_PREFIX_SIZE:
            (length,) = _LENGTH.unpack_from(self._buffer)
            if length > MAX_BODY_SIZE:
                raise FrameTooLargeException(length, MAX_BODY_SIZE)
            end = LENGTH_PREFIX_SIZE + length
            if len(self._buffer) < end:
                break
            bodies.append(bytes(self._buffer[LENGTH_PREFIX_SIZE:end]))
            del self._buffer[:end]
        return bodies

    def feed_envelopes(self, data: bytes) -> list[MessageEnvelope]:
        return [parse_envelope(body) for body in self.feed(data)]

    @property
    def pending(self) -> int:
        """Number of buffered bytes not yet forming a frame."""
        return len(self._buffer)

    def finish(self) -> None:
        """Signal the end of the stream.

        :raises IncompleteFrameException: if a partial frame is buffered
        """
        if not self._buffer:
            return
        if len(self._buffer) < LENGTH_PREFIX_SIZE:
            raise IncompleteFrameException(LENGTH_PREFIX_SIZE, len(self._buffer))
        (length,) = _LENGTH.unpack_from(self._buffer)
        raise IncompleteFrameException(
            length, len(self._buffer) - LENGTH_PREFIX_SIZE
        )


def parse_address(address: str) -> tuple[str, int]:
    """Split an address of the form ``HOST:PORT``."""
    host, sep, port = address.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ValueError(f"invalid address '{address}', expected HOST:PORT")
    return host.strip("[]"), int(port)


class Connection(contextlib.AbstractAsyncContextManager):
    """One side of a host/client connection.

    Outgoing envelopes are numbered from 0, incoming envelopes must continue
    the sequence of the peer. A connection has exactly one reader and one
    writer; concurrent writers are not supported.
    """

    def __init__(
        self,
        reader: asyncio.StreamReader,
        writer: asyncio.StreamWriter,
        peer: Optional[str] = None,
    ):
        self.reader = reader
        self.writer = writer
        if peer is None:
            peername: Any = writer.get_extra_info("peername")
            peer = f"{peername[0]}:{peername[1]}" if peername else "unknown"
        self.peer = peer
        self._send_seq = 0
        self._recv_seq = 0

    async def __aexit__(self, exc_type, exc_value, traceback):
        await self.close()

    @classmethod
    async def open(cls, address: str, timeout: Optional[float] = None):
        """Connect to ``HOST:PORT``."""
        host, port = parse_address(address)
        reader, writer = await asyncio.wait_for(
            asyncio.open_connection(host, port), timeout
        )
        return cls(reader, writer, peer=address)

    async def send(
        self, message_type: MessageType, payload: Payload
    ) -> MessageEnvelope:
        envelope = MessageEnvelope(
            type=message_type, seq=self._send_seq, payload=payload
        )
        self.writer.write(encode_frame(envelope))
        await self.writer.drain()
        self._send_seq += 1
        _logger.debug("-> %s %s #%d", self.peer, message_type.value, envelope.seq)
        return envelope

    async def receive(self) -> MessageEnvelope:
        """Receive the next envelope.

        :raises RemoteErrorException: if the peer sent ERR
        """
        envelope = await decode_frame(self.reader)
        _logger.debug("<- %s %s #%d", self.peer, envelope.type.value, envelope.seq)
        if envelope.seq != self._recv_seq:
            raise SequenceException(self._recv_seq, envelope.seq)
        self._recv_seq += 1
        if isinstance(envelope.payload, ErrPayload):
            raise RemoteErrorException(envelope.payload.message)
        return envelope

    async def expect(
        self, message_type: MessageType, payload_type: type[BaseModel]
    ) -> Any:
        """Receive an envelope of the given type and return its payload."""
        envelope = await self.receive()
        if envelope.type != message_type:
            raise ProtocolException(
                f"expected {message_type.value} but received {envelope.type.value}"
            )
        assert isinstance(envelope.payload, payload_type)
        return envelope.payload

    async def send_error(self, message: str) -> None:
        """Send ERR, ignoring a connection which is already gone."""
        with contextlib.suppress(ConnectionError, RuntimeError):
            await self.send(MessageType.ERR, ErrPayload(message=message or "error"))

    async def close(self) -> None:
        if not self.writer.is_closing():
            self.writer.close()
        with contextlib.suppress(OSError):
            await self.writer.wait_closed()

    def abort(self) -> None:
        """Drop the connection immediately without a goodbye."""
        transport = self.writer.transport
        transport.abort()

