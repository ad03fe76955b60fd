"""The client daemon running on a device."""

import asyncio
import contextlib
import logging
from pathlib import Path
from typing import Final, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import (
    IncompleteFrameException,
    MeasurementTimeoutException,
    ProtocolException,
)
from .measurement import WorkloadRunner, measure_run
from .model import (
    ConfigPayload,
    DeviceKind,
    HelloPayload,
    MessageType,
    MeterSet,
    ResultPayload,
)
from .protocol import Connection, parse_address
from .simdevice import (
    PRESETS,
    ConfigApplier,
    DeviceModel,
    JetsonOrinApplier,
    SimDevice,
    UnsupportedWorkload,
    load_model_file,
)
from .space import ConfigSpace, build_orin_space

_logger: Final = logging.getLogger(__name__)


class ClientSettings(BaseModel):
    """Settings of a client daemon."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    listen: str = "0.0.0.0:5555"
    client_id: str = Field(min_length=1)
    device: DeviceKind = "sim"
    preset: str = "llama"
    meters: MeterSet = Field(default_factory=MeterSet)
    timeout_s: float = Field(default=3600.0, gt=0, allow_inf_nan=False)
    realtime: bool = False
    deterministic: bool = False
    model_file: Optional[Path] = None
    noise_seed: int = 0

    @field_validator("listen")
    @classmethod
    def _check_listen(cls, listen: str) -> str:
        parse_address(listen)
        return listen

    @model_validator(mode="after")
    def _check_modes(self) -> "ClientSettings":
        if self.realtime and self.deterministic:
            raise ValueError("realtime and deterministic are mutually exclusive")
        return self


class ServeSummary(BaseModel):
    """Outcome of one host session."""

    client_id: str
    completed: int = 0
    failed: int = 0


class SampleExecutor:
    """Applies a configuration, configures the workload and measures one run.

    Every failure of a sample is turned into a RESULT with status error or
    timeout.
    """

    def __init__(
        self,
        applier: ConfigApplier,
        runner: WorkloadRunner,
        meters: MeterSet,
        timeout_s: Optional[float] = None,
    ):
        self.applier = applier
        self.runner = runner
        self.meters = meters
        self.timeout_s = timeout_s

    async def execute(self, payload: ConfigPayload) -> ResultPayload:
        try:
            self.applier.apply(payload.config)
            self.runner.configure(payload.workload)
            measurement = await measure_run(self.runner, self.meters, self.timeout_s)
        except MeasurementTimeoutException as e:
            _logger.warning("Sample %s timed out", payload.sample_id)
            return ResultPayload(
                sample_id=payload.sample_id, status="timeout", error_msg=str(e)
            )
        except Exception as e:
            # a failing sample must never end the serve loop
            _logger.warning("Sample %s failed: %s", payload.sample_id, e)
            return ResultPayload(
                sample_id=payload.sample_id,
                status="error",
                error_msg=str(e) or type(e).__name__,
            )

        return ResultPayload(
            sample_id=payload.sample_id,
            status="ok",
            metrics=measurement.to_metrics(),
        )


def create_executor(
    settings: ClientSettings, space: Optional[ConfigSpace] = None
) -> SampleExecutor:
    """Build the executor of the device backend selected by the settings."""
    space = space or build_orin_space()
    if settings.model_file is not None:
        model, presets = load_model_file(settings.model_file)
    else:
        model, presets = DeviceModel(), dict(PRESETS)
    if settings.deterministic and model.noise_std != 0:
        model = model.model_copy(update={"noise_std": 0.0})
    if settings.preset not in presets:
        raise ValueError(
            f"unknown preset '{settings.preset}', known: {', '.join(sorted(presets))}"
        )

    applier: ConfigApplier
    runner: WorkloadRunner
    if settings.device == "sim":
        device = SimDevice(
            model=model,
            presets=presets,
            preset=settings.preset,
            realtime=settings.realtime,
            noise_seed=settings.noise_seed,
            space=space,
        )
        applier, runner = device.applier, device.runner
    else:
        applier = JetsonOrinApplier(space)
        runner = UnsupportedWorkload(settings.device)

    return SampleExecutor(applier, runner, settings.meters, settings.timeout_s)


class JClient(contextlib.AbstractAsyncContextManager):
    """Serves one host at a time on a listening socket.

    :py:meth:`serve` returns once a host ended its session with BYE. If the
    connection to a host is lost, the client keeps listening for the next one.
    """

    def __init__(
        self,
        settings: ClientSettings,
        executor: Optional[SampleExecutor] = None,
    ):
        self.settings = settings
        self.executor = executor or create_executor(settings)
        self._server: Optional[asyncio.AbstractServer] = None
        self._active: Optional[Connection] = None
        self._sessions: Optional[asyncio.Queue[ServeSummary]] = None
        self._handlers: set[asyncio.Task] = set()

    async def __aexit__(self, exc_type, exc_value, traceback):
        await self.close()

    async def start(self) -> tuple[str, int]:
        """Start listening and return the bound address."""
        host, port = parse_address(self.settings.listen)
        self._sessions = asyncio.Queue()
        self._server = await asyncio.start_server(self._handle, host, port)
        address = self.address
        _logger.info("Client %s listening on %s:%d", self.client_id, *address)
        return address

    @property
    def client_id(self) -> str:
        return self.settings.client_id

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("client is not started")
        sockname = self._server.sockets[0].getsockname()
        return sockname[0], sockname[1]

    async def serve(self) -> ServeSummary:
        """Wait until a host ends its session and return its summary."""
        if self._sessions is None:
            await self.start()
        assert self._sessions is not None
        return await self._sessions.get()

    def abort(self) -> None:
        """Stop listening and drop the active connection without a goodbye."""
        if self._server is not None:
            self._server.close()
        if self._active is not None:
            self._active.abort()

    async def close(self) -> None:
        self.abort()
        for task in self._handlers:
            task.cancel()
        if self._handlers:
            await asyncio.gather(*self._handlers, return_exceptions=True)
        if self._server is not None:
            await self._server.wait_closed()
            self._server = None

    async def _handle(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        task = asyncio.current_task()
        if task is not None:
            self._handlers.add(task)
        try:
            async with Connection(reader, writer) as connection:
                if self._active is not None:
                    _logger.warning("Refusing host %s, busy", connection.peer)
                    await connection.send_error("client is busy with another host")
                    return

                self._active = connection
                try:
                    summary = await self._session(connection)
                finally:
                    self._active = None

            if summary is not None and self._sessions is not None:
                self._sessions.put_nowait(summary)
        finally:
            if task is not None:
                self._handlers.discard(task)

    async def _session(self, connection: Connection) -> Optional[ServeSummary]:
        summary = ServeSummary(client_id=self.client_id)
        _logger.info("Host %s connected", connection.peer)
        try:
            await connection.send(
                MessageType.HELLO,
                HelloPayload(
                    client_id=self.client_id,
                    device=self.settings.device,
                    meters=self.settings.meters.enabled(),
                ),
            )
            while True:
                envelope = await connection.receive()
                if envelope.type == MessageType.BYE:
                    _logger.info(
                        "Host %s finished after %d samples",
                        connection.peer,
                        summary.completed + summary.failed,
                    )
                    return summary
                if envelope.type != MessageType.CONFIG:
                    raise ProtocolException(
                        f"unexpected {envelope.type.value} from host"
                    )

                assert isinstance(envelope.payload, ConfigPayload)
                result = await self.executor.execute(envelope.payload)
                await connection.send(MessageType.RESULT, result)
                if result.status == "ok":
                    summary.completed += 1
                else:
                    summary.failed += 1
        except (IncompleteFrameException, ConnectionError) as e:
            _logger.warning("Lost host %s: %s", connection.peer, e)
        except ProtocolException as e:
            _logger.error("Protocol error with host %s: %s", connection.peer, e)
            await connection.send_error(e.msg)
        return None


async def serve(settings: ClientSettings, once: bool = True) -> ServeSummary:
    """Run a client daemon and return the summary of its last session.

    With ``once`` the client stops after the first session ended with BYE,
    otherwise it serves hosts until cancelled.
    """
    async with JClient(settings) as client:
        await client.start()
        while True:
            summary = await client.serve()
            if once:
                return summary
