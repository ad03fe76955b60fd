"""The host driving an exploration over one or more clients."""

from abc import ABC, abstractmethod
import asyncio
from collections import deque
import contextlib
from dataclasses import dataclass
from datetime import datetime, timezone
import logging
from pathlib import Path
from typing import Any, Callable, Final, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .client import SampleExecutor
from .exceptions import (
    AllClientsLostException,
    ClientIncompatibleException,
    NoClientsException,
    ProtocolException,
    SearchExhaustedException,
)
from .model import (
    ByePayload,
    ConfigPayload,
    HelloPayload,
    MessageType,
    MeterSet,
    ResultPayload,
    SampleRecord,
    WorkloadSpec,
)
from .protocol import Connection, parse_address
from .records import CsvRecordWriter
from .search import SearchAlgorithm, create_algorithm
from .space import ConfigSpace, build_orin_space

_logger: Final = logging.getLogger(__name__)

METRIC_FIELDS: Final = {"time": "time_s", "power": "power_w", "memory": "memory_mb"}


class SearchPlan(BaseModel):
    """What to explore and where to record it."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    algorithm: str = "random"
    seed: int = Field(default=0, ge=0)
    budget: int = Field(ge=1)
    batch: int = Field(default=1, ge=1)
    workload: WorkloadSpec = Field(default_factory=lambda: WorkloadSpec(name="llama"))
    meters: MeterSet = Field(default_factory=MeterSet)
    output: Optional[Path] = None
    deterministic: bool = False
    algorithm_options: dict[str, Any] = Field(default_factory=dict)


class ExplorationPlan(SearchPlan):
    """A search plan executed on remote clients."""

    clients: list[str] = Field(min_length=1)
    connect_timeout_s: float = Field(default=10.0, gt=0)

    @field_validator("clients")
    @classmethod
    def _check_clients(cls, clients: list[str]) -> list[str]:
        for address in clients:
            parse_address(address)
        return clients


Clock = Callable[[], str]


def wall_clock() -> str:
    """Current time as ISO-8601 UTC timestamp."""
    now = datetime.now(timezone.utc)
    return now.isoformat(timespec="milliseconds").replace("+00:00", "Z")


class LogicalClock:
    """Returns "0", "1", ... for reproducible records."""

    def __init__(self):
        self._next = 0

    def __call__(self) -> str:
        value = str(self._next)
        self._next += 1
        return value


class Worker(ABC):
    """A client able to execute one sample at a time."""

    client_id: str

    @abstractmethod
    async def run_sample(self, payload: ConfigPayload) -> ResultPayload:
        ...

    async def close(self) -> None:
        pass


class RemoteWorker(Worker):
    """A client connected over the wire protocol."""

    def __init__(self, connection: Connection, hello: HelloPayload):
        self.connection = connection
        self.hello = hello
        self.client_id = hello.client_id
        self._closed = False

    async def run_sample(self, payload: ConfigPayload) -> ResultPayload:
        await self.connection.send(MessageType.CONFIG, payload)
        result: ResultPayload = await self.connection.expect(
            MessageType.RESULT, ResultPayload
        )
        if result.sample_id != payload.sample_id:
            raise ProtocolException(
                f"expected result of {payload.sample_id}, got {result.sample_id}"
            )
        return result

    async def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        with contextlib.suppress(OSError, RuntimeError):
            await self.connection.send(MessageType.BYE, ByePayload())
        await self.connection.close()


class VirtualWorker(Worker):
    """A client running in the host process, without sockets."""

    def __init__(self, client_id: str, executor: SampleExecutor):
        self.client_id = client_id
        self.executor = executor

    async def run_sample(self, payload: ConfigPayload) -> ResultPayload:
        return await self.executor.execute(payload)


@dataclass
class _Completion:
    worker: Worker
    result: Optional[ResultPayload]
    error: Optional[BaseException] = None


class Coordinator:
    """Dispatches proposals to idle workers and records their results.

    Every worker holds at most one sample. Idle workers get work in the order
    they became idle. The algorithm and the CSV writer are only used from the
    coordinator loop.
    """

    def __init__(
        self,
        workers: list[Worker],
        algorithm: SearchAlgorithm,
        plan: SearchPlan,
        writer: Optional[CsvRecordWriter] = None,
        clock: Optional[Clock] = None,
    ):
        if not workers:
            raise NoClientsException("no workers to dispatch to")
        self.workers = list(workers)
        self.algorithm = algorithm
        self.plan = plan
        self.writer = writer
        self.clock = clock or (LogicalClock() if plan.deterministic else wall_clock)
        self.records: list[SampleRecord] = []
        self.lost: list[Worker] = []
        self._next_index = 0

    def _payload(self, config) -> ConfigPayload:
        payload = ConfigPayload(
            sample_id=f"{self._next_index:06d}",
            config=config,
            workload=self.plan.workload,
        )
        self._next_index += 1
        return payload

    def _record(self, worker: Worker, payload: ConfigPayload, result: ResultPayload):
        status = result.status
        values: dict[str, float] = {}
        if status == "ok":
            assert result.metrics is not None
            for meter in self.plan.meters.enabled():
                value = getattr(result.metrics, METRIC_FIELDS[meter])
                if value is None:
                    _logger.warning(
                        "Sample %s from %s lacks %s",
                        payload.sample_id,
                        worker.client_id,
                        meter,
                    )
                    status = "error"
                    values = {}
                    break
                values[METRIC_FIELDS[meter]] = round(value, 6)
        else:
            _logger.warning(
                "Sample %s on %s: %s %s",
                payload.sample_id,
                worker.client_id,
                status,
                result.error_msg,
            )

        return SampleRecord(
            sample_id=payload.sample_id,
            client_id=worker.client_id,
            config=payload.config,
            status=status,
            timestamp=self.clock(),
            **values,
        )

    async def _execute(
        self, worker: Worker, payload: ConfigPayload, events: asyncio.Queue
    ) -> None:
        try:
            result = await worker.run_sample(payload)
        except Exception as e:
            events.put_nowait(_Completion(worker, None, e))
        else:
            events.put_nowait(_Completion(worker, result))

    async def run(self) -> list[SampleRecord]:
        """Run until the budget of records is reached.

        :raises AllClientsLostException: if every worker disconnected
        :raises SearchExhaustedException: if the algorithm stops proposing
        """
        budget = self.plan.budget
        idle: deque[Worker] = deque(self.workers)
        pending: deque[ConfigPayload] = deque()
        in_flight: dict[Worker, ConfigPayload] = {}
        recorded: set[str] = set()
        events: asyncio.Queue[_Completion] = asyncio.Queue()
        tasks: set[asyncio.Task] = set()

        try:
            while len(self.records) < budget:
                while idle:
                    if not pending:
                        free = budget - len(self.records) - len(in_flight)
                        if free <= 0:
                            break
                        proposals = self.algorithm.propose(min(self.plan.batch, free))
                        if not proposals:
                            break
                        pending.extend(self._payload(c) for c in proposals)

                    worker = idle.popleft()
                    payload = pending.popleft()
                    in_flight[worker] = payload
                    _logger.debug(
                        "Dispatching %s to %s", payload.sample_id, worker.client_id
                    )
                    task = asyncio.create_task(self._execute(worker, payload, events))
                    tasks.add(task)
                    task.add_done_callback(tasks.discard)

                if not in_flight:
                    if pending:
                        raise AllClientsLostException(len(self.records), budget)
                    raise SearchExhaustedException(
                        f"{self.algorithm.name or 'algorithm'} stopped after "
                        f"{len(self.records)} of {budget} samples"
                    )

                completion = await events.get()
                worker = completion.worker
                payload = in_flight.pop(worker)

                if completion.result is None:
                    _logger.warning(
                        "Lost client %s (%s), reassigning sample %s",
                        worker.client_id,
                        completion.error,
                        payload.sample_id,
                    )
                    self.lost.append(worker)
                    pending.appendleft(payload)
                    await worker.close()
                    if not idle and not in_flight:
                        raise AllClientsLostException(len(self.records), budget)
                    continue

                idle.append(worker)
                if payload.sample_id in recorded:
                    _logger.warning("Dropping duplicate result %s", payload.sample_id)
                    continue

                record = self._record(worker, payload, completion.result)
                recorded.add(record.sample_id)
                self.records.append(record)
                if self.writer is not None:
                    self.writer.write(record)
                self.algorithm.notify([record])
        finally:
            for task in tasks:
                task.cancel()
            if tasks:
                await asyncio.gather(*tasks, return_exceptions=True)

        _logger.info("Recorded %d samples", len(self.records))
        return self.records


async def run_exploration(
    workers: list[Worker],
    plan: SearchPlan,
    space: Optional[ConfigSpace] = None,
    clock: Optional[Clock] = None,
) -> list[SampleRecord]:
    """Run a plan on connected workers, writing the CSV if requested."""
    space = space or build_orin_space()
    algorithm = create_algorithm(
        plan.algorithm, space, plan.seed, **plan.algorithm_options
    )
    writer = CsvRecordWriter(plan.output) if plan.output is not None else None
    try:
        coordinator = Coordinator(workers, algorithm, plan, writer, clock)
        return await coordinator.run()
    finally:
        if writer is not None:
            writer.close()


class JHost(contextlib.AbstractAsyncContextManager):
    """Connects to the clients of a plan and explores with them."""

    def __init__(
        self,
        plan: ExplorationPlan,
        space: Optional[ConfigSpace] = None,
        clock: Optional[Clock] = None,
    ):
        self.plan = plan
        self.space = space or build_orin_space()
        self.clock = clock
        self.workers: list[RemoteWorker] = []

    async def __aexit__(self, exc_type, exc_value, traceback):
        await self.close()

    async def _handshake(self, address: str) -> RemoteWorker:
        connection = await Connection.open(address, self.plan.connect_timeout_s)
        try:
            hello: HelloPayload = await asyncio.wait_for(
                connection.expect(MessageType.HELLO, HelloPayload),
                self.plan.connect_timeout_s,
            )
            missing = set(self.plan.meters.enabled()).difference(hello.meters)
            if missing:
                raise ClientIncompatibleException(
                    f"client {hello.client_id} lacks meters "
                    + ", ".join(sorted(missing))
                )
        except (ProtocolException, ClientIncompatibleException) as e:
            await connection.send_error(e.msg)
            await connection.close()
            raise
        except BaseException:
            await connection.close()
            raise
        _logger.info(
            "Connected to client %s (%s) at %s", hello.client_id, hello.device, address
        )
        return RemoteWorker(connection, hello)

    async def connect(self) -> list[RemoteWorker]:
        """Connect to all clients, skipping the unreachable ones.

        :raises NoClientsException: if no client could be connected
        """
        problems = []
        for address in self.plan.clients:
            try:
                self.workers.append(await self._handshake(address))
            except (
                OSError,
                asyncio.TimeoutError,
                ProtocolException,
                ClientIncompatibleException,
            ) as e:
                _logger.warning("Cannot use client %s: %s", address, e)
                problems.append(f"{address}: {e}")

        if not self.workers:
            raise NoClientsException("no client connected; " + "; ".join(problems))
        return self.workers

    async def explore(self) -> list[SampleRecord]:
        if not self.workers:
            await self.connect()
        workers: list[Worker] = list(self.workers)
        return await run_exploration(workers, self.plan, self.space, self.clock)

    async def close(self) -> None:
        """End the session of every client with BYE."""
        for worker in self.workers:
            await worker.close()
        self.workers = []


async def explore(
    plan: ExplorationPlan,
    space: Optional[ConfigSpace] = None,
    clock: Optional[Clock] = None,
) -> list[SampleRecord]:
    """Explore with remote clients and return the records in completion order.

    :raises NoClientsException: if no client could be connected
    :raises AllClientsLostException: if all clients were lost during the run
    """
    async with JHost(plan, space, clock) as host:
        return await host.explore()


async def explore_in_process(
    plan: SearchPlan,
    executor: SampleExecutor,
    client_id: str = "sim-0",
    space: Optional[ConfigSpace] = None,
    clock: Optional[Clock] = None,
) -> list[SampleRecord]:
    """Explore with a single client running in this process."""
    worker = VirtualWorker(client_id, executor)
    return await run_exploration([worker], plan, space, clock)
