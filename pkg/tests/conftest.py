from pathlib import Path
from typing import AsyncGenerator, Callable

import pytest
import pytest_asyncio

import jexplore
from jexplore.client import ClientSettings, create_executor


@pytest.fixture
def orin_space() -> jexplore.ConfigSpace:
    return jexplore.build_orin_space()


@pytest.fixture
def small_space() -> jexplore.ConfigSpace:
    """A reduced space with the fields of the Orin space (radices 2,2,2,3,3,3,2,2)."""
    return jexplore.ConfigSpace(
        [
            jexplore.ParameterDef(name="cores_c1", kind="core-count", values=(1, 4)),
            jexplore.ParameterDef(name="cores_c2", kind="core-count", values=(0, 4)),
            jexplore.ParameterDef(name="cores_c3", kind="core-count", values=(0, 4)),
            jexplore.ParameterDef(
                name="freq_c1_khz", kind="frequency", values=(115000, 1157500, 2200000)
            ),
            jexplore.ParameterDef(
                name="freq_c2_khz", kind="frequency", values=(115000, 1157500, 2200000)
            ),
            jexplore.ParameterDef(
                name="freq_c3_khz", kind="frequency", values=(115000, 1157500, 2200000)
            ),
            jexplore.ParameterDef(
                name="gpu_freq_khz", kind="frequency", values=(306000, 1300000)
            ),
            jexplore.ParameterDef(
                name="emc_freq_khz", kind="frequency", values=(204000, 3200000)
            ),
        ]
    )


@pytest.fixture
def max_config(orin_space) -> jexplore.Configuration:
    return orin_space.maximum()


@pytest.fixture
def min_config(orin_space) -> jexplore.Configuration:
    return orin_space.minimum()


@pytest.fixture
def device_model() -> jexplore.DeviceModel:
    return jexplore.DeviceModel()


@pytest.fixture
def settings_factory() -> Callable[..., ClientSettings]:
    """Provides a factory for client settings listening on a free local port."""

    def factory(client_id: str = "sim-0", **kwargs) -> ClientSettings:
        kwargs.setdefault("listen", "127.0.0.1:0")
        kwargs.setdefault("deterministic", True)
        return ClientSettings(client_id=client_id, **kwargs)

    return factory


@pytest.fixture
def sim_executor(settings_factory) -> jexplore.SampleExecutor:
    """A deterministic executor of the simulated device."""
    return create_executor(settings_factory())


@pytest_asyncio.fixture
async def sim_client(settings_factory) -> AsyncGenerator[jexplore.JClient, None]:
    """A started simulated client on a free local port."""
    async with jexplore.JClient(settings_factory("board-a")) as client:
        await client.start()
        yield client


@pytest.fixture
def csv_path(tmp_path) -> Path:
    return tmp_path / "results.csv"


@pytest.fixture
def address_of() -> Callable[[jexplore.JClient], str]:
    """Provides a function returning the HOST:PORT of a started client."""

    def address(client: jexplore.JClient) -> str:
        host, port = client.address
        return f"{host}:{port}"

    return address
