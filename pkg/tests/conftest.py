import time

import pytest

from rwstwin.emulator import Emulator, EmulatorConfig
from rwstwin.twin import TwinClient


@pytest.fixture
def emulator():
    emu = Emulator(EmulatorConfig(port=0)).start()
    yield emu
    emu.stop()


@pytest.fixture
def twin(emulator):
    client = TwinClient(emulator.url).start()
    wait_for(lambda: client.state.snapshot().joints_rad is not None,
             timeout=5.0, message="twin never received joints")
    yield client
    client.stop()


def wait_for(predicate, timeout=5.0, interval=0.01, message="condition not met"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(interval)
    raise AssertionError(f"timed out after {timeout}s: {message}")
