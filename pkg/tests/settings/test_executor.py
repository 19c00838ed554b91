import concurrent.futures
import threading

import pytest

from epac.harness import scheduling
from epac.structs.configuration import LabSettings


class CatchyExecutor(concurrent.futures.ThreadPoolExecutor):

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.calls = []

    def submit(self, fn, *args, **kwargs):
        self.calls.append(fn)
        return super().submit(fn, *args, **kwargs)


async def test_synchronous_work_is_threaded():
    settings = LabSettings()
    threads = []

    def fn(cell):
        threads.append(threading.current_thread())

    await scheduling.run_cells([1], fn, settings)

    assert len(threads) == 1
    assert threads[0] is not threading.current_thread()  # not in the main thread


async def test_synchronous_work_uses_replaced_executor():
    settings = LabSettings()
    executor = CatchyExecutor()
    settings.execution.executor = executor

    await scheduling.run_cells([1, 2], lambda cell: cell, settings)

    assert len(executor.calls) == 2


async def test_synchronous_executor_limit_is_applied():
    settings = LabSettings()
    assert hasattr(settings.execution.executor, '_max_workers')  # prerequisite

    assert settings.execution.max_workers is None  # as in "unset by us, assume defaults"
    assert settings.execution.executor._max_workers is not None  # usually CPU count + N.

    settings.execution.max_workers = 123456

    assert settings.execution.max_workers == 123456
    assert settings.execution.executor._max_workers == 123456


def test_executor_limit_must_be_positive():
    settings = LabSettings()
    with pytest.raises(ValueError, match="lower than 1"):
        settings.execution.max_workers = 0
