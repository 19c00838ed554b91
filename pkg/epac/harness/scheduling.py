"""
The concurrent execution of the independent experiment cells.

Every cell (a model, a GoP, a variant, a clip) is coded sequentially
inside itself, but the cells are independent and run concurrently:
as the `aiojobs` jobs, limited to the configured number of workers,
each one running its synchronous numeric work in the settings' executor.

The results are returned in the order of the cells as given,
never in the order of their completion, so that the reports are identical
for the identical plans regardless of the number of workers.
"""
import asyncio
import contextvars
import functools
import logging
from typing import Any, Callable, List, Optional, Sequence, TypeVar

import aiojobs

from epac.structs import configuration

logger = logging.getLogger(__name__)

CellT = TypeVar('CellT')
ResultT = TypeVar('ResultT')


async def _execute(
        fn: Callable[[CellT], ResultT],
        cell: CellT,
        settings: configuration.LabSettings,
) -> ResultT:
    # Copy the context (e.g. the logging prefixes) from the scheduling task to the worker thread.
    context = contextvars.copy_context()
    real_fn = functools.partial(context.run, fn, cell)
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(settings.execution.executor, real_fn)


async def run_cells(
        cells: Sequence[CellT],
        fn: Callable[[CellT], ResultT],
        settings: Optional[configuration.LabSettings] = None,
) -> List[ResultT]:
    """
    Run ``fn`` for every cell concurrently, and return the results in the cells' order.

    The first failure cancels the remaining cells and is re-raised as is.
    """
    settings = settings if settings is not None else configuration.LabSettings()
    scheduler = aiojobs.Scheduler(limit=settings.execution.max_workers, pending_limit=max(len(cells), 1))
    try:
        jobs = [await scheduler.spawn(_execute(fn, cell, settings)) for cell in cells]
        results: List[Any] = await asyncio.gather(*(job.wait() for job in jobs))
    finally:
        # Cancel the pending jobs if any of them has failed; the finished ones are unaffected.
        await asyncio.shield(scheduler.close())
    logger.debug(f"Finished {len(results)} cells.")
    return results


def run_cells_sync(
        cells: Sequence[CellT],
        fn: Callable[[CellT], ResultT],
        settings: Optional[configuration.LabSettings] = None,
) -> List[ResultT]:
    """ The same as `run_cells`, for the synchronous callers (e.g. the command line). """
    return asyncio.run(run_cells(cells, fn, settings))
