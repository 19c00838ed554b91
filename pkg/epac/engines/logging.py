"""
Logging with the lab context: which clip, which frame, which model.

The long experiments interleave the messages of many cells (when run
concurrently); every message of a cell is therefore prefixed with its
reference (e.g. ``[clip-7/frame-12]``), taken from the ``lab_ref`` extra
that `ContextLogger` adds to all its records.
"""
import copy
import logging
from typing import Any, Dict, MutableMapping, Optional, Tuple

format = '[%(asctime)s] %(name)-20.20s [%(levelname)-8.8s] %(message)s'


class ContextPrefixingFormatter(logging.Formatter):
    """ An utility to prefix the per-clip/per-frame log messages. """

    def format(self, record: logging.LogRecord) -> str:
        if hasattr(record, 'lab_ref'):
            ref = getattr(record, 'lab_ref')
            parts = [f'{key}-{ref[key]}' for key in ('clip', 'frame') if ref.get(key) is not None]
            parts.extend(f'{key}={ref[key]}' for key in ('lambda', 'variant') if ref.get(key) is not None)
            if parts:
                record = copy.copy(record)  # shallow
                record.msg = f"[{'/'.join(parts)}] {record.msg}"
        return super().format(record)


class ContextLogger(logging.LoggerAdapter):
    """
    A logger/adapter to carry the experiment identifiers for formatting.

    Constructed per clip (or per cell) by the pipelines; narrowed per frame
    with `at_frame`. Only the plain identifiers are carried, never the data.
    """

    def __init__(
            self,
            logger: logging.Logger,
            *,
            clip: Optional[object] = None,
            frame: Optional[int] = None,
            lmbda: Optional[float] = None,
            variant: Optional[str] = None,
    ) -> None:
        self.ref: Dict[str, Any] = {'clip': clip, 'frame': frame, 'lambda': lmbda, 'variant': variant}
        super().__init__(logger, dict(lab_ref=self.ref))

    def at_frame(self, frame: int) -> 'ContextLogger':
        ref = self.ref
        return ContextLogger(self.logger, clip=ref['clip'], frame=frame,
                             lmbda=ref['lambda'], variant=ref['variant'])

    def process(
            self,
            msg: str,
            kwargs: MutableMapping[str, Any],
    ) -> Tuple[str, MutableMapping[str, Any]]:
        # Native logging overwrites the message's extra with the adapter's extra.
        # We merge them, so that both message's & adapter's extras are available.
        kwargs["extra"] = dict(self.extra, **kwargs.get('extra', {}))
        return msg, kwargs


def configure(
        debug: Optional[bool] = None,
        verbose: Optional[bool] = None,
        quiet: Optional[bool] = None,
) -> None:
    log_level = 'DEBUG' if debug or verbose else 'WARNING' if quiet else 'INFO'

    logger = logging.getLogger()
    handler = logging.StreamHandler()
    formatter = ContextPrefixingFormatter(format)
    handler.setFormatter(formatter)
    logger.addHandler(handler)
    logger.setLevel(log_level)

    # Prevent the low-level logging unless in the debug verbosity mode. Keep only the lab's messages.
    # For no-propagation loggers, add a dummy null handler to prevent printing the messages.
    for name in ['asyncio', 'aiojobs']:
        logger = logging.getLogger(name)
        logger.propagate = bool(debug)
        if not debug:
            logger.handlers[:] = [logging.NullHandler()]
