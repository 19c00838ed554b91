"""
The roots of all lab-specific errors.

Every error of the lab belongs to one of two families, which the command line
maps to its exit codes:

* `DataError` -- the inputs are wrong: files of a wrong size, truncated or
  corrupted bitstreams and checkpoints, unusable curves, bad configs.
* `ContractViolation` -- the inputs are fine, but a promise of the codec
  would be broken by proceeding: e.g. a bitstream coded for another model,
  or a decoder that changed after the online updating of the encoder.

The specific errors are declared in the modules that own the behaviour.
"""


class LabError(Exception):
    """ The base for all errors of the lab. """


class DataError(LabError):
    """ The inputs cannot be used as given. """


class ContractViolation(LabError):
    """ A codec-level guarantee would be violated. """


class ConfigError(DataError):
    """ The settings or the experiment plan are invalid. """


class NonFiniteError(DataError):
    """ A loss or a gradient became NaN or infinite. """

    def __init__(self, message: str, **diagnostics: object) -> None:
        details = ', '.join(f'{key}={val!r}' for key, val in diagnostics.items())
        super().__init__(f"{message} ({details})" if details else message)
        self.diagnostics = diagnostics
