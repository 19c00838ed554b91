"""
All configuration flags, options, settings to fine-tune the lab.

All settings are grouped semantically just for convenience
(instead of a flat mega-object with all the values in it):
coding, training, online updating, synthesis, execution, debugging.

Some of the settings are flags, some are scalars, some are optional,
some are not (but all of them have reasonable defaults).

The settings can be loaded from a JSON file with the same structure
as the root object (see `load_settings`); the missing groups and fields
keep their defaults, the unknown ones are reported as errors.
"""
import concurrent.futures
import dataclasses
import json
import pathlib
from typing import Any, Mapping, Optional, Tuple, Union

from epac.structs import errors

LAMBDAS: Tuple[int, ...] = (256, 512, 1024, 2048)
""" The rate-distortion multipliers of the four models of an RD curve. """


@dataclasses.dataclass
class CodingSettings:

    latent_max: int = 64
    """
    The support bound of the entropy models: all latents are integers
    in ``[-latent_max, latent_max]`` at inference (clamped beyond, counted).
    """

    lambda_intra_ratio: float = 2.0
    """
    The multiplier of the I-frame loss relative to the P-frame one:
    ``λ_I = lambda_intra_ratio · λ``.
    """

    distortion: str = 'mse'
    """
    The distortion term of the training loss: ``mse`` or ``ms-ssim``
    (the latter uses ``1 - MS-SSIM``). Evaluation always reports both metrics.
    """

    ms_ssim_scales: int = 3
    """
    The number of MS-SSIM scales. The standard 5 scales need frames of 256px;
    the weights are re-normalised to the used number of scales.
    """

    gop: int = 20
    """
    The default group-of-pictures size. ``0`` means an open GoP:
    only the first frame is intra-coded.
    """


@dataclasses.dataclass
class TrainingSettings:

    lmbda: float = 512
    """
    The rate-distortion multiplier of the trained model (one of `LAMBDAS`).
    """

    stage1_steps: int = 2000
    """ The number of single-frame steps (the first stage). """

    stage2_steps: int = 500
    """ The number of unrolled error-propagation-aware steps (the second stage). """

    unroll: int = 5
    """ The number of P-frames in one unrolled rollout of the second stage. """

    learning_rate: float = 1e-4

    batch_size: int = 4
    """ The frame pairs per step of the first stage; the second stage uses one clip. """

    warmup_fraction: float = 0.2
    """
    The fraction of the first-stage steps that use the previous original frame
    as the reference; the rest use the previous intra reconstruction.
    """

    clip_norm: float = 5.0
    """ The global norm to which the gradients are clipped before every update. """

    checkpoint_interval: Optional[int] = None
    """ Store an intermediate checkpoint every so many steps (if a path is given). """

    log_interval: int = 50

    seed: int = 0


@dataclasses.dataclass
class OnlineSettings:

    variant: str = 'oeu'
    """ Which parameters are updated per frame: ``off``, ``lfu``, ``llu``, ``oeu``. """

    max_iterations: int = 10
    """ The maximum number of gradient iterations per frame (K). """

    learning_rate: float = 1e-4
    """ The online learning rate (α). """

    latent_learning_rate: float = 0.2
    """
    The learning rate of the latent-only variant (``lfu``), in latent units.
    The coded latents are the rounded ones: a step must be able to cross a rounding boundary.
    """

    relative_tolerance: float = 1e-3
    """
    The early-stop threshold relative to the initial loss:
    the updating stops once ``|L^i − L^{i−1}| < relative_tolerance · L^0``.
    """

    seed: int = 0
    """ The seed of the train-mode quantization noise in the gradient steps. """


@dataclasses.dataclass
class SynthesisSettings:

    width: int = 64
    height: int = 64
    channels: int = 1
    frames: int = 21

    clips: int = 220
    """ The total number of clips, the held-out ones included. """

    held_out: int = 20
    """ The number of clips put to the test split (by the hash of their ids). """

    max_motion: float = 3.0
    """ The per-clip global motion is drawn uniformly from ``[-max_motion, max_motion]``. """

    noise: float = 0.005
    """ The standard deviation of the additive sensor noise. """

    seed: int = 0


@dataclasses.dataclass
class ExecutionSettings:
    """
    Settings for synchronous work of the lab: training batches, experiment cells.

    The batch items and the experiment cells are executed in a thread pool,
    so that the numeric code (which releases the GIL in its inner loops)
    is parallelised, and the asynchronous scheduler stays responsive.
    """

    executor: concurrent.futures.Executor = dataclasses.field(
        default_factory=concurrent.futures.ThreadPoolExecutor)
    """
    The executor to be used for the synchronous work.

    Replacing the executor is equivalent to direct use of the executor's
    `.max_workers` property (via a setter), but it can also be any executor
    as long as it supports the `concurrent.futures.Executor` interface.
    """

    _max_workers: Optional[int] = None

    @property
    def max_workers(self) -> Optional[int]:
        """
        How many workers can run simultaneously in the executor.

        The same number limits the concurrently scheduled experiment cells.
        """
        return self._max_workers

    @max_workers.setter
    def max_workers(self, value: int) -> None:
        if value < 1:
            raise ValueError("Can't set max_workers lower than 1.")
        if isinstance(self.executor, concurrent.futures.ThreadPoolExecutor):
            self.executor.shutdown(wait=False)
        self.executor = concurrent.futures.ThreadPoolExecutor(max_workers=value)
        self._max_workers = value


@dataclasses.dataclass
class DebuggingSettings:

    provenance_checks: bool = False
    """
    Verify that every reference of a P-frame in the unrolled training
    and in the evaluation is a reconstruction, never an original frame.
    """


@dataclasses.dataclass
class LabSettings:
    coding: CodingSettings = dataclasses.field(default_factory=CodingSettings)
    training: TrainingSettings = dataclasses.field(default_factory=TrainingSettings)
    online: OnlineSettings = dataclasses.field(default_factory=OnlineSettings)
    synthesis: SynthesisSettings = dataclasses.field(default_factory=SynthesisSettings)
    execution: ExecutionSettings = dataclasses.field(default_factory=ExecutionSettings)
    debugging: DebuggingSettings = dataclasses.field(default_factory=DebuggingSettings)

    def as_dict(self) -> Mapping[str, Any]:
        """ All serialisable settings, e.g. to echo them in the reports. """
        groups = {field.name: getattr(self, field.name) for field in dataclasses.fields(self)}
        return {
            name: {
                field.name: getattr(group, field.name)
                for field in dataclasses.fields(group)
                if not field.name.startswith('_') and field.name != 'executor'
            }
            for name, group in groups.items()
        }


_GROUPS = {field.name for field in dataclasses.fields(LabSettings)}


def settings_from_mapping(data: Mapping[str, Any]) -> LabSettings:
    settings = LabSettings()
    for group_name, values in data.items():
        if group_name not in _GROUPS:
            raise errors.ConfigError(f"Unknown settings group: {group_name!r}")
        if not isinstance(values, Mapping):
            raise errors.ConfigError(f"Settings group {group_name!r} must be an object.")

        # The executor is not serialisable; only its size is configurable.
        if group_name == 'execution':
            unknown = set(values) - {'max_workers'}
            if unknown:
                raise errors.ConfigError(f"Unknown execution settings: {sorted(unknown)}")
            if 'max_workers' in values:
                settings.execution.max_workers = int(values['max_workers'])
            continue

        group = getattr(settings, group_name)
        known = {field.name for field in dataclasses.fields(group) if not field.name.startswith('_')}
        unknown = set(values) - known
        if unknown:
            raise errors.ConfigError(f"Unknown {group_name} settings: {sorted(unknown)}")
        setattr(settings, group_name, dataclasses.replace(group, **values))
    validate_settings(settings)
    return settings


def load_settings(path: Union[str, pathlib.Path, None]) -> LabSettings:
    if path is None:
        return LabSettings()
    try:
        data = json.loads(pathlib.Path(path).read_text(encoding='utf-8'))
    except (OSError, ValueError) as e:
        raise errors.ConfigError(f"Cannot read the settings from {str(path)!r}: {e}") from e
    if not isinstance(data, Mapping):
        raise errors.ConfigError(f"The settings in {str(path)!r} must be an object.")
    return settings_from_mapping(data)


def validate_settings(settings: LabSettings) -> None:
    coding = settings.coding
    training = settings.training
    online = settings.online
    synthesis = settings.synthesis

    if coding.latent_max < 1:
        raise errors.ConfigError(f"latent_max must be positive, got {coding.latent_max}.")
    if coding.distortion not in ('mse', 'ms-ssim'):
        raise errors.ConfigError(f"Unknown distortion {coding.distortion!r}; use mse or ms-ssim.")
    if not 1 <= coding.ms_ssim_scales <= 5:
        raise errors.ConfigError(f"ms_ssim_scales must be within 1..5, got {coding.ms_ssim_scales}.")
    if not 0 <= coding.gop <= 0xFFFF:
        raise errors.ConfigError(f"GoP size must be within 0..65535, got {coding.gop}.")

    if training.lmbda not in LAMBDAS:
        raise errors.ConfigError(f"λ must be one of {LAMBDAS}, got {training.lmbda}.")
    if training.unroll < 1:
        raise errors.ConfigError(f"The unroll length must be positive, got {training.unroll}.")
    if training.batch_size < 1:
        raise errors.ConfigError(f"The batch size must be positive, got {training.batch_size}.")
    if not 0.0 <= training.warmup_fraction <= 1.0:
        raise errors.ConfigError(f"warmup_fraction must be within [0, 1], got {training.warmup_fraction}.")

    if online.variant not in ('off', 'lfu', 'llu', 'oeu'):
        raise errors.ConfigError(f"Unknown online variant {online.variant!r}.")
    if online.max_iterations < 1:
        raise errors.ConfigError(f"K must be at least 1, got {online.max_iterations}.")
    if online.learning_rate < 0:
        raise errors.ConfigError(f"α must be non-negative, got {online.learning_rate}.")
    if online.latent_learning_rate < 0:
        raise errors.ConfigError(f"The latent learning rate must be non-negative, "
                                 f"got {online.latent_learning_rate}.")
    if online.relative_tolerance < 0:
        raise errors.ConfigError(f"ε must be non-negative, got {online.relative_tolerance}.")

    if synthesis.width % 8 or synthesis.height % 8:
        raise errors.ConfigError(f"Frame sizes must be multiples of 8, "
                                 f"got {synthesis.width}x{synthesis.height}.")
    if synthesis.channels not in (1, 3):
        raise errors.ConfigError(f"Only 1 or 3 channels are supported, got {synthesis.channels}.")
    if synthesis.held_out >= synthesis.clips:
        raise errors.ConfigError(f"All {synthesis.clips} clips would be held out.")
