"""
The experiment plans: which models, on which clips, with which GoPs and variants.

A plan is a JSON file::

    {
        "models": {
            "baseline": {"256": "models/base-256.epac", "512": ...},
            "epa": {"256": "models/epa-256.epac", ...}
        },
        "test_set": "data/",
        "gops": [10, 20, 50],
        "variants": ["off", "lfu", "llu", "oeu"],
        "experiments": ["grid", "fig2", "gop_sweep"],
        "anchor": "baseline/off",
        "output": "reports/",
        "seed": 0
    }

The relative paths are resolved against the directory of the plan file.
All the referenced checkpoints must share one architecture; the plan is
rejected before any coding starts otherwise.
"""
import dataclasses
import enum
import logging
import pathlib
from typing import Any, Dict, Mapping, Optional, Tuple

from epac.codec import models
from epac.online import variants as online_variants
from epac.storage import checkpoints
from epac.storage import files
from epac.structs import configuration
from epac.structs import errors

logger = logging.getLogger(__name__)

DEFAULT_GOPS: Tuple[int, ...] = (10, 20, 50)
DEFAULT_UNROLLS: Tuple[int, ...] = (2, 3, 5)
BASELINE = 'baseline'
EPA = 'epa'


class PlanError(errors.ConfigError):
    """ The experiment plan is malformed or inconsistent. """


class Experiment(str, enum.Enum):
    GRID = 'grid'
    FIG2 = 'fig2'
    GOP_SWEEP = 'gop_sweep'
    T_SWEEP = 't_sweep'


@dataclasses.dataclass(frozen=True)
class ExperimentPlan:
    checkpoints: Mapping[str, Mapping[int, pathlib.Path]]
    """ The checkpoint paths per model set (e.g. ``baseline``, ``epa``) and per λ. """

    test_set: pathlib.Path
    """ The dataset directory (or its manifest); its test split is evaluated. """

    output: pathlib.Path
    gops: Tuple[int, ...] = DEFAULT_GOPS
    variants: Tuple[online_variants.Variant, ...] = tuple(online_variants.Variant)
    experiments: Tuple[Experiment, ...] = (Experiment.GRID,)

    anchor: str = f'{BASELINE}/off'
    """ The run (``<model set>/<variant>``) against which the BD tables are computed. """

    seed: int = 0

    clips: Optional[int] = None
    """ Use only so many held-out clips (the first ones by id); all by default. """

    frames: Optional[int] = None
    """ Code only so many first frames of every clip; all by default. """

    trace_gop: int = 50
    trace_frames: int = 50

    train_set: Optional[pathlib.Path] = None
    """ The training clips of the T-sweep (its train split is used). """

    unrolls: Tuple[int, ...] = DEFAULT_UNROLLS
    sweep_steps: Optional[int] = None
    """ The stage-2 steps per T of the T-sweep; the training settings by default. """

    @property
    def model_sets(self) -> Tuple[str, ...]:
        return tuple(sorted(self.checkpoints))

    @property
    def lambdas(self) -> Tuple[int, ...]:
        return tuple(sorted({lmbda for per_set in self.checkpoints.values() for lmbda in per_set}))

    def anchor_run(self) -> Tuple[str, online_variants.Variant]:
        model_set, _, variant = self.anchor.partition('/')
        return model_set, online_variants.Variant(variant or online_variants.Variant.OFF.value)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'checkpoints': {name: {str(lmbda): str(path) for lmbda, path in sorted(per_set.items())}
                            for name, per_set in sorted(self.checkpoints.items())},
            'test_set': str(self.test_set),
            'output': str(self.output),
            'gops': list(self.gops),
            'variants': [variant.value for variant in self.variants],
            'experiments': [experiment.value for experiment in self.experiments],
            'anchor': self.anchor,
            'seed': self.seed,
            'clips': self.clips,
            'frames': self.frames,
            'trace_gop': self.trace_gop,
            'trace_frames': self.trace_frames,
            'train_set': str(self.train_set) if self.train_set is not None else None,
            'unrolls': list(self.unrolls),
            'sweep_steps': self.sweep_steps,
        }


_KNOWN_KEYS = {
    'models', 'test_set', 'output', 'gops', 'variants', 'experiments', 'anchor', 'seed',
    'clips', 'frames', 'trace_gop', 'trace_frames', 'train_set', 'unrolls', 'sweep_steps',
}


def _resolve(base: pathlib.Path, value: Any) -> pathlib.Path:
    path = pathlib.Path(str(value))
    return path if path.is_absolute() else base / path


def plan_from_mapping(data: Mapping[str, Any], base: Optional[pathlib.Path] = None) -> ExperimentPlan:
    base = base if base is not None else pathlib.Path('.')
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise PlanError(f"Unknown plan keys: {sorted(unknown)}")
    try:
        model_sets: Dict[str, Dict[int, pathlib.Path]] = {}
        for name, per_lambda in dict(data['models']).items():
            model_sets[str(name)] = {int(lmbda): _resolve(base, path) for lmbda, path in dict(per_lambda).items()}
        plan = ExperimentPlan(
            checkpoints=model_sets,
            test_set=_resolve(base, data['test_set']),
            output=_resolve(base, data.get('output', 'reports')),
            gops=tuple(int(gop) for gop in data.get('gops', DEFAULT_GOPS)),
            variants=tuple(online_variants.Variant(v)
                           for v in data.get('variants', [v.value for v in online_variants.Variant])),
            experiments=tuple(Experiment(e) for e in data.get('experiments', [Experiment.GRID.value])),
            anchor=str(data.get('anchor', f'{BASELINE}/off')),
            seed=int(data.get('seed', 0)),
            clips=int(data['clips']) if data.get('clips') is not None else None,
            frames=int(data['frames']) if data.get('frames') is not None else None,
            trace_gop=int(data.get('trace_gop', 50)),
            trace_frames=int(data.get('trace_frames', 50)),
            train_set=_resolve(base, data['train_set']) if data.get('train_set') is not None else None,
            unrolls=tuple(int(t) for t in data.get('unrolls', DEFAULT_UNROLLS)),
            sweep_steps=int(data['sweep_steps']) if data.get('sweep_steps') is not None else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise PlanError(f"The plan is invalid: {e}") from e
    validate_plan(plan)
    return plan


def load_plan(path: files.PathLike) -> ExperimentPlan:
    path = pathlib.Path(path)
    try:
        data = files.read_json(path)
    except (OSError, ValueError) as e:
        raise PlanError(f"Cannot read the plan {str(path)!r}: {e}") from e
    if not isinstance(data, Mapping):
        raise PlanError(f"The plan in {str(path)!r} must be an object.")
    return plan_from_mapping(data, base=path.parent)


def validate_plan(plan: ExperimentPlan) -> None:
    """ The structural checks, without touching the files. """
    if not plan.checkpoints or not all(plan.checkpoints.values()):
        raise PlanError("The plan references no checkpoints.")
    for per_set in plan.checkpoints.values():
        for lmbda in per_set:
            if lmbda not in configuration.LAMBDAS:
                raise PlanError(f"λ must be one of {configuration.LAMBDAS}, got {lmbda}.")
    if not plan.gops or any(not 0 <= gop <= 0xFFFF for gop in plan.gops):
        raise PlanError(f"The GoP sizes must be within 0..65535, got {list(plan.gops)}.")
    if not plan.variants:
        raise PlanError("The plan names no online variants.")
    if len(set(plan.gops)) != len(plan.gops) or len(set(plan.variants)) != len(plan.variants):
        raise PlanError("The GoP sizes and the variants must not repeat.")

    anchor_set, anchor_variant = plan.anchor_run()
    if anchor_set not in plan.checkpoints or anchor_variant not in plan.variants:
        raise PlanError(f"The anchor {plan.anchor!r} is not a run of the plan.")

    for experiment in plan.experiments:
        needed = (BASELINE,) if experiment is Experiment.T_SWEEP else (BASELINE, EPA)
        if experiment is not Experiment.GRID and not set(needed) <= set(plan.checkpoints):
            raise PlanError(f"The experiment {experiment.value!r} needs the model sets {list(needed)}.")
    if Experiment.FIG2 in plan.experiments:
        if not set(plan.checkpoints[BASELINE]) & set(plan.checkpoints[EPA]):
            raise PlanError("The PSNR traces need a baseline and an EPA model of the same λ.")
    if Experiment.T_SWEEP in plan.experiments:
        if plan.train_set is None:
            raise PlanError("The T-sweep needs a training set.")
        if any(t < 2 for t in plan.unrolls):
            raise PlanError(f"The T-sweep needs T >= 2, got {list(plan.unrolls)}.")
    if plan.clips is not None and plan.clips < 1:
        raise PlanError(f"At least one clip must be evaluated, got {plan.clips}.")
    if plan.frames is not None and plan.frames < 1:
        raise PlanError(f"At least one frame must be coded, got {plan.frames}.")


def load_models(plan: ExperimentPlan) -> Dict[str, Dict[int, models.CodecModel]]:
    """
    Restore all the checkpoints of the plan, and verify they share one architecture.
    """
    loaded: Dict[str, Dict[int, models.CodecModel]] = {}
    digests: Dict[str, pathlib.Path] = {}
    for name, per_set in sorted(plan.checkpoints.items()):
        loaded[name] = {}
        for lmbda, path in sorted(per_set.items()):
            model = checkpoints.load_model(path)
            if int(model.lmbda) != lmbda:
                raise PlanError(f"The checkpoint {str(path)!r} is of λ={model.lmbda}, not {lmbda}.")
            digests.setdefault(model.architecture_digest(), path)
            loaded[name][lmbda] = model
    if len(digests) > 1:
        raise PlanError(f"The checkpoints have different architectures: "
                        f"{sorted(str(path) for path in digests.values())}")
    logger.debug(f"Loaded {sum(len(v) for v in loaded.values())} models of one architecture.")
    return loaded
