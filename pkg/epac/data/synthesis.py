"""
Synthetic clips with known global motion.

Every clip is a continuous texture ``T(x, y)`` seen through a moving window:
the frame ``t`` samples ``T(x + dx·t, y + dy·t)`` at the integer pixel
positions. Hence the frame ``t+1`` at ``p`` equals the frame ``t`` at
``p + (dx, dy)``: the manifest motion is exactly the flow that warps the frame
``t`` into the frame ``t+1`` (in the flow convention of the warping op).

The textures are analytic and band-limited (the shortest wavelengths are
about 16 pixels), so the bilinear warp of a frame reproduces the next one
closely; only the window borders, where the content comes from outside of
the previous frame, are not reproducible by any warp.

The textures are evaluated analytically at the shifted positions, rather than
rendered once at a higher resolution and shifted by bilinear resampling: the
sub-pixel motion then has no resampling blur, and no texture buffer is kept.

Every clip has its own generator seeded with ``seed ^ clip_id``, so the clips
can be rendered in any order and in parallel, with bit-identical results.
"""
import concurrent.futures
import dataclasses
import enum
import hashlib
import logging
import pathlib
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from epac.data import rawvideo
from epac.storage import files
from epac.structs import configuration
from epac.structs import errors
from epac.structs import frames

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
MANIFEST_SCHEMA = 1
BLOB_SPACING = 20.0
CHECKER_PERIOD = 24.0
CHECKER_GAIN = 1.5
NOISE_WAVES = 24

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Texture(str, enum.Enum):
    SMOOTH_BLOBS = 'smooth-blobs'
    CHECKER = 'checker'
    BAND_LIMITED_NOISE = 'band-limited-noise'


class ManifestError(errors.DataError):
    """ The manifest of a synthetic dataset is missing or invalid. """


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    width: int = 64
    height: int = 64
    channels: int = 1
    frames: int = 21
    texture: Optional[Texture] = None
    """ The texture of all clips; if ``None``, the textures rotate by the clip id. """

    max_motion: float = 3.0
    noise: float = 0.005
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width % 8 or self.height % 8 or self.width <= 0 or self.height <= 0:
            raise ValueError(f"Frame sizes must be positive multiples of 8, got {self.width}x{self.height}.")
        if self.channels not in (1, 3):
            raise ValueError(f"Only 1 or 3 channels are supported, got {self.channels}.")
        if self.frames < 1:
            raise ValueError(f"A clip needs at least one frame, got {self.frames}.")

    @classmethod
    def from_settings(cls, settings: configuration.SynthesisSettings) -> 'SynthSpec':
        return cls(width=settings.width, height=settings.height, channels=settings.channels,
                   frames=settings.frames, max_motion=settings.max_motion,
                   noise=settings.noise, seed=settings.seed)

    def as_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data['texture'] = self.texture.value if self.texture is not None else None
        return data


@dataclasses.dataclass(frozen=True)
class ClipInfo:
    clip_id: int
    texture: Texture
    motion: Tuple[float, float]
    """ ``(dx, dy)`` in pixels per frame. """

    seed: int
    file: str = ''


@dataclasses.dataclass(frozen=True)
class Manifest:
    spec: SynthSpec
    clips: Tuple[ClipInfo, ...]
    train: Tuple[int, ...]
    test: Tuple[int, ...]
    directory: Optional[pathlib.Path] = None

    def clip(self, clip_id: int) -> ClipInfo:
        for info in self.clips:
            if info.clip_id == clip_id:
                return info
        raise KeyError(f"No clip #{clip_id} in the manifest.")

    def path(self, clip_id: int) -> pathlib.Path:
        if self.directory is None:
            raise ManifestError("The manifest is not bound to a directory.")
        return self.directory / self.clip(clip_id).file

    def as_dict(self) -> Dict[str, Any]:
        return {
            'schema': MANIFEST_SCHEMA,
            'spec': self.spec.as_dict(),
            'clips': [{
                'id': info.clip_id,
                'texture': info.texture.value,
                'motion': list(info.motion),
                'seed': info.seed,
                'file': info.file,
            } for info in self.clips],
            'split': {'train': list(self.train), 'test': list(self.test)},
        }


def clip_seed(seed: int, clip_id: int) -> int:
    return seed ^ clip_id


def clip_texture(spec: SynthSpec, clip_id: int) -> Texture:
    if spec.texture is not None:
        return spec.texture
    kinds = list(Texture)
    return kinds[clip_id % len(kinds)]


def _blobs(rng: np.random.Generator, extent: Tuple[float, float, float, float]) -> Field:
    x0, x1, y0, y1 = extent
    count = max(1, int(round((x1 - x0) * (y1 - y0) / BLOB_SPACING ** 2)))
    cx = rng.uniform(x0, x1, count)
    cy = rng.uniform(y0, y1, count)
    sigma = rng.uniform(5.0, 12.0, count)
    amplitude = rng.uniform(-1.0, 1.0, count)

    def field(xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        total = np.zeros_like(xx)
        for i in range(count):
            total += amplitude[i] * np.exp(-((xx - cx[i]) ** 2 + (yy - cy[i]) ** 2) / (2 * sigma[i] ** 2))
        return 0.5 + 0.4 * np.tanh(total)
    return field


def _checker(rng: np.random.Generator) -> Field:
    angle = rng.uniform(0.0, np.pi)
    phase_u, phase_v = rng.uniform(0.0, 2 * np.pi, 2)
    cos, sin = np.cos(angle), np.sin(angle)
    k = 2 * np.pi / CHECKER_PERIOD

    def field(xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        u = cos * xx + sin * yy
        v = -sin * xx + cos * yy
        wave_u = np.tanh(CHECKER_GAIN * np.sin(k * u + phase_u))
        wave_v = np.tanh(CHECKER_GAIN * np.sin(k * v + phase_v))
        return 0.5 + 0.4 * wave_u * wave_v
    return field


def _band_limited_noise(rng: np.random.Generator) -> Field:
    wavelength = rng.uniform(16.0, 48.0, NOISE_WAVES)
    direction = rng.uniform(0.0, 2 * np.pi, NOISE_WAVES)
    phase = rng.uniform(0.0, 2 * np.pi, NOISE_WAVES)
    kx = 2 * np.pi / wavelength * np.cos(direction)
    ky = 2 * np.pi / wavelength * np.sin(direction)
    norm = np.sqrt(NOISE_WAVES / 2.0)

    def field(xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        total = np.zeros_like(xx)
        for i in range(NOISE_WAVES):
            total += np.sin(kx[i] * xx + ky[i] * yy + phase[i])
        return 0.5 + 0.35 * np.tanh(total / norm)
    return field


def make_field(texture: Texture, rng: np.random.Generator,
               extent: Tuple[float, float, float, float]) -> Field:
    if texture is Texture.SMOOTH_BLOBS:
        return _blobs(rng, extent)
    elif texture is Texture.CHECKER:
        return _checker(rng)
    elif texture is Texture.BAND_LIMITED_NOISE:
        return _band_limited_noise(rng)
    else:
        raise ValueError(f"Unknown texture: {texture!r}")


def render_clip(spec: SynthSpec, clip_id: int) -> Tuple[np.ndarray, ClipInfo]:
    """ The 8-bit samples of one clip, ``[N, C, H, W]``, and its description. """
    seed = clip_seed(spec.seed, clip_id)
    rng = np.random.default_rng(seed)
    texture = clip_texture(spec, clip_id)
    dx, dy = (float(v) for v in rng.uniform(-spec.max_motion, spec.max_motion, 2))

    # The texture must cover the whole path of the window, with a margin for the blobs.
    travel_x, travel_y = abs(dx) * spec.frames, abs(dy) * spec.frames
    extent = (-travel_x - 30.0, spec.width + travel_x + 30.0,
              -travel_y - 30.0, spec.height + travel_y + 30.0)
    fields = [make_field(texture, rng, extent) for _ in range(spec.channels)]

    ys, xs = np.meshgrid(np.arange(spec.height, dtype=np.float64),
                         np.arange(spec.width, dtype=np.float64), indexing='ij')
    samples = np.empty((spec.frames, spec.channels, spec.height, spec.width))
    for t in range(spec.frames):
        for channel, field in enumerate(fields):
            samples[t, channel] = field(xs + dx * t, ys + dy * t)
    if spec.noise > 0:
        samples += rng.normal(0.0, spec.noise, size=samples.shape)
    clip = np.rint(np.clip(samples, 0.0, 1.0) * 255.0).astype(np.uint8)
    return clip, ClipInfo(clip_id=clip_id, texture=texture, motion=(dx, dy), seed=seed)


def split_ids(clip_ids: Sequence[int], held_out: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """
    The fixed train/test split: the clips are ordered by the sha256 of ``clip-<id>``,
    the first ``held_out`` of them go to the test split. Both splits are sorted by id.
    """
    if not 0 <= held_out <= len(clip_ids):
        raise ValueError(f"Cannot hold out {held_out} of {len(clip_ids)} clips.")
    ordered = sorted(clip_ids, key=lambda clip_id: hashlib.sha256(f'clip-{clip_id}'.encode()).hexdigest())
    test = sorted(ordered[:held_out])
    train = sorted(ordered[held_out:])
    return tuple(train), tuple(test)


def synth_clips(
        spec: SynthSpec,
        n_clips: int,
        executor: Optional[concurrent.futures.Executor] = None,
) -> List[Tuple[np.ndarray, ClipInfo]]:
    """ Render the clips in memory, in the order of their ids (possibly in parallel). """
    clip_ids = list(range(n_clips))
    if executor is None:
        return [render_clip(spec, clip_id) for clip_id in clip_ids]
    return list(executor.map(render_clip, [spec] * n_clips, clip_ids))


def synth_dataset(
        spec: SynthSpec,
        n_clips: int,
        directory: files.PathLike,
        *,
        held_out: int = 0,
        executor: Optional[concurrent.futures.Executor] = None,
) -> Manifest:
    """ Render the clips to raw files with their sidecars, and write the manifest. """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    infos = []
    for clip, info in synth_clips(spec, n_clips, executor):
        name = f'clip-{info.clip_id:04d}.raw'
        sequence = [frames.FrameBuffer(plane / 255.0) for plane in clip]
        rawvideo.save_raw(directory / name, sequence)
        infos.append(dataclasses.replace(info, file=name))
    train, test = split_ids([info.clip_id for info in infos], held_out)
    manifest = Manifest(spec=spec, clips=tuple(infos), train=train, test=test, directory=directory)
    files.write_json(directory / MANIFEST_NAME, manifest.as_dict())
    logger.info(f"Synthesized {n_clips} clips ({len(test)} held out) into {directory}.")
    return manifest


def manifest_from_mapping(data: Mapping[str, Any], directory: Optional[pathlib.Path] = None) -> Manifest:
    try:
        if data['schema'] != MANIFEST_SCHEMA:
            raise ManifestError(f"Unsupported manifest schema {data['schema']!r}.")
        raw_spec = dict(data['spec'])
        texture = raw_spec.pop('texture', None)
        spec = SynthSpec(texture=Texture(texture) if texture is not None else None, **raw_spec)
        clips = tuple(ClipInfo(
            clip_id=int(item['id']),
            texture=Texture(item['texture']),
            motion=(float(item['motion'][0]), float(item['motion'][1])),
            seed=int(item['seed']),
            file=str(item['file']),
        ) for item in data['clips'])
        train = tuple(int(i) for i in data['split']['train'])
        test = tuple(int(i) for i in data['split']['test'])
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ManifestError(f"The manifest is invalid: {e}") from e
    return Manifest(spec=spec, clips=clips, train=train, test=test, directory=directory)


def load_manifest(path: files.PathLike) -> Manifest:
    """ Load the manifest from a dataset directory or from the manifest file itself. """
    path = pathlib.Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = files.read_json(path)
    except (OSError, ValueError) as e:
        raise ManifestError(f"Cannot read the manifest {str(path)!r}: {e}") from e
    return manifest_from_mapping(data, directory=path.parent)
