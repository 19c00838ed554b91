"""
Video frames as they travel between the data, the codec, and the metrics.

A frame is a planar ``[C, H, W]`` array of samples in ``[0, 1]``.
The frame also remembers where it comes from (its provenance): an original
frame of a clip, or a reconstruction produced by the codec. The references
of P-frames must always be reconstructions; the provenance makes this
checkable in the debug mode without inspecting the values.
"""
import dataclasses
import enum
import hashlib

import numpy as np

from epac.structs import errors


class Provenance(str, enum.Enum):
    ORIGINAL = 'original'
    RECONSTRUCTED = 'reconstructed'


class FrameError(errors.DataError):
    """ The samples do not form a valid frame. """


@dataclasses.dataclass(frozen=True, eq=False)
class FrameBuffer:
    samples: np.ndarray
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 3:
            raise FrameError(f"A frame must be [C, H, W], got shape {samples.shape}.")
        channels, height, width = samples.shape
        if channels not in (1, 3):
            raise FrameError(f"A frame must have 1 or 3 channels, got {channels}.")
        if height % 8 or width % 8:
            raise FrameError(f"Frame sizes must be multiples of 8, got {width}x{height}.")
        if not np.all(np.isfinite(samples)) or samples.min() < 0.0 or samples.max() > 1.0:
            raise FrameError("Frame samples must be finite and within [0, 1].")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, 'samples', samples)

    @property
    def channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def height(self) -> int:
        return int(self.samples.shape[1])

    @property
    def width(self) -> int:
        return int(self.samples.shape[2])

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def batch(self) -> np.ndarray:
        """ The samples as a batch of one: ``[1, C, H, W]``. """
        return self.samples[np.newaxis]

    def digest(self) -> str:
        """ A content hash to compare the reconstructions bit-exactly. """
        return hashlib.sha256(np.ascontiguousarray(self.samples).tobytes()).hexdigest()

    def quantized(self) -> 'FrameBuffer':
        """ The same frame as it would be stored with 8 bits per sample. """
        levels = np.clip(np.rint(self.samples * 255.0), 0, 255)
        return FrameBuffer(levels / 255.0, provenance=self.provenance)


def reconstructed(samples: np.ndarray) -> FrameBuffer:
    return FrameBuffer(samples, provenance=Provenance.RECONSTRUCTED)


def require_same_geometry(a: FrameBuffer, b: FrameBuffer) -> None:
    if a.samples.shape != b.samples.shape:
        raise FrameError(f"Frame geometries differ: {a.samples.shape} vs {b.samples.shape}.")
