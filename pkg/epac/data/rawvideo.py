"""
Raw planar videos: 8-bit unsigned samples, frame after frame, channel after
channel, row after row, without any header. The geometry is in a JSON sidecar
(``<file>.json``), see `RawVideoHeader`.
"""
import dataclasses
import pathlib
from typing import List, Optional, Sequence

import numpy as np

from epac.storage import files
from epac.structs import errors
from epac.structs import frames

SAMPLE_FORMAT = 'u8-planar'


class RawSizeError(errors.DataError):
    """ The file size does not match the declared geometry. """


class RawHeaderError(errors.DataError):
    """ The sidecar of a raw video is missing or invalid. """


@dataclasses.dataclass(frozen=True)
class RawVideoHeader:
    width: int
    height: int
    channels: int
    frames: int
    sample_format: str = SAMPLE_FORMAT

    @property
    def frame_bytes(self) -> int:
        return self.width * self.height * self.channels

    @property
    def total_bytes(self) -> int:
        return self.frame_bytes * self.frames

    def validate(self) -> None:
        if self.sample_format != SAMPLE_FORMAT:
            raise RawHeaderError(f"Unsupported sample format {self.sample_format!r}; only {SAMPLE_FORMAT}.")
        if self.channels not in (1, 3):
            raise RawHeaderError(f"Only 1 or 3 channels are supported, got {self.channels}.")
        if self.width <= 0 or self.height <= 0 or self.frames < 0:
            raise RawHeaderError(f"Invalid geometry {self.width}x{self.height}x{self.frames}.")


def sidecar_path(path: files.PathLike) -> pathlib.Path:
    path = pathlib.Path(path)
    return path.with_name(path.name + '.json')


def read_header(path: files.PathLike) -> RawVideoHeader:
    """ The header from the sidecar of the raw file. """
    try:
        data = files.read_json(sidecar_path(path))
        header = RawVideoHeader(**data)
    except (OSError, ValueError, TypeError) as e:
        raise RawHeaderError(f"Cannot read the raw video header of {str(path)!r}: {e}") from e
    header.validate()
    return header


def decode_raw(data: bytes, header: RawVideoHeader) -> np.ndarray:
    """ The samples as ``[N, C, H, W]`` 8-bit integers, after the size check. """
    header.validate()
    if len(data) != header.total_bytes:
        raise RawSizeError(f"The raw video must have {header.total_bytes} bytes "
                           f"for {header.frames} frames of {header.width}x{header.height}x{header.channels}, "
                           f"got {len(data)} bytes.")
    array = np.frombuffer(data, dtype=np.uint8)
    return array.reshape(header.frames, header.channels, header.height, header.width)


def load_raw(path: files.PathLike, header: Optional[RawVideoHeader] = None) -> List[frames.FrameBuffer]:
    header = header if header is not None else read_header(path)
    try:
        data = pathlib.Path(path).read_bytes()
    except OSError as e:
        raise errors.DataError(f"Cannot read the raw video {str(path)!r}: {e}") from e
    return [frames.FrameBuffer(plane.astype(np.float64) / 255.0) for plane in decode_raw(data, header)]


def encode_raw(sequence: Sequence[frames.FrameBuffer]) -> bytes:
    """ The frames rounded to the nearest 8-bit values. """
    planes = [np.rint(frame.samples * 255.0).astype(np.uint8) for frame in sequence]
    return b''.join(plane.tobytes() for plane in planes)


def save_raw(path: files.PathLike, sequence: Sequence[frames.FrameBuffer]) -> RawVideoHeader:
    if not sequence:
        raise ValueError("Cannot save an empty video: its geometry is unknown.")
    first = sequence[0]
    for frame in sequence[1:]:
        frames.require_same_geometry(first, frame)
    header = RawVideoHeader(width=first.width, height=first.height,
                            channels=first.channels, frames=len(sequence))
    files.write_atomic(path, encode_raw(sequence))
    files.write_json(sidecar_path(path), dataclasses.asdict(header))
    return header
