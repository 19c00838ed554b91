import json

import numpy as np
import pytest

from epac.data import rawvideo
from epac.data.rawvideo import RawHeaderError, RawSizeError, RawVideoHeader, load_raw, save_raw
from epac.structs import errors, frames

HEADER = RawVideoHeader(width=8, height=8, channels=1, frames=2)


def test_two_gray_frames_of_128_bytes(tmp_path):
    path = tmp_path / 'clip.raw'
    path.write_bytes(bytes(range(128)))
    sequence = load_raw(path, HEADER)
    assert len(sequence) == 2
    assert sequence[0].samples.shape == (1, 8, 8)
    assert sequence[1].samples[0, 0, 0] == 64 / 255


def test_one_byte_short(tmp_path):
    path = tmp_path / 'clip.raw'
    path.write_bytes(bytes(127))
    with pytest.raises(RawSizeError, match="must have 128 bytes.*got 127 bytes"):
        load_raw(path, HEADER)
    assert issubclass(RawSizeError, errors.DataError)


def test_sample_values_are_normalized(tmp_path):
    path = tmp_path / 'clip.raw'
    path.write_bytes(bytes([0, 255] * 64))
    first = load_raw(path, HEADER)[0].samples
    assert first[0, 0, 0] == 0.0
    assert first[0, 0, 1] == 1.0


def test_save_of_load_is_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, size=3 * 2 * 8 * 16, dtype=np.uint8).tobytes()
    source = tmp_path / 'source.raw'
    source.write_bytes(data)
    header = RawVideoHeader(width=16, height=8, channels=3, frames=2)
    saved = save_raw(tmp_path / 'copy.raw', load_raw(source, header))
    assert saved == header
    assert (tmp_path / 'copy.raw').read_bytes() == data


def test_sidecar_describes_the_file(tmp_path):
    path = tmp_path / 'clip.raw'
    save_raw(path, [frames.FrameBuffer(np.zeros((1, 8, 8)))] * 3)
    meta = json.loads(rawvideo.sidecar_path(path).read_text())
    assert meta == {'width': 8, 'height': 8, 'channels': 1, 'frames': 3, 'sample_format': 'u8-planar'}
    assert rawvideo.read_header(path) == RawVideoHeader(width=8, height=8, channels=1, frames=3)
    assert len(load_raw(path)) == 3


def test_missing_sidecar(tmp_path):
    path = tmp_path / 'clip.raw'
    path.write_bytes(bytes(128))
    with pytest.raises(RawHeaderError, match="Cannot read the raw video header"):
        load_raw(path)


@pytest.mark.parametrize('header', [
    RawVideoHeader(width=8, height=8, channels=2, frames=1),
    RawVideoHeader(width=0, height=8, channels=1, frames=1),
    RawVideoHeader(width=8, height=8, channels=1, frames=1, sample_format='u16-planar'),
], ids=['channels', 'width', 'format'])
def test_invalid_headers(tmp_path, header):
    path = tmp_path / 'clip.raw'
    path.write_bytes(bytes(header.total_bytes))
    with pytest.raises(RawHeaderError):
        load_raw(path, header)


def test_missing_file(tmp_path):
    with pytest.raises(errors.DataError, match="Cannot read the raw video"):
        load_raw(tmp_path / 'absent.raw', HEADER)


def test_empty_video_cannot_be_saved(tmp_path):
    with pytest.raises(ValueError):
        save_raw(tmp_path / 'clip.raw', [])


def test_mixed_geometries_cannot_be_saved(tmp_path):
    with pytest.raises(frames.FrameError):
        save_raw(tmp_path / 'clip.raw', [frames.FrameBuffer(np.zeros((1, 8, 8))),
                                         frames.FrameBuffer(np.zeros((1, 8, 16)))])
