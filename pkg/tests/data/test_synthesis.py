import dataclasses

import numpy as np
import pytest

from epac.autodiff.graphs import Graph
from epac.autodiff import ops
from epac.data import datasets, synthesis
from epac.data.synthesis import ManifestError, SynthSpec, Texture
from epac.metrics import quality


@pytest.fixture()
def spec():
    return SynthSpec(width=64, height=64, channels=1, frames=4, max_motion=3.0, noise=0.0, seed=11)


def test_still_noiseless_clips_repeat_the_first_frame(synth_spec):
    still = dataclasses.replace(synth_spec, max_motion=0.0)
    clip, info = synthesis.render_clip(still, 0)
    assert info.motion == (0.0, 0.0)
    assert all(np.array_equal(clip[0], plane) for plane in clip[1:])


def test_same_seed_same_bytes(spec):
    first, _ = synthesis.render_clip(dataclasses.replace(spec, noise=0.01), 3)
    second, _ = synthesis.render_clip(dataclasses.replace(spec, noise=0.01), 3)
    assert first.dtype == np.uint8
    assert first.tobytes() == second.tobytes()


def test_clips_differ_by_id(spec):
    first, _ = synthesis.render_clip(spec, 0)
    second, _ = synthesis.render_clip(spec, 1)
    assert first.tobytes() != second.tobytes()


def test_geometry_and_texture_rotation():
    spec = SynthSpec(width=16, height=8, channels=3, frames=2)
    clip, info = synthesis.render_clip(spec, 4)
    assert clip.shape == (2, 3, 8, 16)
    assert info.texture is list(Texture)[4 % 3]
    assert info.seed == 4


@pytest.mark.parametrize('kwargs', [dict(width=12), dict(height=0), dict(channels=2), dict(frames=0)],
                         ids=['width', 'height', 'channels', 'frames'])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        SynthSpec(**kwargs)


@pytest.mark.parametrize('texture', list(Texture), ids=[t.value for t in Texture])
def test_manifest_motion_warps_into_the_next_frame(spec, texture):
    clip, info = synthesis.render_clip(dataclasses.replace(spec, texture=texture), 0)
    dx, dy = info.motion
    graph = Graph()
    for t in range(clip.shape[0] - 1):
        current = graph.constant(clip[t:t + 1] / 255.0)
        flow = graph.constant(np.stack([np.full((64, 64), dx), np.full((64, 64), dy)])[np.newaxis])
        warped = ops.bilinear_warp(current, flow).data[0]
        interior = (slice(None), slice(4, -4), slice(4, -4))
        assert quality.psnr(warped[interior], clip[t + 1][interior] / 255.0) >= 40.0


def test_split_is_fixed_and_sorted():
    train, test = synthesis.split_ids(list(range(20)), 5)
    assert len(test) == 5 and len(train) == 15
    assert set(train) | set(test) == set(range(20))
    assert list(test) == sorted(test)
    assert synthesis.split_ids(list(range(20)), 5) == (train, test)
    with pytest.raises(ValueError):
        synthesis.split_ids([1, 2], 3)


def test_dataset_files_and_manifest(tmp_path, synth_spec, settings):
    manifest = synthesis.synth_dataset(synth_spec, 4, tmp_path, held_out=1, executor=settings.execution.executor)
    assert (tmp_path / 'manifest.json').is_file()
    assert [info.file for info in manifest.clips] == [f'clip-{i:04d}.raw' for i in range(4)]
    assert len(manifest.test) == 1

    loaded = synthesis.load_manifest(tmp_path)
    assert loaded.spec == synth_spec
    assert loaded.train == manifest.train and loaded.test == manifest.test
    for info in loaded.clips:
        expected_clip, expected_info = synthesis.render_clip(synth_spec, info.clip_id)
        assert info.motion == expected_info.motion
        assert info.texture is expected_info.texture

    clips = datasets.ClipSet.from_manifest(loaded, 'train')
    assert clips.ids == manifest.train
    expected, _ = synthesis.render_clip(synth_spec, clips.ids[0])
    assert clips.clips[clips.ids[0]].tobytes() == expected.tobytes()


def test_parallel_rendering_is_identical(synth_spec, settings):
    serial = synthesis.synth_clips(synth_spec, 3)
    parallel = synthesis.synth_clips(synth_spec, 3, settings.execution.executor)
    assert [clip.tobytes() for clip, _ in serial] == [clip.tobytes() for clip, _ in parallel]


def test_invalid_manifests(tmp_path):
    with pytest.raises(ManifestError, match="Cannot read"):
        synthesis.load_manifest(tmp_path)
    with pytest.raises(ManifestError, match="schema"):
        synthesis.manifest_from_mapping({'schema': 99})
    with pytest.raises(ManifestError, match="invalid"):
        synthesis.manifest_from_mapping({'schema': 1, 'spec': {}, 'clips': [{'id': 0}]})


def test_unbound_manifest_has_no_paths(synth_spec):
    manifest = synthesis.Manifest(spec=synth_spec, clips=(), train=(), test=())
    with pytest.raises(ManifestError):
        manifest.path(0)


def test_clip_sets(synth_spec):
    clips = datasets.ClipSet.from_arrays(synthesis.synth_clips(synth_spec, 2))
    assert len(clips) == 2
    assert clips.length(0) == 6
    pair = clips.frames(1, 2, 2)
    assert len(pair) == 2
    assert pair[0].samples.max() <= 1.0
    with pytest.raises(IndexError):
        clips.frames(0, 5, 2)
    assert clips.subset([1]).ids == (1,)
    with pytest.raises(ValueError, match="Unknown split"):
        datasets.ClipSet.from_manifest(synthesis.Manifest(spec=synth_spec, clips=(), train=(), test=()), 'dev')
