import json

import pytest

from epac.bitstream import containers
from epac.codec import models
from epac.data import rawvideo, synthesis
from epac.storage import checkpoints
from epac.structs.configuration import LAMBDAS


def test_synth(invoke, reply, tmp_path):
    directory = tmp_path / 'data'
    result = invoke(['synth', '-q', '-n', '3', '--held-out', '1', '--frames', '4',
                     '--width', '16', '--height', '16', '--seed', '5', str(directory)])
    assert result.exit_code == 0, result.output
    assert reply(result) == {'directory': str(directory), 'clips': 3, 'train': 2, 'test': 1}

    manifest = synthesis.load_manifest(directory)
    assert manifest.spec.frames == 4 and manifest.spec.seed == 5
    assert rawvideo.read_header(manifest.path(0)).total_bytes == 16 * 16 * 4


def test_synth_options_from_envvars(invoke, reply, tmp_path):
    result = invoke(['synth', '-q', '--frames', '2', '--width', '16', '--height', '16', str(tmp_path / 'data')],
                    env={'EPAC_SYNTH_CLIPS': '2', 'EPAC_SYNTH_HELD_OUT': '0'})
    assert result.exit_code == 0, result.output
    assert reply(result)['clips'] == 2
    assert reply(result)['test'] == 0


def test_synth_is_reproducible(invoke, tmp_path):
    for name in ['a', 'b']:
        result = invoke(['synth', '-q', '-n', '2', '--held-out', '1', '--frames', '3',
                         '--width', '16', '--height', '16', str(tmp_path / name)])
        assert result.exit_code == 0, result.output
    for name in ['manifest.json', 'clip-0000.raw', 'clip-0001.raw']:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_encode_decode_eval(invoke, reply, tmp_path, checkpoint, raw_clip):
    bitstream = tmp_path / 'clip.epab'
    decoded = tmp_path / 'decoded.raw'

    encoded = invoke(['encode', '-q', '-g', '4', '--variant', 'oeu', str(checkpoint), str(raw_clip), str(bitstream)])
    assert encoded.exit_code == 0, encoded.output
    summary = reply(encoded)
    assert summary['frames'] == 6
    assert summary['bytes'] == bitstream.stat().st_size
    assert summary['bpp'] == 8.0 * bitstream.stat().st_size / (16 * 16 * 6)

    stats = json.loads((tmp_path / 'clip.epab.stats.json').read_text())
    assert stats['gop'] == 4
    assert stats['variant'] == 'oeu'
    assert len(stats['telemetry']) == 4

    result = invoke(['decode', '-q', str(bitstream), str(checkpoint), str(decoded)])
    assert result.exit_code == 0, result.output
    assert reply(result) == {'output': str(decoded), 'frames': 6, 'width': 16, 'height': 16}

    result = invoke(['eval', '-q', str(raw_clip), str(decoded)])
    assert result.exit_code == 0, result.output
    measured = reply(result)
    assert measured['frames'] == 6
    assert measured['mean_psnr'] == pytest.approx(summary['mean_psnr'], abs=1e-9)
    assert measured['mean_ms_ssim'] is None
    assert measured['ms_ssim'] == [None] * 6


def test_encode_defaults_to_the_checkpoint_gop(invoke, tmp_path, checkpoint, raw_clip):
    bitstream = tmp_path / 'clip.epab'
    stats = tmp_path / 'stats.json'
    result = invoke(['encode', '-q', '--variant', 'off', '--frames', '3', '--stats', str(stats),
                     str(checkpoint), str(raw_clip), str(bitstream)])
    assert result.exit_code == 0, result.output
    header = containers.Bitstream.parse(bitstream.read_bytes()).header
    assert header.gop == checkpoints.load_model(checkpoint).coding.gop
    assert header.frame_count == 3
    assert json.loads(stats.read_text())['frames'] == 3


def test_eval_of_identical_clips(invoke, reply, raw_clip, tmp_path):
    output = tmp_path / 'quality.json'
    result = invoke(['eval', '-q', '-o', str(output), str(raw_clip), str(raw_clip)])
    assert result.exit_code == 0, result.output
    assert reply(result)['psnr'] == [100.0] * 6
    assert json.loads(output.read_text())['mean_psnr'] == 100.0


def test_bdrate_of_a_curve_against_itself(invoke, reply, curve_file, tmp_path):
    output = tmp_path / 'bd.json'
    result = invoke(['bdrate', '-q', '-o', str(output), str(curve_file), str(curve_file)])
    assert result.exit_code == 0, result.output
    assert reply(result)['bd_rate'] == 0.0
    assert reply(result)['bd_psnr'] == 0.0
    assert json.loads(output.read_text())['metric'] == 'psnr'


def test_bdrate_of_a_costlier_curve(invoke, reply, curve_file, tmp_path):
    costlier = tmp_path / 'test.csv'
    costlier.write_text("bpp,psnr\n0.11,30.0\n0.22,33.0\n0.44,36.0\n0.88,38.5\n", encoding='utf-8')
    result = invoke(['bdrate', '-q', str(curve_file), str(costlier)])
    assert result.exit_code == 0, result.output
    assert reply(result)['bd_rate'] == pytest.approx(10.0, abs=0.01)


def test_train_both_stages(invoke, reply, tmp_path, architecture):
    data = tmp_path / 'data'
    result = invoke(['synth', '-q', '-n', '2', '--held-out', '0', '--frames', '4',
                     '--width', '16', '--height', '16', str(data)])
    assert result.exit_code == 0, result.output

    output = tmp_path / 'trained.epac'
    init = tmp_path / 'init.epac'
    checkpoints.save_model(init, models.create_model(256, architecture=architecture))
    result = invoke(['train', '-q', '-i', str(init), '--stage1-steps', '2', '--stage2-steps', '1', '-T', '2',
                     str(data), str(output)])
    assert result.exit_code == 0, result.output
    summary = reply(result)
    assert summary['lambda'] == 256
    assert summary['histories'] == [f'{output}.stage1.csv', f'{output}.stage2.csv']

    assert len((tmp_path / 'trained.epac.stage1.csv').read_text().splitlines()) == 1 + 2
    assert len((tmp_path / 'trained.epac.stage2.csv').read_text().splitlines()) == 1 + 1
    trained = checkpoints.load_model(output)
    assert trained.decoder_digest() == summary['decoder_hash']
    assert trained.architecture == architecture


def test_ablate(invoke, reply, tmp_path, architecture):
    data = tmp_path / 'data'
    result = invoke(['synth', '-q', '-n', '2', '--held-out', '1', '--frames', '2',
                     '--width', '16', '--height', '16', str(data)])
    assert result.exit_code == 0, result.output

    paths = {}
    for index, lmbda in enumerate(LAMBDAS):
        paths[str(lmbda)] = f'models/{lmbda}.epac'
        checkpoints.save_model(tmp_path / paths[str(lmbda)],
                               models.create_model(lmbda, architecture=architecture, seed=index, zero_final=False))
    plan = tmp_path / 'plan.json'
    plan.write_text(json.dumps({'models': {'baseline': paths}, 'test_set': 'data',
                                'gops': [0], 'variants': ['off']}), encoding='utf-8')

    result = invoke(['ablate', '-q', '-o', str(tmp_path / 'out'), str(plan)])
    assert result.exit_code == 0, result.output
    assert reply(result) == {'output': str(tmp_path / 'out'), 'reports': ['grid', 'bd']}
    for name in ['grid.csv', 'grid.json', 'bd.csv', 'bd.json']:
        assert (tmp_path / 'out' / name).is_file()
    assert len(list((tmp_path / 'out' / 'bitstreams').iterdir())) == 4
