import dataclasses

import numpy as np
import pytest

from epac.bitstream import containers
from epac.bitstream.containers import (HEADER, Bitstream, FrameType, IncompatibleModelError, ParseError,
                                       read_sequence, write_sequence)
from epac.codec import coding, models
from epac.data import synthesis
from epac.online.variants import Variant
from epac.pipeline import sequences
from epac.structs import frames
from epac.structs.configuration import CodingSettings


@pytest.fixture()
def long_clip(synth_spec):
    samples, _ = synthesis.render_clip(dataclasses.replace(synth_spec, frames=20), 0)
    return [frames.FrameBuffer(plane / 255.0) for plane in samples]


@pytest.fixture()
def encoded(long_clip, random_model):
    return sequences.encode_sequence(long_clip, random_model, gop=5, variant=Variant.OFF)


def test_reconstructions_are_hash_equal(encoded, random_model):
    decoded = read_sequence(encoded.data, random_model)
    assert len(decoded) == 20
    assert [f.digest() for f in decoded] == [f.digest() for f in encoded.reconstructions]


def test_frame_types_follow_the_gop(encoded):
    types = [chunk.frame_type for chunk in encoded.bitstream.chunks]
    assert [i for i, t in enumerate(types) if t is FrameType.INTRA] == [0, 5, 10, 15]
    assert all(len(chunk.payloads) == len(chunk.frame_type.kinds) for chunk in encoded.bitstream.chunks)


def test_file_length_has_no_slack(encoded, tmp_path, random_model, long_clip):
    path = tmp_path / 'clip.epab'
    bitstream = sequences.encode_sequence(long_clip, random_model, gop=5, variant=Variant.OFF, path=path).bitstream
    data = path.read_bytes()
    assert len(data) == bitstream.size == HEADER.size + sum(chunk.size for chunk in bitstream.chunks)
    assert bitstream.bpp() == 8 * len(data) / (16 * 16 * 20)


def test_header_fields(encoded, random_model):
    header = Bitstream.parse(encoded.data).header
    assert encoded.data[:4] == b'EPAB'
    assert (header.width, header.height, header.channels) == (16, 16, 1)
    assert (header.frame_count, header.gop, header.lambda_id) == (20, 5, 512)
    assert header.model_hash == random_model.model_hash()


def test_bpp_against_the_entropy_estimate(encoded, random_model):
    estimated_bits = 0.0
    payload_bits = 0
    tables = containers.coding_tables(random_model)
    bitstream, latents = containers.read_latents(encoded.data, random_model)
    for chunk, blocks in zip(bitstream.chunks, latents):
        for block, payload in zip(blocks, chunk.payloads):
            estimated_bits += float(coding.bits_map(block, random_model).sum())
            ideal = containers.ideal_bits(block, tables[block.kind])
            assert len(payload) * 8 <= ideal * 1.01 + 256
            payload_bits += len(payload) * 8
    overhead_bits = 8 * (HEADER.size + 9 * 20) + 64 * 20 * 2
    assert encoded.bitstream.size * 8 >= estimated_bits
    assert payload_bits <= estimated_bits * 1.01 + overhead_bits


def test_determinism(long_clip, random_model, encoded):
    again = sequences.encode_sequence(long_clip, random_model, gop=5, variant=Variant.OFF)
    assert again.data == encoded.data


def test_another_model_is_rejected(encoded, random_model, model):
    with pytest.raises(IncompatibleModelError):
        read_sequence(encoded.data, model)


def test_another_alphabet_is_rejected(encoded, random_model):
    other = dataclasses.replace(random_model, coding=CodingSettings(latent_max=32))
    with pytest.raises(IncompatibleModelError, match="coded for the model"):
        read_sequence(encoded.data, other)


@pytest.mark.parametrize('cut', [10, HEADER.size, HEADER.size + 3, -1],
                         ids=['header', 'first-chunk', 'length', 'tail'])
def test_truncation_reports_the_offset(encoded, random_model, cut):
    data = encoded.data
    with pytest.raises(ParseError) as err:
        read_sequence(data[:cut], random_model)
    assert 0 <= err.value.offset <= len(data)


def test_trailing_bytes_are_rejected(encoded):
    with pytest.raises(ParseError, match="trailing"):
        Bitstream.parse(encoded.data + b'\x00')


def test_bad_magic_and_frame_type(encoded):
    data = bytearray(encoded.data)
    data[0:4] = b'EPAX'
    with pytest.raises(ParseError, match="magic"):
        Bitstream.parse(bytes(data))
    data = bytearray(encoded.data)
    data[HEADER.size] = ord('B')
    with pytest.raises(ParseError, match="frame type") as err:
        Bitstream.parse(bytes(data))
    assert err.value.offset == HEADER.size


def test_payload_flips_are_detected(encoded, random_model):
    def symbols(data):
        _, latents = containers.read_latents(data, random_model)
        return [block.values.tobytes() for blocks in latents for block in blocks]

    clean = symbols(encoded.data)
    chunks = encoded.bitstream.chunks
    offsets = [(offset, len(payload)) for chunk in Bitstream.parse(encoded.data).chunks
               for offset, payload in zip(chunk.payload_offsets(), chunk.payloads)]
    assert len(offsets) == sum(len(chunk.payloads) for chunk in chunks)
    rng = np.random.default_rng(0)
    for _ in range(100):
        offset, length = offsets[int(rng.integers(len(offsets)))]
        position = offset + int(rng.integers(length))
        data = bytearray(encoded.data)
        data[position] ^= int(rng.integers(1, 256))
        try:
            decoded = symbols(bytes(data))
        except ParseError:
            continue
        assert decoded != clean


def test_latents_must_be_quantized(random_model):
    block = coding.LatentBlock(np.full((1, random_model.architecture.intra_channels, 4, 4), 0.5),
                               coding.LatentKind.INTRA)
    with pytest.raises(ValueError, match="not quantized"):
        write_sequence([(block,)], random_model, width=16, height=16, gop=1)


def test_mixed_latents_are_not_a_frame(random_model):
    block = coding.LatentBlock(np.zeros((1, random_model.architecture.intra_channels, 4, 4)),
                               coding.LatentKind.INTRA)
    with pytest.raises(ValueError, match="set of latents"):
        write_sequence([(block, block)], random_model, width=16, height=16, gop=1)


def test_p_frame_without_a_reference(random_model, clip):
    code = coding.encode_frame_p(clip[1], frames.reconstructed(clip[0].samples), random_model)
    data = write_sequence([(code.motion, code.residual)], random_model, width=16, height=16, gop=0).to_bytes()
    with pytest.raises(ParseError, match="no reference"):
        read_sequence(data, random_model)


def test_untrained_model_hashes_differ_from_trained(model, random_model):
    assert isinstance(model, models.CodecModel)
    assert model.model_hash() != random_model.model_hash()
    assert len(model.model_hash()) == 8
