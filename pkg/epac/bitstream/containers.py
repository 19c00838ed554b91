"""
The versioned container of the coded sequences (the ``EPAB`` files).

The layout (little-endian throughout, see FORMATS.md for the details)::

    header:  magic "EPAB", version u16, width u16, height u16, channels u8,
             frame count u32, GoP u16, λ id u32, model hash 8 bytes
    chunks:  one per frame, in the coding order:
             frame type byte "I" or "P",
             then for every latent (1 for I, 2 for P: motion, residual):
             payload length u32, range-coded payload

The file ends exactly after the last chunk. The container can be parsed
without the model (`Bitstream.parse`), but only decoded with the model
whose hash is in the header (`read_sequence`).
"""
import dataclasses
import enum
import logging
import pathlib
import struct
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from epac.bitstream import cdfs
from epac.bitstream import rangecoding
from epac.codec import coding
from epac.codec import entropy
from epac.codec import models
from epac.metrics import quality
from epac.storage import files
from epac.structs import errors
from epac.structs import frames

logger = logging.getLogger(__name__)

MAGIC = b'EPAB'
VERSION = 1
HEADER = struct.Struct('<4sHHHBIHI8s')
LENGTH = struct.Struct('<I')
DOWNSCALE = 4

ParseError = rangecoding.ParseError
FrameLatents = Sequence[coding.LatentBlock]
Source = Union[bytes, files.PathLike]


class IncompatibleModelError(errors.ContractViolation):
    """ The bitstream was coded with another model than the one given. """


class FrameType(str, enum.Enum):
    INTRA = 'I'
    PREDICTED = 'P'

    @property
    def kinds(self) -> Tuple[coding.LatentKind, ...]:
        if self is FrameType.INTRA:
            return (coding.LatentKind.INTRA,)
        else:
            return (coding.LatentKind.MOTION, coding.LatentKind.RESIDUAL)


@dataclasses.dataclass(frozen=True)
class Header:
    width: int
    height: int
    channels: int
    frame_count: int
    gop: int
    lambda_id: int
    model_hash: bytes
    version: int = VERSION

    def pack(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.width, self.height, self.channels,
                           self.frame_count, self.gop, self.lambda_id, self.model_hash)

    @classmethod
    def unpack(cls, data: bytes) -> 'Header':
        if len(data) < HEADER.size:
            raise ParseError(f"The header is truncated: {len(data)} of {HEADER.size} bytes", offset=len(data))
        magic, version, width, height, channels, count, gop, lambda_id, model_hash = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ParseError(f"Not an EPAB bitstream: magic {magic!r}", offset=0)
        if version != VERSION:
            raise ParseError(f"Unsupported bitstream version {version}", offset=4)
        if width % DOWNSCALE or height % DOWNSCALE or not width or not height:
            raise ParseError(f"Unsupported geometry {width}x{height}", offset=6)
        return cls(width=width, height=height, channels=channels, frame_count=count,
                   gop=gop, lambda_id=lambda_id, model_hash=model_hash, version=version)

    @property
    def latent_size(self) -> Tuple[int, int]:
        return self.height // DOWNSCALE, self.width // DOWNSCALE


@dataclasses.dataclass(frozen=True, eq=False)
class Chunk:
    frame_type: FrameType
    payloads: Tuple[bytes, ...]
    offset: int = 0
    """ Where the chunk starts in its file (only known for the parsed ones). """

    @property
    def size(self) -> int:
        return 1 + sum(LENGTH.size + len(payload) for payload in self.payloads)

    def pack(self) -> bytes:
        parts = [self.frame_type.value.encode('ascii')]
        for payload in self.payloads:
            parts.append(LENGTH.pack(len(payload)))
            parts.append(payload)
        return b''.join(parts)

    def payload_offsets(self) -> List[int]:
        """ The file offsets of the payloads (after their length fields). """
        result, position = [], self.offset + 1
        for payload in self.payloads:
            result.append(position + LENGTH.size)
            position += LENGTH.size + len(payload)
        return result


@dataclasses.dataclass(frozen=True, eq=False)
class Bitstream:
    header: Header
    chunks: Tuple[Chunk, ...]

    @property
    def size(self) -> int:
        return HEADER.size + sum(chunk.size for chunk in self.chunks)

    def to_bytes(self) -> bytes:
        return self.header.pack() + b''.join(chunk.pack() for chunk in self.chunks)

    def bpp(self) -> float:
        return quality.bits_per_pixel(self.size, self.header.width, self.header.height,
                                      max(1, self.header.frame_count))

    @classmethod
    def parse(cls, data: bytes) -> 'Bitstream':
        """ Split the file into the header and the chunks; no model is needed. """
        header = Header.unpack(data)
        position = HEADER.size
        chunks: List[Chunk] = []
        for _ in range(header.frame_count):
            start = position
            if position >= len(data):
                raise ParseError(f"The bitstream is truncated before frame #{len(chunks)}", offset=position)
            try:
                frame_type = FrameType(chr(data[position]))
            except ValueError:
                raise ParseError(f"Unknown frame type {data[position]!r}", offset=position) from None
            position += 1
            payloads = []
            for _ in frame_type.kinds:
                if position + LENGTH.size > len(data):
                    raise ParseError("The chunk length is truncated", offset=position)
                (length,) = LENGTH.unpack_from(data, position)
                position += LENGTH.size
                if position + length > len(data):
                    raise ParseError(f"The payload of {length} bytes is truncated", offset=len(data))
                payloads.append(bytes(data[position:position + length]))
                position += length
            chunks.append(Chunk(frame_type=frame_type, payloads=tuple(payloads), offset=start))
        if position != len(data):
            raise ParseError(f"{len(data) - position} trailing bytes after the last frame", offset=position)
        return cls(header=header, chunks=tuple(chunks))


def coding_tables(model: models.CodecModel) -> Dict[coding.LatentKind, cdfs.CdfTable]:
    result = {}
    for kind in coding.LatentKind:
        em = entropy.EntropyModel.from_params(model.params, kind.value, model.latent_max)
        result[kind] = cdfs.build_cdf(em)
    return result


def _symbols(block: coding.LatentBlock, table: cdfs.CdfTable) -> Tuple[np.ndarray, np.ndarray]:
    values = np.asarray(block.values)
    if values.ndim != 4 or values.shape[0] != 1 or values.shape[1] != table.channels:
        raise ValueError(f"A {block.kind.value} latent of shape {values.shape} does not fit "
                         f"the {table.channels}-channel table.")
    if not np.array_equal(values, np.rint(values)):
        raise ValueError(f"The {block.kind.value} latent is not quantized.")
    symbols = values.astype(np.int64).ravel() + table.latent_max
    channels = np.repeat(np.arange(table.channels), values.shape[2] * values.shape[3])
    return symbols, channels


def encode_latents(block: coding.LatentBlock, table: cdfs.CdfTable) -> bytes:
    symbols, channels = _symbols(block, table)
    rows = table.rows()
    return rangecoding.range_encode(symbols.tolist(), [rows[c] for c in channels.tolist()])


def decode_latents(
        payload: bytes,
        table: cdfs.CdfTable,
        kind: coding.LatentKind,
        size: Tuple[int, int],
        *,
        base_offset: int = 0,
) -> coding.LatentBlock:
    h, w = size
    rows = table.rows()
    plan = [rows[c] for c in range(table.channels) for _ in range(h * w)]
    symbols = rangecoding.range_decode(payload, plan, len(plan), base_offset=base_offset)
    values = np.array(symbols, dtype=np.float64) - table.latent_max
    return coding.LatentBlock(values.reshape(1, table.channels, h, w), kind)


def ideal_bits(block: coding.LatentBlock, table: cdfs.CdfTable) -> float:
    """ The ideal payload length under the quantized tables, for the efficiency checks. """
    symbols, channels = _symbols(block, table)
    return cdfs.coding_bits(symbols, channels, table)


def frame_type_of(latents: FrameLatents) -> FrameType:
    kinds = tuple(block.kind for block in latents)
    for frame_type in FrameType:
        if kinds == frame_type.kinds:
            return frame_type
    raise ValueError(f"Not a frame's set of latents: {[kind.value for kind in kinds]}")


def write_sequence(
        latents: Sequence[FrameLatents],
        model: models.CodecModel,
        *,
        width: int,
        height: int,
        gop: int,
        path: Optional[files.PathLike] = None,
) -> Bitstream:
    """
    Range-code the frames' latents into a bitstream, and store it if the path is given.

    The latents of every frame are either ``(intra,)`` or ``(motion, residual)``.
    """
    tables = coding_tables(model)
    chunks = []
    for frame in latents:
        frame_type = frame_type_of(frame)
        payloads = tuple(encode_latents(block, tables[block.kind]) for block in frame)
        chunks.append(Chunk(frame_type=frame_type, payloads=payloads))
    header = Header(width=width, height=height, channels=model.architecture.channels,
                    frame_count=len(chunks), gop=gop, lambda_id=int(round(model.lmbda)),
                    model_hash=model.model_hash())
    bitstream = Bitstream(header=header, chunks=tuple(chunks))
    if path is not None:
        files.write_atomic(path, bitstream.to_bytes())
        logger.debug(f"Written {bitstream.size} bytes of {len(chunks)} frames to {path}.")
    return bitstream


def read_latents(
        source: Source,
        model: models.CodecModel,
) -> Tuple[Bitstream, List[Tuple[coding.LatentBlock, ...]]]:
    """ Parse the bitstream and decode the latents of all frames with the model's tables. """
    data = source if isinstance(source, (bytes, bytearray)) else pathlib.Path(source).read_bytes()
    bitstream = Bitstream.parse(data)
    header = bitstream.header
    if header.model_hash != model.model_hash():
        raise IncompatibleModelError(f"The bitstream is coded for the model {header.model_hash.hex()}, "
                                     f"not for {model.model_hash().hex()}.")
    if header.channels != model.architecture.channels:
        raise IncompatibleModelError(f"The bitstream has {header.channels} channels, "
                                     f"the model codes {model.architecture.channels}.")
    tables = coding_tables(model)
    result = []
    for chunk in bitstream.chunks:
        blocks = []
        for kind, payload, offset in zip(chunk.frame_type.kinds, chunk.payloads, chunk.payload_offsets()):
            blocks.append(decode_latents(payload, tables[kind], kind, header.latent_size, base_offset=offset))
        result.append(tuple(blocks))
    return bitstream, result


def read_sequence(
        source: Source,
        model: models.CodecModel,
) -> List[frames.FrameBuffer]:
    """
    Decode the bitstream into the reconstructed frames.

    Nothing is returned until the whole sequence is decoded: a failure
    anywhere (a wrong model, a truncated or corrupted chunk) leaves no partial output.
    """
    bitstream, latents = read_latents(source, model)
    reconstructions: List[frames.FrameBuffer] = []
    for index, (chunk, blocks) in enumerate(zip(bitstream.chunks, latents)):
        if chunk.frame_type is FrameType.INTRA:
            (intra,) = blocks
            reconstructions.append(coding.decode_frame_i(intra, model))
        elif not reconstructions:
            raise ParseError(f"The P-frame #{index} has no reference frame", offset=chunk.offset)
        else:
            motion, residual = blocks
            reconstructions.append(coding.decode_frame_p(motion, residual, reconstructions[-1], model))
    return reconstructions
