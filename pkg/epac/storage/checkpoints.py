"""
The binary checkpoints of the parameter collections (the ``EPAC`` files).

The layout (little-endian throughout, see FORMATS.md)::

    magic "EPAC", format version u16,
    per parameter, in the collection's order:
        name length u16, UTF-8 name, side tag u8, rank u8, dims u32 × rank,
        values as 64-bit floats (C order)
    CRC32 u32 of all the preceding bytes

Every binary checkpoint of a model has a JSON sidecar (``<file>.json``)
with the rest of the model's identity: λ, the architecture, the coding
settings, and the training provenance (stage, steps, seed). The sidecar
is informative for humans, but `load_model` needs it too: the binary part
stores only the parameters.
"""
import dataclasses
import logging
import pathlib
import struct
import zlib
from typing import Any, Dict, Mapping, Optional

import numpy as np

from epac.codec import models
from epac.codec import networks
from epac.storage import files
from epac.structs import configuration
from epac.structs import errors
from epac.structs import params

logger = logging.getLogger(__name__)

MAGIC = b'EPAC'
VERSION = 1
PREAMBLE = struct.Struct('<4sH')
NAME_LENGTH = struct.Struct('<H')
TAGS = struct.Struct('<BB')
CRC = struct.Struct('<I')

SIDE_TAGS: Dict[params.Side, int] = {
    params.Side.ENCODER: 0,
    params.Side.DECODER: 1,
    params.Side.ENTROPY: 2,
}
TAG_SIDES = {tag: side for side, tag in SIDE_TAGS.items()}


class CheckpointError(errors.DataError):
    """ The checkpoint is missing, truncated, corrupted, or of another format. """


def dump_params(values: params.ParamSet) -> bytes:
    parts = [PREAMBLE.pack(MAGIC, VERSION)]
    for name, array in values.items():
        encoded = name.encode('utf-8')
        parts.append(NAME_LENGTH.pack(len(encoded)))
        parts.append(encoded)
        parts.append(TAGS.pack(SIDE_TAGS[values.side(name)], array.ndim))
        parts.append(struct.pack(f'<{array.ndim}I', *array.shape))
        parts.append(np.ascontiguousarray(array, dtype='<f8').tobytes())
    body = b''.join(parts)
    return body + CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def parse_params(data: bytes) -> params.ParamSet:
    if len(data) < PREAMBLE.size + CRC.size:
        raise CheckpointError(f"The checkpoint is truncated: only {len(data)} bytes.")
    body, (crc,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("The checkpoint is corrupted: CRC32 mismatch.")
    magic, version = PREAMBLE.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"Not an EPAC checkpoint: magic {magic!r}.")
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}.")

    values: Dict[str, np.ndarray] = {}
    sides: Dict[str, params.Side] = {}
    position = PREAMBLE.size
    try:
        while position < len(body):
            (length,) = NAME_LENGTH.unpack_from(body, position)
            position += NAME_LENGTH.size
            name = body[position:position + length].decode('utf-8')
            position += length
            tag, rank = TAGS.unpack_from(body, position)
            position += TAGS.size
            shape = struct.unpack_from(f'<{rank}I', body, position)
            position += 4 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if position + 8 * count > len(body):
                raise CheckpointError(f"The values of {name!r} are truncated.")
            array = np.frombuffer(body, dtype='<f8', count=count, offset=position).reshape(shape)
            position += 8 * count
            if tag not in TAG_SIDES:
                raise CheckpointError(f"Unknown side tag {tag} of {name!r}.")
            if name in values:
                raise CheckpointError(f"Duplicate parameter {name!r}.")
            values[name] = array.astype(np.float64)
            sides[name] = TAG_SIDES[tag]
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"The checkpoint records are malformed at byte {position}: {e}") from e
    return params.ParamSet(values, sides)


def sidecar_path(path: files.PathLike) -> pathlib.Path:
    path = pathlib.Path(path)
    return path.with_name(path.name + '.json')


def save_model(
        path: files.PathLike,
        model: models.CodecModel,
        provenance: Optional[Mapping[str, Any]] = None,
) -> None:
    """ Store the parameters and the sidecar, both atomically. """
    files.write_atomic(path, dump_params(model.params))
    files.write_json(sidecar_path(path), {
        'lambda': model.lmbda,
        'architecture': dataclasses.asdict(model.architecture),
        'coding': dataclasses.asdict(model.coding),
        'architecture_hash': model.architecture_digest(),
        'decoder_hash': model.decoder_digest(),
        'provenance': dict(provenance or {}),
    })
    logger.debug(f"Stored the model λ={model.lmbda} to {path}.")


def load_model(
        path: files.PathLike,
        coding: Optional[configuration.CodingSettings] = None,
) -> models.CodecModel:
    """
    Restore the model from the checkpoint and its sidecar.

    The coding settings are those of the sidecar unless overridden; the
    architecture hash of the restored parameters must match the sidecar's.
    """
    try:
        data = pathlib.Path(path).read_bytes()
        meta = files.read_json(sidecar_path(path))
    except OSError as e:
        raise CheckpointError(f"Cannot read the checkpoint {str(path)!r}: {e}") from e
    except ValueError as e:
        raise CheckpointError(f"Cannot parse the sidecar of {str(path)!r}: {e}") from e

    values = parse_params(data)
    try:
        architecture = networks.Architecture(**meta['architecture'])
        stored_coding = configuration.CodingSettings(**meta.get('coding', {}))
        lmbda = float(meta['lambda'])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"The sidecar of {str(path)!r} is incomplete: {e}") from e

    model = models.CodecModel(
        params=values,
        architecture=architecture,
        lmbda=lmbda,
        coding=coding if coding is not None else stored_coding,
    )
    expected = meta.get('architecture_hash')
    if expected is not None and expected != model.architecture_digest():
        raise CheckpointError(f"The parameters of {str(path)!r} do not match the sidecar's architecture.")
    return model


def read_sidecar(path: files.PathLike) -> Mapping[str, Any]:
    try:
        return files.read_json(sidecar_path(path))
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Cannot read the sidecar of {str(path)!r}: {e}") from e
