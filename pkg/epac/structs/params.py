"""
Named parameter collections of the codec, partitioned by the coding side.

Every parameter belongs to exactly one side:

* the encoder side (Φ_E) -- only used when producing the latents;
* the decoder side (Φ_D) -- used to reconstruct the frames from the latents;
* the shared entropy models -- shipped with the decoder, used by both sides.

The collections are immutable: updates produce new collections with the same
names and side tags (see `ParamSet.with_values`), so that the "frozen" models
can be shared between threads without copying.
"""
import enum
import hashlib
import struct
from typing import Collection, Dict, Iterable, Iterator, Mapping, Optional, Tuple

import numpy as np


class Side(str, enum.Enum):
    ENCODER = 'encoder'
    DECODER = 'decoder'
    ENTROPY = 'shared-entropy'


DECODING_SIDES = (Side.DECODER, Side.ENTROPY)


class ParamSet(Mapping[str, np.ndarray]):
    """
    An immutable mapping of hierarchical names to 64-bit float arrays.

    The insertion order is preserved and is a part of the identity:
    it defines the serialisation order and the hashing order.
    """

    def __init__(
            self,
            values: Mapping[str, np.ndarray],
            sides: Mapping[str, Side],
    ) -> None:
        super().__init__()
        if set(values) != set(sides):
            missing = sorted(set(values) ^ set(sides))
            raise ValueError(f"Every parameter needs exactly one side tag: {missing}")
        self._values: Dict[str, np.ndarray] = {}
        self._sides: Dict[str, Side] = {}
        for name, value in values.items():
            array = np.array(value, dtype=np.float64)  # a private copy
            array.flags.writeable = False
            self._values[name] = array
            self._sides[name] = Side(sides[name])

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({len(self)} params)'

    def side(self, name: str) -> Side:
        return self._sides[name]

    def names(self, *sides: Side) -> Tuple[str, ...]:
        return tuple(name for name, side in self._sides.items() if not sides or side in sides)

    def select(self, names: Iterable[str]) -> 'ParamSet':
        chosen = list(names)
        return ParamSet({name: self._values[name] for name in chosen},
                        {name: self._sides[name] for name in chosen})

    def sided(self, *sides: Side) -> 'ParamSet':
        return self.select(self.names(*sides))

    def with_values(self, updates: Mapping[str, np.ndarray]) -> 'ParamSet':
        """ A new collection where some values are replaced; the names and sides stay. """
        unknown = set(updates) - set(self._values)
        if unknown:
            raise KeyError(f"Cannot update unknown parameters: {sorted(unknown)}")
        values = dict(self._values)
        for name, value in updates.items():
            if np.shape(value) != self._values[name].shape:
                raise ValueError(f"Shape of {name!r} cannot change: "
                                 f"{self._values[name].shape} -> {np.shape(value)}")
            values[name] = value
        return ParamSet(values, self._sides)

    def merged(self, other: 'ParamSet') -> 'ParamSet':
        values = dict(self._values)
        sides = dict(self._sides)
        for name in other:
            values[name] = other[name]
            sides[name] = other.side(name)
        return ParamSet(values, sides)

    def digest(self, *sides: Side, values: bool = True) -> str:
        """
        A sha256 of the names, sides, shapes, and (optionally) the values.

        With ``values=False``, only the architecture is hashed, so that
        the models of different training runs can be checked for compatibility.
        """
        hasher = hashlib.sha256()
        for name in self.names(*sides):
            array = self._values[name]
            hasher.update(name.encode('utf-8'))
            hasher.update(self._sides[name].value.encode('utf-8'))
            hasher.update(struct.pack(f'<{array.ndim + 1}I', array.ndim, *array.shape))
            if values:
                hasher.update(array.astype('<f8').tobytes())
        return hasher.hexdigest()


def changed_names(before: ParamSet, after: ParamSet, names: Optional[Collection[str]] = None) -> Tuple[str, ...]:
    """ The parameters whose values differ bit-wise between two collections. """
    return tuple(
        name for name in (names if names is not None else before)
        if not np.array_equal(before[name], after[name])
    )
