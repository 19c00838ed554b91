"""
A carry-less range coder with a 32-bit state and 8-bit renormalisation.

The coder is the classic carry-less scheme: whenever the top byte of the
interval is settled, it is shifted out; whenever the interval becomes too
narrow while straddling a byte boundary, it is truncated to the boundary.
No carries are ever propagated into the already written bytes.

The encoder flushes all 4 bytes of its final ``low``. The decoder mirrors
the encoder's ``low`` exactly, so after the last symbol its code register must
equal it, and all the bytes must be consumed. This makes the payloads
self-terminating: a payload that does not end where its symbols end is
reported as corrupted instead of being decoded into plausible garbage.

The frequency tables are the cumulative rows of `cdfs.CdfTable`: ``row[s]``
is the cumulative frequency below the symbol ``s``, ``row[-1]`` is the total.
"""
import bisect
from typing import List, Sequence

from epac.structs import errors

TOP = 1 << 24
BOT = 1 << 16
MASK = (1 << 32) - 1

Row = Sequence[int]


class ParseError(errors.DataError):
    """ The bytes cannot be parsed or decoded; the offset is where it failed. """

    def __init__(self, message: str, *, offset: int) -> None:
        super().__init__(f"{message} (offset={offset})")
        self.offset = offset


class SupportError(ValueError):
    """ A symbol is outside of its table's alphabet (or has no frequency). """


class RangeEncoder:
    """ A single-use encoder: feed the symbols, then `finish` for the bytes. """

    def __init__(self) -> None:
        super().__init__()
        self.low = 0
        self.range = MASK
        self.output = bytearray()
        self.finished = False

    def encode(self, cum: int, freq: int, total: int) -> None:
        self.range //= total
        self.low += cum * self.range
        self.range *= freq
        self._normalize()

    def encode_symbol(self, symbol: int, row: Row) -> None:
        if not 0 <= symbol < len(row) - 1:
            raise SupportError(f"Symbol {symbol} is outside of the alphabet of {len(row) - 1}.")
        cum, upper = row[symbol], row[symbol + 1]
        if upper <= cum:
            raise SupportError(f"Symbol {symbol} has no frequency in its table.")
        self.encode(cum, upper - cum, row[-1])

    def finish(self) -> bytes:
        if not self.finished:
            for _ in range(4):
                self.output.append(self.low >> 24)
                self.low = (self.low << 8) & MASK
            self.finished = True
        return bytes(self.output)

    def _normalize(self) -> None:
        while True:
            if (self.low ^ (self.low + self.range)) < TOP:
                pass
            elif self.range < BOT:
                self.range = -self.low & (BOT - 1)
            else:
                break
            self.output.append(self.low >> 24)
            self.range = (self.range << 8) & MASK
            self.low = (self.low << 8) & MASK


class RangeDecoder:
    """ A single-use decoder over a payload; `finish` verifies the termination. """

    def __init__(self, data: bytes, *, base_offset: int = 0) -> None:
        super().__init__()
        self.data = data
        self.base_offset = base_offset
        self.position = 0
        self.low = 0
        self.code = 0
        self.range = MASK
        for _ in range(4):
            self.code = (self.code << 8) | self._read_byte()

    def decode_symbol(self, row: Row) -> int:
        total = row[-1]
        self.range //= total
        cum = (self.code - self.low) // self.range
        if not 0 <= cum < total:
            raise ParseError("The payload is corrupted: the code is out of the interval",
                             offset=self.base_offset + self.position)
        symbol = bisect.bisect_right(row, cum) - 1
        self.low += row[symbol] * self.range
        self.range *= row[symbol + 1] - row[symbol]
        self._normalize()
        return symbol

    def finish(self) -> None:
        if self.position != len(self.data):
            raise ParseError(f"The payload has {len(self.data) - self.position} trailing bytes",
                             offset=self.base_offset + self.position)
        if self.code != self.low:
            raise ParseError("The payload does not terminate where its symbols end",
                             offset=self.base_offset + self.position)

    def _read_byte(self) -> int:
        if self.position >= len(self.data):
            raise ParseError("The payload is truncated", offset=self.base_offset + self.position)
        byte = self.data[self.position]
        self.position += 1
        return byte

    def _normalize(self) -> None:
        while True:
            if (self.low ^ (self.low + self.range)) < TOP:
                pass
            elif self.range < BOT:
                self.range = -self.low & (BOT - 1)
            else:
                break
            self.code = ((self.code << 8) | self._read_byte()) & MASK
            self.range = (self.range << 8) & MASK
            self.low = (self.low << 8) & MASK


def range_encode(symbols: Sequence[int], rows: Sequence[Row]) -> bytes:
    """ Encode the symbols, each with its own cumulative row (``rows[i]`` for ``symbols[i]``). """
    if len(symbols) != len(rows):
        raise ValueError(f"Every symbol needs a table: {len(symbols)} symbols, {len(rows)} tables.")
    encoder = RangeEncoder()
    for symbol, row in zip(symbols, rows):
        encoder.encode_symbol(int(symbol), row)
    return encoder.finish()


def range_decode(data: bytes, rows: Sequence[Row], count: int, *, base_offset: int = 0) -> List[int]:
    if count != len(rows):
        raise ValueError(f"Every symbol needs a table: {count} symbols, {len(rows)} tables.")
    decoder = RangeDecoder(data, base_offset=base_offset)
    symbols = [decoder.decode_symbol(row) for row in rows]
    decoder.finish()
    return symbols
