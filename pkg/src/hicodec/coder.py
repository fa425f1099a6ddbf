"""Integer range coder with CDF-driven interval subdivision.

The coder operates on integer cumulative tables with a fixed total of
2**PRECISION_BITS. All arithmetic is integer-only, so encoder output is
bit-identical across platforms. Renormalization is byte-wise with explicit
carry propagation into the already-emitted buffer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRECISION_BITS = 16

_WIDTH = 64
_MASK = (1 << _WIDTH) - 1
_TOP = 1 << (_WIDTH - 8)  # renormalize while range < _TOP


class CoderError(Exception):
    pass


@dataclass(frozen=True)
class Bitstream:
    """Finished coder output. Trailing pad bits (if any) are zero."""

    data: bytes

    @property
    def bit_length(self) -> int:
        return 8 * len(self.data)


class IntegerCdf:
    """Monotone integer cumulative table with total 2**precision_bits.

    cumulative[0] == 0, cumulative[-1] == 2**precision_bits, strictly
    increasing (every symbol has count >= 1).
    """

    __slots__ = ("cumulative", "precision_bits")

    def __init__(self, cumulative, precision_bits: int = PRECISION_BITS, validate: bool = True):
        cum = np.asarray(cumulative, dtype=np.int64)
        if validate:
            if cum.ndim != 1 or len(cum) < 2:
                raise CoderError("cumulative table needs at least 2 entries")
            if cum[0] != 0 or cum[-1] != (1 << precision_bits):
                raise CoderError(
                    f"cumulative must run from 0 to 2^{precision_bits}, "
                    f"got [{cum[0]}, {cum[-1]}]"
                )
            if np.any(np.diff(cum) <= 0):
                raise CoderError("cumulative table must be strictly increasing")
        self.cumulative = cum
        self.precision_bits = precision_bits

    @property
    def num_symbols(self) -> int:
        return len(self.cumulative) - 1


def quantize_pmf(pmf, precision_bits: int = PRECISION_BITS) -> IntegerCdf:
    """Quantize a real PMF to an integer CDF with total exactly 2**P.

    Counts are proportional to the pmf by largest-remainder rounding, every
    symbol is floored to count >= 1 so the coder can always represent the
    true symbol. Rounding ties go to the lower symbol index.
    """
    counts = quantize_pmf_counts(np.asarray(pmf, dtype=np.float64)[None, :], precision_bits)[0]
    cum = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=cum[1:])
    return IntegerCdf(cum, precision_bits, validate=False)


def quantize_pmf_counts(pmf: np.ndarray, precision_bits: int = PRECISION_BITS) -> np.ndarray:
    """Vectorized largest-remainder quantization.

    pmf: [N, L] array of non-negative reals (rows need not sum exactly to 1).
    Returns int64 counts [N, L] with each row summing to 2**P and min 1.
    """
    if pmf.ndim != 2:
        raise CoderError("pmf must be 2-dimensional")
    n, num_sym = pmf.shape
    total = 1 << precision_bits
    if num_sym > total - num_sym:
        raise CoderError(f"alphabet of {num_sym} symbols too large for {precision_bits}-bit precision")
    if not np.all(np.isfinite(pmf)) or np.any(pmf < 0):
        raise CoderError("pmf entries must be finite and non-negative")

    row_sum = pmf.sum(axis=1, keepdims=True)
    if np.any(row_sum <= 0):
        raise CoderError("pmf rows must have positive mass")
    ideal = pmf / row_sum * total
    counts = np.floor(ideal).astype(np.int64)
    remainder = ideal - counts

    # Distribute the deficit to the largest remainders; stable sort breaks
    # ties toward the lower symbol index.
    deficit = total - counts.sum(axis=1)
    order = np.argsort(-remainder, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(num_sym)[None, :].repeat(n, axis=0), axis=1)
    counts += ranks < deficit[:, None]

    # Floor zero counts to 1, stealing from the largest counts.
    zeros = counts == 0
    if np.any(zeros):
        need = zeros.sum(axis=1)
        counts[zeros] = 1
        for i in np.nonzero(need)[0]:
            take = int(need[i])
            row = counts[i]
            while take > 0:
                j = int(np.argmax(row))
                give = min(take, int(row[j]) - 1)
                row[j] -= give
                take -= give
    return counts


def uniform_cdf(num_symbols: int, precision_bits: int = PRECISION_BITS) -> IntegerCdf:
    """Equal-count CDF over num_symbols (counts differ by at most 1)."""
    return quantize_pmf(np.ones(num_symbols), precision_bits)


class RangeEncoder:
    """Single-owner encoder state; call encode_symbol then finish once."""

    def __init__(self):
        self.low = 0
        self.range = _MASK
        self._out = bytearray()
        self._finished = False

    def encode_symbol(self, cdf: IntegerCdf, sym: int) -> None:
        if self._finished:
            raise CoderError("encoder already finished")
        cum = cdf.cumulative
        if not 0 <= sym < len(cum) - 1:
            raise CoderError(f"symbol {sym} outside alphabet of {len(cum) - 1}")
        self._encode_raw(int(cum[sym]), int(cum[sym + 1]), cdf.precision_bits)

    def _encode_raw(self, cum_lo: int, cum_hi: int, precision_bits: int) -> None:
        r = self.range >> precision_bits
        self.low += r * cum_lo
        self.range = r * (cum_hi - cum_lo)
        if self.low > _MASK:  # carry into emitted bytes
            out = self._out
            i = len(out) - 1
            while out[i] == 0xFF:
                out[i] = 0
                i -= 1
            out[i] += 1
            self.low &= _MASK
        while self.range < _TOP:
            self._out.append(self.low >> (_WIDTH - 8))
            self.low = (self.low << 8) & _MASK
            self.range <<= 8

    def finish(self) -> Bitstream:
        """Flush the working interval; the stream then fully determines the
        symbol sequence given the CDF sequence and symbol count."""
        if self._finished:
            raise CoderError("encoder already finished")
        self._finished = True
        for _ in range(_WIDTH // 8):
            self._out.append(self.low >> (_WIDTH - 8))
            self.low = (self.low << 8) & _MASK
        return Bitstream(bytes(self._out))


class RangeDecoder:
    """Single-owner decoder state over a Bitstream.

    The stream must have been produced with the identical per-step CDFs;
    the symbol count is carried by the caller (container header), not the
    coder.
    """

    def __init__(self, stream: Bitstream | bytes):
        data = stream.data if isinstance(stream, Bitstream) else bytes(stream)
        self._data = data
        self._pos = 0
        self.range = _MASK
        self.code = 0
        for _ in range(_WIDTH // 8):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise CoderError("bitstream exhausted prematurely")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode_symbol(self, cdf: IntegerCdf) -> int:
        cum = cdf.cumulative
        sym, cum_lo, cum_hi = self._locate(cum, cdf.precision_bits)
        self._decode_update(cum_lo, cum_hi, cdf.precision_bits)
        return sym

    def _locate(self, cum: np.ndarray, precision_bits: int):
        r = self.range >> precision_bits
        dv = min(self.code // r, (1 << precision_bits) - 1)
        sym = int(np.searchsorted(cum, dv, side="right")) - 1
        return sym, int(cum[sym]), int(cum[sym + 1])

    def _decode_update(self, cum_lo: int, cum_hi: int, precision_bits: int) -> None:
        r = self.range >> precision_bits
        self.code -= r * cum_lo
        self.range = r * (cum_hi - cum_lo)
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK
            self.range <<= 8
