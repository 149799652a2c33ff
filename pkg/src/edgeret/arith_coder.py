"""Static arithmetic coder for integer symbols under the mixture PMF.

A 32-bit integer coder with deferred ("pending") carry bits. The frequency
table has a fixed total of 2**16 with one extra escape slot; symbols outside
the table's support are coded as the escape slot followed by their 16-bit
two's-complement value under a flat distribution.

The finishing step emits the two bits that pin a value inside the final
interval; the decoder reads zeros past the end of the stream.
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._accel import kernel
from .entropy_model import QuantizedVector, gmm_pmf
from .errors import SupportTooWide, SymbolOverflow, TruncatedStream

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS
DEFAULT_SUPPORT = (-64, 63)
MAX_WIDTH = 1 << 15
RAW_MIN, RAW_MAX = -(1 << 15), (1 << 15) - 1

_FULL = (1 << 32) - 1
_HALF = 1 << 31
_QUARTER = 1 << 30
# worst case shifts per coded symbol: 18 for the slot plus 18 for a raw escape
_BITS_PER_SYMBOL_BOUND = 36


@dataclass(frozen=True)
class PmfTable:
    q_min: int
    q_max: int
    cumulative: np.ndarray  # int64, len = number of slots + 1

    @property
    def escape(self):
        return self.q_max - self.q_min + 1

    @property
    def freqs(self):
        return np.diff(self.cumulative)

    def probabilities(self):
        return self.freqs / TOTAL

    def cross_entropy(self):
        """Expected bits/symbol for data drawn from the table itself."""
        p = self.probabilities()
        return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class Bitstream:
    data: bytes
    bit_count: int

    def to_bytes(self):
        """On-disk form: little-endian u32 bit count, then packed MSB-first bytes."""
        return struct.pack("<I", self.bit_count) + self.data

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < 4:
            raise TruncatedStream("missing bit-count header")
        (count,) = struct.unpack_from("<I", blob)
        data = bytes(blob[4:])
        if len(data) < (count + 7) // 8:
            raise TruncatedStream(f"header says {count} bits, payload has {8 * len(data)}")
        return cls(data[: (count + 7) // 8], count)


def write_bitstream(path, stream):
    with open(path, "wb") as f:
        f.write(stream.to_bytes())


def read_bitstream(path):
    with open(path, "rb") as f:
        return Bitstream.from_bytes(f.read())


def build_table(params, support=DEFAULT_SUPPORT):
    q_min, q_max = int(support[0]), int(support[1])
    if q_max < q_min:
        raise ValueError(f"empty support [{q_min}, {q_max}]")
    width = q_max - q_min + 1
    if width > MAX_WIDTH:
        raise SupportTooWide(f"support width {width} exceeds {MAX_WIDTH}")
    p = gmm_pmf(np.arange(q_min, q_max + 1), params)
    p = np.append(p, max(0.0, 1.0 - p.sum()))
    n = p.size
    # every slot gets one count, the rest is shared proportionally
    freq = np.floor(p / p.sum() * (TOTAL - n)).astype(np.int64) + 1
    freq[np.argmax(freq[:-1])] += TOTAL - freq.sum()
    cumulative = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(freq, out=cumulative[1:])
    return PmfTable(q_min, q_max, cumulative)


@kernel
def _encode_kernel(slots, raws, cum, escape, out):
    low = 0
    high = _FULL
    pending = 0
    nbits = 0
    for i in range(slots.shape[0]):
        for part in range(2):
            if part == 0:
                s = slots[i]
                c_lo = cum[s]
                c_hi = cum[s + 1]
                total = cum[cum.shape[0] - 1]
            else:
                if slots[i] != escape:
                    break
                c_lo = raws[i] & 0xFFFF
                c_hi = c_lo + 1
                total = 1 << 16
            span = high - low + 1
            high = low + (span * c_hi) // total - 1
            low = low + (span * c_lo) // total
            while True:
                if high < _HALF:
                    out[nbits] = 0
                    nbits += 1
                    for _ in range(pending):
                        out[nbits] = 1
                        nbits += 1
                    pending = 0
                elif low >= _HALF:
                    out[nbits] = 1
                    nbits += 1
                    for _ in range(pending):
                        out[nbits] = 0
                        nbits += 1
                    pending = 0
                    low -= _HALF
                    high -= _HALF
                elif low >= _QUARTER and high < 3 * _QUARTER:
                    pending += 1
                    low -= _QUARTER
                    high -= _QUARTER
                else:
                    break
                low = 2 * low
                high = 2 * high + 1
    # two bits (plus pending) select QUARTER or HALF, both inside [low, high]
    pending += 1
    bit = 0 if low < _QUARTER else 1
    out[nbits] = bit
    nbits += 1
    for _ in range(pending):
        out[nbits] = 1 - bit
        nbits += 1
    return nbits


@kernel
def _decode_kernel(bits, nbits, n, cum, escape, out_slots, out_raws):
    """Returns the number of bits read past the end, or -1 on truncation."""
    low = 0
    high = _FULL
    value = 0
    pos = 0
    for _ in range(32):
        b = 0
        if pos < nbits:
            b = bits[pos]
        value = 2 * value + b
        pos += 1
    n_slots = cum.shape[0] - 1
    for i in range(n):
        for part in range(2):
            if part == 0:
                total = cum[n_slots]
            else:
                if out_slots[i] != escape:
                    break
                total = 1 << 16
            span = high - low + 1
            target = ((value - low + 1) * total - 1) // span
            if part == 0:
                lo_i = 0
                hi_i = n_slots
                while hi_i - lo_i > 1:
                    mid = (lo_i + hi_i) // 2
                    if cum[mid] <= target:
                        lo_i = mid
                    else:
                        hi_i = mid
                out_slots[i] = lo_i
                c_lo = cum[lo_i]
                c_hi = cum[lo_i + 1]
            else:
                raw = target
                if raw >= 1 << 15:
                    raw -= 1 << 16
                out_raws[i] = raw
                c_lo = target
                c_hi = target + 1
            high = low + (span * c_hi) // total - 1
            low = low + (span * c_lo) // total
            while True:
                if high < _HALF:
                    pass
                elif low >= _HALF:
                    low -= _HALF
                    high -= _HALF
                    value -= _HALF
                elif low >= _QUARTER and high < 3 * _QUARTER:
                    low -= _QUARTER
                    high -= _QUARTER
                    value -= _QUARTER
                else:
                    break
                b = 0
                if pos < nbits:
                    b = bits[pos]
                pos += 1
                if pos - nbits > 32:
                    return -1
                low = 2 * low
                high = 2 * high + 1
                value = 2 * value + b
    return max(0, pos - nbits)


def _symbols_array(symbols):
    if isinstance(symbols, QuantizedVector):
        symbols = symbols.symbols
    return np.asarray(symbols, dtype=np.int64).ravel()


def encode(symbols, table):
    q = _symbols_array(symbols)
    if q.size and (q.min() < RAW_MIN or q.max() > RAW_MAX):
        bad = q[(q < RAW_MIN) | (q > RAW_MAX)][0]
        raise SymbolOverflow(f"symbol {bad} outside 16-bit escape range")
    inside = (q >= table.q_min) & (q <= table.q_max)
    slots = np.where(inside, q - table.q_min, table.escape).astype(np.int64)
    out = np.zeros(_BITS_PER_SYMBOL_BOUND * q.size + 64, dtype=np.uint8)
    nbits = int(_encode_kernel(slots, q, table.cumulative, table.escape, out))
    return Bitstream(np.packbits(out[:nbits]).tobytes(), nbits)


def decode(stream, n, table):
    """Decode ``n`` symbols. A smaller ``n`` than was encoded yields the
    matching prefix; asking for symbols the stream cannot supply raises
    :class:`TruncatedStream`."""
    bits = np.unpackbits(np.frombuffer(stream.data, dtype=np.uint8))[: stream.bit_count]
    bits = np.ascontiguousarray(bits, dtype=np.int64)
    slots = np.zeros(n, dtype=np.int64)
    raws = np.zeros(n, dtype=np.int64)
    status = _decode_kernel(bits, stream.bit_count, n, table.cumulative, table.escape, slots, raws)
    if status < 0:
        raise TruncatedStream(f"stream of {stream.bit_count} bits exhausted before {n} symbols")
    q = np.where(slots == table.escape, raws, slots + table.q_min)
    return QuantizedVector(q.astype(np.int64))
