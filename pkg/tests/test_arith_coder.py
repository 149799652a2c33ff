import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgeret import arith_coder as ac
from edgeret.entropy_model import GmmParams, QuantizedVector, init_params
from edgeret.errors import SupportTooWide, SymbolOverflow, TruncatedStream

STD = GmmParams.from_natural([1.0], [0.0], [1.0])
MIX = GmmParams.from_natural([0.6, 0.4], [0.0, 3.0], [1.5, 4.0])


def test_table_invariants():
    t = ac.build_table(init_params(9))
    assert t.cumulative[0] == 0
    assert t.cumulative[-1] == ac.TOTAL
    assert np.all(np.diff(t.cumulative) >= 1)
    assert t.cumulative.size == (t.q_max - t.q_min + 1) + 2


def test_table_unimodal_symmetry():
    t = ac.build_table(STD, (-8, 8))
    f = t.freqs
    zero = 0 - t.q_min
    assert f[zero] > f[zero + 1]
    assert f[zero + 1] == f[zero - 1]


def test_degenerate_support():
    t = ac.build_table(STD, (0, 0))
    assert t.freqs.size == 2 and np.all(t.freqs > 0)
    q = np.array([0, 3, 0, -2])
    np.testing.assert_array_equal(ac.decode(ac.encode(q, t), 4, t).symbols, q)


def test_support_too_wide():
    with pytest.raises(SupportTooWide):
        ac.build_table(STD, (-20000, 20000))


def test_empty_roundtrip():
    t = ac.build_table(STD)
    s = ac.encode(np.array([], dtype=np.int64), t)
    assert s.bit_count <= 32
    assert ac.decode(s, 0, t).symbols.size == 0


def test_small_roundtrip_and_escape():
    t = ac.build_table(MIX, (-8, 8))
    for q in ([0, 1, -1, 5, -7], [0, 100, -1], [32767, -32768, 9]):
        q = np.array(q)
        np.testing.assert_array_equal(ac.decode(ac.encode(q, t), q.size, t).symbols, q)


def test_symbol_overflow():
    with pytest.raises(SymbolOverflow):
        ac.encode(np.array([0, 40000]), ac.build_table(STD))


def test_decode_shorter_n_gives_prefix():
    t = ac.build_table(MIX)
    q = np.random.default_rng(0).integers(-10, 10, size=50)
    s = ac.encode(q, t)
    np.testing.assert_array_equal(ac.decode(s, 20, t).symbols, q[:20])


def test_truncated_stream():
    t = ac.build_table(MIX)
    q = np.random.default_rng(0).integers(-10, 10, size=200)
    s = ac.encode(q, t)
    short = ac.Bitstream(s.data[:4], 32)
    with pytest.raises(TruncatedStream):
        ac.decode(short, 200, t)


def test_bitstream_invariant_and_file_format(tmp_path):
    t = ac.build_table(MIX)
    s = ac.encode(np.arange(-5, 6), t)
    assert s.bit_count <= 8 * len(s.data) <= s.bit_count + 7
    path = tmp_path / "q.bin"
    ac.write_bitstream(path, s)
    raw = path.read_bytes()
    assert int.from_bytes(raw[:4], "little") == s.bit_count
    assert raw[4:] == s.data
    assert ac.read_bitstream(path) == s


def _table_samples(t, n, rng):
    """Draw slots from the table itself; escapes become out-of-support values."""
    slots = rng.choice(t.freqs.size, size=n, p=t.probabilities())
    q = slots + t.q_min
    q[slots == t.escape] = t.q_max + 1000
    return q, slots


def ideal_bits(t, slots):
    """Exact codelength of the quantized table: -log2 p(slot), plus 16 per escape."""
    p = t.probabilities()[slots]
    return float(-np.log2(p).sum() + 16 * np.sum(slots == t.escape))


def test_codelength_close_to_ideal():
    rng = np.random.default_rng(1)
    t = ac.build_table(MIX)
    q, slots = _table_samples(t, 10**4, rng)
    ideal = ideal_bits(t, slots)
    bits = ac.encode(q, t).bit_count
    assert bits <= ideal + 32 + 0.02 * ideal
    assert bits >= ideal - 1


def test_fuzz_roundtrip():
    rng = np.random.default_rng(2)
    t = ac.build_table(MIX)
    for _ in range(1000):
        n = int(rng.integers(0, 40))
        q = np.where(rng.random(n) < 0.05, rng.integers(-32768, 32768, n), rng.integers(-12, 15, n))
        np.testing.assert_array_equal(ac.decode(ac.encode(q, t), n, t).symbols, q)


@given(st.lists(st.integers(-32768, 32767), max_size=30),
       st.integers(-20, 0), st.integers(0, 20))
def test_roundtrip_property(symbols, lo, hi):
    t = ac.build_table(MIX, (lo, hi))
    q = QuantizedVector(np.array(symbols, dtype=np.int64))
    np.testing.assert_array_equal(ac.decode(ac.encode(q, t), len(symbols), t).symbols, q.symbols)
