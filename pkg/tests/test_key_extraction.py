import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pufauth.errors import CapacityError, CorruptHelperError, DegenerateInputError, PinDerivationError, ShapeError
from pufauth.key_extraction import (
    Bits,
    HelperData,
    Pin,
    binarize,
    derive_pin,
    derive_pins,
    enroll_key,
    hamming_distance,
    reproduce_key,
    reproduce_keys,
)
from pufauth.puf_model import P_DEF, LightParams, NoiseModel, SpecklePattern, interrogate, interrogate_many

bits_st = st.lists(st.integers(0, 1), min_size=1, max_size=300)


def _pin_oracle(bits):
    """Reference: scan 14-character windows of the bit string as base-2 integers."""
    s = "".join(map(str, bits))
    for i in range(0, len(s) - 13, 14):
        v = int(s[i : i + 14], 2)
        if v < 10_000:
            return v
    return None


@given(bits_st)
def test_bits_bytes_round_trip(bits):
    b = Bits(bits)
    assert Bits.from_bytes(b.to_bytes(), len(b)) == b
    assert Bits.from_hex(b.hex(), len(b)) == b
    assert b.to_string() == "".join(map(str, bits))


@given(bits_st, st.data())
def test_xor_algebra(bits, data):
    a = Bits(bits)
    b = Bits(data.draw(st.lists(st.integers(0, 1), min_size=len(bits), max_size=len(bits))))
    c = Bits(data.draw(st.lists(st.integers(0, 1), min_size=len(bits), max_size=len(bits))))
    assert a ^ a == Bits.zeros(len(a))
    assert a ^ b == b ^ a
    assert (a ^ b) ^ c == a ^ (b ^ c)
    assert (a ^ b) ^ b == a
    assert hamming_distance(a, b) == sum(x != y for x, y in zip(a, b))


def test_bits_validation():
    with pytest.raises(ValueError):
        Bits([0, 2])
    with pytest.raises(ShapeError):
        Bits([0, 1]) ^ Bits([0])
    with pytest.raises(ValueError):
        Bits.from_bytes(b"\x01", 7)  # nonzero padding bit
    with pytest.raises(ValueError):
        Bits.from_bytes(b"\x00\x00", 8)
    assert ~Bits([0, 1]) == Bits([1, 0])
    assert hash(Bits([1, 0, 1])) == hash(Bits(np.array([1, 0, 1])))


def test_binarize_matches_median_oracle(rng):
    x = rng.exponential(size=101)
    raw = binarize(SpecklePattern(x))
    med = statistics.median(x.tolist())
    assert raw.bits.tolist() == [int(v > med) for v in x]
    assert np.allclose(raw.reliability, [abs(v - med) for v in x])
    with pytest.raises(DegenerateInputError):
        binarize(SpecklePattern(np.ones(10)))


def test_enroll_key_selects_extremes(token_pair):
    s = interrogate(token_pair[0], P_DEF)
    key, helper = enroll_key(s, 32)
    x = s.intensities
    order = np.argsort(x)
    extremes = set(order[:96].tolist()) | set(order[-96:].tolist())
    pos = helper.positions
    assert len(key) == len(helper) == 32
    assert set(pos.ravel().tolist()) <= extremes
    # each triple is entirely bright or entirely dark and votes unanimously
    bits = binarize(s).bits[pos]
    assert np.all(bits.min(axis=1) == bits.max(axis=1))
    assert np.array_equal(bits[:, 0], key.array)
    assert np.unique(pos).size == pos.size


def test_enroll_then_reproduce_noiseless(token_pair):
    s = interrogate(token_pair[1], LightParams(5, (2, 2), 2, 3))
    key, helper = enroll_key(s, 128)
    assert reproduce_key(s, helper) == key


def test_key_stable_under_nominal_noise(token_pair):
    t = token_pair[0]
    p = LightParams(7, (4, 1), 6, 12)
    key, helper = enroll_key(interrogate(t, p), 128)
    noise = NoiseModel(0.02, 3)
    assert all(reproduce_key(interrogate(t, p, noise), helper) == key for _ in range(50))


def test_batch_reproduction_matches_single_path(token_pair):
    """Oracle for the vectorized path: the scalar path on the same noise stream."""
    t = token_pair[0]
    p = LightParams(1, (0, 5), 4, 8)
    _, helper = enroll_key(interrogate(t, p), 128)
    batch = reproduce_keys(interrogate_many(t, p, NoiseModel(0.5, 21), 20), helper)
    noise = NoiseModel(0.5, 21)
    single = np.array([reproduce_key(interrogate(t, p, noise), helper).array for _ in range(20)])
    assert np.array_equal(batch, single)


def test_capacity_error(token_pair):
    s = interrogate(token_pair[0], P_DEF)
    with pytest.raises(CapacityError):
        enroll_key(s, len(s) // 6 + 1)
    with pytest.raises(CapacityError):
        enroll_key(s, 0)
    enroll_key(s, len(s) // 6)


def test_reproduce_rejects_bad_helpers(token_pair):
    s = interrogate(token_pair[0], P_DEF)
    with pytest.raises(CorruptHelperError):
        reproduce_key(s, HelperData(((0, 1, len(s)),)))
    with pytest.raises(CorruptHelperError):
        reproduce_key(s, HelperData(()))
    with pytest.raises(CorruptHelperError):
        HelperData(((0, 1),))
    with pytest.raises(CorruptHelperError):
        HelperData(((0, 1, 1),))
    with pytest.raises(CorruptHelperError):
        HelperData(((0, 1, -2),))
    with pytest.raises(CorruptHelperError):
        HelperData.from_lines("1 2 x\n")


def test_helper_lines_round_trip(token_pair):
    _, h = enroll_key(interrogate(token_pair[0], P_DEF), 16)
    assert HelperData.from_lines(h.to_lines()) == h


def test_helper_holds_no_key_values(token_pair):
    """Helper data lists positions only; bright and dark choices cannot be told apart by order."""
    s = interrogate(token_pair[0], P_DEF)
    key, helper = enroll_key(s, 128)
    assert all(a < b < c for a, b, c in helper.groups)
    assert set(helper.to_lines()) <= set("0123456789 \n")


@given(st.lists(st.integers(0, 1), min_size=42, max_size=200))
def test_derive_pin_matches_oracle(bits):
    expected = _pin_oracle(bits)
    if expected is None:
        with pytest.raises(PinDerivationError):
            derive_pin(Bits(bits))
    else:
        assert derive_pin(Bits(bits)).value == expected


def test_derive_pin_examples():
    # first window 10011100001111 = 9999 accepted
    assert derive_pin(Bits([int(c) for c in "10011100001111" + "0" * 28])).value == 9999
    # 10000 rejected, next window used
    assert derive_pin(Bits([int(c) for c in "10011100010000" + "00000000000111" + "0" * 14])).value == 7
    with pytest.raises(ShapeError):
        derive_pin(Bits([0] * 41))
    with pytest.raises(PinDerivationError):
        derive_pin(Bits([1] * 42))


def test_derive_pins_vectorized(rng):
    keys = rng.integers(0, 2, size=(300, 42), dtype=np.uint8)
    pins = derive_pins(keys)
    for row, p in zip(keys, pins):
        o = _pin_oracle(row.tolist())
        assert p == (-1 if o is None else o)


def test_pin_parse_and_format():
    assert str(Pin(7)) == "0007"
    assert Pin.parse("0420") == Pin(420)
    for bad in ("123", "12345", "12a4"):
        with pytest.raises(ValueError):
            Pin.parse(bad)
    with pytest.raises(ValueError):
        Pin(10_000)


def test_keys_are_balanced_per_position(token_pair):
    """Each position's frequency of ones over 100 tokens x 10 challenges stays in [0.4, 0.6]."""
    from pufauth.puf_model import TokenDisorder, random_params

    rng = np.random.default_rng(99)
    mat = []
    for _ in range(100):
        t = TokenDisorder.random(rng)
        for _ in range(10):
            mat.append(enroll_key(interrogate(t, random_params(rng)), 128)[0].array)
    freq = np.array(mat).mean(axis=0)
    assert freq.min() >= 0.4 and freq.max() <= 0.6
    assert abs(freq.mean() - 0.5) < 0.02
