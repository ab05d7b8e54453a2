import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hercules.hadamard import (BiasSchedule, UnsupportedOrderError, decode, encode, sylvester,
                               transmit_polarity)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 128, 256])
def test_orthogonality_exact(n):
    h = sylvester(n)
    assert h.dtype == np.int64
    assert np.array_equal(h @ h.T, n * np.eye(n, dtype=np.int64))


def test_sylvester_order_2():
    assert sylvester(2).tolist() == [[1, 1], [1, -1]]


@pytest.mark.parametrize("n", [0, 3, 6, 12, 100, 2.5])
def test_unsupported_order(n):
    with pytest.raises(UnsupportedOrderError, match="arbitrary number"):
        sylvester(n)


def test_first_row_all_plus_and_balanced_rows():
    h = sylvester(16)
    assert np.all(h[0] == 1)
    assert np.all(h[1:].sum(axis=1) == 0)


def test_roundtrip_order_4(rng):
    s = rng.standard_normal((4, 3, 20))
    out = decode(encode(s, sylvester(4)), sylvester(4))
    assert np.max(np.abs(out - s)) <= 1e-12 * np.max(np.abs(s))


def test_encode_matches_matrix_product(rng):
    h = sylvester(8)
    s = rng.standard_normal((8, 5, 7))
    np.testing.assert_allclose(encode(s, h), np.einsum("er,rct->ect", h, s), rtol=1e-13)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        encode(np.zeros((4, 2, 3)), sylvester(8))
    with pytest.raises(ValueError):
        decode(np.zeros((8, 2, 3)), sylvester(4))
    with pytest.raises(ValueError):
        decode(np.zeros((4, 2, 3)), np.ones((4, 3)))


def test_transmit_polarity_cancels_bias():
    sched = BiasSchedule.hadamard(8)
    for e in range(8):
        assert np.all(transmit_polarity(sched, e) * sched.signs[e] == 1)
    with pytest.raises(IndexError):
        transmit_polarity(sched, 8)


def test_bias_schedule_csv(tmp_path):
    sched = BiasSchedule.hadamard(16)
    sched.to_csv(tmp_path / "bias.csv")
    back = BiasSchedule.from_csv(tmp_path / "bias.csv")
    assert np.array_equal(back.signs, sched.signs)
    assert BiasSchedule.uniform(3, 4).is_uniform and not sched.is_uniform
    with pytest.raises(ValueError):
        BiasSchedule(np.array([[1, 0]]))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([1, 2, 4, 8, 16, 32, 64, 128]), st.integers(1, 4), st.integers(1, 16), st.integers(0, 2 ** 32 - 1))
def test_roundtrip_property(n, n_c, n_t, seed):
    s = np.random.default_rng(seed).standard_normal((n, n_c, n_t))
    h = sylvester(n)
    out = decode(encode(s, h), h)
    assert np.max(np.abs(out - s)) <= 1e-10 * max(np.max(np.abs(s)), 1e-300)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 4, 8, 16]), st.integers(0, 2 ** 32 - 1))
def test_encode_is_linear(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, n, 3, 5))
    k = rng.standard_normal()
    h = sylvester(n)
    np.testing.assert_allclose(encode(a + k * b, h), encode(a, h) + k * encode(b, h), rtol=1e-12, atol=1e-12)
