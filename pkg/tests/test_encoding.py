import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from selfcollide.encoding import PositionalEncoder, encode, encode_batch, encoded_length
from selfcollide.errors import DimensionMismatch


def loop_encode(x, L):
    """Per-scalar grouping built one element at a time."""
    out = []
    for xi in x:
        out.append(xi)
        for j in range(L):
            out.append(np.sin(2.0 ** j * np.pi * xi))
            out.append(np.cos(2.0 ** j * np.pi * xi))
    return np.array(out)


class TestEncodedLength:
    @pytest.mark.parametrize("d,L,n", [(6, 0, 6), (6, 3, 42), (6, 20, 246), (2, 5, 22), (6, 1, 18)])
    def test_known_values(self, d, L, n):
        assert encoded_length(d, L) == n

    @pytest.mark.parametrize("L", [-1, 33, 1.5])
    def test_level_range(self, L):
        with pytest.raises(ValueError):
            encoded_length(6, L)

    def test_length_law(self):
        for d in (1, 2, 6):
            for L in range(21):
                assert len(encode(np.zeros(d), L)) == encoded_length(d, L) == d * (1 + 2 * L)


class TestEncode:
    def test_zeros_level_one(self):
        np.testing.assert_array_equal(encode(np.zeros(6), 1), [0, 0, 1] * 6)

    def test_level_zero_is_identity(self, rng):
        x = rng.normal(size=6)
        np.testing.assert_array_equal(encode(x, 0), x)

    def test_matches_loop(self, rng):
        x = rng.uniform(-np.pi, np.pi, size=6)
        for L in (1, 3, 7):
            np.testing.assert_array_equal(encode(x, L), loop_encode(x, L))

    def test_batch_rows_match_single(self, rng):
        xs = rng.uniform(-np.pi, np.pi, size=(100, 6))
        enc = encode_batch(xs, 4)
        for x, row in zip(xs, enc):
            np.testing.assert_array_equal(row, encode(x, 4))

    def test_empty_batch(self):
        assert encode_batch(np.zeros((0, 6)), 3).shape == (0, 42)

    def test_wrong_rank(self):
        with pytest.raises(DimensionMismatch):
            encode(np.zeros((2, 2)), 1)
        with pytest.raises(DimensionMismatch):
            encode_batch(np.zeros(3), 1)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, 6, elements=st.floats(-np.pi, np.pi)), st.integers(1, 12))
    def test_pythagorean_identity(self, x, L):
        e = encode(x, L).reshape(6, 1 + 2 * L)
        np.testing.assert_array_equal(e[:, 0], x)
        s, c = e[:, 1::2], e[:, 2::2]
        np.testing.assert_allclose(s ** 2 + c ** 2, 1.0, atol=1e-12)
        assert np.all(np.abs(e[:, 1:]) <= 1.0)


class TestSignGrid:
    def test_sixteen_cells(self):
        # quarter-cells of [-1, 1)^2 at level 1
        rng = np.random.default_rng(0)
        edges = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
        patterns = {}
        for i in range(4):
            for j in range(4):
                lo = np.array([edges[i], edges[j]])
                pts = lo + rng.uniform(0.02, 0.48, size=(50, 2))
                signs = np.sign(encode_batch(pts, 1)[:, [1, 2, 4, 5]])
                assert np.all(signs == signs[0])
                patterns[(i, j)] = tuple(signs[0])
        assert len(set(patterns.values())) == 16


class TestPositionalEncoder:
    def test_transform(self, rng):
        X = rng.normal(size=(10, 3))
        enc = PositionalEncoder(level=2).fit(X)
        np.testing.assert_array_equal(enc.transform(X), encode_batch(X, 2))
        assert enc.n_features_out_ == 15
        assert enc.get_params() == {"level": 2}

    def test_feature_names(self):
        enc = PositionalEncoder(level=1).fit(np.zeros((1, 2)))
        assert list(enc.get_feature_names_out()) == [
            "x0", "sin_0(x0)", "cos_0(x0)", "x1", "sin_0(x1)", "cos_0(x1)"
        ]

    def test_width_mismatch(self):
        enc = PositionalEncoder(level=1).fit(np.zeros((2, 6)))
        with pytest.raises(DimensionMismatch):
            enc.transform(np.zeros((2, 5)))
