"""Sinusoidal positional encoding of joint-angle vectors.

Each scalar ``x_i`` is expanded to ``[x_i, sin(2^0 pi x_i), cos(2^0 pi x_i),
..., sin(2^(L-1) pi x_i), cos(2^(L-1) pi x_i)]`` and the groups are laid out
one input scalar after another ("per-scalar-grouped"). With ``L = 0`` the
input passes through untouched.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionMismatch

MAX_LEVEL = 32
LAYOUT = "per-scalar-grouped"


def _check_level(level) -> int:
    if isinstance(level, bool) or int(level) != level or not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"encoding level must be an integer in [0, {MAX_LEVEL}], got {level!r}")
    return int(level)


def encoded_length(d: int, level: int) -> int:
    """Width of the encoded vector: ``d * (1 + 2L)``."""
    if d < 1:
        raise ValueError("d must be positive")
    return d * (1 + 2 * _check_level(level))


def encode_batch(xs, level: int) -> np.ndarray:
    """Encode every row of an (m, d) array; returns (m, d * (1 + 2L))."""
    level = _check_level(level)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise DimensionMismatch("encode_batch expects a 2-D array")
    if level == 0:
        return xs.copy()
    m, d = xs.shape
    freqs = np.pi * 2.0 ** np.arange(level)
    ang = xs[:, :, None] * freqs                      # (m, d, L)
    pairs = np.stack([np.sin(ang), np.cos(ang)], axis=-1).reshape(m, d, 2 * level)
    return np.concatenate([xs[:, :, None], pairs], axis=2).reshape(m, d * (1 + 2 * level))


def encode(x, level: int) -> np.ndarray:
    """Encode a single vector of ``d`` scalars."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("encode expects a 1-D vector")
    return encode_batch(x[None], level)[0]


class PositionalEncoder(TransformerMixin, BaseEstimator):
    """Stateless transformer wrapper around :func:`encode_batch`.

    Parameters
    ----------
    level : int, default=0
        Number of sin/cos frequency pairs per input scalar.
    """

    def __init__(self, level=0):
        self.level = level

    def fit(self, X, y=None):
        _check_level(self.level)
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.n_features_out_ = encoded_length(X.shape[1], self.level)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"encoder was fitted on {self.n_features_in_} features, got {X.shape[1]}"
            )
        return encode_batch(X, self.level)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "n_features_in_")
        if input_features is None:
            input_features = [f"x{i}" for i in range(self.n_features_in_)]
        names = []
        for f in input_features:
            names.append(f)
            for j in range(self.level):
                names += [f"sin_{j}({f})", f"cos_{j}({f})"]
        return np.asarray(names, dtype=object)
