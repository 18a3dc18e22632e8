"""Classical binary classifiers: k-nearest neighbours, Gaussian naive Bayes, LDA.

Each is a small scikit-learn style estimator; ``knn_fit``/``knn_predict`` and
friends are thin functional wrappers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionMismatch, EmptyDataset, SingleClassData, SingularCovariance

VAR_FLOOR = 1e-9
LDA_RIDGE = 1e-6


def _check_training(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("training data must be a non-empty 2-D array")
    if len(y) != len(X):
        raise DimensionMismatch(f"{len(X)} samples but {len(y)} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    return X, y.astype(np.int64)


def _check_query(est, X):
    check_is_fitted(est, "n_features_in_")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None]
    if X.ndim != 2 or X.shape[1] != est.n_features_in_:
        raise DimensionMismatch(f"expected {est.n_features_in_} features, got shape {X.shape}")
    return X, single


def _both_classes(y):
    if np.all(y == y[0]):
        raise SingleClassData(f"training labels are all {int(y[0])}")


class KNNClassifier(ClassifierMixin, BaseEstimator):
    """Exhaustive Euclidean k-NN with majority vote.

    Distances are screened with a matrix product, then every point that could
    be among the k nearest is re-ranked by its exactly computed squared
    distance, ties broken by training index. A tied vote takes the label of
    the single nearest point.
    """

    def __init__(self, k=5, chunk_size=128):
        self.k = k
        self.chunk_size = chunk_size

    def fit(self, X, y):
        X, y = _check_training(X, y)
        if not 1 <= self.k <= len(X):
            raise ValueError(f"k={self.k} needs between 1 and {len(X)} training points")
        self.points_ = X
        self.labels_ = y
        self.sq_norms_ = np.einsum("ij,ij->i", X, X)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def kneighbors(self, X):
        """Indices (m, k) of the nearest training points, closest first."""
        X, _ = _check_query(self, X)
        out = np.empty((len(X), self.k), dtype=np.int64)
        for s in range(0, len(X), self.chunk_size):
            out[s:s + self.chunk_size] = self._chunk_neighbours(X[s:s + self.chunk_size])
        return out

    def _chunk_neighbours(self, Q):
        P, k = self.points_, self.k
        m = len(P)
        q_norms = np.einsum("ij,ij->i", Q, Q)
        # |q - p|^2 - |q|^2, ranked per row; |q|^2 is constant within a row
        approx = Q @ P.T
        approx *= -2.0
        approx += self.sq_norms_
        # bound on the rounding error of the expanded form
        slack = 1e-12 * P.shape[1] * (q_norms + self.sq_norms_.max()) + 1e-300
        extra = min(self.k + 8, m) - 1
        if extra > k - 1:
            pool = np.argpartition(approx, extra, axis=1)[:, : extra + 1]
            vals = np.take_along_axis(approx, pool, axis=1)
            kth = np.partition(vals[:, :extra], k - 1, axis=1)[:, k - 1]
            # the pool holds every near-tie when its boundary member is clearly farther
            ok = vals[:, extra] > kth + 2 * slack
        else:
            ok = np.zeros(len(Q), dtype=bool)
        rows_ok = np.nonzero(ok)[0]
        rows = [np.repeat(rows_ok, extra)]
        cols = [pool[rows_ok, :extra].ravel()] if len(rows_ok) else [np.zeros(0, dtype=np.int64)]
        bad = np.nonzero(~ok)[0]
        if len(bad):
            sub = approx[bad]
            kth = np.partition(sub, k - 1, axis=1)[:, k - 1:k]
            r, c = np.nonzero(sub <= kth + 2 * slack[bad, None])
            rows.append(bad[r])
            cols.append(c)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        exact = np.sum((P[cols] - Q[rows]) ** 2, axis=1)
        order = np.lexsort((cols, exact, rows))
        rows, cols = rows[order], cols[order]
        starts = np.searchsorted(rows, np.arange(len(Q)))
        return cols[starts[:, None] + np.arange(k)]

    def predict(self, X):
        single = np.asarray(X).ndim == 1
        nbrs = self.kneighbors(X)
        votes = self.labels_[nbrs]
        ones = votes.sum(axis=1)
        pred = np.where(2 * ones > self.k, 1, 0)
        tie = 2 * ones == self.k
        pred[tie] = votes[tie, 0]
        return int(pred[0]) if single else pred


class GaussianNBClassifier(ClassifierMixin, BaseEstimator):
    """Per-class diagonal Gaussians; variances floored at ``var_floor``."""

    def __init__(self, var_floor=VAR_FLOOR):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = _check_training(X, y)
        _both_classes(y)
        self.theta_ = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.maximum(np.stack([X[y == c].var(axis=0) for c in (0, 1)]), self.var_floor)
        counts = np.array([np.sum(y == 0), np.sum(y == 1)], dtype=np.float64)
        self.class_prior_ = counts / counts.sum()
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def joint_log_likelihood(self, X):
        X, _ = _check_query(self, X)
        out = np.empty((len(X), 2))
        for c in (0, 1):
            var = self.var_[c]
            out[:, c] = np.log(self.class_prior_[c]) - 0.5 * (
                np.sum(np.log(2 * np.pi * var)) + np.sum((X - self.theta_[c]) ** 2 / var, axis=1)
            )
        return out

    def predict(self, X):
        single = np.asarray(X).ndim == 1
        jll = self.joint_log_likelihood(X)
        pred = (jll[:, 1] > jll[:, 0]).astype(np.int64)
        return int(pred[0]) if single else pred


class LDAClassifier(ClassifierMixin, BaseEstimator):
    """Fisher discriminant: ``w = (S + ridge*I)^-1 (mu1 - mu0)``.

    Predicts 1 when ``w.x > threshold_``, where the threshold is the projected
    midpoint of the class means shifted by the log prior ratio.
    """

    def __init__(self, ridge=LDA_RIDGE):
        self.ridge = ridge

    def fit(self, X, y):
        X, y = _check_training(X, y)
        _both_classes(y)
        n0, n1 = int(np.sum(y == 0)), int(np.sum(y == 1))
        if min(n0, n1) < 2:
            raise ValueError("LDA needs at least 2 samples per class")
        X0, X1 = X[y == 0], X[y == 1]
        mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
        C0, C1 = X0 - mu0, X1 - mu1
        cov = (C0.T @ C0 + C1.T @ C1) / (n0 + n1 - 2)
        cov = 0.5 * (cov + cov.T) + self.ridge * np.eye(X.shape[1])
        try:
            w = np.linalg.solve(cov, mu1 - mu0)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance(str(exc)) from None
        if not np.all(np.isfinite(w)):
            raise SingularCovariance("discriminant direction is not finite")
        self.covariance_ = cov
        self.means_ = np.stack([mu0, mu1])
        self.priors_ = np.array([n0, n1], dtype=np.float64) / (n0 + n1)
        self.coef_ = w
        self.threshold_ = 0.5 * (w @ mu0 + w @ mu1) - np.log(self.priors_[1] / self.priors_[0])
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        X, _ = _check_query(self, X)
        return X @ self.coef_ - self.threshold_

    def predict(self, X):
        single = np.asarray(X).ndim == 1
        pred = (self.decision_function(X) > 0).astype(np.int64)
        return int(pred[0]) if single else pred


def knn_fit(X, y, k=5) -> KNNClassifier:
    return KNNClassifier(k=k).fit(X, y)


def knn_predict(model: KNNClassifier, X):
    return model.predict(X)


def gnb_fit(X, y) -> GaussianNBClassifier:
    return GaussianNBClassifier().fit(X, y)


def gnb_predict(model: GaussianNBClassifier, X):
    return model.predict(X)


def lda_fit(X, y) -> LDAClassifier:
    return LDAClassifier().fit(X, y)


def lda_predict(model: LDAClassifier, X):
    return model.predict(X)
