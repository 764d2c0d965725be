"""Per-validator logistic scorer and the adaptive accept/reject thresholds.

The estimator follows the scikit-learn conventions (``fit`` / ``predict`` /
``predict_proba`` / ``get_params``) so it can be dropped into pipelines or
cross-validation, but the optimiser is a plain full-batch gradient descent on
the mean log loss with a small ridge penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

N_FEATURES = 5


def sigmoid(z):
    """Logistic function that neither overflows nor loses precision in the tails."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ThresholdParams:
    mu1: float = 1.0
    mu2: float = 0.5

    def __post_init__(self):
        if not 0 <= self.mu2 < self.mu1:
            raise ValueError(f"need 0 <= mu2 < mu1, got mu1={self.mu1}, mu2={self.mu2}")


@dataclass(frozen=True)
class WeightVector:
    """Fitted scorer state: coefficients on standardized attributes plus the
    standardization constants they were fitted with."""

    weights: tuple[float, ...]
    bias: float = 0.0
    mean: tuple[float, ...] = (0.0,) * N_FEATURES
    scale: tuple[float, ...] = (1.0,) * N_FEATURES

    def __post_init__(self):
        for name in ("weights", "mean", "scale"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_FEATURES,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be {N_FEATURES} finite numbers")
        if not np.isfinite(self.bias):
            raise ValueError("bias must be finite")
        if np.any(np.asarray(self.scale) <= 0):
            raise ValueError("scale entries must be positive")

    def linear(self, X):
        """Raw attributes -> logit, for a single row or a 2-D batch."""
        X = np.asarray(X, dtype=float)
        Z = (X - np.asarray(self.mean)) / np.asarray(self.scale)
        return Z @ np.asarray(self.weights) + self.bias

    def to_record(self):
        return {
            "weights": list(self.weights),
            "bias": self.bias,
            "mean": list(self.mean),
            "scale": list(self.scale),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            weights=tuple(float(x) for x in rec["weights"]),
            bias=float(rec["bias"]),
            mean=tuple(float(x) for x in rec["mean"]),
            scale=tuple(float(x) for x in rec["scale"]),
        )

    def restandardize(self, mean, scale):
        """Same raw-space decision function, expressed in new standardization."""
        mean = np.asarray(mean, dtype=float)
        scale = np.asarray(scale, dtype=float)
        w_raw = np.asarray(self.weights) / np.asarray(self.scale)
        b_raw = self.bias - w_raw @ np.asarray(self.mean)
        weights = w_raw * scale
        bias = b_raw + w_raw @ mean
        return WeightVector(tuple(weights), float(bias), tuple(mean), tuple(scale))


def _as_row(a):
    if hasattr(a, "as_tuple"):
        return np.asarray(a.as_tuple(), dtype=float)
    return np.asarray(a, dtype=float)


def score(a, y: WeightVector):
    """sigmoid(a^T y + bias) for one attribute vector."""
    return float(sigmoid(y.linear(_as_row(a))))


def thresholds(a, y: WeightVector, params: ThresholdParams = ThresholdParams()):
    """Acceptance and rejection thresholds ``(eta1, eta2)`` for one transaction."""
    half = score(a, y) / 2.0
    return params.mu1 - half, params.mu2 - half


def thresholds_many(X, y: WeightVector, params: ThresholdParams = ThresholdParams()):
    half = sigmoid(y.linear(X)) / 2.0
    return params.mu1 - half, params.mu2 - half


def loss_and_gradient(theta, Z, labels, reg, center=None):
    """Mean log loss plus ``reg * ||w - center||^2 / 2`` and its gradient.

    ``theta`` stacks the coefficients followed by the bias; ``Z`` is already
    standardized. ``center`` defaults to the origin (plain ridge). The bias is
    not penalised.
    """
    w, b = theta[:-1], theta[-1]
    d = w if center is None else w - center
    z = Z @ w + b
    # log(1 + e^z) - y*z, written to stay finite for large |z|
    loss = np.mean(np.logaddexp(0.0, z) - labels * z) + 0.5 * reg * (d @ d)
    resid = sigmoid(z) - labels
    grad = np.empty_like(theta)
    grad[:-1] = Z.T @ resid / len(labels) + reg * d
    grad[-1] = resid.mean()
    return float(loss), grad


class LogisticScorer(ClassifierMixin, BaseEstimator):
    """Logistic model over the five transaction attributes.

    Parameters
    ----------
    reg : float
        Ridge coefficient on the standardized coefficients.
    step_size : float
        Fixed gradient-descent step.
    max_iter : int
        Iteration budget.
    tol : float
        Stop once the gradient's infinity norm drops below this.
    warm_start : bool
        Start from the previous fit (re-expressed in the new standardization)
        instead of from zero.
    mu1, mu2 : float
        Offsets of the acceptance / rejection thresholds.
    """

    def __init__(self, reg=1e-4, step_size=0.5, max_iter=2000, tol=1e-8,
                 warm_start=False, mu1=1.0, mu2=0.5):
        self.reg = reg
        self.step_size = step_size
        self.max_iter = max_iter
        self.tol = tol
        self.warm_start = warm_start
        self.mu1 = mu1
        self.mu2 = mu2

    def fit(self, X, y, init: WeightVector | None = None, prior: WeightVector | None = None):
        """Gradient descent from ``init`` (or zero).

        ``prior`` moves the ridge penalty's center from the origin to the
        given weights, so a fit on a handful of examples stays close to it.
        """
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} attributes, got {X.shape[1]}")
        self.classes_ = np.unique(y)
        if not np.array_equal(self.classes_, [0, 1]):
            raise ValueError(f"labels must contain both 0 and 1, got {self.classes_}")
        labels = y.astype(float)

        # with a prior, keep its units so the penalty means the same on any window
        mean, scale = _standardizer(X, prior)
        Z = (X - mean) / scale

        if init is None and self.warm_start and hasattr(self, "weight_vector_"):
            init = self.weight_vector_
        theta = np.zeros(N_FEATURES + 1)
        if init is not None:
            start = init.restandardize(mean, scale)
            theta[:-1] = start.weights
            theta[-1] = start.bias

        center = None
        if prior is not None:
            center = np.asarray(prior.restandardize(mean, scale).weights, dtype=float)

        losses = []
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            loss, grad = loss_and_gradient(theta, Z, labels, self.reg, center)
            losses.append(loss)
            if np.max(np.abs(grad)) < self.tol:
                break
            theta -= self.step_size * grad
        self.n_iter_ = n_iter
        self.loss_curve_ = losses
        self.weight_vector_ = WeightVector(
            tuple(theta[:-1]), float(theta[-1]), tuple(mean), tuple(scale)
        )
        self.coef_ = theta[:-1].reshape(1, -1)
        self.intercept_ = theta[-1:].copy()
        self.n_features_in_ = N_FEATURES
        return self

    def decision_function(self, X):
        check_is_fitted(self, "weight_vector_")
        X = check_array(X, dtype=float)
        return self.weight_vector_.linear(X)

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(int)

    def thresholds(self, X):
        check_is_fitted(self, "weight_vector_")
        X = check_array(X, dtype=float)
        return thresholds_many(X, self.weight_vector_, ThresholdParams(self.mu1, self.mu2))


def train(X, y, reg=1e-4, step_size=0.5, max_iter=2000, tol=1e-8, init=None, prior=None):
    """Fit a :class:`WeightVector`; returns ``None`` when only one label is present."""
    y = np.asarray(y)
    if y.size == 0 or np.unique(y).size < 2:
        return None
    model = LogisticScorer(reg=reg, step_size=step_size, max_iter=max_iter, tol=tol)
    return model.fit(X, y, init=init, prior=prior).weight_vector_


def retrain_epoch_hook(current: WeightVector, window, epoch, cadence, warm_start=True,
                       **train_opts):
    """Retrain on the validator's decided window at multiples of ``cadence``.

    ``window`` is a sequence of ``(attribute_row, consensus_label)`` pairs.
    With ``warm_start`` the descent starts from ``current``, which keeps small
    windows from discarding what earlier fits learned. Returns the new
    weights, or ``None`` when no retrain happens (off-cadence, empty window,
    or a single label).
    """
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    if epoch == 0 or epoch % cadence:
        return None
    if not window:
        return None
    X = np.array([row for row, _ in window], dtype=float)
    y = np.array([label for _, label in window], dtype=int)
    return train(X, y, init=current if warm_start else None, **train_opts)


def _standardizer(X, prior):
    if prior is not None:
        return np.asarray(prior.mean, dtype=float), np.asarray(prior.scale, dtype=float)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def train_batch(problems, reg=1e-4, step_size=0.5, max_iter=2000, tol=1e-8):
    """Run :func:`train` on many independent problems at once.

    ``problems`` is a sequence of ``(X, y, init, prior)`` tuples. The descent
    is the same per problem (same start, step, stopping rule); problems are
    padded into one array so each iteration is a handful of vector ops
    instead of one Python call per validator. Single-class problems yield
    ``None``.
    """
    results: list[WeightVector | None] = [None] * len(problems)
    live = []
    for i, (X, y, init, prior) in enumerate(problems):
        y = np.asarray(y)
        if y.size and np.unique(y).size == 2:
            live.append(i)
    if not live:
        return results
    K = len(live)
    n_max = max(len(problems[i][1]) for i in live)
    Z = np.zeros((K, n_max, N_FEATURES))
    labels = np.zeros((K, n_max))
    mask = np.zeros((K, n_max))
    theta = np.zeros((K, N_FEATURES + 1))
    center = np.zeros((K, N_FEATURES))
    means, scales = [], []
    for row, i in enumerate(live):
        X, y, init, prior = problems[i]
        X = np.asarray(X, dtype=float)
        mean, scale = _standardizer(X, prior)
        means.append(mean)
        scales.append(scale)
        n = len(y)
        Z[row, :n] = (X - mean) / scale
        labels[row, :n] = y
        mask[row, :n] = 1.0
        if init is not None:
            start = init.restandardize(mean, scale)
            theta[row, :-1] = start.weights
            theta[row, -1] = start.bias
        if prior is not None:
            center[row] = prior.restandardize(mean, scale).weights
    counts = mask.sum(axis=1)
    active = np.ones(K, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        w, b = theta[idx, :-1], theta[idx, -1]
        z = np.einsum("knd,kd->kn", Z[idx], w) + b[:, None]
        resid = (sigmoid(z) - labels[idx]) * mask[idx]
        grad = np.empty((idx.size, N_FEATURES + 1))
        grad[:, :-1] = np.einsum("knd,kn->kd", Z[idx], resid) / counts[idx, None] + reg * (w - center[idx])
        grad[:, -1] = resid.sum(axis=1) / counts[idx]
        done = np.max(np.abs(grad), axis=1) < tol
        step = idx[~done]
        theta[step] -= step_size * grad[~done]
        active[idx[done]] = False
    for row, i in enumerate(live):
        results[i] = WeightVector(
            tuple(theta[row, :-1]), float(theta[row, -1]), tuple(means[row]), tuple(scales[row])
        )
    return results
