"""Posterior estimators fitted on (possibly noisy) data, and the plug-in rule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Dataset
from .noise_channel import TransitionMatrix


class EstimatorError(ValueError):
    """Invalid estimator construction or query."""


class TrainingError(RuntimeError):
    """Numerical failure during iterative training."""


class PosteriorEstimate:
    """Fitted, immutable map from feature vectors to K-simplex vectors."""

    def __init__(self, k: int, meta: dict):
        self.k = k
        self.meta = dict(meta)

    def predict(self, X) -> np.ndarray:
        """Probability matrix of shape (n_queries, K)."""
        raise NotImplementedError

    def predict_one(self, x) -> np.ndarray:
        return self.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0]


def classify_argmax(est: PosteriorEstimate, x) -> int:
    """Plug-in decision: lowest-index argmax of the estimated posterior (1-based)."""
    return int(np.argmax(est.predict_one(x))) + 1


def classify_argmax_batch(est: PosteriorEstimate, X) -> np.ndarray:
    return np.argmax(est.predict(X), axis=1) + 1


def as_classifier(est: PosteriorEstimate):
    """Batch classifier callable X -> 1-based labels, for the evaluation module."""
    return lambda X: classify_argmax_batch(est, X)


# --- k-nearest-neighbor ------------------------------------------------------

class KnnPosterior(PosteriorEstimate):
    def __init__(self, train: Dataset, k_neighbors: int):
        super().__init__(
            train.k,
            {"family": "knn", "k_neighbors": k_neighbors, "n_train": train.n},
        )
        self._X = train.features
        self._labels = train.labels
        self._sq_norms = np.einsum("ij,ij->i", self._X, self._X)
        self._kn = k_neighbors

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self._X.shape[0]
        kn = self._kn
        out = np.empty((X.shape[0], self.k))
        chunk = max(1, int(8e6) // max(n, 1))
        for lo in range(0, X.shape[0], chunk):
            Q = X[lo : lo + chunk]
            D = self._sq_norms[None, :] - 2.0 * (Q @ self._X.T)
            D += np.einsum("ij,ij->i", Q, Q)[:, None]
            if kn >= n:
                idx = np.broadcast_to(np.arange(n), (Q.shape[0], n))
                neighbor_labels = self._labels[idx]
            else:
                kth = np.partition(D, kn - 1, axis=1)[:, kn - 1]
                idx = np.argpartition(D, kn - 1, axis=1)[:, :kn]
                neighbor_labels = self._labels[idx]
                # boundary ties: re-select those rows with index-order tie-breaking
                tied = np.nonzero((D <= kth[:, None]).sum(axis=1) > kn)[0]
                for r in tied:
                    below = np.nonzero(D[r] < kth[r])[0]
                    at = np.nonzero(D[r] == kth[r])[0]
                    sel = np.concatenate([below, at[: kn - below.size]])
                    neighbor_labels[r] = self._labels[sel]
            counts = np.zeros((Q.shape[0], self.k))
            np.add.at(
                counts,
                (np.repeat(np.arange(Q.shape[0]), kn if kn < n else n),
                 (neighbor_labels - 1).ravel()),
                1.0,
            )
            out[lo : lo + Q.shape[0]] = counts / counts.sum(axis=1, keepdims=True)
        return out


def fit_knn(train: Dataset, k_neighbors: int) -> PosteriorEstimate:
    """Neighborhood class frequencies under Euclidean distance; distance ties
    broken by training index."""
    if train.n == 0:
        raise EstimatorError("cannot fit on an empty dataset")
    if not 1 <= k_neighbors <= train.n:
        raise EstimatorError(f"k_neighbors={k_neighbors} outside [1, {train.n}]")
    return KnnPosterior(train, k_neighbors)


def default_k_neighbors(n: int) -> int:
    """ceil(sqrt(n)): grows without bound while k/n -> 0."""
    return math.ceil(math.sqrt(n))


# --- histogram ---------------------------------------------------------------

class HistogramPosterior(PosteriorEstimate):
    def __init__(self, train: Dataset, bin_width: float, empty_cell: str):
        super().__init__(
            train.k,
            {
                "family": "histogram",
                "bin_width": bin_width,
                "empty_cell": empty_cell,
                "n_train": train.n,
            },
        )
        self._h = bin_width
        cells: dict[tuple, np.ndarray] = {}
        keys = np.floor(train.features / bin_width).astype(int)
        for key, lab in zip(map(tuple, keys), train.labels):
            if key not in cells:
                cells[key] = np.zeros(train.k)
            cells[key][lab - 1] += 1.0
        self._cells = {key: c / c.sum() for key, c in cells.items()}
        if empty_cell == "uniform":
            self._fallback = np.full(train.k, 1.0 / train.k)
        elif empty_cell == "global":
            counts = np.bincount(train.labels - 1, minlength=train.k).astype(float)
            self._fallback = counts / counts.sum()
        else:
            raise EstimatorError(f"unknown empty-cell policy {empty_cell!r}")

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        keys = np.floor(X / self._h).astype(int)
        return np.array(
            [self._cells.get(tuple(key), self._fallback) for key in keys]
        )


def fit_histogram(
    train: Dataset, bin_width: float, empty_cell: str = "uniform"
) -> PosteriorEstimate:
    """Class frequencies in axis-aligned cubic cells anchored at the origin."""
    if train.n == 0:
        raise EstimatorError("cannot fit on an empty dataset")
    if bin_width <= 0:
        raise EstimatorError(f"bin_width must be positive, got {bin_width}")
    return HistogramPosterior(train, bin_width, empty_cell)


def default_bin_width(n: int, d: int) -> float:
    """n^(-1/(d+2)): shrinks while the expected per-cell count diverges."""
    return n ** (-1.0 / (d + 2))


# --- multilayer perceptron ---------------------------------------------------

@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 10
    momentum: float = 0.5
    init_scale: float | None = None  # None -> sqrt(2 / fan_in) per layer

    def __post_init__(self):
        if any(h < 1 for h in self.hidden):
            raise EstimatorError("hidden widths must be positive")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise EstimatorError("learning rate, batch size and epochs must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise EstimatorError("momentum must lie in [0, 1)")
        if self.init_scale is not None and self.init_scale <= 0:
            raise EstimatorError("init_scale must be positive")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MlpPosterior(PosteriorEstimate):
    def __init__(self, k: int, weights, biases, config: MlpConfig, n_train: int):
        super().__init__(
            k, {"family": "mlp", "config": config, "n_train": n_train}
        )
        self._W = weights
        self._b = biases

    def predict(self, X) -> np.ndarray:
        a = np.atleast_2d(np.asarray(X, dtype=float))
        for W, b in zip(self._W[:-1], self._b[:-1]):
            a = np.maximum(a @ W + b, 0.0)
        return _softmax(a @ self._W[-1] + self._b[-1])


def fit_mlp(train: Dataset, config: MlpConfig, rng: np.random.Generator) -> PosteriorEstimate:
    """Fully-connected ReLU network with softmax head, trained by mini-batch
    SGD with momentum on cross-entropy over the observed labels."""
    if train.n < config.batch_size:
        raise EstimatorError(
            f"n={train.n} smaller than batch size {config.batch_size}"
        )
    X, k = train.features, train.k
    onehot = np.zeros((train.n, k))
    onehot[np.arange(train.n), train.labels - 1] = 1.0

    sizes = [train.d, *config.hidden, k]
    W, b, vW, vb = [], [], [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = config.init_scale if config.init_scale is not None else math.sqrt(2.0 / fan_in)
        W.append(rng.standard_normal((fan_in, fan_out)) * scale)
        b.append(np.zeros(fan_out))
        vW.append(np.zeros((fan_in, fan_out)))
        vb.append(np.zeros(fan_out))

    n_batches = train.n // config.batch_size
    for epoch in range(config.epochs):
        order = rng.permutation(train.n)
        for bi in range(n_batches):
            sel = order[bi * config.batch_size : (bi + 1) * config.batch_size]
            xb, yb = X[sel], onehot[sel]
            # forward, keeping activations
            acts = [xb]
            for Wl, bl in zip(W[:-1], b[:-1]):
                acts.append(np.maximum(acts[-1] @ Wl + bl, 0.0))
            probs = _softmax(acts[-1] @ W[-1] + b[-1])
            loss = -np.mean(np.sum(yb * np.log(probs + 1e-300), axis=1))
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss became non-finite at epoch {epoch + 1}, batch {bi + 1}"
                )
            # backward
            delta = (probs - yb) / config.batch_size
            grads = []
            for layer in range(len(W) - 1, -1, -1):
                grads.append((acts[layer].T @ delta, delta.sum(axis=0)))
                if layer > 0:
                    delta = (delta @ W[layer].T) * (acts[layer] > 0.0)
            grads.reverse()
            for layer, (gW, gb) in enumerate(grads):
                vW[layer] = config.momentum * vW[layer] - config.learning_rate * gW
                vb[layer] = config.momentum * vb[layer] - config.learning_rate * gb
                W[layer] = W[layer] + vW[layer]
                b[layer] = b[layer] + vb[layer]

    return MlpPosterior(k, W, b, config, train.n)


# --- oracles -----------------------------------------------------------------

class OraclePosterior(PosteriorEstimate):
    """Wraps a distribution's exact posterior, optionally pushed through a channel."""

    def __init__(self, dist, channel: TransitionMatrix | None = None):
        if channel is not None and channel.k != dist.k:
            raise EstimatorError(
                f"channel has {channel.k} classes but distribution has {dist.k}"
            )
        desc = "oracle" if channel is None else "oracle-noisy"
        super().__init__(dist.k, {"family": desc})
        self._dist = dist
        self._channel = channel

    def predict(self, X) -> np.ndarray:
        p = self._dist.posterior_batch(X)
        if self._channel is None:
            return p
        return p @ self._channel.rows


def oracle_posterior(dist) -> PosteriorEstimate:
    """The true posterior p(x) as an estimator (infinite-sample limit)."""
    return OraclePosterior(dist)


def oracle_noisy_posterior(dist, A: TransitionMatrix) -> PosteriorEstimate:
    """The exact noisy posterior q(x) = p(x) . A as an estimator."""
    return OraclePosterior(dist, A)
