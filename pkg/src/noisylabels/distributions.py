"""Ground-truth generative models with oracle posteriors and Bayes quantities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9


class DistributionError(ValueError):
    """Invalid distribution construction or query."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with 1-based labels and a provenance tag."""

    features: np.ndarray
    labels: np.ndarray
    k: int
    provenance: str = "clean"

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=int)
        if features.shape[0] != labels.shape[0]:
            raise DistributionError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 1 or labels.max() > self.k):
            raise DistributionError(f"labels must lie in [1, {self.k}]")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels, provenance: str) -> "Dataset":
        return Dataset(self.features, labels, self.k, provenance)


@dataclass(frozen=True, eq=False)
class DiscreteJointDistribution:
    """Finite-support joint law: support points, marginal weights, exact posteriors."""

    points: np.ndarray  # (M, d)
    weights: np.ndarray  # (M,)
    posteriors: np.ndarray  # (M, K)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        post = np.asarray(self.posteriors, dtype=float)
        m = points.shape[0]
        if weights.shape != (m,) or post.shape[0] != m:
            raise DistributionError("points, weights and posteriors disagree on support size")
        if post.ndim != 2 or post.shape[1] < 2:
            raise DistributionError("posteriors must be an M x K matrix with K >= 2")
        if np.any(weights < -SIMPLEX_TOL) or abs(weights.sum() - 1.0) > SIMPLEX_TOL:
            raise DistributionError("weights are off the probability simplex")
        if np.any(post < -SIMPLEX_TOL) or np.any(np.abs(post.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise DistributionError("a posterior row is off the probability simplex")
        if len({tuple(row) for row in points}) != m:
            raise DistributionError("support points must be pairwise distinct")
        for arr in (points, weights, post):
            arr.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "posteriors", post)
        object.__setattr__(self, "_index", {tuple(row): i for i, row in enumerate(points)})

    @property
    def k(self) -> int:
        return self.posteriors.shape[1]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def support_index(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        try:
            return self._index[tuple(x)]
        except KeyError:
            raise DistributionError(f"{x} is not a support point") from None

    def posterior(self, x) -> np.ndarray:
        return self.posteriors[self.support_index(x)]

    def posterior_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.posteriors[[self.support_index(row) for row in X]]

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        if n < 1:
            raise DistributionError("need at least one sample")
        point_idx = _inverse_cdf(self.weights, rng.random(n))
        label_u = rng.random(n)
        post_cdf = np.cumsum(self.posteriors, axis=1)
        post_cdf[:, -1] = 1.0
        labels = (post_cdf[point_idx] <= label_u[:, None]).sum(axis=1) + 1
        return Dataset(self.points[point_idx], labels, self.k)

    def sample_features(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.points[_inverse_cdf(self.weights, rng.random(n))]

    def bayes_risk_exact(self) -> float:
        return float(np.sum(self.weights * (1.0 - self.posteriors.max(axis=1))))


@dataclass(frozen=True, eq=False)
class GaussianMixtureDistribution:
    """One diagonal Gaussian component per class; posteriors in closed form."""

    priors: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K, d)

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if priors.ndim != 1 or priors.shape[0] < 2:
            raise DistributionError("need at least 2 components")
        if means.shape[0] != priors.shape[0] or variances.shape != means.shape:
            raise DistributionError("priors, means and variances disagree on shape")
        if np.any(priors < -SIMPLEX_TOL) or abs(priors.sum() - 1.0) > SIMPLEX_TOL:
            raise DistributionError("priors are off the probability simplex")
        if np.any(variances <= 0):
            raise DistributionError("variances must be positive")
        for arr in (priors, means, variances):
            arr.setflags(write=False)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def k(self) -> int:
        return self.priors.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def _log_joint(self, X) -> np.ndarray:
        """log(prior_k) + log density of component k, shape (n, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - self.means[None, :, :]  # (n, K, d)
        quad = np.sum(diff * diff / self.variances[None, :, :], axis=2)
        log_norm = 0.5 * np.sum(np.log(2.0 * np.pi * self.variances), axis=1)
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        return log_prior[None, :] - log_norm[None, :] - 0.5 * quad

    def posterior_batch(self, X) -> np.ndarray:
        lj = self._log_joint(X)
        lj -= lj.max(axis=1, keepdims=True)  # max-shift against underflow
        w = np.exp(lj)
        return w / w.sum(axis=1, keepdims=True)

    def posterior(self, x) -> np.ndarray:
        return self.posterior_batch(np.atleast_2d(x))[0]

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        if n < 1:
            raise DistributionError("need at least one sample")
        comp = _inverse_cdf(self.priors, rng.random(n))
        noise = rng.standard_normal((n, self.d))
        X = self.means[comp] + noise * np.sqrt(self.variances[comp])
        return Dataset(X, comp + 1, self.k)

    def sample_features(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample(n, rng).features

    def bayes_risk_mc(self, m: int, rng: np.random.Generator) -> tuple[float, float]:
        if m < 100:
            raise DistributionError("need at least 100 Monte Carlo draws")
        X = self.sample_features(m, rng)
        vals = 1.0 - self.posterior_batch(X).max(axis=1)
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(m))


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, u, side="right")


def posterior_oracle(dist, x) -> np.ndarray:
    """Exact p(. | x) for either distribution kind."""
    return dist.posterior(x)


def bayes_classify(dist, x) -> int:
    """Argmax of the true posterior, lowest index winning ties (1-based)."""
    return int(np.argmax(dist.posterior(x))) + 1


def bayes_classify_batch(dist, X) -> np.ndarray:
    return np.argmax(dist.posterior_batch(X), axis=1) + 1


def sample(dist, n: int, rng: np.random.Generator) -> Dataset:
    return dist.sample(n, rng)


def random_discrete(k: int, m: int, seed: int) -> DiscreteJointDistribution:
    """Random finite-support distribution: flat-Dirichlet weights and posteriors,
    support on distinct integer grid points."""
    if k < 2 or m < 1:
        raise DistributionError("need k >= 2 and m >= 1")
    rng = np.random.default_rng(seed)
    points = np.arange(m, dtype=float)[:, None]
    weights = rng.dirichlet(np.ones(m))
    posteriors = rng.dirichlet(np.ones(k), size=m)
    return DiscreteJointDistribution(points, weights, posteriors)


def circle_mixture_benchmark(
    k: int = 10, radius: float = 3.0, variance: float = 1.0
) -> GaussianMixtureDistribution:
    """Default desk-scale benchmark: k equal-prior unit-variance components with
    means equally spaced on a circle in the plane."""
    angles = 2.0 * np.pi * np.arange(k) / k
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixtureDistribution(
        np.full(k, 1.0 / k), means, np.full((k, 2), variance)
    )


# --- plain-text serialization ------------------------------------------------

def save_discrete(dist: DiscreteJointDistribution, path):
    with open(path, "w") as fh:
        fh.write(f"{dist.m} {dist.k} {dist.d}\n")
        for x, w, p in zip(dist.points, dist.weights, dist.posteriors):
            fh.write(
                " ".join(f"{v:.17g}" for v in x)
                + f" | {w:.17g} | "
                + " ".join(f"{v:.17g}" for v in p)
                + "\n"
            )


def load_discrete(path) -> DiscreteJointDistribution:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DistributionError(f"{path}: empty file")
    try:
        m, k, d = (int(tok) for tok in lines[0].split())
    except ValueError:
        raise DistributionError(f"{path}:1: expected header 'M K d'") from None
    if len(lines) != m + 1:
        raise DistributionError(f"{path}: expected {m} support lines, found {len(lines) - 1}")
    points, weights, posts = [], [], []
    for i, line in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3:
            raise DistributionError(f"{path}:{i}: expected 'x | weight | posteriors'")
        try:
            x = [float(t) for t in parts[0].split()]
            w = float(parts[1])
            p = [float(t) for t in parts[2].split()]
        except ValueError:
            raise DistributionError(f"{path}:{i}: non-numeric entry") from None
        if len(x) != d or len(p) != k:
            raise DistributionError(f"{path}:{i}: expected {d} coordinates and {k} posteriors")
        points.append(x)
        weights.append(w)
        posts.append(p)
    try:
        return DiscreteJointDistribution(np.array(points), np.array(weights), np.array(posts))
    except DistributionError as exc:
        raise DistributionError(f"{path}: {exc}") from None


def save_dataset(ds: Dataset, path):
    with open(path, "w") as fh:
        fh.write(f"{ds.n} {ds.k} {ds.d}\n")
        for x, y in zip(ds.features, ds.labels):
            fh.write(" ".join(f"{v:.17g}" for v in x) + f" | {y}\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DistributionError(f"{path}: empty file")
    try:
        n, k, d = (int(tok) for tok in lines[0].split())
    except ValueError:
        raise DistributionError(f"{path}:1: expected header 'n K d'") from None
    if len(lines) != n + 1:
        raise DistributionError(f"{path}: expected {n} rows, found {len(lines) - 1}")
    feats, labels = [], []
    for i, line in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 2:
            raise DistributionError(f"{path}:{i}: expected 'x | label'")
        try:
            x = [float(t) for t in parts[0].split()]
            y = int(parts[1])
        except ValueError:
            raise DistributionError(f"{path}:{i}: non-numeric entry") from None
        if len(x) != d:
            raise DistributionError(f"{path}:{i}: expected {d} coordinates")
        feats.append(x)
        labels.append(y)
    try:
        return Dataset(np.array(feats), np.array(labels), k, provenance=f"file:{path}")
    except DistributionError as exc:
        raise DistributionError(f"{path}: {exc}") from None
