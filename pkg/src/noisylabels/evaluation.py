"""Risk metrics, consistency diagnostics, exact verification procedures, sweeps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import estimators as est_mod
from .distributions import (
    Dataset,
    DiscreteJointDistribution,
    DistributionError,
    GaussianMixtureDistribution,
)
from .estimators import PosteriorEstimate, as_classifier
from .mitigation import correct_backward, correct_known_symmetric
from .noise_channel import (
    TransitionMatrix,
    breakdown_threshold,
    build_general,
    build_shift,
    build_symmetric,
    corrupt_labels,
)

BOUND_SLACK = 1e-12


class EvaluationError(ValueError):
    """Invalid evaluation request."""


@dataclass(frozen=True)
class RiskReport:
    """One experiment cell. NaN marks quantities with no oracle available."""

    experiment_id: str
    seed: int
    k: int
    d: int
    noise_kind: str
    alpha: float
    beta: Optional[float]
    n_train: int
    estimator: str
    mitigation: str
    risk: float
    risk_se: float
    bayes_risk: float
    excess_risk: float
    l1_posterior_error: float
    l2_posterior_error: float

    def __post_init__(self):
        if not 0.0 <= self.risk <= 1.0:
            raise EvaluationError(f"risk {self.risk} outside [0, 1]")
        if np.isfinite(self.bayes_risk):
            if abs(self.excess_risk - (self.risk - self.bayes_risk)) > 1e-12:
                raise EvaluationError("excess_risk must equal risk - bayes_risk")
        if np.isfinite(self.l1_posterior_error) and self.l1_posterior_error < 0:
            raise EvaluationError("posterior errors must be non-negative")


def cell_rng(master_seed: int, ordinal: int) -> np.random.Generator:
    """Independent per-cell stream: SeedSequence(master_seed) split by ordinal.

    Serial and parallel execution derive identical streams from the same
    (master seed, cell ordinal) pair.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(ordinal,)))


# --- risk --------------------------------------------------------------------

def conditional_risk_exact(classifier, dist: DiscreteJointDistribution) -> float:
    """Exact error probability of a batch classifier on a finite-support law."""
    labels = np.asarray(classifier(dist.points), dtype=int)
    if labels.shape != (dist.m,):
        raise EvaluationError("classifier must return one label per support point")
    correct = dist.posteriors[np.arange(dist.m), labels - 1]
    return float(np.sum(dist.weights * (1.0 - correct)))


def conditional_risk_mc(
    classifier, dist, m: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Misclassification frequency on m clean test draws, with binomial SE."""
    if m < 100:
        raise EvaluationError("need at least 100 Monte Carlo draws")
    test = dist.sample(m, rng)
    pred = np.asarray(classifier(test.features), dtype=int)
    risk = float(np.mean(pred != test.labels))
    se = float(np.sqrt(risk * (1.0 - risk) / m))
    return risk, se


def posterior_l1_error(
    est: PosteriorEstimate,
    dist,
    target: PosteriorEstimate,
    m: int = 10_000,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, float]:
    """Mean total-variation-style gap sum_k |est_k - target_k| over the feature
    law, and its squared-gap companion. Exact on finite-support laws, Monte
    Carlo otherwise."""
    if est.k != target.k:
        raise EvaluationError("estimator and target disagree on class count")
    if isinstance(dist, DiscreteJointDistribution):
        X, w = dist.points, dist.weights
    else:
        if m < 100:
            raise EvaluationError("need at least 100 Monte Carlo draws")
        if rng is None:
            raise EvaluationError("continuous distributions need a random source")
        X = dist.sample_features(m, rng)
        w = np.full(X.shape[0], 1.0 / X.shape[0])
    diff = est.predict(X) - target.predict(X)
    l1 = float(np.sum(w * np.abs(diff).sum(axis=1)))
    l2 = float(np.sum(w * (diff * diff).sum(axis=1)))
    return l1, l2


def asymmetric_risk_factor(alpha: float, beta: float) -> float:
    """Asymptotic risk inflation for binary class-dependent noise with unknown
    rates: 1 + 2|alpha - beta| / (1 - 2 max(alpha, beta))."""
    if max(alpha, beta) >= 0.5:
        raise EvaluationError(f"requires max(alpha, beta) < 0.5, got {max(alpha, beta)}")
    if min(alpha, beta) < 0.0:
        raise EvaluationError("noise rates must be non-negative")
    return 1.0 + 2.0 * abs(alpha - beta) / (1.0 - 2.0 * max(alpha, beta))


# --- exact verification procedures --------------------------------------------

def _random_discrete_arrays(k: int, m: int, rng: np.random.Generator):
    points = np.arange(m, dtype=float)[:, None]
    weights = rng.dirichlet(np.ones(m))
    posteriors = rng.dirichlet(np.ones(k), size=m)
    return DiscreteJointDistribution(points, weights, posteriors)


def verify_argmax_preservation(
    k: int, alpha_grid: Sequence[float], trials: int, seed: int, support_size: int = 50
) -> dict:
    """Check that argmax(p . A) == argmax(p) on random finite-support laws for
    every symmetric noise level strictly below (k-1)/k.

    Support points whose true posterior has a tied maximum are counted
    separately, not as failures.
    """
    threshold = breakdown_threshold(k)
    alphas = [float(a) for a in alpha_grid]
    for a in alphas:
        if not 0.0 <= a < threshold:
            raise EvaluationError(
                f"alpha={a} not strictly below the breakdown threshold {threshold:.6g}"
            )
    rng = np.random.default_rng(seed)
    channels = [build_symmetric(k, a) for a in alphas]
    points_checked = 0
    tied_points = 0
    disagreements: list[dict] = []
    for t in range(trials):
        dist = _random_discrete_arrays(k, support_size, rng)
        p = dist.posteriors
        maxes = p.max(axis=1, keepdims=True)
        unique = (p == maxes).sum(axis=1) == 1
        tied_points += int((~unique).sum())
        bayes = np.argmax(p, axis=1)
        for a, A in zip(alphas, channels):
            q = p @ A.rows
            noisy = np.argmax(q, axis=1)
            points_checked += int(unique.sum())
            bad = np.nonzero(unique & (noisy != bayes))[0]
            for idx in bad:
                disagreements.append(
                    {"trial": t, "alpha": a, "point": int(idx),
                     "bayes": int(bayes[idx]) + 1, "noisy": int(noisy[idx]) + 1}
                )
    return {
        "procedure": "exact-argmax-agreement",
        "k": k,
        "threshold": threshold,
        "alphas": alphas,
        "trials": trials,
        "support_size": support_size,
        "seed": seed,
        "points_checked": points_checked,
        "tied_points_excluded": tied_points,
        "disagreement_count": len(disagreements),
        "disagreements": disagreements[:100],
        "passed": not disagreements,
    }


def verify_asymmetric_risk_bound(trials: int, seed: int, support_size: int = 20) -> dict:
    """Brute-force check of the binary unknown-noise risk bound on random
    finite-support laws with random alpha, beta < 1/2.

    Each trial also re-runs the symmetric case beta = alpha, where the exact
    risk must equal the Bayes risk.
    """
    rng = np.random.default_rng(seed)
    violations: list[dict] = []
    symmetric_failures: list[dict] = []
    max_ratio = 0.0  # risk / bayes_risk
    max_bound_ratio = 0.0  # risk / (bayes_risk * factor)
    for t in range(trials):
        dist = _random_discrete_arrays(2, support_size, rng)
        alpha, beta = rng.uniform(0.0, 0.5, size=2)
        A = build_general([[1.0 - alpha, alpha], [beta, 1.0 - beta]])
        q = dist.posteriors @ A.rows
        noisy_labels = np.argmax(q, axis=1) + 1
        risk = conditional_risk_exact(lambda X: noisy_labels, dist)
        bayes = dist.bayes_risk_exact()
        bound = bayes * asymmetric_risk_factor(alpha, beta)
        if risk > bound + BOUND_SLACK:
            violations.append(
                {"trial": t, "alpha": float(alpha), "beta": float(beta),
                 "risk": risk, "bound": bound}
            )
        if bayes > 0.0:
            max_ratio = max(max_ratio, risk / bayes)
            max_bound_ratio = max(max_bound_ratio, risk / bound)
        # symmetric sub-case: factor collapses to 1 and the risk is exactly Bayes
        A_sym = build_general([[1.0 - alpha, alpha], [alpha, 1.0 - alpha]])
        q_sym = dist.posteriors @ A_sym.rows
        sym_labels = np.argmax(q_sym, axis=1) + 1
        risk_sym = conditional_risk_exact(lambda X: sym_labels, dist)
        if abs(risk_sym - bayes) > BOUND_SLACK:
            symmetric_failures.append(
                {"trial": t, "alpha": float(alpha), "risk": risk_sym, "bayes": bayes}
            )
    return {
        "procedure": "asymmetric-risk-bound",
        "trials": trials,
        "support_size": support_size,
        "seed": seed,
        "violation_count": len(violations),
        "violations": violations[:100],
        "symmetric_failure_count": len(symmetric_failures),
        "symmetric_failures": symmetric_failures[:100],
        "max_risk_over_bayes": max_ratio,
        "max_risk_over_bound": max_bound_ratio,
        "passed": not violations and not symmetric_failures,
    }


# --- sweeps --------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSpec:
    family: str  # knn | histogram | mlp | oracle
    k_neighbors: Optional[int] = None  # None -> ceil(sqrt(n))
    bin_width: Optional[float] = None  # None -> n^(-1/(d+2))
    mlp: est_mod.MlpConfig = est_mod.MlpConfig()

    def describe(self) -> str:
        if self.family == "knn":
            return f"knn(k={'auto' if self.k_neighbors is None else self.k_neighbors})"
        if self.family == "histogram":
            return f"histogram(h={'auto' if self.bin_width is None else self.bin_width})"
        return self.family

    def fit(self, train: Dataset, rng: np.random.Generator) -> PosteriorEstimate:
        if self.family == "oracle":
            raise EvaluationError("the oracle family needs a distribution, not data")
        if self.family == "knn":
            kn = self.k_neighbors or est_mod.default_k_neighbors(train.n)
            return est_mod.fit_knn(train, min(kn, train.n))
        if self.family == "histogram":
            h = self.bin_width or est_mod.default_bin_width(train.n, train.d)
            return est_mod.fit_histogram(train, h)
        if self.family == "mlp":
            return est_mod.fit_mlp(train, self.mlp, rng)
        raise EvaluationError(f"unknown estimator family {self.family!r}")


@dataclass(frozen=True)
class SweepSpec:
    experiment_id: str
    master_seed: int
    noise_kind: str  # symmetric | shift | binary-asymmetric
    alphas: tuple[float, ...]
    estimator: EstimatorSpec
    n_train: int
    n_test: int = 10_000
    seeds_per_cell: int = 5
    beta: Optional[float] = None  # binary-asymmetric only
    mitigation: str = "none"  # none | known-symmetric | backward


def build_channel(kind: str, k: int, alpha: float, beta: Optional[float]) -> TransitionMatrix:
    if kind == "symmetric":
        return build_symmetric(k, alpha)
    if kind == "shift":
        return build_shift(k, alpha)
    if kind == "binary-asymmetric":
        if k != 2:
            raise EvaluationError("binary-asymmetric noise requires K = 2")
        b = alpha if beta is None else beta
        return build_general([[1.0 - alpha, alpha], [b, 1.0 - b]])
    raise EvaluationError(f"unknown noise kind {kind!r}")


def _apply_mitigation(
    est: PosteriorEstimate, spec_mitigation: str, A: TransitionMatrix, alpha: float
) -> PosteriorEstimate:
    if spec_mitigation == "none":
        return est
    if spec_mitigation == "known-symmetric":
        return correct_known_symmetric(est, alpha, A.k)
    if spec_mitigation == "backward":
        return correct_backward(est, A)
    raise EvaluationError(f"unknown mitigation {spec_mitigation!r}")


def run_cell(spec: SweepSpec, dist, alpha: float, seed_ordinal: int, ordinal: int) -> RiskReport:
    """One (alpha, seed) sweep cell: sample, corrupt, fit, evaluate on clean data."""
    rng = cell_rng(spec.master_seed, ordinal)
    if isinstance(dist, Dataset):
        return _run_cell_dataset(spec, dist, alpha, seed_ordinal, rng)
    A = build_channel(spec.noise_kind, dist.k, alpha, spec.beta)
    target = est_mod.oracle_noisy_posterior(dist, A)
    if spec.estimator.family == "oracle":
        fitted = target  # infinite-sample subject, ignores the training draw
    else:
        clean = dist.sample(spec.n_train, rng)
        noisy = clean.with_labels(
            corrupt_labels(clean.labels, A, rng),
            f"noisy({spec.noise_kind},alpha={alpha})",
        )
        fitted = spec.estimator.fit(noisy, rng)
    subject = _apply_mitigation(fitted, spec.mitigation, A, alpha)
    classifier = as_classifier(subject)
    if isinstance(dist, DiscreteJointDistribution):
        risk = conditional_risk_exact(classifier, dist)
        risk_se = 0.0
        bayes = dist.bayes_risk_exact()
        l1, l2 = posterior_l1_error(fitted, dist, target)
    else:
        test = dist.sample(spec.n_test, rng)
        pred = classifier(test.features)
        risk = float(np.mean(pred != test.labels))
        risk_se = float(np.sqrt(risk * (1.0 - risk) / spec.n_test))
        post = dist.posterior_batch(test.features)
        bayes = float(np.mean(1.0 - post.max(axis=1)))
        diff = fitted.predict(test.features) - post @ A.rows
        l1 = float(np.abs(diff).sum(axis=1).mean())
        l2 = float((diff * diff).sum(axis=1).mean())
    return RiskReport(
        experiment_id=spec.experiment_id,
        seed=seed_ordinal,
        k=dist.k,
        d=dist.d,
        noise_kind=spec.noise_kind,
        alpha=alpha,
        beta=spec.beta,
        n_train=spec.n_train,
        estimator=spec.estimator.describe(),
        mitigation=spec.mitigation,
        risk=risk,
        risk_se=risk_se,
        bayes_risk=bayes,
        excess_risk=risk - bayes,
        l1_posterior_error=l1,
        l2_posterior_error=l2,
    )


def _run_cell_dataset(
    spec: SweepSpec, data: Dataset, alpha: float, seed_ordinal: int, rng
) -> RiskReport:
    """Ingested data has no posterior oracle: split, corrupt the train part,
    report empirical risk only (oracle columns NaN)."""
    if data.n < spec.n_train + 1:
        raise EvaluationError(
            f"dataset has {data.n} rows, need more than n_train={spec.n_train}"
        )
    A = build_channel(spec.noise_kind, data.k, alpha, spec.beta)
    order = rng.permutation(data.n)
    train_idx = order[: spec.n_train]
    test_idx = order[spec.n_train : spec.n_train + spec.n_test]
    train = Dataset(data.features[train_idx], data.labels[train_idx], data.k, "split:train")
    noisy = train.with_labels(
        corrupt_labels(train.labels, A, rng), f"noisy({spec.noise_kind},alpha={alpha})"
    )
    fitted = spec.estimator.fit(noisy, rng)
    subject = _apply_mitigation(fitted, spec.mitigation, A, alpha)
    pred = as_classifier(subject)(data.features[test_idx])
    risk = float(np.mean(pred != data.labels[test_idx]))
    n_test = test_idx.size
    nan = float("nan")
    return RiskReport(
        experiment_id=spec.experiment_id,
        seed=seed_ordinal,
        k=data.k,
        d=data.d,
        noise_kind=spec.noise_kind,
        alpha=alpha,
        beta=spec.beta,
        n_train=spec.n_train,
        estimator=spec.estimator.describe(),
        mitigation=spec.mitigation,
        risk=risk,
        risk_se=float(np.sqrt(risk * (1.0 - risk) / n_test)),
        bayes_risk=nan,
        excess_risk=nan,
        l1_posterior_error=nan,
        l2_posterior_error=nan,
    )


def sweep_cells(spec: SweepSpec) -> list[tuple[float, int, int]]:
    """Cell coordinates (alpha, seed ordinal, global ordinal), sweep order."""
    cells = []
    ordinal = 0
    for alpha in spec.alphas:
        for s in range(spec.seeds_per_cell):
            cells.append((alpha, s, ordinal))
            ordinal += 1
    return cells


def sweep_noise(spec: SweepSpec, dist) -> list[RiskReport]:
    """Full noise sweep, ordered by (alpha, seed)."""
    if not spec.alphas:
        raise EvaluationError("empty alpha grid")
    return [
        run_cell(spec, dist, alpha, s, ordinal)
        for alpha, s, ordinal in sweep_cells(spec)
    ]


@dataclass(frozen=True)
class ConsistencySpec:
    experiment_id: str
    master_seed: int
    noise_kind: str
    alpha: float
    estimator: EstimatorSpec
    n_grid: tuple[int, ...]
    n_test: int = 10_000
    seeds_per_cell: int = 5
    beta: Optional[float] = None


def consistency_trend(spec: ConsistencySpec, dist) -> list[RiskReport]:
    """Posterior L1/L2 error of the fitted estimator against the exact noisy
    posterior, across an increasing training-size grid."""
    if not spec.n_grid:
        raise EvaluationError("empty n grid")
    if list(spec.n_grid) != sorted(spec.n_grid):
        raise EvaluationError("n grid must be increasing")
    reports = []
    ordinal = 0
    for n in spec.n_grid:
        sweep = SweepSpec(
            experiment_id=spec.experiment_id,
            master_seed=spec.master_seed,
            noise_kind=spec.noise_kind,
            alphas=(spec.alpha,),
            estimator=spec.estimator,
            n_train=n,
            n_test=spec.n_test,
            seeds_per_cell=spec.seeds_per_cell,
            beta=spec.beta,
        )
        for s in range(spec.seeds_per_cell):
            reports.append(run_cell(sweep, dist, spec.alpha, s, ordinal))
            ordinal += 1
    return reports
