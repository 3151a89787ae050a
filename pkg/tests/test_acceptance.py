"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`. The heavy cells (criteria
5-7) take a few minutes combined.
"""
import collections

import numpy as np

from noisylabels import (
    DiscreteJointDistribution,
    apply_to_posterior,
    bayes_classify_batch,
    build_shift,
    build_symmetric,
    circle_mixture_benchmark,
    classify_argmax_batch,
    correct_known_symmetric,
    corrupt_labels,
    fit_knn,
    oracle_noisy_posterior,
    sweep_noise,
    verify_asymmetric_risk_bound,
    verify_argmax_preservation,
)
from noisylabels.cli import default_alpha_grid, main
from noisylabels.evaluation import (
    ConsistencySpec,
    EstimatorSpec,
    SweepSpec,
    consistency_trend,
)


def check(num: int, description: str, ok: bool, detail: str = ""):
    line = f"[criterion {num}] {'PASS' if ok else 'FAIL'}: {description}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_criterion_1_argmax_agreement_exact():
    total_disagreements = 0
    total_points = 0
    for k in (2, 3, 10):
        report = verify_argmax_preservation(
            k, default_alpha_grid(k), trials=200, seed=1000 + k, support_size=50
        )
        total_disagreements += report["disagreement_count"]
        total_points += report["points_checked"]
    check(
        1,
        "noisy plug-in agrees with Bayes at every unique-argmax point",
        total_disagreements == 0,
        f"{total_points} points, {total_disagreements} disagreements",
    )


def test_criterion_2_threshold_degeneracy():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(2, 11):
        A = build_symmetric(k, (k - 1) / k)
        for _ in range(1000):
            q = apply_to_posterior(rng.dirichlet(np.ones(k)), A)
            worst = max(worst, float(np.max(np.abs(q - 1.0 / k))))
    check(
        2,
        "at the breakdown point the noisy posterior is uniform within 1e-12",
        worst < 1e-12,
        f"max deviation {worst:.2e}",
    )


def test_criterion_3_asymmetric_risk_bound():
    report = verify_asymmetric_risk_bound(trials=1000, seed=2025)
    ok = (
        report["violation_count"] == 0
        and report["symmetric_failure_count"] == 0
    )
    check(
        3,
        "exact noisy risk within the unknown-noise bound; ratio 1 when rates equal",
        ok,
        f"max risk/bayes {report['max_risk_over_bayes']:.4f}, "
        f"{report['violation_count']} violations, "
        f"{report['symmetric_failure_count']} symmetric failures",
    )


def test_criterion_4_shift_noise_crossover():
    rng = np.random.default_rng(42)
    k, m, peak = 10, 50, 0.9
    residual = (1.0 - peak) / (k - 1)
    posts = np.full((m, k), residual)
    posts[np.arange(m), rng.integers(0, k, m)] = peak
    dist = DiscreteJointDistribution(
        np.arange(m, dtype=float)[:, None], rng.dirichlet(np.ones(m)), posts
    )
    bayes = bayes_classify_batch(dist, dist.points)
    agree_below = True
    for alpha in np.arange(0.05, 0.46, 0.05):
        est = oracle_noisy_posterior(dist, build_shift(k, alpha))
        agree_below &= bool(
            np.array_equal(classify_argmax_batch(est, dist.points), bayes)
        )
    disagree_above = True
    for alpha in np.arange(0.55, 0.81, 0.05):
        est = oracle_noisy_posterior(dist, build_shift(k, alpha))
        disagree_above &= not np.array_equal(
            classify_argmax_batch(est, dist.points), bayes
        )
    check(
        4,
        "shift-noise plug-in matches Bayes below 0.5 and breaks above",
        agree_below and disagree_above,
        f"agree below: {agree_below}, disagree above: {disagree_above}",
    )


def test_criterion_5_benchmark_noise_robustness():
    bench = circle_mixture_benchmark()
    spec = SweepSpec(
        experiment_id="acceptance-5",
        master_seed=5,
        noise_kind="symmetric",
        alphas=(0.0, 0.5, 0.95),
        estimator=EstimatorSpec("knn"),  # k = ceil(sqrt(n)) = 142
        n_train=20_000,
        n_test=10_000,
        seeds_per_cell=5,
    )
    acc = collections.defaultdict(list)
    for r in sweep_noise(spec, bench):
        acc[r.alpha].append(1.0 - r.risk)
    mean = {a: float(np.mean(v)) for a, v in acc.items()}
    gap_mid = abs(mean[0.5] - mean[0.0])
    gap_high = abs(mean[0.95] - 0.1)
    detail = (
        f"acc(0)={mean[0.0]:.4f}, acc(0.5)={mean[0.5]:.4f}, "
        f"acc(0.95)={mean[0.95]:.4f}; |acc(0.5)-acc(0)|={gap_mid:.4f}, "
        f"|acc(0.95)-0.1|={gap_high:.4f}"
    )
    check(
        5,
        "kNN accuracy flat up to 0.5 and near chance at 0.95",
        gap_mid <= 0.05 and gap_high <= 0.05,
        detail,
    )


def test_criterion_6_consistency_trend():
    bench = circle_mixture_benchmark()
    spec = ConsistencySpec(
        experiment_id="acceptance-6",
        master_seed=6,
        noise_kind="symmetric",
        alpha=0.3,
        estimator=EstimatorSpec("knn"),
        n_grid=(500, 5_000, 50_000),
        n_test=10_000,
        seeds_per_cell=5,
    )
    by_n = collections.defaultdict(list)
    for r in consistency_trend(spec, bench):
        by_n[r.n_train].append(r.l1_posterior_error)
    means = [float(np.mean(by_n[n])) for n in sorted(by_n)]
    non_increasing = all(a >= b for a, b in zip(means, means[1:]))
    check(
        6,
        "kNN posterior L1 error non-increasing in n",
        non_increasing,
        "L1 means: " + ", ".join(f"{m:.4f}" for m in means),
    )


def test_criterion_7_mitigation_neutrality():
    bench = circle_mixture_benchmark()
    alpha, k = 0.4, 10
    rng = np.random.default_rng(7)
    train = bench.sample(20_000, rng)
    A = build_symmetric(k, alpha)
    noisy = train.with_labels(corrupt_labels(train.labels, A, rng), "noisy")
    est = fit_knn(noisy, 142)
    corrected = correct_known_symmetric(est, alpha, k)
    X = bench.sample(10_000, rng).features
    same = np.array_equal(
        classify_argmax_batch(est, X), classify_argmax_batch(corrected, X)
    )
    check(
        7,
        "known-noise correction changes no decision on 10,000 test points",
        bool(same),
    )


def test_criterion_8_determinism(tmp_path, capsys):
    # verification JSON (criteria 1-3 machinery at full seed-driven scale)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["verify", "--k", "10", "--trials", "200",
                     "--bound-trials", "1000", "--seed", "8",
                     "--out", str(out)]) == 0
    json_identical = a.read_bytes() == b.read_bytes()

    # sweep and consistency CSVs (criteria 5-7 machinery, reduced sizes)
    cfg = tmp_path / "det.cfg"
    cfg.write_text(
        """
[experiment]
id = acceptance-8
seed = 8

[distribution]
kind = mixture-circle
k = 10

[estimator]
family = knn

[channel]
kind = symmetric
alphas = [0, 0.5, 0.95]

[run]
n_train = 1000
n_test = 1000
seeds_per_cell = 2

[consistency]
n_grid = [200, 500]
alpha = 0.3
"""
    )
    c, d = tmp_path / "c.csv", tmp_path / "d.csv"
    for out in (c, d):
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    sweep_identical = c.read_bytes() == d.read_bytes()
    e, f = tmp_path / "e.csv", tmp_path / "f.csv"
    for out in (e, f):
        assert main(["consistency", "--config", str(cfg), "--out", str(out)]) == 0
    consistency_identical = e.read_bytes() == f.read_bytes()
    capsys.readouterr()  # drop CLI chatter before the summary line
    check(
        8,
        "reruns with identical seeds produce byte-identical JSON/CSV",
        json_identical and sweep_identical and consistency_identical,
        f"json={json_identical}, sweep={sweep_identical}, "
        f"consistency={consistency_identical}",
    )
