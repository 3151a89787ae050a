"""Experiment command line: verify | sweep | consistency | plot | ingest."""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import distributions as dist_mod
from . import evaluation as eval_mod
from .estimators import EstimatorError, MlpConfig, TrainingError
from .evaluation import ConsistencySpec, EstimatorSpec, SweepSpec
from .noise_channel import breakdown_threshold

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2

CSV_COLUMNS = [
    "experiment_id", "seed", "K", "d", "noise_kind", "alpha", "beta",
    "n_train", "estimator", "mitigation", "risk", "risk_se", "bayes_risk",
    "excess_risk", "l1_posterior_error", "l2_posterior_error",
]


class ConfigError(ValueError):
    """Config file failed validation."""


# --- config parsing -----------------------------------------------------------

def _parse_grid(raw: str, field: str, convert=float) -> tuple:
    raw = raw.strip()
    if not (raw.startswith("[") and raw.endswith("]")):
        raise ConfigError(f"{field}: expected a bracketed comma list, got {raw!r}")
    body = raw[1:-1].strip()
    if not body:
        raise ConfigError(f"{field}: grid is empty")
    try:
        return tuple(convert(tok.strip()) for tok in body.split(","))
    except ValueError:
        raise ConfigError(f"{field}: non-numeric grid entry in {raw!r}") from None


def _get(cfg, section, key, default=None, required=False):
    if not cfg.has_section(section):
        if required:
            raise ConfigError(f"missing section [{section}]")
        return default
    if not cfg.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] {key}: missing required field")
        return default
    return cfg.get(section, key)


def _get_number(cfg, section, key, convert, default=None, required=False, positive=False):
    raw = _get(cfg, section, key, required=required)
    if raw is None:
        return default
    try:
        value = convert(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None
    if positive and value <= 0:
        raise ConfigError(f"[{section}] {key}: must be positive, got {value}")
    return value


def load_config(path: Path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if not Path(path).exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def build_distribution(cfg):
    kind = _get(cfg, "distribution", "kind", required=True)
    if kind == "mixture-circle":
        k = _get_number(cfg, "distribution", "k", int, default=10)
        if k < 2:
            raise ConfigError(f"[distribution] k: need at least 2 classes, got {k}")
        radius = _get_number(cfg, "distribution", "radius", float, default=3.0, positive=True)
        variance = _get_number(cfg, "distribution", "variance", float, default=1.0, positive=True)
        return dist_mod.circle_mixture_benchmark(k, radius, variance)
    if kind == "discrete-random":
        k = _get_number(cfg, "distribution", "k", int, required=True)
        support = _get_number(cfg, "distribution", "support", int, default=50, positive=True)
        dist_seed = _get_number(cfg, "distribution", "dist_seed", int, default=0)
        return dist_mod.random_discrete(k, support, dist_seed)
    if kind == "discrete-file":
        path = _get(cfg, "distribution", "path", required=True)
        return dist_mod.load_discrete(path)
    if kind == "dataset":
        path = _get(cfg, "distribution", "path", required=True)
        return dist_mod.load_dataset(path)
    raise ConfigError(f"[distribution] kind: unknown kind {kind!r}")


def build_estimator_spec(cfg) -> EstimatorSpec:
    family = _get(cfg, "estimator", "family", required=True)
    if family not in ("knn", "histogram", "mlp", "oracle"):
        raise ConfigError(f"[estimator] family: unknown family {family!r}")
    k_neighbors = None
    bin_width = None
    raw = _get(cfg, "estimator", "k_neighbors", default="auto")
    if raw != "auto":
        k_neighbors = _get_number(cfg, "estimator", "k_neighbors", int, positive=True)
    raw = _get(cfg, "estimator", "bin_width", default="auto")
    if raw != "auto":
        bin_width = _get_number(cfg, "estimator", "bin_width", float, positive=True)
    mlp_kwargs = {}
    raw = _get(cfg, "estimator", "hidden")
    if raw is not None:
        mlp_kwargs["hidden"] = _parse_grid(raw, "[estimator] hidden", int)
    for key, conv in (
        ("learning_rate", float), ("batch_size", int), ("epochs", int), ("momentum", float),
    ):
        value = _get_number(cfg, "estimator", key, conv)
        if value is not None:
            mlp_kwargs[key] = value
    try:
        mlp = MlpConfig(**mlp_kwargs)
    except EstimatorError as exc:
        raise ConfigError(f"[estimator]: {exc}") from None
    return EstimatorSpec(family=family, k_neighbors=k_neighbors, bin_width=bin_width, mlp=mlp)


def build_sweep_spec(cfg, mitigation_override=None) -> SweepSpec:
    kind = _get(cfg, "channel", "kind", required=True)
    alphas = _parse_grid(_get(cfg, "channel", "alphas", required=True), "[channel] alphas")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"[channel] alphas: {a} outside [0, 1]")
    beta = _get_number(cfg, "channel", "beta", float)
    mitigation = mitigation_override or _get(cfg, "run", "mitigation", default="none")
    if mitigation not in ("none", "known-symmetric", "backward"):
        raise ConfigError(f"[run] mitigation: unknown value {mitigation!r}")
    return SweepSpec(
        experiment_id=_get(cfg, "experiment", "id", default="experiment"),
        master_seed=_get_number(cfg, "experiment", "seed", int, default=0),
        noise_kind=kind,
        alphas=alphas,
        estimator=build_estimator_spec(cfg),
        n_train=_get_number(cfg, "run", "n_train", int, required=True, positive=True),
        n_test=_get_number(cfg, "run", "n_test", int, default=10_000, positive=True),
        seeds_per_cell=_get_number(cfg, "run", "seeds_per_cell", int, default=5, positive=True),
        beta=beta,
        mitigation=mitigation,
    )


def build_consistency_spec(cfg) -> ConsistencySpec:
    sweep = build_sweep_spec(cfg)
    raw = _get(cfg, "consistency", "n_grid", required=True)
    n_grid = _parse_grid(raw, "[consistency] n_grid", int)
    alpha = _get_number(cfg, "consistency", "alpha", float, required=True)
    return ConsistencySpec(
        experiment_id=sweep.experiment_id,
        master_seed=sweep.master_seed,
        noise_kind=sweep.noise_kind,
        alpha=alpha,
        estimator=sweep.estimator,
        n_grid=n_grid,
        n_test=sweep.n_test,
        seeds_per_cell=sweep.seeds_per_cell,
        beta=sweep.beta,
    )


# --- CSV / JSON emission --------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        if not np.isfinite(value):
            return "NA"
        return f"{value:.12g}"
    return str(value)


def report_row(r: eval_mod.RiskReport) -> list[str]:
    return [
        r.experiment_id, str(r.seed), str(r.k), str(r.d), r.noise_kind,
        _fmt(r.alpha), _fmt(r.beta), str(r.n_train), r.estimator, r.mitigation,
        _fmt(r.risk), _fmt(r.risk_se), _fmt(r.bayes_risk), _fmt(r.excess_risk),
        _fmt(r.l1_posterior_error), _fmt(r.l2_posterior_error),
    ]


def write_csv(rows: list[list[str]], path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)


def dump_json(report: dict, path) -> str:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# --- subcommands -----------------------------------------------------------------

def default_alpha_grid(k: int) -> list[float]:
    """0.05 steps strictly below the breakdown threshold minus 0.01."""
    limit = breakdown_threshold(k) - 0.01
    return [round(0.05 * i, 10) for i in range(1, int(limit / 0.05) + 1)]


def cmd_verify(args) -> int:
    if args.k < 2:
        print("error: --k must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    argmax_check = eval_mod.verify_argmax_preservation(
        args.k, default_alpha_grid(args.k), args.trials, args.seed
    )
    bound_check = eval_mod.verify_asymmetric_risk_bound(args.bound_trials, args.seed)
    report = {"argmax_preservation": argmax_check,
              "asymmetric_risk_bound": bound_check,
              "passed": argmax_check["passed"] and bound_check["passed"]}
    text = dump_json(report, args.out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.out}")
    print(
        f"argmax preservation: {argmax_check['disagreement_count']} disagreements "
        f"over {argmax_check['points_checked']} points; risk bound: "
        f"{bound_check['violation_count']} violations over "
        f"{bound_check['trials']} trials"
    )
    return EXIT_OK if report["passed"] else EXIT_VERIFICATION_FAILED


def _failed_report_row(spec: SweepSpec, alpha, seed) -> list[str]:
    return [
        f"{spec.experiment_id}#FAILED", str(seed), "NA", "NA", spec.noise_kind,
        _fmt(float(alpha)), _fmt(spec.beta), str(spec.n_train),
        spec.estimator.describe(), spec.mitigation,
        "NA", "NA", "NA", "NA", "NA", "NA",
    ]


def _run_sweep_cells(spec: SweepSpec, dist, jobs: int):
    """Yield (cell, report-or-exception) preserving sweep order."""
    cells = eval_mod.sweep_cells(spec)
    if jobs <= 1:
        for alpha, s, ordinal in cells:
            try:
                yield (alpha, s), eval_mod.run_cell(spec, dist, alpha, s, ordinal)
            except Exception as exc:  # per-cell failure marker, keep sweeping
                yield (alpha, s), exc
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(eval_mod.run_cell, spec, dist, alpha, s, ordinal)
            for alpha, s, ordinal in cells
        ]
        for (alpha, s, _), fut in zip(cells, futures):
            try:
                yield (alpha, s), fut.result()
            except Exception as exc:
                yield (alpha, s), exc


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
        dist = build_distribution(cfg)
        spec = build_sweep_spec(cfg, mitigation_override=args.mitigation)
        out = args.out or _get(cfg, "output", "csv", default="results.csv")
    except (ConfigError, dist_mod.DistributionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rows = []
    failures = 0
    for (alpha, s), result in _run_sweep_cells(spec, dist, args.jobs):
        if isinstance(result, Exception):
            failures += 1
            rows.append(_failed_report_row(spec, alpha, s))
            print(f"cell (alpha={alpha}, seed={s}) failed: {result}", file=sys.stderr)
        else:
            rows.append(report_row(result))
    write_csv(rows, out)
    print(f"wrote {out} ({len(rows)} rows, {failures} failed cells)")
    return EXIT_OK if failures == 0 else EXIT_VERIFICATION_FAILED


def cmd_consistency(args) -> int:
    try:
        cfg = load_config(args.config)
        dist = build_distribution(cfg)
        spec = build_consistency_spec(cfg)
        out = args.out or _get(cfg, "output", "csv", default="consistency.csv")
    except (ConfigError, dist_mod.DistributionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        reports = eval_mod.consistency_trend(spec, dist)
    except (eval_mod.EvaluationError, EstimatorError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION_FAILED
    write_csv([report_row(r) for r in reports], out)
    print(f"wrote {out} ({len(reports)} rows)")
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    path = Path(args.csv)
    if not path.exists():
        print(f"error: {path} does not exist", file=sys.stderr)
        return EXIT_USAGE
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            print(f"error: {path} is empty", file=sys.stderr)
            return EXIT_USAGE
        if header != CSV_COLUMNS:
            missing = sorted(set(CSV_COLUMNS) - set(header))
            extra = sorted(set(header) - set(CSV_COLUMNS))
            print(
                f"error: CSV schema mismatch (missing columns: {missing}, "
                f"unexpected: {extra})",
                file=sys.stderr,
            )
            return EXIT_USAGE
        data = [dict(zip(header, row)) for row in reader]
    data = [r for r in data if not r["experiment_id"].endswith("#FAILED")]
    if not data:
        print(f"error: {path} has no data rows", file=sys.stderr)
        return EXIT_USAGE

    k = int(data[0]["K"])
    series: dict[str, dict[float, list[float]]] = {}
    for r in data:
        acc = 1.0 - float(r["risk"])
        series.setdefault(r["estimator"], {}).setdefault(float(r["alpha"]), []).append(acc)

    plt.rcParams["svg.hashsalt"] = "noisylabels"
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(series):
        alphas = sorted(series[name])
        means = [float(np.mean(series[name][a])) for a in alphas]
        ax.plot(alphas, means, marker="o", label=name)
    ax.axvline(breakdown_threshold(k), color="goldenrod", linestyle=":",
               label=f"statistical limit (K-1)/K = {breakdown_threshold(k):.3g}")
    ax.axvline(1.0 / (4.0 * (k - 1)), color="grey", linestyle=":",
               label=f"early-stopping bound 1/(4(K-1)) = {1.0 / (4 * (k - 1)):.3g}")
    ax.set_xlabel("noise level alpha")
    ax.set_ylabel("accuracy (1 - risk)")
    ax.set_ylim(0.0, 1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    fig.savefig(
        args.out,
        format="svg",
        metadata={"Date": None, "Description": f"source-csv-sha256={digest}"},
    )
    plt.close(fig)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        print(f"error: {path} does not exist", file=sys.stderr)
        return EXIT_USAGE
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            print(f"error: {path} is empty", file=sys.stderr)
            return EXIT_USAGE
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            print(f"error: duplicate header names {dupes}", file=sys.stderr)
            return EXIT_USAGE
        if args.label not in header:
            print(f"error: label column {args.label!r} not in header", file=sys.stderr)
            return EXIT_USAGE
        label_idx = header.index(args.label)
        feats, labels = [], []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                print(f"error: row {i} has {len(row)} fields, expected {len(header)}",
                      file=sys.stderr)
                return EXIT_USAGE
            try:
                labels.append(int(row[label_idx]))
            except ValueError:
                print(f"error: row {i}, column {args.label!r}: non-integer label "
                      f"{row[label_idx]!r}", file=sys.stderr)
                return EXIT_USAGE
            try:
                feats.append([float(v) for j, v in enumerate(row) if j != label_idx])
            except ValueError:
                bad = next(header[j] for j, v in enumerate(row)
                           if j != label_idx and not _is_float(v))
                print(f"error: row {i}, column {bad!r}: non-numeric feature",
                      file=sys.stderr)
                return EXIT_USAGE
    if not labels:
        print(f"error: {path} has no data rows", file=sys.stderr)
        return EXIT_USAGE
    k = max(labels)
    if set(labels) != set(range(1, k + 1)):
        print("error: labels must be contiguous 1..K", file=sys.stderr)
        return EXIT_USAGE
    ds = dist_mod.Dataset(np.array(feats), np.array(labels), k, provenance=f"ingest:{path}")
    dist_mod.save_dataset(ds, args.out)
    print(f"wrote {args.out} (n={ds.n}, d={ds.d}, K={ds.k})")
    return EXIT_OK


def _is_float(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisylabels",
        description="Label-noise channels, plug-in classifiers, breakdown experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="exact argmax-agreement and risk-bound checks")
    p.add_argument("--k", type=int, default=10, help="class count (default 10)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--bound-trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="JSON report path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="noise-level sweep from a config file")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="CSV path (overrides config)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mitigation", choices=["none", "known-symmetric", "backward"],
                   default=None, help="override the config's mitigation")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("consistency", help="training-size trend of posterior error")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("plot", help="accuracy vs noise level from a sweep CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path, required=True, help="SVG output path")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("ingest", help="convert a tabular CSV into a dataset file")
    p.add_argument("csv", type=Path)
    p.add_argument("--label", required=True, help="name of the label column")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ingest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, eval_mod.EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
