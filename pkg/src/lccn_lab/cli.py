"""Command-line entry points: generate | train | sweep | diagnose.

Every command writes a JSON echo of its resolved configuration next to its
outputs, so any artifact can be reproduced from its directory alone. Exit
codes: 0 success, 1 runtime/training failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .classifier import save_checkpoint
from .datagen import (
    LabeledDataset,
    NoiseSpec,
    apply_noise,
    load_dataset,
    make_gaussian_mixture,
    mark_clean_subset,
    save_dataset,
    save_report,
)
from .errors import InvariantError, ParameterError, TrainingError
from .metrics import (
    read_metrics_csv,
    transition_frobenius_error,
    transition_l1_error,
    variation_histogram,
    write_histogram_csv,
    write_metrics_csv,
)
from .noise_model import DirichletPrior
from .sampler import AnnealSchedule, mixing_diagnostic
from .trainers import TrainConfig, run_trainer

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

TEST_SEED_OFFSET = 10007


def _worker_cap(n_jobs: int) -> int:
    """Parallel worker count, capped by the LCCN_LAB_THREADS environment variable."""
    raw = os.environ.get("LCCN_LAB_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ParameterError(f"LCCN_LAB_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(cap, n_jobs))


def _write_json(payload, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_json(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise ParameterError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path} is not valid JSON: {exc}") from exc


def _phi_from_value(value, base: Path | None = None) -> np.ndarray:
    """Accept a matrix inline (nested lists) or as a path to a JSON file."""
    if isinstance(value, str):
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        payload = _load_json(path)
        value = payload["matrix"] if isinstance(payload, dict) else payload
    matrix = np.asarray(value, dtype=np.float64)
    if matrix.ndim != 2:
        raise ParameterError("transition matrix must be 2-d")
    return matrix


def build_train_config(train_dict: dict, seed: int | None = None, base: Path | None = None) -> TrainConfig:
    """Translate the JSON 'train' section into a TrainConfig."""
    payload = dict(train_dict)
    if "anneal" in payload and isinstance(payload["anneal"], dict):
        try:
            payload["anneal"] = AnnealSchedule(**payload["anneal"])
        except TypeError as exc:
            raise ParameterError(f"bad anneal section: {exc}") from exc
    if "lr_milestones" in payload:
        payload["lr_milestones"] = tuple(
            (int(e), float(lr)) for e, lr in payload["lr_milestones"]
        )
    for key in ("oracle_phi", "reference_phi"):
        if payload.get(key) is not None:
            payload[key] = _phi_from_value(payload[key], base)
    if "alpha" in payload and isinstance(payload["alpha"], list):
        payload["alpha"] = tuple(float(a) for a in payload["alpha"])
    if seed is not None:
        payload["seed"] = seed
    try:
        return TrainConfig(**payload)
    except TypeError as exc:
        raise ParameterError(f"bad train section: {exc}") from exc


def build_datasets(cfg: dict, base: Path | None = None):
    """Resolve the data sections of an experiment config.

    Returns (train_ds, test_ds, noise_report, reference_phi). Generated
    datasets depend only on the generator/noise/clean seeds, never on the
    training seed, so multi-seed runs share identical data.
    """
    report = None
    reference_phi = None
    test_ds = None
    if "dataset" in cfg:
        path = Path(cfg["dataset"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ParameterError(f"dataset file not found: {path}")
        ds = load_dataset(path)
        if "test_dataset" in cfg:
            tpath = Path(cfg["test_dataset"])
            if base is not None and not tpath.is_absolute():
                tpath = base / tpath
            if not tpath.exists():
                raise ParameterError(f"test dataset file not found: {tpath}")
            test_ds = load_dataset(tpath)
    elif "generator" in cfg:
        gen = dict(cfg["generator"])
        try:
            ds = make_gaussian_mixture(
                n_classes=int(gen["k"]),
                dim=int(gen.get("d", 2)),
                n_per_class=int(gen["n_per_class"]),
                separation=float(gen.get("separation", 4.0)),
                seed=int(gen.get("seed", 0)),
            )
        except KeyError as exc:
            raise ParameterError(f"generator section is missing field {exc}") from exc
        noise_dict = dict(cfg.get("noise", {}))
        if noise_dict:
            if "pair_map" in noise_dict and noise_dict["pair_map"] is not None:
                noise_dict["pair_map"] = tuple(int(p) for p in noise_dict["pair_map"])
            try:
                spec = NoiseSpec(**noise_dict)
            except TypeError as exc:
                raise ParameterError(f"bad noise section: {exc}") from exc
            ds, report = apply_noise(ds, spec)
            reference_phi = spec.true_transition(ds.n_classes)
        clean = cfg.get("clean")
        if clean:
            ds = mark_clean_subset(
                ds, int(clean["n_clean"]), int(clean.get("seed", 0))
            )
        test = dict(cfg.get("test", {}))
        test_ds = make_gaussian_mixture(
            n_classes=ds.n_classes,
            dim=ds.dim,
            n_per_class=int(test.get("n_per_class", gen["n_per_class"])),
            separation=float(gen.get("separation", 4.0)),
            seed=int(test.get("seed", int(gen.get("seed", 0)) + TEST_SEED_OFFSET)),
        )
    else:
        raise ParameterError("config must contain a 'dataset' path or a 'generator' section")
    return ds, test_ds, report, reference_phi


def _write_variations_csv(run, path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "measured", "bound"])
        for var in run.batch_variations:
            writer.writerow([var.step, repr(var.measured), repr(var.bound)])


def run_experiment(cfg: dict, seed: int, out_dir: Path, base: Path | None = None) -> dict:
    """One seed of one experiment config; writes all run artifacts into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, test_ds, report, reference_phi = build_datasets(cfg, base)
    train_dict = cfg.get("train")
    if not isinstance(train_dict, dict):
        raise ParameterError("config must contain a 'train' section")
    if reference_phi is not None and train_dict.get("reference_phi") is None:
        train_dict = {**train_dict, "reference_phi": reference_phi.tolist()}
    tc = build_train_config(train_dict, seed=seed, base=base)
    result = run_trainer(ds, tc, test_ds)

    echo = {k: v for k, v in cfg.items() if k != "seeds"}
    echo["train"] = {**train_dict, "seed": seed}
    _write_json(echo, out_dir / "config.json")
    write_metrics_csv(result.records, out_dir / "metrics.csv")
    save_checkpoint(result.final_params, out_dir / "checkpoint.json")
    if result.final_phi is not None:
        _write_json({"matrix": result.final_phi.matrix.tolist()}, out_dir / "phi_final.json")
    if result.batch_variations:
        _write_variations_csv(result, out_dir / "variations.csv")
    if report is not None:
        save_report(report, out_dir / "noise_report.json")
    summary = {
        "seed": seed,
        "final_test_accuracy": result.final_test_accuracy() if test_ds is not None else None,
        "final_train_accuracy": result.records_for("train")[-1].accuracy,
        "outlier_recall": result.outlier_recall,
    }
    _write_json(summary, out_dir / "summary.json")
    return summary


def _experiment_worker(payload: tuple) -> dict:
    cfg, seed, out_dir, base = payload
    return run_experiment(cfg, seed, Path(out_dir), Path(base) if base else None)


def _run_seeds(cfg: dict, seeds: list[int], out: Path, base: Path | None) -> list[dict]:
    if len(set(seeds)) != len(seeds):
        raise ParameterError("seeds must be distinct")
    if len(seeds) == 1:
        return [run_experiment(cfg, seeds[0], out, base)]
    jobs = [(cfg, seed, str(out / f"seed_{seed}"), str(base) if base else None) for seed in seeds]
    workers = _worker_cap(len(jobs))
    if workers == 1:
        return [_experiment_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_experiment_worker, jobs))


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = make_gaussian_mixture(
        n_classes=args.k,
        dim=args.d,
        n_per_class=args.n_per_class,
        separation=args.separation,
        seed=args.seed,
    )
    pair_map = tuple(args.pair_map) if args.pair_map else None
    spec = NoiseSpec(
        kind=args.noise,
        ratio=args.ratio,
        pair_map=pair_map,
        ood_fraction=args.ood_fraction,
        seed=args.seed,
    )
    ds, report = apply_noise(ds, spec)
    if args.n_clean:
        ds = mark_clean_subset(ds, args.n_clean, args.seed + 1)
    save_dataset(ds, out / "dataset.json")
    save_report(report, out / "noise_report.json")
    echo = {
        "k": args.k,
        "d": args.d,
        "n_per_class": args.n_per_class,
        "separation": args.separation,
        "noise": args.noise,
        "ratio": args.ratio,
        "pair_map": list(pair_map) if pair_map else None,
        "ood_fraction": args.ood_fraction,
        "n_clean": args.n_clean,
        "seed": args.seed,
    }
    _write_json(echo, out / "generate_config.json")
    print(f"wrote {out / 'dataset.json'} ({ds.n} samples, K={ds.n_classes})")
    print(f"realized flip fraction: {report.realized_flip_fraction:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        raise ParameterError("experiment config must be a JSON object")
    base = Path(args.config).resolve().parent
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.seeds is not None:
        seeds = list(args.seeds)
    elif cfg.get("seeds"):
        seeds = [int(s) for s in cfg["seeds"]]
    else:
        seeds = [int(cfg.get("train", {}).get("seed", 0))]
    summaries = _run_seeds(cfg, seeds, out, base)
    accuracies = [s["final_test_accuracy"] for s in summaries if s["final_test_accuracy"] is not None]
    aggregate = {
        "seeds": seeds,
        "runs": summaries,
        "median_test_accuracy": statistics.median(accuracies) if accuracies else None,
    }
    _write_json(aggregate, out / "summary.json")
    if aggregate["median_test_accuracy"] is not None:
        print(f"median test accuracy over {len(seeds)} seed(s): {aggregate['median_test_accuracy']:.4f}")
    return EXIT_OK


def _coerce_sweep_value(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"sweep value {value!r} is not a number") from exc


_SWEEPABLE_SECTIONS = ("generator", "noise", "test", "clean", "train")


def _resolve_sweep_target(param: str) -> tuple[str, str]:
    """Map a --param name to the (section, key) it should override.

    Bare names keep the shorthand behaviour: "ratio" targets the noise
    section, anything else the train section.  A dotted "section.key"
    form addresses any config section explicitly.
    """
    if "." in param:
        section, _, key = param.partition(".")
        if not key or "." in key:
            raise ParameterError(f"param {param!r} must look like 'section.key'")
        if section not in _SWEEPABLE_SECTIONS:
            raise ParameterError(
                f"param section {section!r} is not one of {', '.join(_SWEEPABLE_SECTIONS)}"
            )
        return section, key
    if param == "ratio":
        return "noise", param
    return "train", param


def cmd_sweep(args) -> int:
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        raise ParameterError("experiment config must be a JSON object")
    base = Path(args.config).resolve().parent
    if not args.values:
        raise ParameterError("values: sweep grid must not be empty")
    values = [_coerce_sweep_value(v) for v in args.values]
    section, key = _resolve_sweep_target(args.param)
    seeds = list(args.seeds) if args.seeds is not None else [int(s) for s in cfg.get("seeds", [0])]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        point_cfg = json.loads(json.dumps(cfg))  # deep copy
        point_cfg.setdefault(section, {})[key] = value
        point_dir = out / f"{key}_{value}"
        summaries = _run_seeds(point_cfg, seeds, point_dir, base)
        accuracies = [
            s["final_test_accuracy"] for s in summaries if s["final_test_accuracy"] is not None
        ]
        if not accuracies:
            raise ParameterError("sweep requires a test split to aggregate accuracy")
        rows.append((args.param, value, statistics.median(accuracies), len(seeds)))
    with open(out / "sweep.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["param", "value", "median_accuracy", "n_seeds"])
        for row in rows:
            writer.writerow([row[0], row[1], repr(row[2]), row[3]])
    _write_json(
        {"param": args.param, "values": values, "seeds": seeds},
        out / "sweep_config.json",
    )
    for _, value, acc, _n in rows:
        print(f"{args.param}={value}: median accuracy {acc:.4f}")
    return EXIT_OK


def cmd_diagnose_mixing(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    probs = rng.dirichlet(np.ones(args.k), size=args.n)
    observed = rng.integers(0, args.k, size=args.n)
    prior = DirichletPrior.uniform(args.k, args.alpha)
    diag = mixing_diagnostic(
        probs, observed, prior, sweeps=args.sweeps, burn_in=args.burn_in, seed=args.seed + 1
    )
    with open(out / "mixing.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sweep", "max_tv", "mean_tv"])
        for sweep, max_tv, mean_tv in diag.trace:
            writer.writerow([sweep, repr(max_tv), repr(mean_tv)])
    _write_json(
        {
            "n": args.n,
            "k": args.k,
            "sweeps": args.sweeps,
            "burn_in": args.burn_in,
            "alpha": args.alpha,
            "seed": args.seed,
            "final_max_tv": diag.max_tv,
            "final_mean_tv": diag.mean_tv,
        },
        out / "mixing_config.json",
    )
    print(f"final max TV over {args.n} samples: {diag.max_tv:.5f}")
    return EXIT_OK


def cmd_diagnose_transition(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    phi = _phi_from_value(str(Path(args.run) / "phi_final.json"))
    with open(out / "transition_colormap.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["row", "col", "value", "log_value"])
        for i in range(phi.shape[0]):
            for j in range(phi.shape[1]):
                value = float(phi[i, j])
                writer.writerow([i, j, repr(value), repr(math.log(max(value, 1e-12)))])
    payload = {"rows": phi.shape[0], "cols": phi.shape[1]}
    if args.oracle:
        oracle = _phi_from_value(args.oracle)
        if oracle.shape != phi.shape:
            oracle = oracle[: phi.shape[0], : phi.shape[1]]
            if oracle.shape != phi.shape:
                raise ParameterError("oracle transition shape does not match the run's")
        per_row = np.abs(phi - oracle).sum(axis=1)
        with open(out / "transition_errors.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["row", "l1_error"])
            for i, err in enumerate(per_row):
                writer.writerow([i, repr(float(err))])
        payload["max_row_l1_error"] = transition_l1_error(phi, oracle)
        payload["frobenius_error"] = transition_frobenius_error(phi, oracle)
        print(f"max row L1 error: {payload['max_row_l1_error']:.5f}")
    _write_json(payload, out / "transition_summary.json")
    return EXIT_OK


def _read_variations(run_dir: Path) -> list[float]:
    path = run_dir / "variations.csv"
    if not path.exists():
        raise ParameterError(f"no variations.csv in {run_dir}")
    with open(path, newline="") as handle:
        return [float(row["measured"]) for row in csv.DictReader(handle)]


def cmd_diagnose_variation(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values_a = _read_variations(Path(args.run_a))
    values_b = _read_variations(Path(args.run_b))
    write_histogram_csv(variation_histogram(values_a, bins=args.bins), out / "histogram_a.csv")
    write_histogram_csv(variation_histogram(values_b, bins=args.bins), out / "histogram_b.csv")
    payload = {
        "run_a": str(args.run_a),
        "run_b": str(args.run_b),
        "max_a": max(values_a),
        "max_b": max(values_b),
        "a_max_below_b_max": max(values_a) < max(values_b),
    }
    _write_json(payload, out / "variation_summary.json")
    print(f"max variation: {payload['max_a']:.5f} (a) vs {payload['max_b']:.5f} (b)")
    return EXIT_OK


def cmd_diagnose_correction(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_metrics_csv(Path(args.run) / "metrics.csv")
    rows = [
        (r.step, r.correction_ratio)
        for r in records
        if r.split == "train" and r.correction_ratio is not None
    ]
    if not rows:
        raise ParameterError("run has no correction_ratio records")
    with open(out / "correction_trace.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "correction_ratio"])
        for step, ratio in rows:
            writer.writerow([step, repr(ratio)])
    print(f"correction ratio: {rows[0][1]:.4f} -> {rows[-1][1]:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lccn-lab",
        description="Latent class-conditional label-noise experiments at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic noisy dataset as JSON")
    gen.add_argument("--k", type=int, required=True, help="number of classes")
    gen.add_argument("--d", type=int, default=2, help="feature dimension")
    gen.add_argument("--n-per-class", type=int, required=True)
    gen.add_argument("--separation", type=float, default=4.0)
    gen.add_argument(
        "--noise", choices=["none", "symmetric", "asymmetric", "openset"], default="none"
    )
    gen.add_argument("--ratio", type=float, default=0.0)
    gen.add_argument("--pair-map", type=int, nargs="+", default=None)
    gen.add_argument("--ood-fraction", type=float, default=0.0)
    gen.add_argument("--n-clean", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=".")
    gen.set_defaults(func=cmd_generate)

    train = sub.add_parser("train", help="run one trainer from an experiment config")
    train.add_argument("--config", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--seeds", type=int, nargs="+", default=None)
    train.set_defaults(func=cmd_train)

    sweep = sub.add_parser("sweep", help="repeat an experiment over a parameter grid")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", nargs="*", default=[])
    sweep.add_argument("--seeds", type=int, nargs="+", default=None)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)

    diag = sub.add_parser("diagnose", help="emit plot-ready CSV diagnostics")
    diag_sub = diag.add_subparsers(dest="what", required=True)

    mixing = diag_sub.add_parser("mixing", help="chain marginals vs exact enumeration")
    mixing.add_argument("--n", type=int, default=6)
    mixing.add_argument("--k", type=int, default=2)
    mixing.add_argument("--sweeps", type=int, default=50000)
    mixing.add_argument("--burn-in", type=int, default=5000)
    mixing.add_argument("--alpha", type=float, default=1.0)
    mixing.add_argument("--seed", type=int, default=0)
    mixing.add_argument("--out", required=True)
    mixing.set_defaults(func=cmd_diagnose_mixing)

    transition = diag_sub.add_parser("transition", help="colormap + errors of a run's transition")
    transition.add_argument("--run", required=True)
    transition.add_argument("--oracle", default=None)
    transition.add_argument("--out", required=True)
    transition.set_defaults(func=cmd_diagnose_transition)

    variation = diag_sub.add_parser("variation", help="per-batch variation histograms of two runs")
    variation.add_argument("--run-a", required=True)
    variation.add_argument("--run-b", required=True)
    variation.add_argument("--bins", type=int, default=50)
    variation.add_argument("--out", required=True)
    variation.set_defaults(func=cmd_diagnose_variation)

    correction = diag_sub.add_parser("correction", help="correction-ratio trace of a run")
    correction.add_argument("--run", required=True)
    correction.add_argument("--out", required=True)
    correction.set_defaults(func=cmd_diagnose_correction)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, InvariantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
