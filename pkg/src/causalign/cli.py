"""Command line interface.

Exit codes: 0 success, 2 malformed input or config, 3 mid-run stage
failure. Each subcommand prints a short summary of what it wrote.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import os
import sys

import numpy as np

from .errors import (
    CausalignError,
    ConfigError,
    DataFormatError,
    DegreeCapError,
    InputQualityError,
    MoveInfeasibleError,
    StageError,
    StructuralInputError,
    UndefinedMetricError,
)
from .io import (
    load_dataset,
    load_graph,
    load_matrix,
    load_training_set,
    save_matrix,
    save_training_set,
)
from .metrics import evaluate
from .model import EdgePredictor, TrainConfig, generate_training_set, predict, train
from .pipeline import (
    PipelineConfig,
    generate_instances,
    run_ablation_sparsity,
    run_benchmark,
    run_pipeline,
    save_instances,
)
from .scm import ShiftSetting, SpecTriple
from .sim import Basis, RegressorConfig

INPUT_ERRORS = (
    ConfigError,
    DataFormatError,
    StructuralInputError,
    InputQualityError,
    UndefinedMetricError,
    MoveInfeasibleError,
    DegreeCapError,
)

_SETTING_CHOICES = [s.value for s in ShiftSetting]


def _load_pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json_file(args.config) if args.config else PipelineConfig()
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    if getattr(args, "stages", None) is not None:
        updates["stages"] = args.stages
    if getattr(args, "data", None) is not None:
        updates["data_path"] = args.data
    if getattr(args, "truth", None) is not None:
        updates["truth_path"] = args.truth
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def _preload(cfg: PipelineConfig):
    """Resolve file inputs up front so unreadable paths exit 2, not 3."""
    dataset = truth = None
    if cfg.data_path:
        dataset = load_dataset(cfg.data_path)
    if cfg.truth_path:
        truth = load_graph(cfg.truth_path)
    return dataset, truth


def _print_run_summary(record) -> None:
    best = record.best_score or {}
    print(f"run dir: {record.out_dir}")
    print(
        "best graph: total={total} ad={ad} edges={sparsity}".format(
            total=best.get("total"), ad=best.get("ad"), sparsity=best.get("sparsity")
        )
    )
    if record.metrics and "final" in record.metrics:
        final = record.metrics["final"]
        print(
            "final vs truth: auroc={auroc:.4f} auprc={auprc:.4f} "
            "f1={f1:.4f} acc={acc:.4f}".format(**{k: final[k] for k in ("auroc", "auprc", "f1", "acc")})
        )


def cmd_generate(args) -> int:
    spec = SpecTriple.parse(args.mechanism, args.noise, args.graph)
    kwargs = {}
    if args.expected_edges is not None:
        kwargs["expected_edges"] = args.expected_edges
    if args.attach_m is not None:
        kwargs["attach_m"] = args.attach_m
    instances = generate_instances(
        spec, args.d, args.n, args.count, args.seed, **kwargs
    )
    save_instances(instances, args.out)
    print(f"wrote {len(instances)} instance bundle(s) under {args.out}")
    return 0


def cmd_refine(args) -> int:
    cfg = _load_pipeline_config(args)
    cfg = dataclasses.replace(cfg, stages="refine_only")
    if cfg.data_path is None and cfg.generator is None:
        raise ConfigError("refine needs --data or a generator section in --config")
    dataset, truth = _preload(cfg)
    record = run_pipeline(cfg, dataset=dataset, truth=truth)
    _print_run_summary(record)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_pipeline_config(args)
    dataset, truth = _preload(cfg)
    record = run_pipeline(cfg, dataset=dataset, truth=truth)
    _print_run_summary(record)
    return 0


def cmd_make_trainset(args) -> int:
    dataset = load_dataset(args.data)
    paths = sorted(glob.glob(os.path.join(args.graphs, "*.csv")))
    if not paths:
        raise DataFormatError(f"{args.graphs}: no graph CSV files found")
    graphs = [load_graph(p) for p in paths]
    regressor = RegressorConfig(basis=Basis(args.basis), basis_size=args.basis_size)
    training_set = generate_training_set(
        graphs,
        dataset,
        regressor=regressor,
        noise_mode=args.noise_mode,
        rng=np.random.default_rng(args.seed),
    )
    save_training_set(training_set, args.out)
    print(f"wrote {len(training_set.instances)} training instance(s) under {args.out}")
    return 0


def cmd_train(args) -> int:
    training_set = load_training_set(args.trainset)
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        momentum=args.momentum,
        seed=args.seed,
    )
    predictor = train(training_set, cfg)
    with open(args.out, "w") as fh:
        fh.write(predictor.to_json())
    last = predictor.epoch_losses[-1] if predictor.epoch_losses else float("nan")
    print(f"wrote predictor to {args.out} (final epoch loss {last:.6f})")
    return 0


def cmd_predict(args) -> int:
    try:
        with open(args.predictor) as fh:
            predictor = EdgePredictor.from_json(fh.read())
    except OSError as exc:
        raise DataFormatError(f"{args.predictor}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise DataFormatError(f"{args.predictor}: bad predictor file: {exc}") from exc
    dataset = load_dataset(args.data)
    matrix = predict(predictor, dataset)
    save_matrix(matrix, args.out)
    print(f"wrote {dataset.d}x{dataset.d} edge probability matrix to {args.out}")
    return 0


def cmd_eval(args) -> int:
    prediction = load_matrix(args.prediction)
    truth = load_graph(args.truth)
    report = evaluate(prediction, truth, threshold=args.threshold)
    payload = json.dumps(report.to_json(), indent=2, sort_keys=True)
    print(payload)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_pipeline_config(args)
    summary = run_benchmark(
        cfg, args.setting, args.instances, args.out, threads=args.threads
    )
    for row in summary:
        print(
            f"{row['setting']} {row['method']} {row['metric']}: "
            f"{row['mean']:.4f} +/- {row['std']:.4f}"
        )
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_pipeline_config(args)
    rows = run_ablation_sparsity(
        cfg, args.setting, args.instances, args.out, threads=args.threads
    )
    print(f"wrote {len(rows)} ablation row(s) to {os.path.join(args.out, 'ablation.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalign",
        description="Causal structure discovery via refine-synthesize-train.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample synthetic benchmark instances")
    p.add_argument("--mechanism", default="linear", help="linear | rff | chebyshev")
    p.add_argument("--noise", default="gaussian", help="gaussian | uniform | laplace")
    p.add_argument("--graph", default="er", help="er | sf")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--expected-edges", type=float, default=None)
    p.add_argument("--attach-m", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("refine", help="refinement stage only: seed, search, best graph")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--truth", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("make-trainset", help="fit mechanisms to graphs and resample data")
    p.add_argument("--data", required=True)
    p.add_argument("--graphs", required=True, help="directory of adjacency CSVs")
    p.add_argument("--basis", default="fourier", help="linear | fourier | spline")
    p.add_argument("--basis-size", type=int, default=8)
    p.add_argument("--noise-mode", default="empirical", choices=["parametric", "empirical"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_trainset)

    p = sub.add_parser("train", help="train the edge predictor on a training set")
    p.add_argument("--trainset", required=True)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="edge probabilities for a dataset")
    p.add_argument("--predictor", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a prediction matrix against a truth graph")
    p.add_argument("--prediction", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="full run: seed, refine, synthesize, train, predict")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--stages", default=None, choices=["full", "refine_only", "knn_only"])
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("benchmark", help="run the pipeline over generated instances")
    p.add_argument("--config", required=True)
    p.add_argument("--setting", required=True, choices=_SETTING_CHOICES)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("ablate", help="paired sparsity-penalty ablation")
    p.add_argument("--config", required=True)
    p.add_argument("--setting", required=True, choices=_SETTING_CHOICES)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CausalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
