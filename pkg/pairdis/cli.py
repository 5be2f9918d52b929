"""Command-line interface for pairdis."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from pairdis.config import apply_config_defaults, read_config_file, resolve_seed
from pairdis.datasets.base import Dataset, LabelGenConfig
from pairdis.datasets.labels import make_labels
from pairdis.datasets.storage import load_dataset, save_dataset
from pairdis.datasets.synthetic import GENERATORS, gen_synthetic
from pairdis.errors import ContractError, PairdisError
from pairdis.exporters.tables import (
    CrossValExporter,
    MetricsExporter,
    PairExporter,
    SweepExporter,
    load_pairs,
)
from pairdis.manifest import RunManifest, content_hash, make_run_dir
from pairdis.metrics import MigConfig, evaluate_model, metric_records, mig, model_codes
from pairdis.models.base import LatentModel, ModelConfig
from pairdis.models.checkpoint import load_checkpoint
from pairdis.pipeline import MODEL_NAMES, ExperimentPipeline, label_kind_for, model_config_for
from pairdis.similarity import PairBatch, SimilarityParams
from pairdis.sweep import SweepManager, SweepSettings, sweep_jobs
from pairdis.trainer import TrainConfig, crossval_beta
from pairdis.visualize import export_latents, print_run_summary, save_traversal

logger = logging.getLogger(__name__)


def _float_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _name_list(text: str) -> List[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    unknown = [n for n in names if n not in MODEL_NAMES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"models must be drawn from {list(MODEL_NAMES)}")
    return names


# Shared option groups


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out",
        default="runs",
        help="Base directory; each run writes to <out>/<timestamp>-seed<seed> (default: runs).",
    )
    parser.add_argument(
        "--seed",
        type=int,
        help="Random seed (PAIRDIS_SEED overrides it when set).",
    )
    parser.add_argument(
        "--config",
        type=str,
        help="File of key=value lines used as defaults; flags win on conflict.",
    )


def _add_label_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--proportion",
        type=float,
        default=1e-4,
        help="Fraction of all pairs that get a label (default: 1e-4).",
    )
    parser.add_argument(
        "--rbf-sigma",
        type=float,
        default=30.0,
        help="RBF bandwidth in degrees for cyclic factors (default: 30).",
    )
    parser.add_argument(
        "--gamma",
        type=float,
        default=0.0,
        help="Label noise: flip probability (binary) or noise variance (real) (default: 0).",
    )


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d-u", type=int, default=2, help="Relevant latent dimensions (default: 2).")
    parser.add_argument("--d-v", type=int, default=8, help="Residual latent dimensions (default: 8).")
    parser.add_argument(
        "--hidden",
        type=_int_list,
        default=[256, 128],
        help="Encoder hidden widths, comma-separated (default: 256,128).",
    )
    parser.add_argument("--beta", type=float, default=4.0, help="KL weight on z^(u) (default: 4).")
    parser.add_argument("--eta1", type=float, default=1e3, help="Similarity steepness (default: 1000).")
    parser.add_argument("--eta2", type=float, default=2.0, help="Squared-distance threshold (default: 2).")
    parser.add_argument(
        "--label-kind",
        choices=["auto", "binary", "real"],
        default="auto",
        help="Pair likelihood; auto follows the factor kind (default: auto).",
    )
    parser.add_argument(
        "--mc-samples",
        type=int,
        default=8,
        help="Posterior draws for held-out log-likelihoods (default: 8).",
    )


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=50, help="Training epochs (default: 50).")
    parser.add_argument("--batch-size", type=int, default=64, help="Images per step (default: 64).")
    parser.add_argument(
        "--pairs-per-step",
        type=int,
        default=32,
        help="Labelled pairs per step (default: 32).",
    )
    parser.add_argument(
        "--learning-rate",
        "--lr",
        type=float,
        dest="learning_rate",
        default=1e-3,
        help="Step size (default: 1e-3).",
    )
    parser.add_argument(
        "--optimizer",
        choices=["adaptive-moment", "plain-sgd"],
        default="adaptive-moment",
        help="Optimizer (default: adaptive-moment).",
    )


def _add_mig_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bins", type=int, default=20, help="Bins per latent dimension (default: 20).")
    parser.add_argument(
        "--latent-source",
        choices=["posterior_mean", "posterior_sample"],
        default="posterior_mean",
        help="Which latents are scored (default: posterior_mean).",
    )


# Helpers


def _label_kind(args: argparse.Namespace, dataset: Dataset) -> str:
    return label_kind_for(dataset) if args.label_kind == "auto" else args.label_kind


def _model_config(args: argparse.Namespace, dataset: Dataset, name: str = "pairwise") -> ModelConfig:
    base = ModelConfig(
        d_u=args.d_u,
        d_v=args.d_v,
        hidden_sizes=tuple(args.hidden),
        beta=args.beta,
        sim=SimilarityParams(eta1=args.eta1, eta2=args.eta2, label_kind=_label_kind(args, dataset)),
        input_shape=dataset.images.shape[1:],
        mc_samples=args.mc_samples,
    )
    return model_config_for(name, base)


def _train_config(args: argparse.Namespace, seed: int, **extra) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        pairs_per_step=args.pairs_per_step,
        learning_rate=args.learning_rate,
        optimizer_kind=args.optimizer,
        seed=seed,
        **extra,
    )


def _mig_config(args: argparse.Namespace, model: LatentModel) -> MigConfig:
    return MigConfig(bins=args.bins, latent_source=args.latent_source, d_u=model.config.d_u)


def _finish(
    args: argparse.Namespace,
    run_dir: Path,
    seed: int,
    inputs: Sequence[str],
    outputs: Sequence[Path],
) -> None:
    config = {
        k: ",".join(str(x) for x in v) if isinstance(v, list) else str(v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "verbose", "quiet") and v is not None
    }
    manifest = RunManifest(
        command=args.command,
        seed=seed,
        config=config,
        inputs=list(inputs),
        input_hash=content_hash(inputs) if inputs else "",
        outputs=sorted(p.relative_to(run_dir).as_posix() for p in outputs),
    )
    manifest.write(run_dir)
    for path in outputs:
        print(f"✓ Saved to: {path}")
    print(f"✓ Run directory: {run_dir}")


# Commands


def cmd_gen_data(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    dataset = gen_synthetic(args.dataset, args.n, seed=seed)
    run_dir = make_run_dir(args.out, seed)
    images, factors = save_dataset(dataset, run_dir)
    print(f"Generated {len(dataset)} {args.dataset} images")
    _finish(args, run_dir, seed, [], [images, factors])


def cmd_gen_pairs(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    dataset = load_dataset(args.data)
    kind = args.kind or label_kind_for(dataset)
    cfg = LabelGenConfig(
        proportion=args.proportion,
        rbf_sigma=args.rbf_sigma,
        noise_gamma=args.gamma,
        kind=kind,
        seed=seed,
    )
    pairs = make_labels(dataset.factors, cfg)
    run_dir = make_run_dir(args.out, seed)
    path = run_dir / "pairs.csv"
    PairExporter().export(pairs, str(path))
    print(f"Labelled {len(pairs)} {kind} pairs of {len(dataset)} instances")
    _finish(args, run_dir, seed, [args.data], [path])


def cmd_train(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    if args.pairs is None and args.baseline is None:
        raise ContractError("train needs --pairs (or --baseline for an unsupervised model)")
    dataset = load_dataset(args.data)
    pairs = load_pairs(args.pairs) if args.pairs else PairBatch.empty()
    model_config = _model_config(args, dataset, args.baseline or "pairwise")
    pipeline = ExperimentPipeline(model_config, _train_config(args, seed))
    run_dir = make_run_dir(args.out, seed)
    inputs = [args.data] + ([args.pairs] if args.pairs else [])

    training = pipeline.fit(dataset, pairs, out_dir=run_dir)
    outputs = [training.checkpoint_dir, training.loss_path]
    metrics = None
    if args.heldout:
        heldout = load_dataset(args.heldout)
        metrics = pipeline.evaluate(training.model, dataset, heldout)
        path = run_dir / "metrics.csv"
        MetricsExporter().export(metric_records(metrics, heldout.name, seed), str(path))
        outputs.append(path)
        inputs.append(args.heldout)
    print_run_summary(training.history, metrics)
    _finish(args, run_dir, seed, inputs, outputs)


def cmd_xval_beta(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    dataset = load_dataset(args.data)
    pairs = load_pairs(args.pairs)
    cfg = _train_config(args, seed, beta_grid=tuple(args.grid), folds=args.folds)
    result = crossval_beta(dataset, pairs, cfg, _model_config(args, dataset), jobs=args.jobs)
    run_dir = make_run_dir(args.out, seed)
    path = run_dir / "xval.csv"
    CrossValExporter().export(result.rows, str(path))
    print("\nbeta        mean held-out log-likelihood")
    for row in result.rows:
        print(f"{row.beta:<11g} {row.mean_log_likelihood:.4f}")
    print(f"Selected beta: {result.selected_beta:g}")
    _finish(args, run_dir, seed, [args.data, args.pairs], [path])


def cmd_eval_mig(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    cfg = _mig_config(args, model)
    value = mig(model_codes(model, dataset, cfg, seed), dataset.factors, cfg)
    if not np.isfinite(value):
        raise ContractError(f"MIG is not finite ({value})")
    run_dir = make_run_dir(args.out, seed)
    path = run_dir / "metrics.csv"
    MetricsExporter().export(metric_records({"mig": value}, dataset.name, seed), str(path))
    print(f"MIG: {value:.4f}")
    _finish(args, run_dir, seed, [args.checkpoint, args.data], [path])


def cmd_eval_knn(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    model = load_checkpoint(args.checkpoint)
    train_set = load_dataset(args.train_data)
    heldout = load_dataset(args.data)
    metrics = evaluate_model(model, train_set, heldout, _mig_config(args, model), k=args.k, seed=seed)
    metrics.pop("mig")
    for name, value in metrics.items():
        if not np.isfinite(value):
            raise ContractError(f"{name} is not finite ({value})")
    run_dir = make_run_dir(args.out, seed)
    path = run_dir / "metrics.csv"
    MetricsExporter().export(metric_records(metrics, heldout.name, seed), str(path))
    for name in sorted(metrics):
        print(f"{name}: {metrics[name]:.4f}")
    _finish(args, run_dir, seed, [args.checkpoint, args.train_data, args.data], [path])


def cmd_traverse(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if not 0 <= args.index < len(dataset):
        raise ContractError(f"--index {args.index} is outside 0..{len(dataset) - 1}")
    run_dir = make_run_dir(args.out, seed)
    path = save_traversal(
        model,
        dataset.images[args.index],
        run_dir / "traversal.pgm",
        grid_size=args.grid_size,
        extent=args.extent,
    )
    _finish(args, run_dir, seed, [args.checkpoint, args.data], [path])


def cmd_sweep(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    seeds = args.seeds if args.seeds else [seed]
    sample = gen_synthetic(args.dataset, 2, seed=seed)
    settings = SweepSettings(
        dataset=args.dataset,
        n=args.n,
        heldout_fraction=args.heldout_fraction,
        labels=LabelGenConfig(
            proportion=args.proportion,
            rbf_sigma=args.rbf_sigma,
            noise_gamma=args.gamma,
            kind=label_kind_for(sample),
        ),
        model=_model_config(args, sample),
        training=_train_config(args, seed),
        mig=MigConfig(bins=args.bins, latent_source=args.latent_source, d_u=args.d_u),
        k=args.k,
    )
    run_dir = make_run_dir(args.out, seed)
    if args.keep_runs:
        settings.out_dir = run_dir / "jobs"
    jobs = sweep_jobs(args.param, args.values, seeds, args.models)
    manager = SweepManager(settings, jobs=args.jobs)
    rows = manager.run(jobs)
    path = run_dir / "sweep.csv"
    SweepExporter().export(rows, str(path))
    failed = manager.failed()
    if failed:
        for status in failed:
            print(f"Job {status.job_id} failed: {status.error}", file=sys.stderr)
        raise ContractError(f"{len(failed)} of {len(jobs)} sweep jobs failed")
    print(f"Completed {len(jobs)} jobs, {len(rows)} rows")
    _finish(args, run_dir, seed, [], [path])


def cmd_export_latents(args: argparse.Namespace) -> None:
    seed = resolve_seed(args.seed)
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    run_dir = make_run_dir(args.out, seed)
    latents, factors = export_latents(model, dataset, run_dir)
    _finish(args, run_dir, seed, [args.checkpoint, args.data], [latents, factors])


# Parser


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one sub-parser per command."""
    parser = argparse.ArgumentParser(
        prog="pairdis",
        description="Learn disentangled representations from pairwise similarity labels.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Synthetic data and 0.01% binary pair labels
  %(prog)s gen-data --dataset blobs --n 10000 --seed 1 --out runs
  %(prog)s gen-pairs --data runs/<run> --proportion 1e-4

  # Train, then score on held-out data
  %(prog)s train --data runs/<data> --pairs runs/<pairs>/pairs.csv --heldout runs/<test>
  %(prog)s eval-mig --checkpoint runs/<train>/checkpoint --data runs/<test>

  # Choose beta by 5-fold cross-validation
  %(prog)s xval-beta --data runs/<data> --pairs runs/<pairs>/pairs.csv --grid 1,2,4,8,16

  # MIG versus label proportion, three seeds
  %(prog)s sweep --dataset blobs --param proportion --values 1e-6,1e-5,1e-4 --seeds 0,1,2
        """,
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug messages.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings only.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Generate a synthetic dataset.")
    p.add_argument("--dataset", choices=sorted(GENERATORS), default="blobs", help="Generator (default: blobs).")
    p.add_argument("--n", type=int, default=10000, help="Number of images (default: 10000).")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-pairs", help="Fabricate similarity labels for a dataset.")
    p.add_argument("--data", required=True, help="Dataset directory.")
    p.add_argument(
        "--kind",
        choices=["binary", "real"],
        help="Label kind (default: binary for discrete factors, real for cyclic).",
    )
    _add_label_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("train", help="Train a model.")
    p.add_argument("--data", required=True, help="Training dataset directory.")
    p.add_argument("--pairs", help="Pair CSV (required unless --baseline is given).")
    p.add_argument("--heldout", help="Optional held-out dataset directory to score.")
    p.add_argument(
        "--baseline",
        choices=["beta-vae", "vae"],
        help="Train an unsupervised baseline instead of the pairwise model.",
    )
    _add_model_options(p)
    _add_train_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("xval-beta", help="Choose beta by k-fold cross-validation.")
    p.add_argument("--data", required=True, help="Dataset directory.")
    p.add_argument("--pairs", required=True, help="Pair CSV.")
    p.add_argument("--grid", type=_float_list, default=[1.0, 2.0, 4.0, 8.0, 16.0], help="Beta values.")
    p.add_argument("--folds", type=int, default=5, help="Folds (default: 5).")
    p.add_argument("--jobs", type=int, default=1, help="Folds trained concurrently (default: 1).")
    _add_model_options(p)
    _add_train_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_xval_beta)

    p = sub.add_parser("eval-mig", help="Score a checkpoint's MIG on a dataset.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory.")
    p.add_argument("--data", required=True, help="Held-out dataset directory.")
    _add_mig_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval_mig)

    p = sub.add_parser("eval-knn", help="Predict factors from z^(u) by k nearest neighbours.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory.")
    p.add_argument("--train-data", required=True, help="Reference dataset directory.")
    p.add_argument("--data", required=True, help="Held-out dataset directory.")
    p.add_argument("--k", type=int, default=5, help="Neighbours (default: 5).")
    _add_mig_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval_knn)

    p = sub.add_parser("traverse", help="Decode a grid of z^(u) values for one image.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory.")
    p.add_argument("--data", required=True, help="Dataset directory holding the image.")
    p.add_argument("--index", type=int, default=0, help="Image index (default: 0).")
    p.add_argument("--grid-size", type=int, default=7, help="Values per coordinate (default: 7).")
    p.add_argument("--extent", type=float, default=3.0, help="Half-width in prior std (default: 3).")
    _add_common(p)
    p.set_defaults(func=cmd_traverse)

    p = sub.add_parser("sweep", help="Train and evaluate over a grid of proportions or noise levels.")
    p.add_argument("--dataset", choices=sorted(GENERATORS), default="blobs", help="Generator (default: blobs).")
    p.add_argument("--n", type=int, default=5000, help="Images per job (default: 5000).")
    p.add_argument("--param", choices=["proportion", "gamma"], default="proportion", help="Swept parameter.")
    p.add_argument("--values", type=_float_list, required=True, help="Comma-separated parameter values.")
    p.add_argument("--seeds", type=_int_list, help="Comma-separated seeds (default: --seed).")
    p.add_argument("--models", type=_name_list, default=["pairwise"], help="Comma-separated models.")
    p.add_argument("--jobs", type=int, default=1, help="Jobs run concurrently (default: 1).")
    p.add_argument("--heldout-fraction", type=float, default=0.2, help="Held-out share (default: 0.2).")
    p.add_argument("--k", type=int, default=5, help="Neighbours for k-NN (default: 5).")
    p.add_argument("--keep-runs", action="store_true", help="Keep each job's checkpoint and CSVs.")
    _add_label_options(p)
    _add_model_options(p)
    _add_train_options(p)
    _add_mig_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-latents", help="Write posterior means and factors of a dataset.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory.")
    p.add_argument("--data", required=True, help="Dataset directory.")
    _add_common(p)
    p.set_defaults(func=cmd_export_latents)
    return parser


def _subparsers(parser: argparse.ArgumentParser) -> Dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def _install_config(parser: argparse.ArgumentParser, argv: List[str]) -> None:
    """Apply a ``--config`` file to the chosen subcommand before parsing for real."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    subparsers = _subparsers(parser)
    command = next((a for a in argv if a in subparsers), None)
    if command is None:
        return
    apply_config_defaults(subparsers[command], read_config_file(known.config))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _install_config(parser, argv)
    except PairdisError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        command: Callable[[argparse.Namespace], None] = args.func
        command(args)
    except PairdisError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
