"""Minibatch training loop and beta cross-validation."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import torch
from sklearn.model_selection import KFold

from pairdis import autodiff as ad
from pairdis.autodiff import Tape, Tensor
from pairdis.datasets.base import Dataset
from pairdis.errors import ContractError, DivergenceError, NonFiniteError
from pairdis.exporters.tables import LossHistoryExporter
from pairdis.models import create_model
from pairdis.models.base import LatentModel, ModelConfig
from pairdis.models.checkpoint import save_checkpoint
from pairdis.similarity import PairBatch

logger = logging.getLogger(__name__)

OptimizerKind = Literal["adaptive-moment", "plain-sgd"]

CHECKPOINT_DIR = "checkpoint"
LOSS_FILE = "loss.csv"


@dataclass
class TrainConfig:
    """Optimization settings and the beta cross-validation protocol."""

    epochs: int = 50
    """Passes over the instances."""
    batch_size: int = 64
    """Instances per step (before pair endpoints are appended)."""
    pairs_per_step: int = 32
    """Labelled pairs sampled per step."""
    learning_rate: float = 1e-3
    """Step size; 0 freezes the parameters."""
    optimizer_kind: OptimizerKind = "adaptive-moment"
    """``adaptive-moment`` (Adam) or ``plain-sgd``."""
    seed: int = 0
    """Root of the shuffling, pair-sampling and noise streams."""
    beta_grid: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    """Candidate beta values for cross-validation."""
    folds: int = 5
    """Cross-validation folds."""
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    """First and second moment decay rates."""
    eps: float = 1e-8
    """Adaptive-moment denominator offset."""

    def __post_init__(self):
        self.beta_grid = tuple(float(b) for b in self.beta_grid)
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if self.epochs < 1 or self.batch_size < 1 or self.pairs_per_step < 0:
            raise ContractError("epochs and batch_size must be >= 1, pairs_per_step >= 0")
        if not (self.learning_rate >= 0.0 and math.isfinite(self.learning_rate)):
            raise ContractError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer_kind not in ("adaptive-moment", "plain-sgd"):
            raise ContractError(f"unknown optimizer '{self.optimizer_kind}'")
        if self.folds < 2:
            raise ContractError(f"folds must be >= 2, got {self.folds}")
        if not self.beta_grid or any(b < 1.0 for b in self.beta_grid):
            raise ContractError("beta_grid must be nonempty with values >= 1")


@dataclass
class EpochRecord:
    """Mean objective terms over one epoch's steps."""

    epoch: int
    recon_term: float
    pair_term: float
    kl_u: float
    kl_v: float
    total: float


@dataclass
class StepInfo:
    """What one training step saw, for instrumentation callbacks."""

    epoch: int
    step: int
    instances: np.ndarray
    """Dataset rows in the step's image batch."""
    pairs: PairBatch
    """Pairs used by the step, indexed by dataset row."""
    fold: Optional[int] = None


@dataclass
class TrainResult:
    """Trained model and its loss history."""

    model: LatentModel
    history: List[EpochRecord] = field(default_factory=list)
    checkpoint_dir: Optional[Path] = None
    loss_path: Optional[Path] = None


def make_optimizer(params: List[Tensor], cfg: TrainConfig) -> torch.optim.Optimizer:
    """
    Optimizer over leaf tensors.

    Adaptive-moment follows the usual bias-corrected update
    ``m = b1 m + (1-b1) g``, ``v = b2 v + (1-b2) g^2``,
    ``p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)``; plain SGD is
    ``p -= lr * g``.
    """
    if cfg.optimizer_kind == "plain-sgd":
        return torch.optim.SGD(params, lr=cfg.learning_rate)
    return torch.optim.Adam(params, lr=cfg.learning_rate, betas=cfg.adam_betas, eps=cfg.eps)


def apply_gradients(
    optimizer: torch.optim.Optimizer,
    params: Dict[str, Tensor],
    grads: Dict[str, Tensor],
) -> None:
    """Hand tape gradients to the optimizer and take one step."""
    for name, param in params.items():
        param.grad = grads[name]
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator, torch.Generator]:
    shuffle_seq, pair_seq, noise_seq = np.random.SeedSequence(seed).spawn(3)
    noise = torch.Generator().manual_seed(int(noise_seq.generate_state(1, dtype=np.uint64)[0] >> 1))
    return np.random.default_rng(shuffle_seq), np.random.default_rng(pair_seq), noise


def _step_batch(
    batch_rows: np.ndarray, pairs: PairBatch, count: int, rng: np.random.Generator
) -> Tuple[np.ndarray, PairBatch, PairBatch]:
    if count == 0 or len(pairs) == 0:
        return batch_rows, PairBatch.empty(), PairBatch.empty()
    chosen = pairs.select(np.sort(rng.choice(len(pairs), size=min(count, len(pairs)), replace=False)))
    endpoints = np.unique(np.concatenate([chosen.i_idx, chosen.j_idx]))
    extra = endpoints[~np.isin(endpoints, batch_rows)]
    instances = np.concatenate([batch_rows, extra])
    return instances, chosen, chosen.within(instances)


def train(
    model: LatentModel,
    dataset: Dataset,
    pairs: PairBatch,
    cfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    on_step: Optional[Callable[[StepInfo], None]] = None,
) -> TrainResult:
    """
    Fit a model by minibatch stochastic gradient descent.

    Each step takes the next ``batch_size`` rows of an epoch permutation, samples
    ``pairs_per_step`` labelled pairs, appends their endpoints to the image
    batch, records the objective on a fresh tape and applies one optimizer
    update.

    Args:
        model: Model to train in place.
        dataset: Training images.
        pairs: Labels indexing rows of ``dataset``.
        cfg: Optimization settings; ``cfg.seed`` fixes every random stream.
        out_dir: When given, the checkpoint and loss CSV are written here.
        on_step: Callback receiving a :class:`StepInfo` per step.

    Returns:
        TrainResult with one history record per epoch.
    """
    n = len(dataset)
    if n == 0:
        raise ContractError("cannot train on an empty dataset")
    pairs.check_indices(n)
    if len(pairs) == 0 and model.kind == "pairwise":
        logger.warning("no labelled pairs, training on the reconstruction and KL terms only")

    shuffle_rng, pair_rng, noise_gen = _streams(cfg.seed)
    flat = torch.as_tensor(dataset.flat, dtype=ad.DTYPE)
    params = model.parameters
    optimizer = make_optimizer(list(params.values()), cfg)
    batch_size = min(cfg.batch_size, n)
    steps = math.ceil(n / batch_size)
    empty = PairBatch.empty()

    history: List[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = {"recon_term": 0.0, "pair_term": 0.0, "kl_u": 0.0, "kl_v": 0.0, "total": 0.0}
        for step in range(steps):
            batch_rows = order[step * batch_size : (step + 1) * batch_size]
            instances, chosen, local_pairs = _step_batch(batch_rows, pairs, cfg.pairs_per_step, pair_rng)
            if on_step is not None:
                on_step(StepInfo(epoch=epoch, step=step, instances=instances, pairs=chosen))
            try:
                with Tape() as tape:
                    model.watch(tape)
                    terms = model.objective(
                        flat[torch.as_tensor(instances)],
                        local_pairs if len(local_pairs) else empty,
                        generator=noise_gen,
                    )
                    grads = ad.backward(tape, terms.total)
            except NonFiniteError as e:
                raise DivergenceError(epoch, step, f"'{e.op}' produced a non-finite value") from e
            values = terms.as_floats()
            if not math.isfinite(values["total"]):
                raise DivergenceError(epoch, step, f"loss is {values['total']}")
            apply_gradients(optimizer, params, grads)
            for key in sums:
                sums[key] += values[key]
        record = EpochRecord(epoch=epoch, **{k: v / steps for k, v in sums.items()})
        history.append(record)
        logger.info(
            "epoch %d/%d: total=%.4f recon=%.4f pair=%.4f kl_u=%.4f kl_v=%.4f",
            epoch, cfg.epochs, record.total, record.recon_term, record.pair_term,
            record.kl_u, record.kl_v,
        )

    result = TrainResult(model=model, history=history)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_dir = save_checkpoint(model, out_dir / CHECKPOINT_DIR)
        result.loss_path = out_dir / LOSS_FILE
        LossHistoryExporter().export(history, str(result.loss_path))
    return result


@dataclass
class CrossValRow:
    """Held-out joint log-likelihood of one beta."""

    beta: float
    mean_log_likelihood: float
    fold_values: List[float] = field(default_factory=list)


@dataclass
class CrossValResult:
    """Cross-validation table and the maximizing beta."""

    rows: List[CrossValRow]
    selected_beta: float


def _fold_split(n: int, cfg: TrainConfig) -> List[Tuple[np.ndarray, np.ndarray]]:
    if n < cfg.folds:
        raise ContractError(f"{cfg.folds}-fold cross-validation needs at least {cfg.folds} instances")
    splitter = KFold(n_splits=cfg.folds, shuffle=True, random_state=cfg.seed)
    return [(np.sort(tr), np.sort(va)) for tr, va in splitter.split(np.arange(n))]


def _run_fold(
    beta: float,
    fold: int,
    split: Tuple[np.ndarray, np.ndarray],
    dataset: Dataset,
    pairs: PairBatch,
    cfg: TrainConfig,
    model_config: ModelConfig,
    on_step: Optional[Callable[[StepInfo], None]],
) -> float:
    train_rows, val_rows = split
    train_pairs = pairs.within(train_rows)
    val_pairs = pairs.within(val_rows)
    if len(val_pairs) == 0:
        logger.warning("fold %d has no validation pairs; it scores the reconstruction term only", fold)

    def relay(info: StepInfo) -> None:
        on_step(
            replace(
                info,
                fold=fold,
                instances=train_rows[info.instances],
                pairs=PairBatch(train_rows[info.pairs.i_idx], train_rows[info.pairs.j_idx], info.pairs.y),
            )
        )

    fold_seed = cfg.seed + fold
    model = create_model(replace(model_config, beta=beta), seed=fold_seed)
    train(
        model,
        dataset.subset(train_rows),
        train_pairs,
        replace(cfg, seed=fold_seed),
        on_step=relay if on_step is not None else None,
    )
    value = model.joint_log_likelihood(
        dataset.flat[val_rows], val_pairs, generator=torch.Generator().manual_seed(fold_seed)
    )
    logger.info("beta=%s fold %d: held-out log-likelihood %.4f", beta, fold, value)
    return value


def crossval_beta(
    dataset: Dataset,
    pairs: PairBatch,
    cfg: TrainConfig,
    model_config: Optional[ModelConfig] = None,
    jobs: int = 1,
    on_step: Optional[Callable[[StepInfo], None]] = None,
) -> CrossValResult:
    """
    Choose beta by k-fold cross-validation over instances.

    A pair trains a fold only if both endpoints are in its training rows and
    validates it only if both are in its validation rows; pairs straddling
    the split are unused by that fold.

    Args:
        dataset: All instances.
        pairs: All labels.
        cfg: Training settings, ``beta_grid`` and ``folds``.
        model_config: Architecture (beta is overridden per grid value).
        jobs: Folds trained concurrently.
        on_step: Instrumentation callback; indices are rows of ``dataset``.

    Returns:
        One row per beta in grid order and the beta with the highest mean
        held-out joint log-likelihood (first one on ties).
    """
    model_config = model_config or ModelConfig()
    pairs.check_indices(len(dataset))
    splits = _fold_split(len(dataset), cfg)
    tasks = [(beta, fold) for beta in cfg.beta_grid for fold in range(cfg.folds)]

    def run(task: Tuple[float, int]) -> float:
        beta, fold = task
        return _run_fold(beta, fold, splits[fold], dataset, pairs, cfg, model_config, on_step)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(run, tasks))
    else:
        values = [run(task) for task in tasks]

    by_task = dict(zip(tasks, values))
    rows = []
    for beta in cfg.beta_grid:
        fold_values = [by_task[(beta, fold)] for fold in range(cfg.folds)]
        rows.append(CrossValRow(beta, float(np.mean(fold_values)), fold_values))
    best = int(np.argmax([row.mean_log_likelihood for row in rows]))
    logger.info("selected beta=%s", rows[best].beta)
    return CrossValResult(rows=rows, selected_beta=rows[best].beta)
