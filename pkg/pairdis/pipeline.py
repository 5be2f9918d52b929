"""Main pipeline: fabricate labels, train a model, score it on held-out data."""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from sklearn.model_selection import train_test_split

from pairdis.datasets.base import Dataset, LabelGenConfig
from pairdis.datasets.labels import make_labels
from pairdis.errors import ContractError, NonFiniteError
from pairdis.exporters.tables import MetricsExporter
from pairdis.metrics import MigConfig, evaluate_model, metric_records
from pairdis.models import create_model
from pairdis.models.base import LatentModel, ModelConfig
from pairdis.similarity import PairBatch
from pairdis.trainer import TrainConfig, TrainResult, train

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"


MODEL_NAMES = ("pairwise", "beta-vae", "vae")
"""Runnable model variants; ``vae`` is the beta-VAE objective with beta = 1."""


def model_config_for(name: str, base: ModelConfig) -> ModelConfig:
    """Config of a named model variant, other fields taken from ``base``."""
    if name == "vae":
        return replace(base, objective="beta-vae", beta=1.0)
    if name in MODEL_NAMES:
        return replace(base, objective=name)
    raise ContractError(f"unknown model '{name}', choose from {list(MODEL_NAMES)}")


def label_kind_for(dataset: Dataset) -> str:
    """Binary labels for discrete factors, RBF labels for cyclic ones."""
    return "binary" if dataset.factors.kind == "discrete" else "real"


def split_heldout(dataset: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Split instances into training and held-out parts.

    Returns:
        (train, heldout), each keeping the original row order.
    """
    if not 0.0 < fraction < 1.0:
        raise ContractError(f"held-out fraction must lie in (0, 1), got {fraction}")
    train_rows, heldout_rows = train_test_split(
        np.arange(len(dataset)), test_size=fraction, random_state=seed
    )
    return dataset.subset(np.sort(train_rows)), dataset.subset(np.sort(heldout_rows))


@dataclass
class ExperimentResult:
    """Trained model, loss history and held-out metrics of one run."""

    training: TrainResult
    metrics: Dict[str, float] = field(default_factory=dict)
    metrics_path: Optional[Path] = None

    @property
    def model(self) -> LatentModel:
        return self.training.model


class ExperimentPipeline:
    """Train-then-evaluate pipeline for one model configuration."""

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        mig_config: Optional[MigConfig] = None,
        k: int = 5,
    ):
        """
        Initialize the pipeline.

        Args:
            model_config: Architecture and objective.
            train_config: Optimization settings (its seed also seeds the weights).
            mig_config: MIG estimator settings.
            k: Neighbours for k-NN prediction.
        """
        self.model_config = model_config
        self.train_config = train_config
        self.mig_config = mig_config or MigConfig(d_u=model_config.d_u)
        self.k = k

    def build_model(self) -> LatentModel:
        return create_model(self.model_config, seed=self.train_config.seed)

    def fit(
        self,
        dataset: Dataset,
        pairs: PairBatch,
        out_dir: Optional[Union[str, Path]] = None,
    ) -> TrainResult:
        """
        Train a fresh model.

        Args:
            dataset: Training images.
            pairs: Labels indexing rows of ``dataset``.
            out_dir: Where the checkpoint and loss CSV go, if anywhere.

        Returns:
            TrainResult of the run.
        """
        return train(self.build_model(), dataset, pairs, self.train_config, out_dir=out_dir)

    def evaluate(self, model: LatentModel, train_set: Dataset, heldout: Dataset) -> Dict[str, float]:
        """Held-out MIG and k-NN scores; non-finite scores are an error."""
        results = evaluate_model(
            model, train_set, heldout, self.mig_config, k=self.k, seed=self.train_config.seed
        )
        for name, value in results.items():
            if not np.isfinite(value):
                raise NonFiniteError("evaluate", f"metric '{name}' is {value}")
        return results

    def run(
        self,
        train_set: Dataset,
        pairs: PairBatch,
        heldout: Dataset,
        out_dir: Optional[Union[str, Path]] = None,
    ) -> ExperimentResult:
        """
        Train on ``train_set`` and ``pairs``, then score on ``heldout``.

        Args:
            train_set: Training images.
            pairs: Labels indexing rows of ``train_set``.
            heldout: Evaluation images (never trained on).
            out_dir: Optional directory for checkpoint, loss and metrics CSVs.

        Returns:
            ExperimentResult with the metrics.
        """
        training = self.fit(train_set, pairs, out_dir=out_dir)
        metrics = self.evaluate(training.model, train_set, heldout)
        result = ExperimentResult(training=training, metrics=metrics)
        if out_dir is not None:
            result.metrics_path = Path(out_dir) / METRICS_FILE
            MetricsExporter().export(
                metric_records(metrics, heldout.name, self.train_config.seed), str(result.metrics_path)
            )
        logger.info(
            "%s run (seed %d): %s",
            self.model_config.objective,
            self.train_config.seed,
            ", ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items())),
        )
        return result

    def run_synthetic(
        self,
        dataset: Dataset,
        label_config: LabelGenConfig,
        heldout_fraction: float = 0.2,
        out_dir: Optional[Union[str, Path]] = None,
    ) -> ExperimentResult:
        """
        Hold out part of ``dataset``, label pairs of the rest and run.

        The label kind follows the factor kind (and overrides the model's
        likelihood kind); the split uses the label seed.
        """
        kind = label_kind_for(dataset)
        train_set, heldout = split_heldout(dataset, heldout_fraction, label_config.seed)
        pairs = make_labels(train_set.factors, replace(label_config, kind=kind))
        pipeline = self
        if self.model_config.sim.label_kind != kind:
            model_config = replace(self.model_config, sim=replace(self.model_config.sim, label_kind=kind))
            pipeline = ExperimentPipeline(model_config, self.train_config, self.mig_config, self.k)
        return pipeline.run(train_set, pairs, heldout, out_dir=out_dir)
