"""Disentanglement and downstream-prediction metrics.

MIG here measures one factor of interest against a split latent space: the
relevant block z^(u) is discretized jointly, each z^(v) coordinate on its own,
and the score is ``(I(z^(u); t) - max_d I(z^(v)_d; t)) / H(t)``.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional

import numpy as np
import torch
from scipy.stats import rankdata
from sklearn.metrics import cohen_kappa_score, r2_score
from sklearn.metrics.cluster import contingency_matrix
from sklearn.neighbors import NearestNeighbors

from pairdis.datasets.base import FactorTable
from pairdis.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

CYCLIC_BINS = 20
JOINT_CELLS_PER_SAMPLE = 10
"""Warn when n is below this many samples per joint histogram cell."""


@dataclass(frozen=True)
class MigConfig:
    """Settings of the histogram MIG estimator."""

    bins: int = 20
    """Equal-frequency bins per latent dimension."""
    latent_source: Literal["posterior_mean", "posterior_sample"] = "posterior_mean"
    """Which encoder output the latents come from."""
    d_u: int = 2
    """Width of the relevant block, discretized jointly."""

    def __post_init__(self):
        if self.bins < 2:
            raise ContractError(f"bins must be >= 2, got {self.bins}")
        if self.d_u < 1:
            raise ContractError(f"d_u must be >= 1, got {self.d_u}")
        if self.latent_source not in ("posterior_mean", "posterior_sample"):
            raise ContractError(f"unknown latent source '{self.latent_source}'")


@dataclass
class MetricRecord:
    """One row of a metrics report."""

    metric: str
    dataset: str
    seed: int
    value: float


def discrete_mutual_info(a, b) -> float:
    """
    Plug-in mutual information (nats) of two discrete samples.

    Terms are summed with ``math.fsum`` so the estimate is exactly symmetric.
    """
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.size == 0:
        raise DimensionError("mutual information of an empty sample")
    if a.size != b.size:
        raise DimensionError(f"samples differ in length: {a.size} vs {b.size}")
    joint = contingency_matrix(a, b).astype(np.float64)
    n = joint.sum()
    p_a = joint.sum(axis=1) / n
    p_b = joint.sum(axis=0) / n
    rows, cols = np.nonzero(joint)
    p_ab = joint[rows, cols] / n
    terms = p_ab * np.log(p_ab / (p_a[rows] * p_b[cols]))
    return max(0.0, math.fsum(terms.tolist()))


def discrete_entropy(a) -> float:
    """Plug-in entropy (nats); equals ``discrete_mutual_info(a, a)``."""
    return discrete_mutual_info(a, a)


def equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    """
    Quantile-bin one variable by rank; ties share a bin.

    Depends only on the ordering of ``x``, so any strictly increasing
    transform gives the same bins. A constant variable lands in a single bin.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    ranks = rankdata(x, method="min") - 1
    return np.minimum((ranks * bins) // len(x), bins - 1).astype(np.int64)


def discretize_factor(t: FactorTable) -> np.ndarray:
    """Class ids, or cyclic angles in 20 equal arcs."""
    if t.kind == "discrete":
        return t.classes
    return np.minimum((t.values // (360.0 / CYCLIC_BINS)).astype(np.int64), CYCLIC_BINS - 1)


def mig(latents, t: FactorTable, cfg: Optional[MigConfig] = None) -> float:
    """
    Mutual information gap between the relevant block and the best residual dimension.

    Args:
        latents: [n, d_u + d_v] codes (first d_u columns are z^(u)).
        t: Ground-truth factor for the same instances.
        cfg: Estimator settings.

    Returns:
        ``(I(z^(u); t) - max_d I(z^(v)_d; t)) / H(t)``; at most 1, may be negative.
    """
    cfg = cfg or MigConfig()
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[0] != len(t):
        raise DimensionError(f"latents {latents.shape} do not match {len(t)} factor values")
    if latents.shape[1] <= cfg.d_u:
        raise DimensionError(f"need more than d_u={cfg.d_u} latent columns")
    n = latents.shape[0]
    if n < 100:
        logger.warning("MIG on %d samples is unreliable", n)
    if n < JOINT_CELLS_PER_SAMPLE * cfg.bins**cfg.d_u:
        logger.warning(
            "joint alphabet of %d cells is large for n=%d; the z^(u) estimate is biased",
            cfg.bins**cfg.d_u, n,
        )
    target = discretize_factor(t)
    h_t = discrete_entropy(target)
    if h_t == 0.0:
        raise ContractError("the factor is constant, MIG is undefined")

    joint_code = np.zeros(n, dtype=np.int64)
    for d in range(cfg.d_u):
        joint_code = joint_code * cfg.bins + equal_frequency_bins(latents[:, d], cfg.bins)
    i_joint = discrete_mutual_info(joint_code, target)

    i_residual = []
    for d in range(cfg.d_u, latents.shape[1]):
        column = latents[:, d]
        if np.all(column == column[0]):
            i_residual.append(0.0)
        else:
            i_residual.append(discrete_mutual_info(equal_frequency_bins(column, cfg.bins), target))
    return (i_joint - max(i_residual)) / h_t


def circular_mean(angles_deg: np.ndarray, axis: int = -1) -> np.ndarray:
    """Mean direction in degrees, in [0, 360)."""
    rad = np.deg2rad(angles_deg)
    mean = np.rad2deg(np.arctan2(np.sin(rad).mean(axis=axis), np.cos(rad).mean(axis=axis)))
    return np.mod(mean, 360.0)


def knn_predict(
    train_zu,
    train_t,
    test_zu,
    k: int = 5,
    task: Literal["classification", "regression", "cyclic"] = "classification",
) -> np.ndarray:
    """
    Predict factors from the k nearest training codes (euclidean).

    Args:
        train_zu: [n_train, d] training codes.
        train_t: [n_train] training targets.
        test_zu: [n_test, d] query codes.
        k: Neighbours per query.
        task: ``classification`` (majority vote, ties to the smallest class),
            ``regression`` (mean) or ``cyclic`` (circular mean of degrees).

    Returns:
        [n_test] predictions.
    """
    train_zu = np.asarray(train_zu, dtype=np.float64)
    test_zu = np.asarray(test_zu, dtype=np.float64)
    train_t = np.asarray(train_t).reshape(-1)
    if train_zu.ndim == 1:
        train_zu = train_zu[:, None]
    if test_zu.ndim == 1:
        test_zu = test_zu[:, None]
    if train_zu.shape[0] == 0:
        raise ContractError("k-NN needs a nonempty training set")
    if k > train_zu.shape[0]:
        raise ContractError(f"k={k} exceeds the {train_zu.shape[0]} training points")
    if train_t.shape[0] != train_zu.shape[0]:
        raise DimensionError("training codes and targets differ in length")
    index = NearestNeighbors(n_neighbors=k, algorithm="brute").fit(train_zu)
    _, neighbours = index.kneighbors(test_zu)
    votes = train_t[neighbours]
    if task == "classification":
        labels = votes.astype(np.int64)
        counts = np.zeros((labels.shape[0], int(labels.max()) + 1), dtype=np.int64)
        np.add.at(counts, (np.repeat(np.arange(labels.shape[0]), k), labels.reshape(-1)), 1)
        return counts.argmax(axis=1)
    if task == "regression":
        return votes.astype(np.float64).mean(axis=1)
    if task == "cyclic":
        return circular_mean(votes.astype(np.float64), axis=1)
    raise ContractError(f"unknown k-NN task '{task}'")


def cohens_kappa(pred, truth) -> float:
    """
    Chance-corrected agreement ``(p_o - p_e) / (1 - p_e)``.

    When chance agreement is certain (both sides one identical class) the
    value is 1 if agreement is perfect, else 0.
    """
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise DimensionError(f"{pred.size} predictions for {truth.size} labels")
    if pred.size == 0:
        raise ContractError("kappa needs at least one label")
    classes = np.union1d(pred, truth)
    p_e = sum(float(np.mean(pred == c)) * float(np.mean(truth == c)) for c in classes)
    if p_e >= 1.0:
        return 1.0 if bool(np.all(pred == truth)) else 0.0
    return float(cohen_kappa_score(truth, pred))


def r_squared(pred, truth, cyclic: bool = False) -> float:
    """
    Coefficient of determination ``1 - SS_res / SS_tot``.

    Cyclic targets (degrees) are compared on the unit circle: both are embedded
    as (cos, sin) and the residual and total sums of squares add over the two
    coordinates.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise DimensionError(f"{pred.size} predictions for {truth.size} targets")
    if truth.size < 2:
        raise ContractError("R^2 needs at least two targets")
    if cyclic:
        p = np.stack([np.cos(np.deg2rad(pred)), np.sin(np.deg2rad(pred))], axis=1)
        y = np.stack([np.cos(np.deg2rad(truth)), np.sin(np.deg2rad(truth))], axis=1)
        ss_tot = float(((y - y.mean(axis=0)) ** 2).sum())
        if ss_tot == 0.0:
            raise ContractError("R^2 is undefined for a constant target")
        return 1.0 - float(((y - p) ** 2).sum()) / ss_tot
    if np.all(truth == truth[0]):
        raise ContractError("R^2 is undefined for a constant target")
    return float(r2_score(truth, pred))


def latent_angle(zu) -> np.ndarray:
    """Angle in degrees [0, 360) of each 2-D relevant code."""
    zu = np.asarray(zu, dtype=np.float64)
    if zu.ndim != 2 or zu.shape[1] != 2:
        raise DimensionError(f"latent angles need [n, 2] codes, got {zu.shape}")
    return np.mod(np.rad2deg(np.arctan2(zu[:, 1], zu[:, 0])), 360.0)


def circular_correlation(a_deg, b_deg) -> float:
    """
    Circular correlation coefficient of two angle samples (degrees).

    ``sum sin(a - mean_a) sin(b - mean_b) / sqrt(sum sin^2(a - mean_a) sum sin^2(b - mean_b))``.
    """
    a = np.deg2rad(np.asarray(a_deg, dtype=np.float64).reshape(-1))
    b = np.deg2rad(np.asarray(b_deg, dtype=np.float64).reshape(-1))
    if a.shape != b.shape or a.size < 2:
        raise DimensionError("circular correlation needs two equally long samples (n >= 2)")
    sa = np.sin(a - np.arctan2(np.sin(a).mean(), np.cos(a).mean()))
    sb = np.sin(b - np.arctan2(np.sin(b).mean(), np.cos(b).mean()))
    denom = math.sqrt(float((sa**2).sum()) * float((sb**2).sum()))
    if denom == 0.0:
        return 0.0
    return float((sa * sb).sum()) / denom


def evaluate_codes(
    train_codes: np.ndarray,
    train_t: FactorTable,
    test_codes: np.ndarray,
    test_t: FactorTable,
    d_u: int,
    mig_config: Optional[MigConfig] = None,
    k: int = 5,
) -> Dict[str, float]:
    """
    Held-out MIG plus k-NN prediction from z^(u).

    Discrete factors report Cohen's kappa; cyclic factors report circle R^2
    and, for d_u = 2, the circular correlation between the code angle and t.

    Returns:
        Metric name to value.
    """
    mig_config = mig_config or MigConfig(d_u=d_u)
    results = {"mig": mig(test_codes, test_t, mig_config)}
    train_zu = train_codes[:, :d_u]
    test_zu = test_codes[:, :d_u]
    k = min(k, len(train_t))
    if train_t.kind == "discrete":
        pred = knn_predict(train_zu, train_t.classes, test_zu, k=k, task="classification")
        results["kappa"] = cohens_kappa(pred, test_t.classes)
    else:
        pred = knn_predict(train_zu, train_t.values, test_zu, k=k, task="cyclic")
        results["r2"] = r_squared(pred, test_t.values, cyclic=True)
        if d_u == 2:
            results["circular_correlation"] = abs(
                circular_correlation(latent_angle(test_zu), test_t.values)
            )
    return results


def metric_records(results: Dict[str, float], dataset: str, seed: int) -> List[MetricRecord]:
    """Rows for a metrics report, sorted by metric name."""
    return [MetricRecord(name, dataset, seed, float(results[name])) for name in sorted(results)]


def model_codes(model, dataset, cfg: Optional[MigConfig] = None, seed: int = 0) -> np.ndarray:
    """Posterior means, or one posterior sample per image, as a numpy array."""
    cfg = cfg or MigConfig(d_u=model.config.d_u)
    if cfg.latent_source == "posterior_mean":
        return model.posterior_mean(dataset.flat).numpy()
    with torch.no_grad():
        code = model.encode(dataset.flat, generator=torch.Generator().manual_seed(seed))
    return code.z_sample.numpy()


def evaluate_model(model, train, heldout, mig_config: Optional[MigConfig] = None, k: int = 5, seed: int = 0) -> Dict[str, float]:
    """
    Encode a training and a held-out dataset and score the held-out codes.

    Args:
        model: Trained latent model.
        train: Dataset providing the k-NN reference points.
        heldout: Dataset the metrics are reported on.
        mig_config: MIG settings (``d_u`` is taken from the model).
        k: Neighbours for k-NN prediction.
        seed: Noise seed when codes are posterior samples.

    Returns:
        Metric name to value (see :func:`evaluate_codes`).
    """
    d_u = model.config.d_u
    if mig_config is None:
        mig_config = MigConfig(d_u=d_u)
    elif mig_config.d_u != d_u:
        mig_config = MigConfig(bins=mig_config.bins, latent_source=mig_config.latent_source, d_u=d_u)
    train_codes = model_codes(model, train, mig_config, seed)
    test_codes = model_codes(model, heldout, mig_config, seed)
    return evaluate_codes(train_codes, train.factors, test_codes, heldout.factors, d_u, mig_config, k)
