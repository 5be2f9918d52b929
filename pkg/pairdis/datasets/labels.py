"""Fabrication of pairwise similarity labels from ground-truth factors."""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from pairdis.datasets.base import FactorTable, LabelGenConfig
from pairdis.errors import ContractError
from pairdis.similarity import PairBatch

logger = logging.getLogger(__name__)


def pair_count(n: int, proportion: float) -> int:
    """``ceil(proportion * n(n-1)/2)``, at least 1 and at most every pair."""
    total = n * (n - 1) // 2
    if total == 0:
        raise ContractError("at least two instances are needed to form a pair")
    count = math.ceil(round(proportion * total, 9))
    return max(1, min(count, total))


def unrank_pairs(k: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map linear ranks to unordered pairs (i, j), i < j.

    Rank ``k`` enumerates (0,1), (0,2), (1,2), (0,3), ... i.e.
    ``k = j(j-1)/2 + i``.
    """
    k = np.asarray(k, dtype=np.int64)
    j = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(np.float64))) / 2.0).astype(np.int64)
    j = np.where(j * (j - 1) // 2 > k, j - 1, j)
    j = np.where((j + 1) * j // 2 <= k, j + 1, j)
    i = k - j * (j - 1) // 2
    return i, j


def sample_pairs(n: int, proportion: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Uniformly sample distinct unordered pairs without replacement, sorted by rank."""
    total = n * (n - 1) // 2
    count = pair_count(n, proportion)
    ranks = np.sort(rng.choice(total, size=count, replace=False))
    return unrank_pairs(ranks)


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    pair_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(pair_seq), np.random.default_rng(noise_seq)


def make_binary_labels(t: FactorTable, cfg: LabelGenConfig) -> PairBatch:
    """
    Label sampled pairs with ``y = 1(t_i == t_j)``.

    Args:
        t: Discrete factor table.
        cfg: Proportion and seed.

    Returns:
        Noise-free binary labels.
    """
    if t.kind != "discrete":
        raise ContractError("binary labels need a discrete factor")
    rng, _ = _streams(cfg.seed)
    i, j = sample_pairs(len(t), cfg.proportion, rng)
    y = (t.classes[i] == t.classes[j]).astype(np.float64)
    return PairBatch(i, j, y)


def angular_difference(a, b) -> np.ndarray:
    """Shortest angle in degrees between two azimuths, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) % 360.0
    return np.minimum(d, 360.0 - d)


def make_rbf_labels(t: FactorTable, cfg: LabelGenConfig) -> PairBatch:
    """
    Label sampled pairs with ``y = exp(-delta(t_i, t_j)^2 / rbf_sigma^2)``.

    Args:
        t: Cyclic factor table (degrees).
        cfg: Proportion, bandwidth and seed.

    Returns:
        Noise-free real labels in (0, 1].
    """
    if t.kind != "cyclic":
        raise ContractError("RBF labels need a cyclic factor")
    rng, _ = _streams(cfg.seed)
    i, j = sample_pairs(len(t), cfg.proportion, rng)
    delta = angular_difference(t.values[i], t.values[j])
    return PairBatch(i, j, np.exp(-(delta**2) / cfg.rbf_sigma**2))


def inject_noise(pairs: PairBatch, cfg: LabelGenConfig, rng: Optional[np.random.Generator] = None) -> PairBatch:
    """
    Corrupt labels with noise of strength ``cfg.noise_gamma``.

    Binary labels are flipped independently with probability gamma. Real
    labels get ``N(0, gamma)`` noise (gamma is the variance) and are clipped
    to [0, 1].

    Args:
        pairs: Clean labels.
        cfg: Label kind, gamma and seed.
        rng: Optional noise stream (defaults to the config's noise stream).

    Returns:
        Noisy labels on the same pairs.
    """
    if cfg.noise_gamma == 0.0:
        return pairs
    if rng is None:
        _, rng = _streams(cfg.seed)
    if cfg.kind == "binary":
        if not pairs.is_binary:
            raise ContractError("cannot flip fractional labels")
        flip = rng.random(len(pairs)) < cfg.noise_gamma
        y = np.where(flip, 1.0 - pairs.y, pairs.y)
        logger.debug("flipped %d of %d labels", int(flip.sum()), len(pairs))
    else:
        noise = rng.normal(0.0, math.sqrt(cfg.noise_gamma), size=len(pairs))
        y = np.clip(pairs.y + noise, 0.0, 1.0)
    return PairBatch(pairs.i_idx, pairs.j_idx, y)


def make_labels(t: FactorTable, cfg: LabelGenConfig) -> PairBatch:
    """Binary or RBF labels (per ``cfg.kind``) followed by noise injection."""
    if cfg.kind == "binary":
        pairs = make_binary_labels(t, cfg)
    else:
        pairs = make_rbf_labels(t, cfg)
    pairs = inject_noise(pairs, cfg)
    logger.info(
        "fabricated %d %s labels (mean y=%.4f, gamma=%s)",
        len(pairs), cfg.kind, float(pairs.y.mean()), cfg.noise_gamma,
    )
    return pairs
