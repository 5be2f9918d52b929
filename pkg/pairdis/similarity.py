"""Likelihood of pairwise similarity labels given the relevant latent block.

A label ``y`` in [0, 1] for the pair (i, j) is modelled as

    p(y | zu_i, zu_j) = g^y (1 - g)^(1 - y) / C,    g = logistic(u),
    u = eta1 * (eta2 - ||zu_i - zu_j||^2).

Binary labels use C = 1. Real labels use the closed-form normalizer, written in
terms of the logit as C = tanh(u / 2) / u so that it stays exact near u = 0 and
for the saturated logits that eta1 = 1e3 produces.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Union

import numpy as np
import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tape, Tensor
from pairdis.errors import ContractError, DimensionError, DomainError, NonFiniteError

logger = logging.getLogger(__name__)

LabelKind = Literal["binary", "real"]

SERIES_CUTOFF = 1e-4
"""Below this |u| the normalizer uses its Taylor series."""


@dataclass(frozen=True)
class SimilarityParams:
    """Hyperparameters of the latent-distance-to-similarity map."""

    eta1: float = 1e3
    """Steepness of the logistic threshold."""
    eta2: float = 2.0
    """Squared-distance threshold at which g = 1/2."""
    label_kind: LabelKind = "binary"
    """``binary`` labels in {0, 1} (C = 1) or ``real`` labels in [0, 1]."""

    def __post_init__(self):
        if not (self.eta1 > 0 and self.eta2 > 0):
            raise ContractError(f"eta1 and eta2 must be positive, got {self.eta1}, {self.eta2}")
        if self.label_kind not in ("binary", "real"):
            raise ContractError(f"unknown label kind '{self.label_kind}'")


@dataclass(frozen=True)
class PairBatch:
    """Observed similarity labels ``y_ij`` for a set of instance pairs."""

    i_idx: np.ndarray
    """First instance of each pair."""
    j_idx: np.ndarray
    """Second instance of each pair."""
    y: np.ndarray
    """Labels in [0, 1]."""

    def __post_init__(self):
        i_idx = np.asarray(self.i_idx, dtype=np.int64).reshape(-1)
        j_idx = np.asarray(self.j_idx, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if not (len(i_idx) == len(j_idx) == len(y)):
            raise DimensionError("pair index and label arrays must have equal length")
        if np.any(i_idx == j_idx):
            raise ContractError("a pair cannot join an instance with itself")
        if len(i_idx) and (i_idx.min() < 0 or j_idx.min() < 0):
            raise ContractError("pair indices must be nonnegative")
        if np.any(~np.isfinite(y)) or np.any((y < 0.0) | (y > 1.0)):
            raise DomainError("similarity labels must lie in [0, 1]")
        object.__setattr__(self, "i_idx", i_idx)
        object.__setattr__(self, "j_idx", j_idx)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def empty(cls) -> "PairBatch":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.y == 0.0) | (self.y == 1.0)))

    def check_indices(self, n: int) -> None:
        """Raise unless every index addresses one of ``n`` instances."""
        if len(self) and max(self.i_idx.max(), self.j_idx.max()) >= n:
            raise ContractError(f"pair index out of range for {n} instances")

    def select(self, rows: np.ndarray) -> "PairBatch":
        """Pairs at the given row positions (or boolean mask)."""
        return PairBatch(self.i_idx[rows], self.j_idx[rows], self.y[rows])

    def within(self, instances: np.ndarray) -> "PairBatch":
        """
        Pairs whose two endpoints are both in ``instances``, re-indexed to
        positions within ``instances``.
        """
        instances = np.asarray(instances, dtype=np.int64)
        position = {int(k): pos for pos, k in enumerate(instances)}
        keep = np.array(
            [int(a) in position and int(b) in position for a, b in zip(self.i_idx, self.j_idx)],
            dtype=bool,
        )
        kept = self.select(keep)
        return PairBatch(
            np.array([position[int(a)] for a in kept.i_idx], dtype=np.int64),
            np.array([position[int(b)] for b in kept.j_idx], dtype=np.int64),
            kept.y,
        )


def similarity_logit(zu_i: Tensor, zu_j: Tensor, params: SimilarityParams) -> Tensor:
    """``u = eta1 * (eta2 - ||zu_i - zu_j||^2)`` per pair."""
    if zu_i.shape != zu_j.shape:
        raise DimensionError(f"zu_i {tuple(zu_i.shape)} and zu_j {tuple(zu_j.shape)} differ")
    d2 = ad.sq_dist(zu_i, zu_j)
    return ad.affine(d2, -params.eta1, params.eta1 * params.eta2)


def g_similarity(zu_i: Tensor, zu_j: Tensor, params: SimilarityParams) -> Tensor:
    """
    Similarity strength ``g = logistic(eta1 * (eta2 - ||zu_i - zu_j||^2))``.

    Returns:
        [b] values in (0, 1).
    """
    return ad.sigmoid(similarity_logit(zu_i, zu_j, params))


def _log_norm_constant(u: Tensor) -> Tensor:
    a = torch.abs(u)
    small = a < SERIES_CUTOFF
    # both branches must stay finite for torch.where to give clean gradients
    a_big = torch.where(small, torch.ones_like(a), a)
    log_tanh = torch.where(
        a_big < 2.0,
        torch.log(torch.tanh(0.5 * a_big)),
        torch.log1p(-2.0 * torch.sigmoid(-a_big)),
    )
    big = log_tanh - torch.log(a_big)
    u_small = torch.where(small, u, torch.zeros_like(u))
    u2 = u_small * u_small
    series = math.log(0.5) + torch.log1p(-u2 / 12.0 + u2 * u2 / 120.0)
    return torch.where(small, series, big)


def log_norm_constant(u: Union[Tensor, float]) -> Union[Tensor, float]:
    """
    ``log C(u)`` with ``C(u) = tanh(u / 2) / u``, the integral over y in [0, 1]
    of ``g^y (1 - g)^(1 - y)`` for ``g = logistic(u)``.

    Even in ``u``, at most ``log(1/2)`` (attained at ``u = 0``), and accurate for
    ``|u|`` in the thousands.

    Args:
        u: Logit tensor, or a python float.

    Returns:
        Same kind as the input.
    """
    if isinstance(u, Tensor):
        if not bool(torch.isfinite(u).all()):
            raise NonFiniteError("log_norm_constant", "logit must be finite")
        return ad.emit("log_norm_constant", (u,), _log_norm_constant(u))
    if not math.isfinite(u):
        raise NonFiniteError("log_norm_constant", "logit must be finite")
    return float(_log_norm_constant(torch.tensor(float(u), dtype=ad.DTYPE)))


def _label_tensor(y, like: Tensor, params: SimilarityParams) -> Tensor:
    y = torch.as_tensor(np.asarray(y, dtype=np.float64), dtype=ad.DTYPE).reshape(-1)
    if y.shape[0] != like.shape[0]:
        raise DimensionError(f"{y.shape[0]} labels for {like.shape[0]} pairs")
    if bool(((y < 0.0) | (y > 1.0)).any()):
        raise DomainError("similarity labels must lie in [0, 1]")
    if params.label_kind == "binary" and not bool(((y == 0.0) | (y == 1.0)).all()):
        raise ContractError("binary similarity labels must be 0 or 1")
    return y


def pair_log_likelihood(y, zu_i: Tensor, zu_j: Tensor, params: SimilarityParams) -> Tensor:
    """
    Per-pair ``log p(y | zu_i, zu_j)``.

    ``log g`` and ``log(1 - g)`` are evaluated as ``-softplus(-u)`` and
    ``-softplus(u)``. For real labels the normalizer is subtracted, and its
    dependence on the latents is part of the gradient.

    Args:
        y: [b] labels.
        zu_i: [b, d_u] relevant codes of the first instances.
        zu_j: [b, d_u] relevant codes of the second instances.
        params: Similarity hyperparameters.

    Returns:
        [b] log-densities.
    """
    u = similarity_logit(zu_i, zu_j, params)
    labels = _label_tensor(y, u, params)
    out = ad.add(
        ad.mul(labels, ad.log_sigmoid(u)),
        ad.mul(1.0 - labels, ad.log1m_sigmoid(u)),
    )
    if params.label_kind == "real":
        out = ad.sub(out, log_norm_constant(u))
    return out


@dataclass
class GradientCheckPoint:
    """Finite-difference comparison at one pair configuration."""

    u: float
    y: float
    relative_error: float
    pull: float
    """``grad_zu_i . (zu_j - zu_i)``: positive when the gradient draws the pair together."""


@dataclass
class GradientCheckReport:
    """Outcome of :func:`pair_term_gradient_check`."""

    points: List[GradientCheckPoint] = field(default_factory=list)
    tolerance: float = 1e-3

    @property
    def max_relative_error(self) -> float:
        return max((p.relative_error for p in self.points), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


DEFAULT_CHECK_LOGITS = (0.0, 1e-6, -1e-6, 0.5, -0.5, 5.0, -5.0, 50.0, -50.0, 2000.0, -2000.0)


def pair_term_gradient_check(
    params: Optional[SimilarityParams] = None,
    logits=DEFAULT_CHECK_LOGITS,
    d_u: int = 2,
    random_points: int = 10,
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = 1e-3,
) -> GradientCheckReport:
    """
    Compare tape gradients of the pair log-density against central differences.

    Points are placed at the requested logits (including the removable
    singularity at 0 and saturated values around +-2000) plus random
    configurations.

    Args:
        params: Similarity hyperparameters (defaults to real labels, eta1=1e3, eta2=2).
        logits: Target logit values.
        d_u: Dimension of the relevant block.
        random_points: Extra random configurations.
        seed: Seed for point placement and labels.
        h: Finite-difference step.
        tolerance: Pass threshold on the maximum relative error.

    Returns:
        Per-point errors and the overall verdict.
    """
    params = params or SimilarityParams(label_kind="real")
    rng = np.random.default_rng(seed)
    targets = list(logits)
    for _ in range(random_points):
        targets.append(params.eta1 * (params.eta2 - rng.uniform(0.0, 2.0 * params.eta2)))

    report = GradientCheckReport(tolerance=tolerance)
    for u_target in targets:
        d2 = params.eta2 - u_target / params.eta1
        if d2 < 0.0:
            logger.debug("logit %s unreachable with eta2=%s, skipped", u_target, params.eta2)
            continue
        direction = rng.normal(size=d_u)
        direction /= np.linalg.norm(direction)
        start = rng.normal(size=d_u)
        zi = ad.parameter(start.reshape(1, d_u))
        zj = ad.parameter((start + math.sqrt(d2) * direction).reshape(1, d_u))
        if params.label_kind == "binary":
            y = np.array([float(rng.integers(0, 2))])
        else:
            y = np.array([rng.uniform()])

        def value() -> Tensor:
            return ad.sum(pair_log_likelihood(y, zi, zj, params))

        with Tape() as tape:
            tape.watch("zu_i", zi)
            tape.watch("zu_j", zj)
            grads = ad.backward(tape, value())
        error = max(
            ad.max_relative_error(grads["zu_i"], ad.numerical_gradient(value, zi, h)),
            ad.max_relative_error(grads["zu_j"], ad.numerical_gradient(value, zj, h)),
        )
        with torch.no_grad():
            pull = float((grads["zu_i"] * (zj - zi)).sum())
            u_actual = float(similarity_logit(zi, zj, params)[0])
        report.points.append(GradientCheckPoint(u_actual, float(y[0]), error, pull))
    return report
