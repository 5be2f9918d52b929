"""Diagonal Gaussian posteriors, the unit Gaussian prior and Bernoulli pixels."""

from dataclasses import dataclass

import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tensor
from pairdis.errors import DimensionError, DomainError

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


@dataclass(frozen=True)
class DiagGaussian:
    """Factorized Gaussian ``q(z|x)`` with per-coordinate mean and log-variance."""

    mean: Tensor
    """[batch, d] means."""
    log_var: Tensor
    """[batch, d] log-variances, clamped to [LOG_VAR_MIN, LOG_VAR_MAX]."""

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape:
            raise DimensionError(
                f"mean {tuple(self.mean.shape)} and log_var {tuple(self.log_var.shape)} differ"
            )
        object.__setattr__(self, "log_var", ad.clamp(self.log_var, LOG_VAR_MIN, LOG_VAR_MAX))

    @property
    def shape(self):
        return self.mean.shape

    def split(self, d_u: int) -> "tuple[DiagGaussian, DiagGaussian]":
        """Split into the first ``d_u`` coordinates and the rest."""
        d = self.mean.shape[-1]
        mean_u, mean_v = ad.split(self.mean, [d_u, d - d_u])
        log_var_u, log_var_v = ad.split(self.log_var, [d_u, d - d_u])
        return DiagGaussian(mean_u, log_var_u), DiagGaussian(mean_v, log_var_v)


def reparam_sample(q: DiagGaussian, noise: Tensor) -> Tensor:
    """
    Draw ``z = mean + exp(log_var / 2) * noise``.

    Args:
        q: Posterior parameters.
        noise: Standard normal draw with the posterior's shape.

    Returns:
        [batch, d] sample, differentiable with respect to mean and log_var.
    """
    if noise.shape != q.mean.shape:
        raise DimensionError(f"noise {tuple(noise.shape)} does not match {tuple(q.mean.shape)}")
    std = ad.exp(ad.affine(q.log_var, 0.5))
    return ad.add(q.mean, ad.mul(std, noise.to(q.mean.dtype)))


def kl_to_standard_normal(q: DiagGaussian) -> Tensor:
    """
    Per-instance ``KL(q || N(0, I))``.

    Uses ``expm1(log_var) - log_var`` so the result stays nonnegative in
    floating point.

    Returns:
        [batch] KL values.
    """
    per_dim = ad.add(ad.sub(ad.expm1(q.log_var), q.log_var), ad.square(q.mean))
    return ad.affine(ad.sum(per_dim, axis=1), 0.5)


def recon_log_likelihood(x: Tensor, logits: Tensor) -> Tensor:
    """
    Bernoulli log-likelihood of gray values given decoder logits.

    Args:
        x: [batch, pixels] targets in [0, 1].
        logits: [batch, pixels] pre-sigmoid decoder output.

    Returns:
        [batch] sum over pixels of ``x log p + (1 - x) log(1 - p)``.
    """
    if x.shape != logits.shape:
        raise DimensionError(f"x {tuple(x.shape)} and logits {tuple(logits.shape)} differ")
    if x.numel() and (float(x.min()) < 0.0 or float(x.max()) > 1.0):
        raise DomainError("pixel values must lie in [0, 1]")
    x = x.to(logits.dtype)
    per_pixel = ad.add(
        ad.mul(x, ad.log_sigmoid(logits)),
        ad.mul(1.0 - x, ad.log1m_sigmoid(logits)),
    )
    return ad.sum(per_pixel, axis=1)


def standard_normal(shape, generator: torch.Generator) -> Tensor:
    """Float64 standard normal draw from an explicit generator."""
    return torch.randn(tuple(shape), generator=generator, dtype=ad.DTYPE)
