"""Tests for posteriors, the KL term and the pixel likelihood."""

import math

import pytest
import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tape
from pairdis.distributions import (
    DiagGaussian,
    kl_to_standard_normal,
    recon_log_likelihood,
    reparam_sample,
    standard_normal,
)
from pairdis.errors import DimensionError, DomainError


def _gaussian(mean, log_var):
    return DiagGaussian(ad.as_tensor(mean), ad.as_tensor(log_var))


def test_reparam_with_unit_posterior_returns_noise():
    noise = ad.as_tensor([[0.3, -1.7]])
    z = reparam_sample(_gaussian([[0.0, 0.0]], [[0.0, 0.0]]), noise)
    assert torch.equal(z, noise)


def test_tiny_log_variance_is_clamped():
    q = _gaussian([[2.0]], [[-50.0]])
    assert float(q.log_var[0, 0]) == -10.0
    z = reparam_sample(q, ad.as_tensor([[1.0]]))
    assert abs(float(z[0, 0]) - 2.0) < 0.01


def test_reparam_shape_mismatch():
    with pytest.raises(DimensionError):
        reparam_sample(_gaussian([[0.0, 0.0]], [[0.0, 0.0]]), ad.as_tensor([[1.0]]))
    with pytest.raises(DimensionError):
        _gaussian([[0.0, 0.0]], [[0.0]])


def test_reparam_sample_moments():
    n = 100_000
    gen = torch.Generator().manual_seed(0)
    q = _gaussian([[1.0]] * n, [[math.log(4.0)]] * n)
    z = reparam_sample(q, standard_normal((n, 1), gen)).reshape(-1)
    mean_se = 2.0 / math.sqrt(n)
    var_se = math.sqrt(2.0) * 4.0 / math.sqrt(n)
    assert abs(float(z.mean()) - 1.0) < 4 * mean_se
    assert abs(float(z.var()) - 4.0) < 4 * var_se


def test_reparam_gradient_wrt_mean_is_one():
    mean = ad.parameter([[0.5, -0.5]])
    log_var = ad.parameter([[0.2, -0.3]])
    with Tape() as tape:
        tape.watch("mean", mean)
        tape.watch("log_var", log_var)
        grads = ad.backward(
            tape, ad.sum(reparam_sample(DiagGaussian(mean, log_var), ad.as_tensor([[0.7, 1.1]])))
        )
    assert grads["mean"].tolist() == [[1.0, 1.0]]
    expected = 0.5 * torch.exp(0.5 * log_var.detach()) * ad.as_tensor([[0.7, 1.1]])
    assert torch.allclose(grads["log_var"], expected, rtol=1e-12)


def test_kl_known_values():
    assert kl_to_standard_normal(_gaussian([[0.0, 0.0]], [[0.0, 0.0]])).tolist() == [0.0]
    assert float(kl_to_standard_normal(_gaussian([[1.0]], [[0.0]]))[0]) == pytest.approx(0.5, abs=1e-15)


def test_kl_is_nonnegative():
    gen = torch.Generator().manual_seed(1)
    mean = torch.randn(500, 3, generator=gen, dtype=ad.DTYPE) * 5.0
    log_var = torch.randn(500, 3, generator=gen, dtype=ad.DTYPE) * 8.0
    kl = kl_to_standard_normal(DiagGaussian(mean, log_var))
    assert bool((kl >= 0.0).all())
    tiny = kl_to_standard_normal(_gaussian([[0.0]], [[1e-9]]))
    assert 0.0 <= float(tiny[0]) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_kl_matches_monte_carlo(seed):
    gen = torch.Generator().manual_seed(seed)
    mu = float(torch.randn(1, generator=gen, dtype=ad.DTYPE))
    log_var = float(torch.randn(1, generator=gen, dtype=ad.DTYPE))
    sigma = math.exp(0.5 * log_var)
    n = 100_000
    z = mu + sigma * torch.randn(n, generator=gen, dtype=ad.DTYPE)
    log_q = -0.5 * ((z - mu) / sigma) ** 2 - math.log(sigma)
    log_p = -0.5 * z**2
    samples = log_q - log_p
    se = float(samples.std()) / math.sqrt(n)
    kl = float(kl_to_standard_normal(_gaussian([[mu]], [[log_var]]))[0])
    assert abs(kl - float(samples.mean())) < 4 * se + 1e-12


def test_recon_log_likelihood_values():
    x = ad.as_tensor([[1.0, 0.0]])
    out = recon_log_likelihood(x, ad.as_tensor([[20.0, -20.0]]))
    assert float(out[0]) == pytest.approx(-2.0 * math.log1p(math.exp(-20.0)), rel=1e-12)
    half = recon_log_likelihood(ad.as_tensor([[0.5, 0.5, 0.5]]), ad.as_tensor([[0.0, 0.0, 0.0]]))
    assert float(half[0]) == pytest.approx(-3.0 * math.log(2.0), rel=1e-14)


def test_recon_log_likelihood_is_nonpositive():
    gen = torch.Generator().manual_seed(2)
    x = torch.rand(50, 10, generator=gen, dtype=ad.DTYPE)
    logits = torch.randn(50, 10, generator=gen, dtype=ad.DTYPE) * 10.0
    assert bool((recon_log_likelihood(x, logits) <= 0.0).all())


def test_recon_rejects_out_of_range_pixels():
    with pytest.raises(DomainError):
        recon_log_likelihood(ad.as_tensor([[1.5]]), ad.as_tensor([[0.0]]))
    with pytest.raises(DimensionError):
        recon_log_likelihood(ad.as_tensor([[0.5, 0.5]]), ad.as_tensor([[0.0]]))


def test_split_blocks():
    q = _gaussian([[1.0, 2.0, 3.0]], [[0.1, 0.2, 0.3]])
    q_u, q_v = q.split(1)
    assert q_u.mean.tolist() == [[1.0]]
    assert q_v.log_var.tolist() == [[0.2, 0.3]]
