"""Unsupervised beta-VAE baseline."""

from typing import Optional

import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tensor
from pairdis.distributions import kl_to_standard_normal, recon_log_likelihood
from pairdis.models.base import LatentModel, ObjectiveTerms
from pairdis.similarity import PairBatch


class BetaVAE(LatentModel):
    """
    VAE whose KL term is weighted by ``beta`` over the whole latent vector.

    Similarity labels are ignored; with ``beta = 1`` this is the plain VAE.
    """

    kind = "beta-vae"

    def beta_vae_objective(
        self,
        batch_x: Tensor,
        noise: Optional[Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> ObjectiveTerms:
        """Negative ``E[log p(x|z)] - beta * KL(q(z|x) || p(z))`` over the batch."""
        x = self._flatten(batch_x)
        code = self.encode(x, noise=noise, generator=generator)
        recon = ad.mean(recon_log_likelihood(x, self.decode(code.z_sample)))
        kl = ad.mean(kl_to_standard_normal(code.q))
        total = ad.neg(ad.sub(recon, ad.affine(kl, self.config.beta)))
        with torch.no_grad():
            q_u, q_v = code.q.split(self.config.d_u)
            kl_u = kl_to_standard_normal(q_u).mean()
            kl_v = kl_to_standard_normal(q_v).mean()
        return ObjectiveTerms(
            total=total,
            recon=recon,
            pair=torch.zeros((), dtype=ad.DTYPE),
            kl_u=kl_u,
            kl_v=kl_v,
        )

    def objective(
        self,
        batch_x: Tensor,
        pairs: PairBatch,
        noise: Optional[Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> ObjectiveTerms:
        return self.beta_vae_objective(batch_x, noise=noise, generator=generator)
