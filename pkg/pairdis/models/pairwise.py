"""VAE trained jointly on images and pairwise similarity labels."""

from typing import Optional

import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tensor
from pairdis.distributions import kl_to_standard_normal, recon_log_likelihood
from pairdis.models.base import LatentModel, ObjectiveTerms
from pairdis.similarity import PairBatch


class PairwiseVAE(LatentModel):
    """
    Weakly supervised VAE.

    Maximizes the mean reconstruction log-likelihood plus the mean pair
    log-likelihood (which sees only z^(u)), minus ``beta`` times the z^(u) KL
    and the unweighted z^(v) KL.
    """

    kind = "pairwise"

    def objective(
        self,
        batch_x: Tensor,
        pairs: PairBatch,
        noise: Optional[Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> ObjectiveTerms:
        x = self._flatten(batch_x)
        code = self.encode(x, noise=noise, generator=generator)
        recon = ad.mean(recon_log_likelihood(x, self.decode(code.z_sample)))
        q_u, q_v = code.q.split(self.config.d_u)
        kl_u = ad.mean(kl_to_standard_normal(q_u))
        kl_v = ad.mean(kl_to_standard_normal(q_v))
        pair = self._pair_term(code.zu, pairs)

        elbo = ad.sub(ad.sub(ad.add(recon, pair), ad.affine(kl_u, self.config.beta)), kl_v)
        return ObjectiveTerms(total=ad.neg(elbo), recon=recon, pair=pair, kl_u=kl_u, kl_v=kl_v)
