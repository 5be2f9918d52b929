"""Latent-variable models: the weakly supervised VAE and its baseline."""

from pairdis.models.base import LatentCode, LatentModel, ModelConfig, ObjectiveTerms
from pairdis.models.beta_vae import BetaVAE
from pairdis.models.pairwise import PairwiseVAE

MODEL_CLASSES = {
    PairwiseVAE.kind: PairwiseVAE,
    BetaVAE.kind: BetaVAE,
}


def create_model(config: ModelConfig, seed: int = 0) -> LatentModel:
    """Instantiate the model class selected by ``config.objective``."""
    return MODEL_CLASSES[config.objective](config, seed=seed)


__all__ = [
    "BetaVAE",
    "LatentCode",
    "LatentModel",
    "ModelConfig",
    "ObjectiveTerms",
    "PairwiseVAE",
    "create_model",
]
