"""pairdis: weakly supervised disentanglement of VAE latents from pairwise similarities."""

__version__ = "0.1.0"
