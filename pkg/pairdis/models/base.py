"""Base interfaces for latent-variable image models."""

import logging
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import ClassVar, Dict, Mapping, Optional, Tuple

import torch

from pairdis import autodiff as ad
from pairdis.autodiff import Tape, Tensor
from pairdis.distributions import (
    DiagGaussian,
    recon_log_likelihood,
    reparam_sample,
    standard_normal,
)
from pairdis.errors import ContractError, DimensionError, DomainError
from pairdis.models.networks import MLP
from pairdis.similarity import PairBatch, SimilarityParams, pair_log_likelihood

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    """Architecture and objective weights of a model."""

    d_u: int = 2
    """Dimension of the relevant block z^(u)."""
    d_v: int = 8
    """Dimension of the residual block z^(v)."""
    hidden_sizes: Tuple[int, ...] = (256, 128)
    """Encoder hidden widths; the decoder mirrors them."""
    beta: float = 4.0
    """KL weight on z^(u) (on all of z for the beta-VAE baseline)."""
    sim: SimilarityParams = field(default_factory=SimilarityParams)
    """Similarity likelihood hyperparameters."""
    input_shape: Tuple[int, ...] = (16, 16)
    """Image dimensions; inputs are flattened to prod(input_shape) pixels."""
    objective: str = "pairwise"
    """``pairwise`` (weakly supervised) or ``beta-vae`` (baseline)."""
    mc_samples: int = 8
    """Posterior samples averaged by ``joint_log_likelihood``."""

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.d_u < 1 or self.d_v < 1:
            raise ContractError(f"d_u and d_v must be >= 1, got {self.d_u}, {self.d_v}")
        if self.beta < 1:
            raise ContractError(f"beta must be >= 1, got {self.beta}")
        if any(h < 1 for h in self.hidden_sizes) or not self.input_shape:
            raise ContractError("hidden sizes and input shape must be positive")
        if self.objective not in ("pairwise", "beta-vae"):
            raise ContractError(f"unknown objective '{self.objective}'")
        if self.mc_samples < 1:
            raise ContractError("mc_samples must be >= 1")

    @property
    def pixels(self) -> int:
        total = 1
        for extent in self.input_shape:
            total *= extent
        return total

    @property
    def latent_dim(self) -> int:
        return self.d_u + self.d_v

    @classmethod
    def preset(cls, name: str = "desk", **overrides) -> "ModelConfig":
        """
        Create a config from a named preset.

        Args:
            name: "toy" (4 pixels, d_u=1, d_v=2, one hidden layer of 3) or
                  "desk" (16x16 images, d_u=2, d_v=8, hidden [256, 128]).
            **overrides: Field values replacing the preset's.
        """
        presets = {
            "toy": {"d_u": 1, "d_v": 2, "hidden_sizes": (3,), "input_shape": (2, 2)},
            "desk": {"d_u": 2, "d_v": 8, "hidden_sizes": (256, 128), "input_shape": (16, 16)},
        }
        if name not in presets:
            raise ContractError(f"unknown preset '{name}', choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})

    def to_items(self) -> Dict[str, str]:
        """Flat string key-values (checkpoint manifests, run manifests)."""
        items = {k: v for k, v in asdict(self).items() if k != "sim"}
        items["hidden_sizes"] = ",".join(str(h) for h in self.hidden_sizes)
        items["input_shape"] = ",".join(str(s) for s in self.input_shape)
        items["eta1"] = self.sim.eta1
        items["eta2"] = self.sim.eta2
        items["label_kind"] = self.sim.label_kind
        return {k: repr(v) if isinstance(v, float) else str(v) for k, v in items.items()}

    @classmethod
    def from_items(cls, items: Mapping[str, str]) -> "ModelConfig":
        """Inverse of :meth:`to_items`."""
        try:
            return cls(
                d_u=int(items["d_u"]),
                d_v=int(items["d_v"]),
                hidden_sizes=tuple(int(h) for h in items["hidden_sizes"].split(",") if h),
                beta=float(items["beta"]),
                sim=SimilarityParams(
                    eta1=float(items["eta1"]),
                    eta2=float(items["eta2"]),
                    label_kind=items["label_kind"],
                ),
                input_shape=tuple(int(s) for s in items["input_shape"].split(",") if s),
                objective=items.get("objective", "pairwise"),
                mc_samples=int(items.get("mc_samples", 8)),
            )
        except KeyError as e:
            raise ContractError(f"model config is missing key {e}") from e


@dataclass
class LatentCode:
    """Encoder output for a batch: posterior, one sample, and its two blocks."""

    q: DiagGaussian
    """Posterior over all d_u + d_v coordinates."""
    z_sample: Tensor
    """[batch, d_u + d_v] reparameterized sample."""
    zu: Tensor
    """[batch, d_u] first d_u coordinates of the sample."""
    zv: Tensor
    """[batch, d_v] remaining coordinates."""


@dataclass
class ObjectiveTerms:
    """Scalar terms of one objective evaluation; ``total`` is minimized."""

    total: Tensor
    recon: Tensor
    pair: Tensor
    kl_u: Tensor
    kl_v: Tensor

    def as_floats(self) -> Dict[str, float]:
        return {
            "recon_term": self.recon.detach().item(),
            "pair_term": self.pair.detach().item(),
            "kl_u": self.kl_u.detach().item(),
            "kl_v": self.kl_v.detach().item(),
            "total": self.total.detach().item(),
        }


class LatentModel(ABC):
    """
    MLP encoder/decoder pair over flattened images with a split latent space.

    Subclasses define the training objective.
    """

    kind: ClassVar[str] = ""

    def __init__(self, config: ModelConfig, seed: int = 0):
        """
        Initialize the networks.

        Args:
            config: Model configuration.
            seed: Seed of the weight-initialization stream.
        """
        self.config = config
        self.seed = seed
        generator = torch.Generator().manual_seed(int(seed))
        hidden = list(config.hidden_sizes)
        self.encoder = MLP("encoder", [config.pixels, *hidden, 2 * config.latent_dim], generator)
        self.decoder = MLP("decoder", [config.latent_dim, *reversed(hidden), config.pixels], generator)

    @property
    def parameters(self) -> Dict[str, Tensor]:
        """All trainable tensors by name, encoder first."""
        params: Dict[str, Tensor] = OrderedDict()
        params.update(self.encoder.parameters)
        params.update(self.decoder.parameters)
        return params

    def watch(self, tape: Tape) -> None:
        """Register every parameter on ``tape``."""
        tape.watch_all(self.parameters)

    def state_dict(self) -> Dict[str, Tensor]:
        """Detached copies of the parameters."""
        return OrderedDict((k, v.detach().clone()) for k, v in self.parameters.items())

    def load_state_dict(self, state: Mapping[str, Tensor]) -> None:
        """Overwrite parameters in place from a name-to-tensor mapping."""
        params = self.parameters
        missing = set(params) - set(state)
        if missing:
            raise ContractError(f"state is missing parameters {sorted(missing)}")
        with torch.no_grad():
            for name, param in params.items():
                value = torch.as_tensor(state[name], dtype=ad.DTYPE)
                if value.shape != param.shape:
                    raise DimensionError(
                        f"{name}: expected {tuple(param.shape)}, got {tuple(value.shape)}"
                    )
                param.copy_(value)

    def _flatten(self, x: Tensor) -> Tensor:
        x = torch.as_tensor(x, dtype=ad.DTYPE)
        if x.dim() == 1 + len(self.config.input_shape) and tuple(x.shape[1:]) == self.config.input_shape:
            x = x.reshape(x.shape[0], -1)
        if x.dim() != 2 or x.shape[1] != self.config.pixels:
            raise DimensionError(
                f"expected [batch, {self.config.pixels}] images, got {tuple(x.shape)}"
            )
        if x.numel() and (float(x.min()) < 0.0 or float(x.max()) > 1.0):
            raise DomainError("pixel values must lie in [0, 1]")
        return x

    def encode(
        self,
        x: Tensor,
        noise: Optional[Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> LatentCode:
        """
        Encode images into the posterior and one reparameterized sample.

        Args:
            x: [batch, pixels] (or [batch, *input_shape]) images in [0, 1].
            noise: Standard normal draw [batch, d_u + d_v]. When omitted it is
                drawn from ``generator``; with neither, zero noise is used and
                the sample equals the posterior mean.
            generator: Random stream for the noise.

        Returns:
            LatentCode whose ``zu`` holds the first d_u coordinates.
        """
        x = self._flatten(x)
        latent = self.config.latent_dim
        mean, log_var = ad.split(self.encoder(x), [latent, latent])
        q = DiagGaussian(mean, log_var)
        if noise is None:
            if generator is None:
                noise = torch.zeros_like(mean, dtype=ad.DTYPE)
            else:
                noise = standard_normal(mean.shape, generator)
        z = reparam_sample(q, torch.as_tensor(noise, dtype=ad.DTYPE))
        zu, zv = ad.split(z, [self.config.d_u, self.config.d_v])
        return LatentCode(q=q, z_sample=z, zu=zu, zv=zv)

    def decode(self, z: Tensor) -> Tensor:
        """
        Decode latent codes into Bernoulli logits.

        Args:
            z: [batch, d_u + d_v] codes.

        Returns:
            [batch, pixels] logits; pixel means are their sigmoid.
        """
        if z.dim() != 2 or z.shape[1] != self.config.latent_dim:
            raise DimensionError(
                f"expected [batch, {self.config.latent_dim}] codes, got {tuple(z.shape)}"
            )
        return self.decoder(z)

    def posterior_mean(self, x: Tensor, batch_size: int = 1024) -> Tensor:
        """Encoder means for a dataset, computed without gradients."""
        x = self._flatten(x)
        chunks = []
        with torch.no_grad():
            for start in range(0, x.shape[0], batch_size):
                chunks.append(self.encode(x[start : start + batch_size]).q.mean)
        if not chunks:
            return torch.zeros((0, self.config.latent_dim), dtype=ad.DTYPE)
        return torch.cat(chunks, dim=0)

    def _pair_term(self, zu: Tensor, pairs: PairBatch) -> Tensor:
        if len(pairs) == 0:
            logger.warning("empty pair batch, the pair term contributes 0")
            return torch.zeros((), dtype=ad.DTYPE)
        pairs.check_indices(zu.shape[0])
        zu_i = ad.take_rows(zu, torch.as_tensor(pairs.i_idx))
        zu_j = ad.take_rows(zu, torch.as_tensor(pairs.j_idx))
        return ad.mean(pair_log_likelihood(pairs.y, zu_i, zu_j, self.config.sim))

    @abstractmethod
    def objective(
        self,
        batch_x: Tensor,
        pairs: PairBatch,
        noise: Optional[Tensor] = None,
        generator: Optional[torch.Generator] = None,
    ) -> ObjectiveTerms:
        """
        Training loss for one minibatch.

        Args:
            batch_x: [batch, pixels] images.
            pairs: Pairs whose indices are rows of ``batch_x``.
            noise: Optional fixed reparameterization noise.
            generator: Random stream used when ``noise`` is omitted.

        Returns:
            ObjectiveTerms; ``total`` is the scalar to minimize.
        """
        pass

    def joint_log_likelihood(
        self,
        x: Tensor,
        pairs: PairBatch,
        samples: Optional[int] = None,
        generator: Optional[torch.Generator] = None,
    ) -> float:
        """
        Monte Carlo estimate of the mean ``log p(X, Y | Z)`` under the posterior.

        The mean reconstruction log-likelihood over instances plus the mean pair
        log-likelihood over pairs, averaged over ``samples`` posterior draws.

        Args:
            x: Images.
            pairs: Pairs indexing rows of ``x`` (may be empty).
            samples: Number of draws (defaults to ``config.mc_samples``).
            generator: Noise stream (defaults to a stream seeded with 0).

        Returns:
            The estimate as a float.
        """
        samples = samples or self.config.mc_samples
        generator = generator or torch.Generator().manual_seed(0)
        x = self._flatten(x)
        total = 0.0
        with torch.no_grad():
            for _ in range(samples):
                code = self.encode(x, generator=generator)
                recon = ad.mean(recon_log_likelihood(x, self.decode(code.z_sample)))
                value = float(recon)
                if len(pairs):
                    pairs.check_indices(x.shape[0])
                    zu_i = code.zu[torch.as_tensor(pairs.i_idx)]
                    zu_j = code.zu[torch.as_tensor(pairs.j_idx)]
                    value += float(
                        ad.mean(pair_log_likelihood(pairs.y, zu_i, zu_j, self.config.sim))
                    )
                total += value
        return total / samples
