"""Checkpoint directories: one PDT1 file per parameter plus a text manifest.

``manifest.txt`` lines:

    kind <pairwise|beta-vae>
    seed <int>
    config <key>=<value>
    param <name> <comma-separated shape>
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

from pairdis.errors import FormatError
from pairdis.exporters.tensor import TensorExporter, load_tensor
from pairdis.models import MODEL_CLASSES
from pairdis.models.base import LatentModel, ModelConfig

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"


def save_checkpoint(model: LatentModel, directory: Union[str, Path]) -> Path:
    """
    Write a model's parameters and configuration.

    Args:
        model: Model to save.
        directory: Target directory (created if needed).

    Returns:
        The checkpoint directory.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    exporter = TensorExporter()
    lines = ["# pairdis checkpoint", f"kind {model.kind}", f"seed {model.seed}"]
    for key, value in sorted(model.config.to_items().items()):
        lines.append(f"config {key}={value}")
    for name, tensor in model.parameters.items():
        exporter.export(tensor, str(directory / f"{name}{exporter.get_file_extension()}"))
        lines.append(f"param {name} {','.join(str(s) for s in tensor.shape)}")
    (directory / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("checkpoint with %d parameters written to %s", len(model.parameters), directory)
    return directory


def _parse_manifest(path: Path) -> Tuple[str, int, Dict[str, str], List[Tuple[str, Tuple[int, ...]]]]:
    kind, seed = None, 0
    config: Dict[str, str] = {}
    params: List[Tuple[str, Tuple[int, ...]]] = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, _, rest = line.partition(" ")
        if tag == "kind":
            kind = rest
        elif tag == "seed":
            seed = int(rest)
        elif tag == "config" and "=" in rest:
            key, _, value = rest.partition("=")
            config[key] = value
        elif tag == "param":
            name, _, shape = rest.partition(" ")
            params.append((name, tuple(int(s) for s in shape.split(",") if s)))
        else:
            raise FormatError(f"{path}:{line_no}: unrecognised line '{line}'")
    if kind not in MODEL_CLASSES:
        raise FormatError(f"{path}: unknown model kind '{kind}'")
    return kind, seed, config, params


def load_checkpoint(directory: Union[str, Path]) -> LatentModel:
    """
    Rebuild a model from a checkpoint directory.

    Args:
        directory: Directory written by :func:`save_checkpoint`.

    Returns:
        Model of the recorded kind with the stored parameters.
    """
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.is_file():
        raise FormatError(f"{directory}: no {MANIFEST}")
    kind, seed, items, params = _parse_manifest(manifest)
    config = ModelConfig.from_items({**items, "objective": kind})
    model = MODEL_CLASSES[kind](config, seed=seed)
    state = {}
    for name, shape in params:
        value = load_tensor(directory / f"{name}.pdt")
        if tuple(value.shape) != shape:
            raise FormatError(f"{name}: manifest shape {shape} but file holds {value.shape}")
        state[name] = value
    model.load_state_dict(state)
    return model
