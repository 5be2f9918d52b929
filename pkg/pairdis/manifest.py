"""Run directories and the manifest that makes each command reproducible."""

import hashlib
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from pydantic import BaseModel, Field

from pairdis import __version__
from pairdis.errors import ContractError

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


class RunManifest(BaseModel):
    """Everything needed to rerun a command and check its inputs."""

    command: str = Field(..., description="Sub-command that produced the run")
    seed: int = Field(..., description="Effective seed (after PAIRDIS_SEED)")
    config: Dict[str, str] = Field(default_factory=dict, description="All resolved key-values")
    inputs: List[str] = Field(default_factory=list, description="Input paths as given")
    input_hash: str = Field("", description="Git-style SHA-1 over the input contents")
    outputs: List[str] = Field(default_factory=list, description="Artifacts, relative to the run directory")
    version: str = Field(__version__, description="pairdis version")

    def write(self, run_dir: Union[str, Path]) -> Path:
        """Write ``manifest.json`` into ``run_dir``."""
        path = Path(run_dir) / MANIFEST_FILE
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        """Load a manifest from a file or a run directory."""
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_FILE
        return cls.model_validate_json(path.read_text(encoding="utf-8"))


def blob_hash(data: bytes) -> str:
    """SHA-1 of ``b"blob <len>\\0" + data``, as git hashes file contents."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _files(path: Path) -> List[Path]:
    if path.is_dir():
        return sorted(p for p in path.rglob("*") if p.is_file())
    if path.is_file():
        return [path]
    raise ContractError(f"input not found: {path}")


def content_hash(paths: Iterable[Union[str, Path]]) -> str:
    """
    Hash the contents of files and directory trees.

    Each file contributes ``<blob hash> <name>`` (names relative to the input
    they came from); the lines are sorted and hashed again, so the result does
    not depend on where the inputs live.
    """
    lines = []
    for root in (Path(p) for p in paths):
        for f in _files(root):
            name = f"{root.name}/{f.relative_to(root).as_posix()}" if root.is_dir() else f.name
            lines.append(f"{blob_hash(f.read_bytes())} {name}")
    return hashlib.sha1("\n".join(sorted(lines)).encode("utf-8")).hexdigest()


def make_run_dir(out: Union[str, Path], seed: int, now: Optional[datetime] = None) -> Path:
    """
    Create ``<out>/<YYYYmmdd-HHMMSS>-seed<seed>``.

    A numeric suffix keeps runs started within the same second apart.
    """
    stamp = (now or datetime.now()).strftime("%Y%m%d-%H%M%S")
    base = Path(out) / f"{stamp}-seed{seed}"
    candidate, k = base, 1
    while candidate.exists():
        candidate = base.with_name(f"{base.name}-{k}")
        k += 1
    candidate.mkdir(parents=True)
    logger.debug("run directory %s", candidate)
    return candidate
