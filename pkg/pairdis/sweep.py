"""Concurrent parameter sweeps over label proportion or label noise."""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from pairdis.datasets.base import LabelGenConfig
from pairdis.datasets.synthetic import gen_synthetic
from pairdis.errors import ContractError
from pairdis.metrics import MigConfig
from pairdis.models.base import ModelConfig
from pairdis.pipeline import ExperimentPipeline, model_config_for
from pairdis.trainer import TrainConfig

logger = logging.getLogger(__name__)

SweepParam = Literal["proportion", "gamma"]
JobState = Literal["pending", "running", "completed", "failed"]


class SweepJobStatus(BaseModel):
    """Progress of one sweep job."""

    job_id: str
    model: str
    param: str
    param_value: float
    seed: int
    status: JobState = Field("pending", description="pending, running, completed or failed")
    message: str = Field("Job created", description="Status message")
    error: Optional[str] = Field(None, description="Error message if failed")


@dataclass(frozen=True)
class SweepJob:
    """One (model, parameter value, seed) cell of a sweep."""

    model: str
    param: SweepParam
    value: float
    seed: int

    @property
    def job_id(self) -> str:
        return f"{self.model}-{self.param}{self.value!r}-seed{self.seed}"


@dataclass
class SweepSettings:
    """Everything shared by the jobs of one sweep."""

    dataset: str = "blobs"
    n: int = 2000
    heldout_fraction: float = 0.2
    labels: LabelGenConfig = field(default_factory=LabelGenConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    mig: Optional[MigConfig] = None
    k: int = 5
    out_dir: Optional[Path] = None
    """When set, each job writes its artifacts to ``<out_dir>/<job_id>``."""


@dataclass
class SweepRow:
    """Long-format result row."""

    model: str
    param: str
    param_value: float
    seed: int
    metric: str
    value: float


def sweep_jobs(
    param: SweepParam, values: Sequence[float], seeds: Sequence[int], models: Sequence[str]
) -> List[SweepJob]:
    """The full grid of jobs."""
    if param not in ("proportion", "gamma"):
        raise ContractError(f"cannot sweep '{param}', choose proportion or gamma")
    if not values or not seeds or not models:
        raise ContractError("a sweep needs at least one value, seed and model")
    grid = {
        "values": [float(v) for v in values],
        "seeds": [int(s) for s in seeds],
        "models": list(models),
    }
    for name, items in grid.items():
        if len(set(items)) != len(items):
            raise ContractError(f"sweep {name} must be distinct, got {items}")
    return [SweepJob(m, param, float(v), int(s)) for m in models for v in values for s in seeds]


def run_job(job: SweepJob, settings: SweepSettings) -> List[SweepRow]:
    """Generate data, fabricate labels, train and evaluate for one grid cell."""
    labels = replace(settings.labels, seed=job.seed)
    if job.param == "proportion":
        labels = replace(labels, proportion=job.value)
    else:
        labels = replace(labels, noise_gamma=job.value)
    pipeline = ExperimentPipeline(
        model_config_for(job.model, settings.model),
        replace(settings.training, seed=job.seed),
        settings.mig,
        settings.k,
    )
    dataset = gen_synthetic(settings.dataset, settings.n, seed=job.seed)
    out_dir = settings.out_dir / job.job_id if settings.out_dir is not None else None
    result = pipeline.run_synthetic(dataset, labels, settings.heldout_fraction, out_dir=out_dir)
    return [
        SweepRow(job.model, job.param, job.value, job.seed, metric, value)
        for metric, value in sorted(result.metrics.items())
    ]


class SweepManager:
    """Runs sweep jobs concurrently and tracks their status."""

    def __init__(self, settings: SweepSettings, jobs: int = 1):
        """
        Initialize the manager.

        Args:
            settings: Shared sweep settings.
            jobs: Maximum number of jobs running at once.
        """
        if jobs < 1:
            raise ContractError(f"jobs must be >= 1, got {jobs}")
        self.settings = settings
        self.jobs = jobs
        self.statuses: Dict[str, SweepJobStatus] = {}
        self.results: Dict[str, List[SweepRow]] = {}
        self._lock: Optional[asyncio.Lock] = None

    async def _set(self, job_id: str, **changes) -> None:
        async with self._lock:
            self.statuses[job_id] = self.statuses[job_id].model_copy(update=changes)

    async def _run_job(
        self, job: SweepJob, executor: ThreadPoolExecutor, limit: asyncio.Semaphore
    ) -> None:
        async with limit:
            await self._set(job.job_id, status="running", message="Training...")
            loop = asyncio.get_running_loop()
            try:
                rows = await loop.run_in_executor(executor, run_job, job, self.settings)
            except Exception as e:
                logger.exception("sweep job %s failed", job.job_id)
                await self._set(job.job_id, status="failed", error=str(e), message=f"Job failed: {e}")
                return
            async with self._lock:
                self.results[job.job_id] = rows
            await self._set(job.job_id, status="completed", message="Job completed")

    async def run_async(self, jobs: Sequence[SweepJob]) -> List[SweepRow]:
        """Run every job, at most ``self.jobs`` at a time."""
        ids = [job.job_id for job in jobs]
        if len(set(ids)) != len(ids):
            raise ContractError("sweep jobs must have distinct ids")
        self._lock = asyncio.Lock()
        async with self._lock:
            for job in jobs:
                self.statuses[job.job_id] = SweepJobStatus(
                    job_id=job.job_id, model=job.model, param=job.param,
                    param_value=job.value, seed=job.seed,
                )
        limit = asyncio.Semaphore(self.jobs)
        with ThreadPoolExecutor(max_workers=self.jobs) as executor:
            await asyncio.gather(*(self._run_job(job, executor, limit) for job in jobs))
        return self.rows()

    def run(self, jobs: Sequence[SweepJob]) -> List[SweepRow]:
        """Blocking wrapper around :meth:`run_async`."""
        return asyncio.run(self.run_async(jobs))

    def rows(self) -> List[SweepRow]:
        """Completed rows in a fixed order, independent of completion order."""
        rows = [row for rows in self.results.values() for row in rows]
        return sorted(rows, key=_row_key)

    def get_status(self, job_id: str) -> Optional[SweepJobStatus]:
        return self.statuses.get(job_id)

    def failed(self) -> List[SweepJobStatus]:
        return [s for s in self.statuses.values() if s.status == "failed"]


def _row_key(row: SweepRow) -> Tuple:
    return (row.model, row.param, row.param_value, row.seed, row.metric)
