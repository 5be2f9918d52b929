"""Tests for the experiment pipeline and concurrent sweeps."""

from dataclasses import replace

import numpy as np
import pytest

from pairdis.datasets import LabelGenConfig, gen_synthetic
from pairdis.errors import ContractError
from pairdis.exporters.tables import MetricsExporter, read_table
from pairdis.metrics import MigConfig
from pairdis.models import BetaVAE
from pairdis.models.base import ModelConfig
from pairdis.pipeline import METRICS_FILE, ExperimentPipeline, label_kind_for, model_config_for, split_heldout
from pairdis.sweep import SweepManager, SweepSettings, run_job, sweep_jobs
from pairdis.trainer import TrainConfig

TINY_TRAIN = TrainConfig(epochs=1, batch_size=16, pairs_per_step=8, seed=0)
TINY_MODEL = ModelConfig(d_u=2, d_v=2, hidden_sizes=(8,))


def _settings(**overrides):
    base = SweepSettings(
        dataset="blobs",
        n=60,
        labels=LabelGenConfig(proportion=0.01),
        model=TINY_MODEL,
        training=TINY_TRAIN,
        mig=MigConfig(bins=5, d_u=2),
        k=3,
    )
    return replace(base, **overrides)


class TestPipeline:
    def test_model_variants(self):
        vae = model_config_for("vae", TINY_MODEL)
        assert (vae.objective, vae.beta) == ("beta-vae", 1.0)
        assert model_config_for("beta-vae", TINY_MODEL).beta == TINY_MODEL.beta
        assert model_config_for("pairwise", TINY_MODEL).objective == "pairwise"
        with pytest.raises(ContractError):
            model_config_for("gan", TINY_MODEL)

    def test_label_kind_follows_factor(self, blobs_small, bars_small):
        assert label_kind_for(blobs_small) == "binary"
        assert label_kind_for(bars_small) == "real"

    def test_split_heldout(self, blobs_small):
        train, heldout = split_heldout(blobs_small, 0.25, seed=0)
        assert (len(train), len(heldout)) == (45, 15)
        rows = lambda d: {r.tobytes() for r in d.flat}  # noqa: E731
        assert not rows(train) & rows(heldout)
        with pytest.raises(ContractError):
            split_heldout(blobs_small, 1.0, seed=0)

    def test_run_writes_metrics(self, blobs_small, tmp_path):
        pipeline = ExperimentPipeline(TINY_MODEL, TINY_TRAIN, MigConfig(bins=5, d_u=2), k=3)
        result = pipeline.run_synthetic(blobs_small, LabelGenConfig(proportion=0.02), 0.25, out_dir=tmp_path)
        assert set(result.metrics) == {"mig", "kappa"}
        assert result.metrics_path == tmp_path / METRICS_FILE
        rows = read_table(result.metrics_path, MetricsExporter.columns)
        assert [r["metric"] for r in rows] == ["kappa", "mig"]
        assert (tmp_path / "checkpoint" / "manifest.txt").is_file()

    def test_cyclic_data_switches_to_real_labels(self, bars_small):
        pipeline = ExperimentPipeline(TINY_MODEL, TINY_TRAIN, MigConfig(bins=5, d_u=2), k=3)
        result = pipeline.run_synthetic(bars_small, LabelGenConfig(proportion=0.02), 0.25)
        assert result.model.config.sim.label_kind == "real"
        assert set(result.metrics) == {"mig", "r2", "circular_correlation"}

    def test_baseline_ignores_pairs(self, blobs_small):
        pipeline = ExperimentPipeline(model_config_for("vae", TINY_MODEL), TINY_TRAIN, k=3)
        result = pipeline.run_synthetic(blobs_small, LabelGenConfig(proportion=0.02), 0.25)
        assert isinstance(result.model, BetaVAE)
        assert all(r.pair_term == 0.0 for r in result.training.history)


class TestSweep:
    def test_grid(self):
        jobs = sweep_jobs("proportion", [1e-6, 1e-5, 1e-4], [0, 1, 2], ["pairwise"])
        assert len(jobs) == 9
        assert len({j.job_id for j in jobs}) == 9
        with pytest.raises(ContractError):
            sweep_jobs("beta", [1.0], [0], ["pairwise"])
        with pytest.raises(ContractError):
            sweep_jobs("gamma", [], [0], ["pairwise"])

    @pytest.mark.parametrize(
        "values, seeds, models",
        [([1e-4, 1e-4], [0], ["pairwise"]), ([1e-4], [0, 0], ["pairwise"]), ([1e-4], [0], ["vae", "vae"])],
    )
    def test_grid_rejects_duplicates(self, values, seeds, models):
        with pytest.raises(ContractError):
            sweep_jobs("proportion", values, seeds, models)

    def test_manager_rejects_colliding_jobs(self):
        job = sweep_jobs("proportion", [1e-4], [0], ["pairwise"])[0]
        manager = SweepManager(_settings(), jobs=1)
        with pytest.raises(ContractError):
            manager.run([job, job])
        assert manager.statuses == {}

    def test_run_job_applies_value_and_seed(self):
        job = sweep_jobs("gamma", [0.1], [4], ["pairwise"])[0]
        rows = run_job(job, _settings())
        assert [r.metric for r in rows] == ["kappa", "mig"]
        assert all((r.param, r.param_value, r.seed) == ("gamma", 0.1, 4) for r in rows)

    def test_manager_rows(self):
        jobs = sweep_jobs("proportion", [1e-6, 1e-5, 1e-4], [0, 1, 2], ["pairwise"])
        manager = SweepManager(_settings(), jobs=2)
        rows = manager.run(jobs)
        assert len([r for r in rows if r.metric == "mig"]) == 9
        assert rows == sorted(rows, key=lambda r: (r.model, r.param, r.param_value, r.seed, r.metric))
        assert all(manager.get_status(j.job_id).status == "completed" for j in jobs)
        assert manager.failed() == []

    def test_concurrency_does_not_change_results(self):
        jobs = sweep_jobs("proportion", [1e-4, 1e-2], [0, 1], ["pairwise", "vae"])
        serial = SweepManager(_settings(), jobs=1).run(jobs)
        threaded = SweepManager(_settings(), jobs=4).run(jobs)
        assert serial == threaded

    def test_failed_jobs_are_reported(self):
        jobs = sweep_jobs("proportion", [1e-4], [0], ["pairwise"])
        manager = SweepManager(_settings(dataset="spirals"), jobs=1)
        assert manager.run(jobs) == []
        failed = manager.failed()
        assert len(failed) == 1
        assert failed[0].status == "failed"
        assert "spirals" in failed[0].error

    def test_job_artifacts(self, tmp_path):
        job = sweep_jobs("proportion", [1e-2], [0], ["pairwise"])[0]
        run_job(job, _settings(out_dir=tmp_path))
        assert (tmp_path / job.job_id / METRICS_FILE).is_file()

    def test_manager_validation(self):
        with pytest.raises(ContractError):
            SweepManager(_settings(), jobs=0)


def test_heldout_metrics_are_finite():
    data = gen_synthetic("blobs", 80, seed=5)
    pipeline = ExperimentPipeline(TINY_MODEL, TINY_TRAIN, MigConfig(bins=5, d_u=2), k=3)
    result = pipeline.run_synthetic(data, LabelGenConfig(proportion=0.02), 0.25)
    assert all(np.isfinite(v) for v in result.metrics.values())
