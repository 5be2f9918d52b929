"""End-to-end tests of the pairdis command line."""

from pathlib import Path
from typing import List

import numpy as np
import pytest

from pairdis.cli import main
from pairdis.config import SEED_ENV
from pairdis.exporters.tables import CrossValExporter, MetricsExporter, SweepExporter, load_pairs, read_table
from pairdis.manifest import RunManifest

TINY = ["--d-v", "2", "--hidden", "8", "--epochs", "1", "--batch-size", "16", "--pairs-per-step", "8"]


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


def _run(args: List[str], out: Path) -> Path:
    assert main(args + ["--out", str(out)]) == 0
    runs = sorted(out.iterdir())
    return runs[-1]


@pytest.fixture
def blob_runs(tmp_path):
    """A 40-image training set with labels and a 20-image held-out set."""
    data = _run(["gen-data", "--dataset", "blobs", "--n", "40", "--seed", "1"], tmp_path / "data")
    heldout = _run(["gen-data", "--dataset", "blobs", "--n", "20", "--seed", "2"], tmp_path / "heldout")
    pairs = _run(["gen-pairs", "--data", str(data), "--proportion", "0.05", "--seed", "1"], tmp_path / "pairs")
    return data, heldout, pairs / "pairs.csv"


@pytest.fixture
def trained(tmp_path, blob_runs):
    data, heldout, pairs = blob_runs
    run = _run(["train", "--data", str(data), "--pairs", str(pairs), *TINY], tmp_path / "train")
    return run / "checkpoint", data, heldout


def test_gen_data_writes_manifest(tmp_path, capsys):
    run = _run(["gen-data", "--dataset", "bars", "--n", "30", "--seed", "4"], tmp_path)
    assert run.name.endswith("-seed4")
    manifest = RunManifest.read(run)
    assert manifest.command == "gen-data"
    assert manifest.seed == 4
    assert manifest.outputs == ["factors.csv", "images.pdt"]
    assert manifest.config["dataset"] == "bars"
    assert "✓ Saved to:" in capsys.readouterr().out


def test_gen_data_is_reproducible(tmp_path):
    args = ["gen-data", "--dataset", "bars", "--n", "50", "--seed", "9"]
    first = _run(args, tmp_path)
    runs_before = set(tmp_path.iterdir())
    assert main(args + ["--out", str(tmp_path)]) == 0
    (second,) = set(tmp_path.iterdir()) - runs_before
    for name in ("images.pdt", "factors.csv", "manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_gen_pairs_count(tmp_path):
    data = _run(["gen-data", "--dataset", "blobs", "--n", "10000", "--seed", "0"], tmp_path / "data")
    pairs = _run(["gen-pairs", "--data", str(data), "--proportion", "1e-4"], tmp_path / "pairs")
    loaded = load_pairs(pairs / "pairs.csv")
    assert len(loaded) == 5000
    assert set(loaded.y.tolist()) <= {0.0, 1.0}
    manifest = RunManifest.read(pairs)
    assert manifest.inputs == [str(data)]
    assert len(manifest.input_hash) == 40


def test_gen_pairs_real_labels_with_noise(tmp_path):
    data = _run(["gen-data", "--dataset", "bars", "--n", "100", "--seed", "0"], tmp_path / "data")
    pairs = _run(["gen-pairs", "--data", str(data), "--proportion", "0.05", "--gamma", "0.1"], tmp_path / "pairs")
    y = load_pairs(pairs / "pairs.csv").y
    assert y.min() >= 0.0 and y.max() <= 1.0
    assert not np.all((y == 0.0) | (y == 1.0))


def test_train_writes_checkpoint_and_metrics(tmp_path, blob_runs, capsys):
    data, heldout, pairs = blob_runs
    run = _run(
        ["train", "--data", str(data), "--pairs", str(pairs), "--heldout", str(heldout), *TINY],
        tmp_path / "train",
    )
    assert (run / "checkpoint" / "manifest.txt").is_file()
    assert (run / "loss.csv").is_file()
    rows = read_table(run / "metrics.csv", MetricsExporter.columns)
    assert {r["metric"] for r in rows} == {"mig", "kappa"}
    assert "Run Summary" in capsys.readouterr().out


def test_train_baseline_without_pairs(tmp_path, blob_runs):
    data, _, _ = blob_runs
    run = _run(["train", "--data", str(data), "--baseline", "vae", *TINY], tmp_path / "train")
    assert "kind beta-vae" in (run / "checkpoint" / "manifest.txt").read_text()


def test_train_needs_pairs(tmp_path, blob_runs, capsys):
    data, _, _ = blob_runs
    assert main(["train", "--data", str(data), *TINY, "--out", str(tmp_path / "x")]) == 1
    assert "Error:" in capsys.readouterr().err


def test_missing_required_flag():
    with pytest.raises(SystemExit) as excinfo:
        main(["gen-pairs"])
    assert excinfo.value.code == 2


def test_eval_mig(tmp_path, trained, capsys):
    checkpoint, _, heldout = trained
    run = _run(["eval-mig", "--checkpoint", str(checkpoint), "--data", str(heldout), "--bins", "5"], tmp_path / "mig")
    rows = read_table(run / "metrics.csv", MetricsExporter.columns)
    assert [r["metric"] for r in rows] == ["mig"]
    assert np.isfinite(float(rows[0]["value"]))
    assert "MIG:" in capsys.readouterr().out


def test_eval_knn(tmp_path, trained):
    checkpoint, data, heldout = trained
    run = _run(
        ["eval-knn", "--checkpoint", str(checkpoint), "--train-data", str(data), "--data", str(heldout), "--k", "3"],
        tmp_path / "knn",
    )
    rows = read_table(run / "metrics.csv", MetricsExporter.columns)
    assert [r["metric"] for r in rows] == ["kappa"]


def test_traverse(tmp_path, trained):
    checkpoint, _, heldout = trained
    run = _run(
        ["traverse", "--checkpoint", str(checkpoint), "--data", str(heldout), "--index", "3", "--grid-size", "4"],
        tmp_path / "trav",
    )
    assert (run / "traversal.pgm").read_bytes().startswith(b"P5\n64 64\n255\n")


def test_traverse_refuses_three_relevant_dimensions(tmp_path, blob_runs, capsys):
    data, heldout, pairs = blob_runs
    run = _run(["train", "--data", str(data), "--pairs", str(pairs), "--d-u", "3", *TINY], tmp_path / "train")
    code = main(
        ["traverse", "--checkpoint", str(run / "checkpoint"), "--data", str(heldout), "--out", str(tmp_path / "t")]
    )
    assert code == 1
    assert "d_u" in capsys.readouterr().err


def test_export_latents(tmp_path, trained):
    checkpoint, _, heldout = trained
    run = _run(["export-latents", "--checkpoint", str(checkpoint), "--data", str(heldout)], tmp_path / "lat")
    assert (run / "latents.pdt").is_file()
    assert (run / "latent_factors.csv").is_file()


def test_xval_beta(tmp_path, blob_runs, capsys):
    data, _, pairs = blob_runs
    run = _run(
        ["xval-beta", "--data", str(data), "--pairs", str(pairs), "--grid", "1,2,4,8,16", "--folds", "2", *TINY],
        tmp_path / "xval",
    )
    rows = read_table(run / "xval.csv", CrossValExporter.columns)
    assert [float(r["beta"]) for r in rows] == [1.0, 2.0, 4.0, 8.0, 16.0]
    assert "Selected beta" in capsys.readouterr().out


def test_sweep(tmp_path):
    run = _run(
        [
            "sweep", "--dataset", "blobs", "--n", "60", "--param", "proportion",
            "--values", "1e-6,1e-4,1e-2", "--seeds", "0,1", "--jobs", "2", "--bins", "5", "--k", "3",
            *TINY,
        ],
        tmp_path,
    )
    rows = read_table(run / "sweep.csv", SweepExporter.columns)
    assert len([r for r in rows if r["metric"] == "mig"]) == 6


def test_config_file_and_seed_override(tmp_path, monkeypatch):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("dataset = bars\nn = 30\n")
    monkeypatch.setenv(SEED_ENV, "17")
    run = _run(["gen-data", "--config", str(cfg), "--n", "25"], tmp_path / "out")
    assert run.name.endswith("-seed17")
    manifest = RunManifest.read(run)
    assert manifest.config["dataset"] == "bars"
    assert manifest.config["n"] == "25"


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_option = 1\n")
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "Error:" in capsys.readouterr().err


def test_required_flags_can_come_from_config(tmp_path, blob_runs):
    data, _, _ = blob_runs
    cfg = tmp_path / "pairs.cfg"
    cfg.write_text(f"data = {data}\nproportion = 0.05\nseed = 3\nout = {tmp_path / 'from-config'}\n")
    assert main(["gen-pairs", "--config", str(cfg)]) == 0
    (run,) = (tmp_path / "from-config").iterdir()
    assert run.name.endswith("-seed3")
    assert RunManifest.read(run).inputs == [str(data)]
    assert len(load_pairs(run / "pairs.csv")) > 0


def test_command_line_still_needs_required_flags_without_config(tmp_path):
    cfg = tmp_path / "partial.cfg"
    cfg.write_text("proportion = 0.05\n")
    with pytest.raises(SystemExit) as excinfo:
        main(["gen-pairs", "--config", str(cfg)])
    assert excinfo.value.code == 2
