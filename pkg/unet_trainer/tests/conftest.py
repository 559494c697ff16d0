import shutil
import subprocess
from pathlib import Path

import pytest

from unet_trainer.data import prepare_slices, read_index

GEN_CONFIG = """\
grid_nx = 176
grid_ny = 128
grid_nz = 20
spacing_x = 1.6
spacing_y = 1.6
spacing_z = 3.0
slab_length = 24
"""

HELD_OUT_CASE = "B005"


def run_phantomcal(*args: str) -> subprocess.CompletedProcess:
    """The segmentation pipeline is only reachable through its CLI."""
    return subprocess.run(["phantomcal", *args], capture_output=True, text=True)


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """13 noiseless synthetic cases plus the extracted slice set."""
    root = tmp_path_factory.mktemp("unet_data")
    cfg = root / "gen.cfg"
    cfg.write_text(GEN_CONFIG)
    data = root / "cases"
    proc = run_phantomcal("gen", "--sites", "A:7,B:6", "--seed", "424242", "--noise", "0",
                          "--out", str(data), "--config", str(cfg), "--quiet")
    assert proc.returncode == 0, proc.stderr
    slices = root / "slices"
    prepare_slices(data / "manifest.tsv", slices, seed=7)
    return {"root": root, "manifest": data / "manifest.tsv", "cases": data, "slices": slices}


@pytest.fixture(scope="session")
def tiny_dataset(dataset, tmp_path_factory):
    """Sixteen slices copied out of the main set; keeps unit trainings fast."""
    out = tmp_path_factory.mktemp("tiny")
    records = read_index(dataset["slices"])[:16]
    lines = []
    for r in records:
        shutil.copy(r.file, out / r.file.name)
        lines.append(f"{r.file.name}\t{r.case_id}\t{r.site}\t{r.z}\t{int(r.positive)}")
    (out / "slices.tsv").write_text("\n".join(lines) + "\n")
    return out


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset, tmp_path_factory):
    from unet_trainer.train import TrainConfig, train

    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    train(TrainConfig(epochs=1, seed=3, base_channels=8), tiny_dataset, path,
          log=lambda s: None)
    return path
