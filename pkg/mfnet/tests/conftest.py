import subprocess
import sys
from pathlib import Path

import pytest

from mfnet.data import ToyDataset


@pytest.fixture(scope="session")
def toy_data(tmp_path_factory):
    """Reduced-scale Overlap dataset + reference fractions via the host CLI."""
    root = tmp_path_factory.mktemp("toy")
    ds = root / "dataset"
    fest = root / "fest"
    subprocess.run([sys.executable, "-m", "mfeit", "dataset-gen",
                    "--family", "overlap", "--count", "32", "--seed", "9",
                    "--vertices", "150", "--electrodes", "16",
                    "--out", str(ds)], check=True, capture_output=True)
    subprocess.run([sys.executable, "-m", "mfeit", "fest",
                    "--dataset", str(ds), "--out", str(fest)],
                   check=True, capture_output=True)
    return ds, fest


@pytest.fixture(scope="session")
def toy_dataset(toy_data):
    ds, fest = toy_data
    dataset = ToyDataset(ds, fest)
    yield dataset
    dataset.close()
