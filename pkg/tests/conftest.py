import gzip
import os
from pathlib import Path

import numpy as np
import pytest

from haarscat import datasets


def _mlxtend_csv() -> Path | None:
    try:
        import mlxtend
    except ImportError:
        return None
    path = Path(mlxtend.__file__).parent / "data" / "data" / "mnist_5k.csv.gz"
    return path if path.exists() else None


def mnist_files(tmp_dir: Path) -> tuple[Path, Path]:
    """IDX image/label files: ``HAAR_MNIST_DIR`` if set, else the 5000-digit subset bundled with mlxtend."""
    env = os.environ.get("HAAR_MNIST_DIR")
    if env:
        return datasets.find_mnist(env, "train")
    src = _mlxtend_csv()
    if src is None:
        pytest.skip("no MNIST source: set HAAR_MNIST_DIR or install mlxtend")
    with gzip.open(src, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",", dtype=np.uint8)
    images = tmp_dir / "images-idx3-ubyte"
    labels = tmp_dir / "labels-idx1-ubyte"
    datasets.write_idx(images, table[:, :784].reshape(-1, 28, 28))
    datasets.write_idx(labels, table[:, 784])
    return images, labels


@pytest.fixture(scope="session")
def mnist(tmp_path_factory) -> datasets.Dataset:
    images, labels = mnist_files(tmp_path_factory.mktemp("mnist"))
    return datasets.load_idx(images, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
