import os
from pathlib import Path

import numpy as np
import pytest

from spectral_smooth.mnist_ingest import write_idx_file

_FULL_NAMES = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
]


def _find(directory: Path, stem: str) -> Path | None:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    return None


@pytest.fixture(scope="session")
def mnist_files(tmp_path_factory):
    """(images_path, labels_path) of real MNIST digits in IDX format.

    Uses $SST_MNIST_DIR when it holds the standard files; otherwise writes the
    5000-image subset shipped with mlxtend to IDX. Skips when neither exists.
    """
    env = os.environ.get("SST_MNIST_DIR")
    if env:
        d = Path(env)
        for img_stem, lab_stem in _FULL_NAMES:
            img, lab = _find(d, img_stem), _find(d, lab_stem)
            if img and lab:
                return img, lab
    try:
        from mlxtend.data import mnist_data
    except ImportError:
        pytest.skip("no MNIST source: set SST_MNIST_DIR or install mlxtend")
    X, y = mnist_data()
    out = tmp_path_factory.mktemp("mnist")
    img = write_idx_file(out / "images-idx3-ubyte", X.reshape(-1, 28, 28).astype(np.uint8))
    lab = write_idx_file(out / "labels-idx1-ubyte", y.astype(np.uint8))
    return img, lab


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
