import os

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def two_region_png(tmp_path):
    """A 256x256 image split into two flat color regions, plus its label map."""
    img = np.zeros((256, 256, 3), np.uint8)
    img[:, :128] = (20, 40, 160)
    img[:, 128:] = (250, 160, 30)
    path = tmp_path / "scene.png"
    Image.fromarray(img).save(str(path))
    labels = np.zeros((256, 256), np.uint8)
    labels[:, 128:] = 1
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir()
    Image.fromarray(labels, mode="L").save(str(gt_dir / "scene.png"))
    return str(path), str(gt_dir)


@pytest.fixture
def checker_png(tmp_path):
    """A noisy 4-quadrant image for determinism and distinctness checks."""
    rng = np.random.default_rng(12)
    img = rng.integers(0, 255, size=(128, 128, 3)).astype(np.uint8)
    img[:64, :64] //= 4
    img[64:, 64:] //= 2
    path = tmp_path / "checker.png"
    Image.fromarray(img).save(str(path))
    return str(path)
