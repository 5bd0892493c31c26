import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from referee.scan_io import PolarScan


def random_scan(rng, h=32, w=96, scan_id=0, timestamp=0):
    img = rng.uniform(0.0, 255.0, size=(h, w))
    return PolarScan(scan_id=scan_id, timestamp=timestamp, intensities=img,
                     range_resolution=0.5)


def random_mask(rng, h, w):
    return (rng.random((h, w)) < rng.uniform(0.02, 0.3)).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
