import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def blob_points():
    """Three well-separated 2-D clusters: (X columns-as-points, labels)."""
    from feddl.data import BlobSpec, generate_blobs

    spec = BlobSpec(n_blobs=3, points_per_blob=30, std=0.5, separation=10.0, dim=2)
    return generate_blobs(spec, seed=7)
