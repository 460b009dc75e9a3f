import numpy as np
import pytest

from coexbal.fixtures import fixture_mesh_10k
from coexbal.mesh import ElementKind, generate_synthetic_mesh
from coexbal.sfc import BinSequence


@pytest.fixture(scope="session")
def mesh10k():
    return fixture_mesh_10k()


@pytest.fixture(scope="session")
def small_mixed_mesh():
    mix = {
        ElementKind.TETRAHEDRON: 0.4,
        ElementKind.PYRAMID: 0.2,
        ElementKind.PRISM: 0.2,
        ElementKind.HEXAHEDRON: 0.2,
    }
    return generate_synthetic_mesh(500, mix, seed=11, spatial_profile="uniform")


def make_binseq(weights) -> BinSequence:
    """Bin sequence with one synthetic element per bin, keys 0..m-1."""
    w = np.asarray(weights, dtype=np.float64)
    return BinSequence(
        keys=np.arange(len(w), dtype=np.int64),
        weights=w,
        element_ids=tuple(np.array([i], dtype=np.int64) for i in range(len(w))),
        total_weight=float(w.sum()),
    )
