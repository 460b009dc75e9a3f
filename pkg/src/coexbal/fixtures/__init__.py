"""Bundled fixtures: a 10k mixed mesh (generated deterministically) and two
execution-plan configs, one homogeneous and one with two GPUs per node at a
20x GPU speedup.  Everything here is reproducible offline.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..mesh import ElementKind, Mesh, generate_synthetic_mesh

FIXTURE_MESH_SEED = 20200131
FIXTURE_MESH_SIZE = 10_000
FIXTURE_MESH_MIX = {
    ElementKind.TETRAHEDRON: 0.55,
    ElementKind.PYRAMID: 0.15,
    ElementKind.PRISM: 0.15,
    ElementKind.HEXAHEDRON: 0.15,
}


def fixture_mesh_10k() -> Mesh:
    return generate_synthetic_mesh(
        FIXTURE_MESH_SIZE, FIXTURE_MESH_MIX, seed=FIXTURE_MESH_SEED, spatial_profile="uniform"
    )


def plan_path(name: str) -> Path:
    """Path of a bundled plan config: 'homogeneous' or 'hetero_s20'."""
    ref = resources.files(__package__).joinpath(f"plan_{name}.json")
    with resources.as_file(ref) as p:
        return Path(p)
