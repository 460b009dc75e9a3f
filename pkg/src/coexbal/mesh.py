"""Partitioning-level mesh representation, synthetic generation, and file I/O.

Two views of a mesh live here.  The partition view (:class:`Mesh`) reduces
each element to a centroid and a scalar cost weight, which is all the
space-filling-curve partitioner needs.  The full view (:class:`FullMesh`)
keeps nodes and connectivity and feeds the element-assembly workload.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

# Relative expansion applied to the tight centroid bounding box so that
# every centroid quantizes strictly inside the grid.
BOX_MARGIN = 1e-9

# Fraction of elements placed in the low octant by the clustered profile.
CLUSTER_FRACTION = 0.8


class MeshFormatError(ValueError):
    """Raised when a mesh file violates the canonical format."""


class ElementKind(Enum):
    TETRAHEDRON = "tet"
    PYRAMID = "pyr"
    PRISM = "pri"
    HEXAHEDRON = "hex"

    @property
    def node_count(self) -> int:
        return _NODE_COUNT[self]

    @property
    def default_rule(self) -> str:
        return _DEFAULT_RULE[self]

    @property
    def default_gauss_count(self) -> int:
        return _DEFAULT_GAUSS[self]


_NODE_COUNT = {
    ElementKind.TETRAHEDRON: 4,
    ElementKind.PYRAMID: 5,
    ElementKind.PRISM: 6,
    ElementKind.HEXAHEDRON: 8,
}

# One integration rule per kind; the element cost weight is the number of
# Gauss points of this rule.
_DEFAULT_RULE = {
    ElementKind.TETRAHEDRON: "tet4",
    ElementKind.PYRAMID: "pyr5",
    ElementKind.PRISM: "pri6",
    ElementKind.HEXAHEDRON: "hex8",
}

_DEFAULT_GAUSS = {
    ElementKind.TETRAHEDRON: 4,
    ElementKind.PYRAMID: 5,
    ElementKind.PRISM: 6,
    ElementKind.HEXAHEDRON: 8,
}


@dataclass(frozen=True)
class BoundingBox:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @property
    def extents(self) -> tuple[float, float, float]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class PartitionElement:
    """One element as the partitioner sees it: a point with a cost weight."""

    id: int
    kind: ElementKind
    centroid: tuple[float, float, float]
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"element {self.id}: weight must be > 0, got {self.weight}")


@dataclass(frozen=True)
class Mesh:
    elements: tuple[PartitionElement, ...]
    bounding_box: BoundingBox

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weight_array()))

    def id_array(self) -> np.ndarray:
        return np.array([e.id for e in self.elements], dtype=np.int64)

    def centroid_array(self) -> np.ndarray:
        return np.array([e.centroid for e in self.elements], dtype=np.float64)

    def weight_array(self) -> np.ndarray:
        return np.array([e.weight for e in self.elements], dtype=np.float64)


def make_mesh(elements) -> Mesh:
    """Build a Mesh, checking id uniqueness and computing the bounding box."""
    elements = tuple(elements)
    if not elements:
        raise ValueError("mesh must contain at least one element")
    ids = [e.id for e in elements]
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise ValueError(f"duplicate element id {dup}")
    box = _bounding_box_of_points(np.array([e.centroid for e in elements]))
    return Mesh(elements=elements, bounding_box=box)


def _bounding_box_of_points(points: np.ndarray) -> BoundingBox:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    extent = hi - lo
    max_extent = float(extent.max())
    # Degenerate axes get a floor so grid quantization keeps a positive span.
    pad = np.maximum(BOX_MARGIN * np.maximum(extent, max_extent), BOX_MARGIN)
    return BoundingBox(lo=tuple(lo - pad), hi=tuple(hi + pad))


def compute_bounding_box(mesh: Mesh) -> BoundingBox:
    """Tight centroid box expanded by a relative margin on every axis."""
    if mesh.n_elements == 0:
        raise ValueError("cannot compute bounding box of an empty mesh")
    return _bounding_box_of_points(mesh.centroid_array())


def generate_synthetic_mesh(
    n_elements: int,
    kind_mix: dict[ElementKind, float],
    seed: int,
    spatial_profile: str = "uniform",
) -> Mesh:
    """Generate a deterministic random mesh inside the unit cube.

    ``kind_mix`` gives the proportion of each element kind and must sum to 1.
    Element weights are the Gauss-point counts of each kind's default rule.
    The ``clustered`` profile puts 80% of the elements into the low octant to
    mimic a boundary-layer-refined mesh.
    """
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    if spatial_profile not in ("uniform", "clustered"):
        raise ValueError(f"unknown spatial_profile {spatial_profile!r}")
    kinds = sorted(kind_mix, key=lambda k: k.value)
    props = np.array([kind_mix[k] for k in kinds], dtype=np.float64)
    if (props < 0).any() or abs(props.sum() - 1.0) > 1e-9:
        raise ValueError("kind_mix proportions must be non-negative and sum to 1")

    rng = np.random.default_rng(seed)
    kind_idx = rng.choice(len(kinds), size=n_elements, p=props / props.sum())
    if spatial_profile == "uniform":
        centroids = rng.uniform(0.0, 1.0, size=(n_elements, 3))
    else:
        n_cluster = int(round(CLUSTER_FRACTION * n_elements))
        c = rng.uniform(0.0, 0.5, size=(n_cluster, 3))
        rest = rng.uniform(0.0, 1.0, size=(n_elements - n_cluster, 3))
        centroids = np.concatenate([c, rest], axis=0)

    elements = [
        PartitionElement(
            id=i,
            kind=kinds[kind_idx[i]],
            centroid=tuple(centroids[i]),
            weight=float(kinds[kind_idx[i]].default_gauss_count),
        )
        for i in range(n_elements)
    ]
    return make_mesh(elements)


# ---------------------------------------------------------------------------
# Canonical partition-mesh text format:
#   pmesh 1 <n_elements>
#   <id> <tet|pyr|pri|hex> <cx> <cy> <cz> <weight>
# Reals printed with repr() (shortest round-trip decimal).
# ---------------------------------------------------------------------------

_KIND_BY_TAG = {k.value: k for k in ElementKind}


def store_mesh(mesh: Mesh, path: str | Path) -> None:
    lines = [f"pmesh 1 {mesh.n_elements}"]
    for e in mesh.elements:
        cx, cy, cz = e.centroid
        lines.append(f"{e.id} {e.kind.value} {cx!r} {cy!r} {cz!r} {e.weight!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path: str | Path) -> Mesh:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise MeshFormatError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "pmesh" or header[1] != "1":
        raise MeshFormatError(f"{path}:1: bad header {lines[0]!r}")
    try:
        n = int(header[2])
    except ValueError:
        raise MeshFormatError(f"{path}:1: bad element count {header[2]!r}") from None

    records = [ln for ln in lines[1:] if ln.strip()]
    if len(records) != n:
        raise MeshFormatError(
            f"{path}: header declares {n} elements but file has {len(records)} records"
        )
    elements = []
    seen: set[int] = set()
    for lineno, ln in enumerate(records, start=2):
        parts = ln.split()
        if len(parts) != 6:
            raise MeshFormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            eid = int(parts[0])
            coords = tuple(float(p) for p in parts[2:5])
            weight = float(parts[5])
        except ValueError as exc:
            raise MeshFormatError(f"{path}:{lineno}: {exc}") from None
        if parts[1] not in _KIND_BY_TAG:
            raise MeshFormatError(f"{path}:{lineno}: unknown kind tag {parts[1]!r}")
        if eid in seen:
            raise MeshFormatError(f"{path}:{lineno}: duplicate element id {eid}")
        seen.add(eid)
        if not weight > 0 or not math.isfinite(weight):
            raise MeshFormatError(f"{path}:{lineno}: weight must be positive, got {weight}")
        elements.append(
            PartitionElement(id=eid, kind=_KIND_BY_TAG[parts[1]], centroid=coords, weight=weight)
        )
    return make_mesh(elements)


# ---------------------------------------------------------------------------
# Full mesh: nodes + connectivity, JSON format
#   {"nodes": [[x,y,z], ...], "elements": [{"kind": ..., "conn": [...], "rule": ...}]}
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullElement:
    kind: ElementKind
    conn: tuple[int, ...]
    rule: str


@dataclass(frozen=True)
class FullMesh:
    nodes: np.ndarray  # (n_nodes, 3) float64
    elements: tuple[FullElement, ...] = field(default=())

    def __post_init__(self):
        n = len(self.nodes)
        for i, e in enumerate(self.elements):
            if len(e.conn) != e.kind.node_count:
                raise ValueError(
                    f"element {i}: {e.kind.value} needs {e.kind.node_count} nodes, "
                    f"got {len(e.conn)}"
                )
            if any(c < 0 or c >= n for c in e.conn):
                raise ValueError(f"element {i}: connectivity index out of range")

    @property
    def n_elements(self) -> int:
        return len(self.elements)


def store_full_mesh(full: FullMesh, path: str | Path) -> None:
    doc = {
        "nodes": [[float(x) for x in row] for row in full.nodes],
        "elements": [
            {"kind": e.kind.value, "conn": list(e.conn), "rule": e.rule}
            for e in full.elements
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_full_mesh(path: str | Path) -> FullMesh:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{path}: invalid JSON: {exc}") from None
    try:
        nodes = np.array(doc["nodes"], dtype=np.float64).reshape(-1, 3)
        elements = tuple(
            FullElement(
                kind=_KIND_BY_TAG[e["kind"]],
                conn=tuple(int(c) for c in e["conn"]),
                rule=str(e["rule"]),
            )
            for e in doc["elements"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshFormatError(f"{path}: malformed full-mesh document: {exc}") from None
    return FullMesh(nodes=nodes, elements=elements)


def generate_synthetic_full_mesh(
    n_elements: int,
    hex_fraction: float = 0.3,
    seed: int = 0,
    size: float = 1.0,
) -> FullMesh:
    """Random tet/hex soup with per-element nodes (no sharing).

    Tets get four points jittered around a random base; hexes are random
    axis-aligned boxes, which keeps the trilinear map well defined.  Elements
    are assigned the default integration rule of their kind.
    """
    if not 0.0 <= hex_fraction <= 1.0:
        raise ValueError("hex_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    nodes: list[list[float]] = []
    elements: list[FullElement] = []
    for _ in range(n_elements):
        base = rng.uniform(0.0, size, size=3)
        if rng.uniform() < hex_fraction:
            side = rng.uniform(0.2, 1.0, size=3) * size * 0.1
            i0 = len(nodes)
            for dz in (0, 1):
                for dy, dx in ((0, 0), (0, 1), (1, 1), (1, 0)):
                    nodes.append(list(base + side * np.array([dx, dy, dz])))
            kind = ElementKind.HEXAHEDRON
            conn = tuple(range(i0, i0 + 8))
        else:
            i0 = len(nodes)
            pts = base + rng.uniform(-0.05, 0.05, size=(4, 3)) * size
            # Re-draw until the tet is comfortably non-degenerate.
            while _tet_volume(pts) < 1e-8 * size**3:
                pts = base + rng.uniform(-0.05, 0.05, size=(4, 3)) * size
            nodes.extend(pts.tolist())
            kind = ElementKind.TETRAHEDRON
            conn = tuple(range(i0, i0 + 4))
        elements.append(FullElement(kind=kind, conn=conn, rule=kind.default_rule))
    return FullMesh(nodes=np.array(nodes, dtype=np.float64), elements=tuple(elements))


def _tet_volume(pts: np.ndarray) -> float:
    m = pts[1:] - pts[0]
    return abs(float(np.linalg.det(m))) / 6.0


def partition_mesh_from_full(full: FullMesh) -> Mesh:
    """Derive the partition view: centroid = node average, weight = Gauss count."""
    elements = []
    for i, e in enumerate(full.elements):
        centroid = full.nodes[list(e.conn)].mean(axis=0)
        elements.append(
            PartitionElement(
                id=i,
                kind=e.kind,
                centroid=tuple(centroid),
                weight=float(e.kind.default_gauss_count),
            )
        )
    return make_mesh(elements)
