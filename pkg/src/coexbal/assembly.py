"""Packed element assembly of the finite-element mass matrix.

Elements sharing a (kind, integration rule) category are reordered into
contiguous fixed-size packs, zero-padding the last pack of each category.
The kernel then runs over whole packs with the lane (element) axis
innermost-vectorized, instead of one element at a time:

    Ae[e,i,j] = sum_g J[e,g] * w[g] * N[i,g] * N[j,g]

``assemble_reference`` is the classical per-element triple loop and serves
as the ground-truth oracle for the pack path; ``sweep_pack_size`` times the
pack kernel across pack sizes.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .mesh import ElementKind, FullMesh

# ---------------------------------------------------------------------------
# Reference-element data: shape functions and quadrature rules.
# Supported categories: linear tetrahedra (1- and 4-point rules) and
# trilinear hexahedra (8-point rule).
# ---------------------------------------------------------------------------


def _tet_shape(points: np.ndarray) -> np.ndarray:
    xi, eta, zeta = points.T
    return np.stack([1.0 - xi - eta - zeta, xi, eta, zeta])


_HEX_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)


def _hex_shape(points: np.ndarray) -> np.ndarray:
    n = np.empty((8, len(points)))
    for i, (sx, sy, sz) in enumerate(_HEX_SIGNS):
        n[i] = (1 + sx * points[:, 0]) * (1 + sy * points[:, 1]) * (1 + sz * points[:, 2]) / 8.0
    return n


def _hex_shape_gradients(points: np.ndarray) -> np.ndarray:
    g = np.empty((8, len(points), 3))
    for i, (sx, sy, sz) in enumerate(_HEX_SIGNS):
        fx = 1 + sx * points[:, 0]
        fy = 1 + sy * points[:, 1]
        fz = 1 + sz * points[:, 2]
        g[i, :, 0] = sx * fy * fz / 8.0
        g[i, :, 1] = fx * sy * fz / 8.0
        g[i, :, 2] = fx * fy * sz / 8.0
    return g


_TET4_A = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
_TET4_B = (5.0 - math.sqrt(5.0)) / 20.0
_G3 = 1.0 / math.sqrt(3.0)


@dataclass(frozen=True)
class QuadratureRule:
    rule_id: str
    kind: ElementKind
    points: np.ndarray   # (ngaus, 3) reference coordinates
    weights: np.ndarray  # (ngaus,)

    @property
    def ngaus(self) -> int:
        return len(self.weights)


RULES: dict[str, QuadratureRule] = {
    "tet1": QuadratureRule(
        "tet1",
        ElementKind.TETRAHEDRON,
        points=np.array([[0.25, 0.25, 0.25]]),
        weights=np.array([1.0 / 6.0]),
    ),
    "tet4": QuadratureRule(
        "tet4",
        ElementKind.TETRAHEDRON,
        points=np.array(
            [
                [_TET4_A, _TET4_B, _TET4_B],
                [_TET4_B, _TET4_A, _TET4_B],
                [_TET4_B, _TET4_B, _TET4_A],
                [_TET4_B, _TET4_B, _TET4_B],
            ]
        ),
        weights=np.full(4, 1.0 / 24.0),
    ),
    "hex8": QuadratureRule(
        "hex8",
        ElementKind.HEXAHEDRON,
        points=np.array(
            [[sx * _G3, sy * _G3, sz * _G3] for sx, sy, sz in _HEX_SIGNS]
        ),
        weights=np.ones(8),
    ),
}


def shape_values(rule: QuadratureRule) -> np.ndarray:
    """Shape-function table N[i, g] for the rule's element kind."""
    if rule.kind is ElementKind.TETRAHEDRON:
        return _tet_shape(rule.points)
    if rule.kind is ElementKind.HEXAHEDRON:
        return _hex_shape(rule.points)
    raise KeyError(f"no shape functions for kind {rule.kind.value}")


def jacobian_dets(nodes: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """|det J| of the reference-to-physical map at every Gauss point."""
    if rule.kind is ElementKind.TETRAHEDRON:
        det = abs(float(np.linalg.det(nodes[1:] - nodes[0])))
        return np.full(rule.ngaus, det)
    if rule.kind is ElementKind.HEXAHEDRON:
        grads = _hex_shape_gradients(rule.points)  # (8, g, 3)
        dets = np.empty(rule.ngaus)
        for g in range(rule.ngaus):
            jac = nodes.T @ grads[:, g, :]  # (3, 3): dx_a / dxi_b
            dets[g] = abs(float(np.linalg.det(jac)))
        return dets
    raise KeyError(f"no geometry map for kind {rule.kind.value}")


# ---------------------------------------------------------------------------
# Packs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Category:
    kind: ElementKind
    rule: str
    nnode: int
    ngaus: int


@dataclass(frozen=True)
class Pack:
    category: Category
    pack_size: int
    element_ids: np.ndarray   # (valid_count,) positions in the full mesh
    valid_count: int
    jacobian: np.ndarray      # (pack_size, ngaus), zero in padded lanes
    weights: np.ndarray       # (ngaus,)
    shape: np.ndarray         # (nnode, ngaus)


@dataclass(frozen=True)
class PackSet:
    packs: tuple[Pack, ...]
    pack_size: int

    @property
    def n_elements(self) -> int:
        return sum(p.valid_count for p in self.packs)


def build_packs(full_mesh: FullMesh, pack_size: int) -> PackSet:
    """Group elements by category, pack them, and precompute Jacobians.

    Categories are processed in sorted (kind, rule) order and elements in
    ascending id within each category, so the result does not depend on the
    input element order beyond the ids themselves.
    """
    if pack_size < 1:
        raise ValueError("pack_size must be >= 1")
    by_cat: dict[tuple[str, str], list[int]] = {}
    for idx, e in enumerate(full_mesh.elements):
        if e.rule not in RULES:
            raise KeyError(f"element {idx}: unknown integration rule {e.rule!r}")
        rule = RULES[e.rule]
        if rule.kind is not e.kind:
            raise KeyError(f"element {idx}: rule {e.rule!r} does not apply to {e.kind.value}")
        by_cat.setdefault((e.kind.value, e.rule), []).append(idx)

    packs: list[Pack] = []
    for (kind_tag, rule_id) in sorted(by_cat):
        ids = sorted(by_cat[(kind_tag, rule_id)])
        rule = RULES[rule_id]
        category = Category(
            kind=rule.kind, rule=rule_id, nnode=rule.kind.node_count, ngaus=rule.ngaus
        )
        n_table = shape_values(rule)
        for start in range(0, len(ids), pack_size):
            chunk = ids[start:start + pack_size]
            jac = np.zeros((pack_size, rule.ngaus))
            for lane, eid in enumerate(chunk):
                nodes = full_mesh.nodes[list(full_mesh.elements[eid].conn)]
                jac[lane] = jacobian_dets(nodes, rule)
            packs.append(
                Pack(
                    category=category,
                    pack_size=pack_size,
                    element_ids=np.array(chunk, dtype=np.int64),
                    valid_count=len(chunk),
                    jacobian=jac,
                    weights=rule.weights,
                    shape=n_table,
                )
            )
    return PackSet(packs=tuple(packs), pack_size=pack_size)


ElementMatrices = dict[int, np.ndarray]


def assemble_packs(packs: PackSet) -> ElementMatrices:
    """Mass matrices for all valid elements, computed pack by pack.

    The Gauss loop runs in fixed ascending order while every lane of the
    pack advances together, so per-element results are independent of the
    pack size; padded lanes fall out as all-zero matrices and are dropped.
    """
    out: ElementMatrices = {}
    for pack in packs.packs:
        nnode = pack.category.nnode
        ae = np.zeros((pack.pack_size, nnode, nnode))
        for g in range(pack.category.ngaus):
            ng = pack.shape[:, g]
            outer = ng[:, None] * ng[None, :]
            ae += (pack.jacobian[:, g] * pack.weights[g])[:, None, None] * outer[None, :, :]
        for lane in range(pack.valid_count):
            out[int(pack.element_ids[lane])] = ae[lane]
    return out


def assemble_reference(full_mesh: FullMesh) -> ElementMatrices:
    """Classical element-by-element triple loop; the oracle for the packs."""
    out: ElementMatrices = {}
    for idx, e in enumerate(full_mesh.elements):
        rule = RULES[e.rule]
        nnode = e.kind.node_count
        n_table = shape_values(rule)
        nodes = full_mesh.nodes[list(e.conn)]
        dets = _reference_dets(nodes, rule)
        ae = np.zeros((nnode, nnode))
        for g in range(rule.ngaus):
            jw = dets[g] * rule.weights[g]
            for i in range(nnode):
                for j in range(nnode):
                    ae[i, j] += jw * n_table[i, g] * n_table[j, g]
        out[idx] = ae
    return out


def _reference_dets(nodes: np.ndarray, rule: QuadratureRule) -> list[float]:
    # Cofactor expansion kept separate from the pack path's np.linalg.det.
    def det3(m) -> float:
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )

    if rule.kind is ElementKind.TETRAHEDRON:
        edges = [[nodes[r + 1][c] - nodes[0][c] for c in range(3)] for r in range(3)]
        return [abs(det3(edges))] * rule.ngaus
    grads = _hex_shape_gradients(rule.points)
    dets = []
    for g in range(rule.ngaus):
        jac = [
            [sum(nodes[i][a] * grads[i, g, b] for i in range(8)) for b in range(3)]
            for a in range(3)
        ]
        dets.append(abs(det3(jac)))
    return dets


# ---------------------------------------------------------------------------
# Scatter to the global matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CooMatrix:
    """Node-by-node sparse matrix in coordinate-list form."""

    n_nodes: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def total(self) -> float:
        return float(self.values.sum())

    def row_sums(self) -> np.ndarray:
        sums = np.zeros(self.n_nodes)
        np.add.at(sums, self.rows, self.values)
        return sums

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_nodes, self.n_nodes))
        np.add.at(dense, (self.rows, self.cols), self.values)
        return dense


def scatter_global(matrices: ElementMatrices, full_mesh: FullMesh) -> CooMatrix:
    """Accumulate element matrices into global entries, ascending element id."""
    acc: dict[tuple[int, int], float] = {}
    for idx in sorted(matrices):
        conn = full_mesh.elements[idx].conn
        ae = matrices[idx]
        for i, a in enumerate(conn):
            for j, b in enumerate(conn):
                key = (a, b)
                acc[key] = acc.get(key, 0.0) + float(ae[i, j])
    entries = sorted(acc)
    return CooMatrix(
        n_nodes=len(full_mesh.nodes),
        rows=np.array([e[0] for e in entries], dtype=np.int64),
        cols=np.array([e[1] for e in entries], dtype=np.int64),
        values=np.array([acc[e] for e in entries]),
    )


# ---------------------------------------------------------------------------
# Pack-size sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    pack_size: int
    median_seconds: float
    speedup: float


def sweep_pack_size(full_mesh: FullMesh, sizes, reps: int = 5) -> list[SweepRow]:
    """Median kernel time per pack size, normalized against pack size 1.

    Pack construction is excluded from the timing; one warm-up repetition is
    discarded before the measured repetitions.  Size 1 is always swept since
    it anchors the speedup.
    """
    if reps < 3:
        raise ValueError("reps must be >= 3")
    sizes = sorted(set(int(s) for s in sizes) | {1})
    if any(s < 1 for s in sizes):
        raise ValueError("pack sizes must be >= 1")

    medians: dict[int, float] = {}
    for size in sizes:
        packset = build_packs(full_mesh, size)
        assemble_packs(packset)  # warm-up
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            assemble_packs(packset)
            samples.append(time.perf_counter() - t0)
        medians[size] = statistics.median(samples)

    base = medians[1]
    return [SweepRow(s, medians[s], base / medians[s]) for s in sizes]


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = ["pack_size,median_seconds,speedup"]
    for r in rows:
        lines.append(f"{r.pack_size},{r.median_seconds!r},{r.speedup!r}")
    return "\n".join(lines) + "\n"
