"""Hilbert-curve projection of a mesh onto 1D bins and the weighted split.

The partitioner works in five steps: bound the domain, overlay a regular
grid, weight the occupied grid cells (bins) by the elements they contain,
order the bins along a Hilbert curve, and cut the resulting 1D weight
sequence into the requested number of parts.  Per-part targets can be
scaled by correction coefficients so the balancer can steer the cuts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import BoundingBox, Mesh

MAX_LEVEL = 20  # 3*L <= 60 keeps keys inside a signed 64-bit integer


@dataclass(frozen=True)
class SfcConfig:
    level: int = 8
    curve: str = "hilbert"

    def __post_init__(self):
        if not 1 <= self.level <= MAX_LEVEL:
            raise ValueError(f"level must be in [1, {MAX_LEVEL}], got {self.level}")
        if self.curve != "hilbert":
            raise ValueError(f"unsupported curve {self.curve!r}")


# ---------------------------------------------------------------------------
# 3D Hilbert curve, transpose-format bit transform (Skilling-style).
#
# Encoding: undo the per-level rotations/reflections top-down, Gray-encode,
# then interleave the three coordinate words MSB-first into one key.
# Decoding runs the same steps in reverse.  Consecutive keys always map to
# face-adjacent cells, and the map is a bijection onto [0, 2^(3L)).
# ---------------------------------------------------------------------------


def hilbert_key(cell: tuple[int, int, int], level: int) -> int:
    """Hilbert index of a grid cell at the given refinement level."""
    side = 1 << level
    x = list(cell)
    if len(x) != 3:
        raise ValueError("cell must have 3 coordinates")
    for c in x:
        if not 0 <= c < side:
            raise ValueError(f"cell coordinate {c} outside [0, {side})")

    q = 1 << (level - 1)
    while q > 1:
        p = q - 1
        for i in range(3):
            if x[i] & q:
                x[0] ^= p
            else:
                t = (x[0] ^ x[i]) & p
                x[0] ^= t
                x[i] ^= t
        q >>= 1
    for i in range(1, 3):
        x[i] ^= x[i - 1]
    t = 0
    q = 1 << (level - 1)
    while q > 1:
        if x[2] & q:
            t ^= q - 1
        q >>= 1
    for i in range(3):
        x[i] ^= t

    key = 0
    for j in range(level - 1, -1, -1):
        for i in range(3):
            key = (key << 1) | ((x[i] >> j) & 1)
    return key


def hilbert_decode(key: int, level: int) -> tuple[int, int, int]:
    """Inverse of :func:`hilbert_key`."""
    if not 0 <= key < 1 << (3 * level):
        raise ValueError(f"key {key} outside [0, 2^{3 * level})")
    x = [0, 0, 0]
    pos = 3 * level - 1
    for j in range(level - 1, -1, -1):
        for i in range(3):
            x[i] |= ((key >> pos) & 1) << j
            pos -= 1

    n = 2 << (level - 1)
    t = x[2] >> 1
    for i in range(2, 0, -1):
        x[i] ^= x[i - 1]
    x[0] ^= t
    q = 2
    while q != n:
        p = q - 1
        for i in range(2, -1, -1):
            if x[i] & q:
                x[0] ^= p
            else:
                t = (x[0] ^ x[i]) & p
                x[0] ^= t
                x[i] ^= t
        q <<= 1
    return tuple(x)


def hilbert_keys_batch(cells: np.ndarray, level: int) -> np.ndarray:
    """Vectorized :func:`hilbert_key` over an (n, 3) int array of cells."""
    cells = np.asarray(cells, dtype=np.int64)
    side = np.int64(1) << level
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise ValueError("cells must have shape (n, 3)")
    if (cells < 0).any() or (cells >= side).any():
        raise ValueError("cell coordinate outside grid")

    x = [cells[:, 0].copy(), cells[:, 1].copy(), cells[:, 2].copy()]
    q = np.int64(1) << (level - 1)
    while q > 1:
        p = q - 1
        for i in range(3):
            mask = (x[i] & q) != 0
            x[0] = np.where(mask, x[0] ^ p, x[0])
            t = np.where(mask, 0, (x[0] ^ x[i]) & p)
            x[0] ^= t
            x[i] ^= t
        q >>= 1
    for i in range(1, 3):
        x[i] ^= x[i - 1]
    t = np.zeros(len(cells), dtype=np.int64)
    q = np.int64(1) << (level - 1)
    while q > 1:
        t = np.where((x[2] & q) != 0, t ^ (q - 1), t)
        q >>= 1
    for i in range(3):
        x[i] ^= t

    key = np.zeros(len(cells), dtype=np.int64)
    for j in range(level - 1, -1, -1):
        for i in range(3):
            key |= ((x[i] >> j) & 1) << (3 * j + 2 - i)
    return key


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bin:
    key: int
    weight: float
    element_ids: tuple[int, ...]


@dataclass(frozen=True)
class BinSequence:
    """Sparse, key-sorted sequence of occupied grid cells."""

    keys: np.ndarray          # (m,) int64, strictly increasing
    weights: np.ndarray       # (m,) float64
    element_ids: tuple[np.ndarray, ...]  # per bin, ascending element id
    total_weight: float

    @property
    def n_bins(self) -> int:
        return len(self.keys)

    def bin(self, i: int) -> Bin:
        return Bin(
            key=int(self.keys[i]),
            weight=float(self.weights[i]),
            element_ids=tuple(int(e) for e in self.element_ids[i]),
        )


def quantize_cells(mesh: Mesh, cfg: SfcConfig, box: BoundingBox | None = None) -> np.ndarray:
    """Map centroids to integer grid cells, clamping onto the last cell."""
    box = box or mesh.bounding_box
    side = 1 << cfg.level
    lo = np.array(box.lo)
    span = np.array(box.hi) - lo
    rel = (mesh.centroid_array() - lo) / span
    cells = np.floor(rel * side).astype(np.int64)
    return np.clip(cells, 0, side - 1)


def project_to_bins(mesh: Mesh, cfg: SfcConfig) -> BinSequence:
    """Quantize, key, and group the mesh elements into key-sorted bins."""
    if mesh.n_elements == 0:
        raise ValueError("cannot bin an empty mesh")
    cells = quantize_cells(mesh, cfg)
    keys = hilbert_keys_batch(cells, cfg.level)
    ids = mesh.id_array()
    weights = mesh.weight_array()
    return _group_bins(keys, ids, weights)


def _group_bins(keys: np.ndarray, ids: np.ndarray, weights: np.ndarray) -> BinSequence:
    order = np.lexsort((ids, keys))
    keys = keys[order]
    ids = ids[order]
    weights = weights[order]
    starts = np.flatnonzero(np.concatenate([[True], keys[1:] != keys[:-1]]))
    bin_keys = keys[starts]
    bin_weights = np.add.reduceat(weights, starts)
    bounds = np.concatenate([starts, [len(keys)]])
    element_ids = tuple(ids[bounds[i]:bounds[i + 1]] for i in range(len(starts)))
    return BinSequence(
        keys=bin_keys,
        weights=bin_weights,
        element_ids=element_ids,
        total_weight=float(np.sum(bin_weights)),
    )


# ---------------------------------------------------------------------------
# 1D split
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    n_parts: int
    cut_bins: np.ndarray        # (P-1,) int64, cut placed after these bin indices
    assignment: dict[int, int]  # element id -> subdomain in [1, P]
    subdomain_weights: np.ndarray  # (P,) float64

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return (
            self.n_parts == other.n_parts
            and np.array_equal(self.cut_bins, other.cut_bins)
            and np.array_equal(self.subdomain_weights, other.subdomain_weights)
            and self.assignment == other.assignment
        )


def _validate_coeffs(coeffs: np.ndarray, n_parts: int) -> np.ndarray:
    lam = np.asarray(coeffs, dtype=np.float64)
    if lam.shape != (n_parts,):
        raise ValueError(f"expected {n_parts} coefficients, got shape {lam.shape}")
    if (lam <= 0).any():
        raise ValueError("all correction coefficients must be > 0")
    if abs(lam.sum() - n_parts) > 1e-9 * n_parts:
        raise ValueError(f"coefficients must sum to {n_parts}, got {lam.sum()!r}")
    return lam


def split_1d(seq: BinSequence, n_parts: int, coeffs=None) -> Partition:
    """Cut the bin sequence so cumulative weights track cumulative targets.

    The target for part i is ``lambda_i * W / P``.  Cut i goes after the bin
    boundary whose weight prefix is closest to the running target (ties pick
    the earlier boundary); bins are atomic and every part keeps at least one.
    """
    if n_parts < 1:
        raise ValueError("n_parts must be >= 1")
    m = seq.n_bins
    if n_parts > m:
        raise ValueError(
            f"insufficient granularity: {n_parts} parts requested but only {m} bins"
        )
    lam = np.ones(n_parts) if coeffs is None else _validate_coeffs(coeffs, n_parts)

    prefix = np.cumsum(seq.weights)
    total = prefix[-1]
    targets = np.cumsum(lam)[:-1] * (total / n_parts)

    cuts = np.empty(n_parts - 1, dtype=np.int64)
    prev = -1
    for i, goal in enumerate(targets, start=1):
        lo = prev + 1
        hi = m - 1 - (n_parts - i)  # leave >= 1 bin for each remaining part
        j = int(np.searchsorted(prefix, goal))
        if j >= m:
            j = m - 1
        if j > 0 and abs(prefix[j - 1] - goal) <= abs(prefix[j] - goal):
            j -= 1
        j = min(max(j, lo), hi)
        cuts[i - 1] = j
        prev = j

    bounds = np.concatenate([[-1], cuts, [m - 1]])
    sub_weights = np.empty(n_parts)
    assignment: dict[int, int] = {}
    for s in range(n_parts):
        first, last = bounds[s] + 1, bounds[s + 1]
        left = prefix[bounds[s]] if bounds[s] >= 0 else 0.0
        sub_weights[s] = prefix[last] - left
        for b in range(first, last + 1):
            for eid in seq.element_ids[b]:
                assignment[int(eid)] = s + 1
    return Partition(
        n_parts=n_parts,
        cut_bins=cuts,
        assignment=assignment,
        subdomain_weights=sub_weights,
    )


# ---------------------------------------------------------------------------
# Chunked (parallel-contract) partitioning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChunkInfo:
    """Bookkeeping for one key-range chunk: its bins and exchanged prefix."""

    key_lo: int
    key_hi: int
    n_bins: int
    weight: float
    prefix_offset: float


def partition_chunked(
    mesh: Mesh,
    cfg: SfcConfig,
    n_parts: int,
    coeffs=None,
    n_chunks: int = 1,
) -> Partition:
    """Partition via contiguous key-range chunks; result is chunk-invariant.

    Each chunk bins only the elements whose keys fall in its range, then the
    chunk weights are exchanged as prefix offsets and the concatenated
    sequence is cut.  Because chunks are contiguous in key space, the merged
    sequence (and hence the partition) is identical for any chunk count.
    """
    if n_chunks < 1:
        raise ValueError("n_chunks must be >= 1")
    if mesh.n_elements == 0:
        raise ValueError("cannot partition an empty mesh")

    cells = quantize_cells(mesh, cfg)
    keys = hilbert_keys_batch(cells, cfg.level)
    ids = mesh.id_array()
    weights = mesh.weight_array()

    key_space = 1 << (3 * cfg.level)
    n_chunks = min(n_chunks, key_space)
    edges = [key_space * c // n_chunks for c in range(n_chunks + 1)]

    pieces: list[BinSequence] = []
    infos: list[ChunkInfo] = []
    offset = 0.0
    for c in range(n_chunks):
        lo, hi = edges[c], edges[c + 1]
        sel = (keys >= lo) & (keys < hi)
        if not sel.any():
            infos.append(ChunkInfo(lo, hi, 0, 0.0, offset))
            continue
        local = _group_bins(keys[sel], ids[sel], weights[sel])
        pieces.append(local)
        infos.append(ChunkInfo(lo, hi, local.n_bins, local.total_weight, offset))
        offset += local.total_weight

    merged = BinSequence(
        keys=np.concatenate([p.keys for p in pieces]),
        weights=np.concatenate([p.weights for p in pieces]),
        element_ids=tuple(e for p in pieces for e in p.element_ids),
        total_weight=float(np.sum(np.concatenate([p.weights for p in pieces]))),
    )
    return split_1d(merged, n_parts, coeffs)


# ---------------------------------------------------------------------------
# Partition export:
#   part 1 <P> <n_elements>
#   <element_id> <subdomain>
# plus a JSON sidecar with the cut positions and subdomain weights.
# ---------------------------------------------------------------------------


def store_partition(part: Partition, path: str | Path) -> None:
    lines = [f"part 1 {part.n_parts} {len(part.assignment)}"]
    for eid in sorted(part.assignment):
        lines.append(f"{eid} {part.assignment[eid]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {
        "cut_bins": [int(c) for c in part.cut_bins],
        "subdomain_weights": [float(w) for w in part.subdomain_weights],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar), encoding="utf-8")


def load_partition(path: str | Path) -> Partition:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split()
    if len(header) != 4 or header[0] != "part" or header[1] != "1":
        raise ValueError(f"{path}:1: bad partition header {lines[0]!r}")
    n_parts, n_elem = int(header[2]), int(header[3])
    assignment: dict[int, int] = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        eid, sub = ln.split()
        assignment[int(eid)] = int(sub)
    if len(assignment) != n_elem:
        raise ValueError(f"{path}: expected {n_elem} assignments, got {len(assignment)}")
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    return Partition(
        n_parts=n_parts,
        cut_bins=np.array(sidecar["cut_bins"], dtype=np.int64),
        assignment=assignment,
        subdomain_weights=np.array(sidecar["subdomain_weights"], dtype=np.float64),
    )
