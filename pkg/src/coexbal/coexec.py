"""Device throughput model, execution plans, and co-execution efficiency.

A desk-scale simulator stands in for a heterogeneous CPU/GPU cluster: each
parallel rank maps to a device profile with a throughput, an optional fixed
cost, an optional occupancy saturation term, and multiplicative lognormal
timing noise.  The closed-form efficiency model compares pure-core, pure-GPU,
and co-execution resource usage as a function of the GPU speedup s and the
GPU-per-core ratio r.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .balance import Phase, TimingSample
from .sfc import Partition


class DeviceClass(Enum):
    CPU_CORE = "cpu_core"
    GPU = "gpu"


@dataclass(frozen=True)
class DeviceProfile:
    id: str
    device_class: DeviceClass
    throughput: float              # weight units per second
    fixed_cost: float = 0.0        # seconds added per evaluation
    saturation_half: float = 0.0   # load at which throughput reaches theta/2; 0 = linear
    node_id: int = 0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.throughput > 0:
            raise ValueError(f"device {self.id}: throughput must be > 0")
        if self.fixed_cost < 0 or self.saturation_half < 0 or self.noise_sigma < 0:
            raise ValueError(f"device {self.id}: costs and noise must be >= 0")

    def effective_throughput(self, load: float) -> float:
        if self.saturation_half > 0:
            return self.throughput * load / (load + self.saturation_half)
        return self.throughput


@dataclass(frozen=True)
class ExecutionPlan:
    devices: tuple[DeviceProfile, ...]
    cores_per_gpu_rank: int = 2

    @property
    def n_ranks(self) -> int:
        return len(self.devices)

    def gpu_rank_indices(self) -> list[int]:
        return [i for i, d in enumerate(self.devices) if d.device_class is DeviceClass.GPU]

    def cpu_rank_indices(self) -> list[int]:
        return [i for i, d in enumerate(self.devices) if d.device_class is DeviceClass.CPU_CORE]


def simulate_times(
    partition: Partition,
    plan: ExecutionPlan,
    seed: int = 0,
    iteration: int = 0,
    phase: Phase = Phase.ELEMENT_ASSEMBLY,
) -> TimingSample:
    """Per-rank elapsed time for one evaluation of the partition.

    ``t_i = load_i / theta_eff(load_i) + fixed_cost``, scaled by a lognormal
    factor drawn from a counter-based stream keyed on (seed, iteration) and
    indexed by rank, so results do not depend on evaluation order.
    """
    if partition.n_parts != plan.n_ranks:
        raise ValueError(
            f"partition has {partition.n_parts} parts but plan has {plan.n_ranks} ranks"
        )
    loads = partition.subdomain_weights
    times = np.array(
        [
            loads[i] / dev.effective_throughput(float(loads[i])) + dev.fixed_cost
            for i, dev in enumerate(plan.devices)
        ]
    )
    sigmas = np.array([d.noise_sigma for d in plan.devices])
    if (sigmas > 0).any():
        bitgen = np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(iteration,)))
        g = np.random.Generator(bitgen).standard_normal(plan.n_ranks)
        times = times * np.exp(g * sigmas)
    return TimingSample(iteration=iteration, times=times, phase=phase)


def make_sim_timer(plan: ExecutionPlan, seed: int = 0):
    """Timer callback for the balancing loop; advances an iteration counter."""
    counter = itertools.count(1)

    def timer(partition: Partition) -> TimingSample:
        return simulate_times(partition, plan, seed=seed, iteration=next(counter))

    return timer


def simulate_solver_times(partition: Partition, plan: ExecutionPlan) -> TimingSample:
    """Solver-phase proxy: every rank's solve runs on a GPU of its node.

    CPU ranks are spread round-robin over their node's GPU ranks; the time
    reported by each rank is its GPU's summed load over the GPU throughput,
    which stays nearly constant while the assembly loads are rebalanced.
    """
    if partition.n_parts != plan.n_ranks:
        raise ValueError("partition / plan size mismatch")
    gpus_by_node: dict[int, list[int]] = {}
    for i in plan.gpu_rank_indices():
        gpus_by_node.setdefault(plan.devices[i].node_id, []).append(i)
    if not gpus_by_node:
        raise ValueError("plan has no GPU ranks to run the solver phase")

    loads = partition.subdomain_weights
    gpu_load = {i: 0.0 for idxs in gpus_by_node.values() for i in idxs}
    rank_gpu: dict[int, int] = {}
    counters = {node: 0 for node in gpus_by_node}
    for i, dev in enumerate(plan.devices):
        node = dev.node_id
        if node not in gpus_by_node:
            raise ValueError(f"node {node} has no GPU rank for the solver phase")
        if dev.device_class is DeviceClass.GPU:
            gpu = i
        else:
            idxs = gpus_by_node[node]
            gpu = idxs[counters[node] % len(idxs)]
            counters[node] += 1
        rank_gpu[i] = gpu
        gpu_load[gpu] += float(loads[i])

    times = np.array(
        [gpu_load[rank_gpu[i]] / plan.devices[rank_gpu[i]].throughput for i in range(plan.n_ranks)]
    )
    return TimingSample(iteration=0, times=times, phase=Phase.SOLVER)


# ---------------------------------------------------------------------------
# Plan construction and JSON config
# ---------------------------------------------------------------------------


def build_plan(
    n_nodes: int,
    cores_per_node: int,
    gpus_per_node: int,
    gpu_ranks_per_node: int,
    cores_per_gpu_rank: int,
    theta_core: float,
    theta_gpu: float,
    per_node_throughput_scale=None,
    noise_sigma: float = 0.0,
    saturation_half: float = 0.0,
    fixed_cost: float = 0.0,
) -> ExecutionPlan:
    """Uniform-node plan: CPU ranks first, then GPU ranks, per node.

    Each GPU rank idles ``cores_per_gpu_rank`` host cores, so a node carries
    ``cores_per_node - cores_per_gpu_rank * gpu_ranks_per_node`` CPU ranks.
    """
    if gpu_ranks_per_node > gpus_per_node:
        raise ValueError("gpu_ranks_per_node cannot exceed gpus_per_node")
    if cores_per_gpu_rank not in (1, 2):
        raise ValueError("cores_per_gpu_rank must be 1 or 2")
    cpu_ranks = cores_per_node - cores_per_gpu_rank * gpu_ranks_per_node
    if cpu_ranks < 0:
        raise ValueError(
            f"negative CPU rank count: {cores_per_node} cores cannot host "
            f"{gpu_ranks_per_node} GPU ranks at {cores_per_gpu_rank} cores each"
        )
    scale = [1.0] * n_nodes if per_node_throughput_scale is None else list(per_node_throughput_scale)
    if len(scale) != n_nodes:
        raise ValueError(f"expected {n_nodes} per-node scale factors, got {len(scale)}")

    devices: list[DeviceProfile] = []
    for node in range(n_nodes):
        for j in range(cpu_ranks):
            devices.append(
                DeviceProfile(
                    id=f"n{node}-core{j}",
                    device_class=DeviceClass.CPU_CORE,
                    throughput=theta_core * scale[node],
                    fixed_cost=fixed_cost,
                    saturation_half=saturation_half,
                    node_id=node,
                    noise_sigma=noise_sigma,
                )
            )
        for j in range(gpu_ranks_per_node):
            devices.append(
                DeviceProfile(
                    id=f"n{node}-gpu{j}",
                    device_class=DeviceClass.GPU,
                    throughput=theta_gpu * scale[node],
                    fixed_cost=fixed_cost,
                    saturation_half=saturation_half,
                    node_id=node,
                    noise_sigma=noise_sigma,
                )
            )
    return ExecutionPlan(devices=tuple(devices), cores_per_gpu_rank=cores_per_gpu_rank)


def load_plan(path: str | Path) -> ExecutionPlan:
    """Read a plan config: ``{"nodes": [{cores, gpus, gpu_ranks, ...}, ...]}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        nodes = doc["nodes"]
        if not nodes:
            raise ValueError("plan config needs at least one node")
        cpgr_values = {int(n.get("cores_per_gpu_rank", 2)) for n in nodes}
        if len(cpgr_values) != 1:
            raise ValueError("all nodes must agree on cores_per_gpu_rank")
        cores_per_gpu_rank = cpgr_values.pop()
        devices: list[DeviceProfile] = []
        for node_id, n in enumerate(nodes):
            sub = build_plan(
                n_nodes=1,
                cores_per_node=int(n["cores"]),
                gpus_per_node=int(n.get("gpus", 0)),
                gpu_ranks_per_node=int(n.get("gpu_ranks", 0)),
                cores_per_gpu_rank=cores_per_gpu_rank,
                theta_core=float(n["theta_core"]),
                theta_gpu=float(n.get("theta_gpu", n["theta_core"])),
                per_node_throughput_scale=[float(n.get("scale", 1.0))],
                noise_sigma=float(n.get("noise_sigma", 0.0)),
                saturation_half=float(n.get("saturation_half", 0.0)),
                fixed_cost=float(n.get("fixed_cost", 0.0)),
            )
            for d in sub.devices:
                devices.append(
                    DeviceProfile(
                        id=f"n{node_id}-{d.id.split('-', 1)[1]}",
                        device_class=d.device_class,
                        throughput=d.throughput,
                        fixed_cost=d.fixed_cost,
                        saturation_half=d.saturation_half,
                        node_id=node_id,
                        noise_sigma=d.noise_sigma,
                    )
                )
        return ExecutionPlan(devices=tuple(devices), cores_per_gpu_rank=cores_per_gpu_rank)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed plan config: {exc}") from None


# ---------------------------------------------------------------------------
# Closed-form efficiency model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EfficiencyParams:
    """GPU speedup s (in single-core equivalents) and ratio r = n_gpu/n_core."""

    speedup: float
    ratio: float
    n_core: int | None = None
    n_gpu: int | None = None

    def __post_init__(self):
        if not self.speedup > 0:
            raise ValueError("speedup must be > 0")
        if self.ratio < 0:
            raise ValueError("ratio must be >= 0")

    @classmethod
    def from_counts(cls, n_core: int, n_gpu: int, speedup: float) -> "EfficiencyParams":
        if n_core < 1 or n_gpu < 0:
            raise ValueError("need n_core >= 1 and n_gpu >= 0")
        return cls(speedup=speedup, ratio=n_gpu / n_core, n_core=n_core, n_gpu=n_gpu)


def eff_gpu(p: EfficiencyParams) -> float:
    """Resource efficiency when only the GPUs compute."""
    sr = p.speedup * p.ratio
    return sr / (1.0 + sr)


def eff_core(p: EfficiencyParams) -> float:
    """Resource efficiency when only the CPU cores compute."""
    return 1.0 / (1.0 + p.speedup * p.ratio)


def eff_coex1(p: EfficiencyParams) -> float:
    """Co-execution efficiency with one host core idled per GPU rank."""
    return (1.0 + (p.speedup - 1.0) * p.ratio) / (1.0 + p.speedup * p.ratio)


def eff_coex2(p: EfficiencyParams) -> float:
    """Co-execution efficiency with two host cores idled per GPU rank."""
    if p.speedup < 2.0:
        warnings.warn(
            f"eff_coex2 evaluated at speedup {p.speedup} < 2: co-execution "
            "wastes more core capacity than the GPUs add",
            stacklevel=2,
        )
    return (1.0 + (p.speedup - 2.0) * p.ratio) / (1.0 + p.speedup * p.ratio)


def predicted_time_reduction(p: EfficiencyParams, cores_per_gpu: int = 2) -> float:
    """Relative elapsed-time gain of co-execution over the pure-GPU run.

    Computing time is inversely proportional to efficiency, so the reduction
    is ``1 - eff_gpu / eff_coex``.
    """
    if cores_per_gpu not in (1, 2):
        raise ValueError("cores_per_gpu must be 1 or 2")
    coex = eff_coex1(p) if cores_per_gpu == 1 else eff_coex2(p)
    if coex <= 0:
        raise ValueError(f"co-execution efficiency {coex} is not positive")
    return 1.0 - eff_gpu(p) / coex
