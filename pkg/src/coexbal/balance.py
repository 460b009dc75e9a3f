"""Iterative partition correction driven by per-rank timing feedback.

Each balancing iteration observes, for every splitting point of the 1D
partition, the pair (cumulative coefficient, normalized cumulative time).
A linear regression through those observations (anchored at the origin) is
cut with the perfect-balance line to propose the next coefficients; the
weighted variant discounts old observations so the fit tracks the most
recent behavior.  Splitting points converge independently because, on a
homogeneous machine, the mean time does not depend on the partition.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .mesh import Mesh
from .sfc import BinSequence, Partition, SfcConfig, project_to_bins, split_1d

log = logging.getLogger(__name__)

# Minimum cumulative-coefficient gap kept between consecutive splitting
# points: every subdomain retains at least 1% of the average load.
DELTA_MIN = 0.01

# Regression slopes at or below this are treated as unusable.
BETA_MIN = 1e-9

DEFAULT_WLR_GROWTH = 1.5


class Phase(Enum):
    ELEMENT_ASSEMBLY = "element_assembly"
    BOUNDARY_ASSEMBLY = "boundary_assembly"
    SOLVER = "solver"


class RegressionMode(Enum):
    SLR = "slr"
    WLR = "wlr"


@dataclass(frozen=True)
class TimingSample:
    iteration: int
    times: np.ndarray
    phase: Phase = Phase.ELEMENT_ASSEMBLY

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("times must be a non-empty 1D array")
        if (t <= 0).any():
            raise ValueError("all times must be > 0")

    @property
    def n_ranks(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class BalanceMetrics:
    mean: float
    imbalance: float          # max / mean, >= 1
    per_rank: np.ndarray      # t_k / mean
    deviations: np.ndarray    # |t_k - mean|
    lb: float                 # mean / max = 1 / imbalance

    @property
    def max_deviation(self) -> float:
        return float(self.deviations.max())


def compute_metrics(sample: TimingSample) -> BalanceMetrics:
    t = sample.times
    mean = float(t.sum() / len(t))
    tmax = float(t.max())
    return BalanceMetrics(
        mean=mean,
        imbalance=tmax / mean,
        per_rank=t / mean,
        deviations=np.abs(t - mean),
        lb=mean / tmax,
    )


# ---------------------------------------------------------------------------
# Correction state and regression
# ---------------------------------------------------------------------------

Observation = tuple[float, float]  # (cumulative coefficient, normalized cumulative time)


@dataclass(frozen=True)
class CorrectionState:
    n_parts: int
    lam: np.ndarray                                # (P,) current coefficients
    history: tuple[tuple[Observation, ...], ...]   # one series per splitting point
    mode: RegressionMode = RegressionMode.WLR
    wlr_growth: float = DEFAULT_WLR_GROWTH

    @classmethod
    def initial(
        cls,
        n_parts: int,
        mode: RegressionMode = RegressionMode.WLR,
        wlr_growth: float = DEFAULT_WLR_GROWTH,
    ) -> "CorrectionState":
        if n_parts < 1:
            raise ValueError("n_parts must be >= 1")
        return cls(
            n_parts=n_parts,
            lam=np.ones(n_parts),
            history=tuple(() for _ in range(n_parts - 1)),
            mode=mode,
            wlr_growth=wlr_growth,
        )

    def cumulative(self) -> np.ndarray:
        """Running coefficient sums, pinned to 0 and P at the ends."""
        cum = np.empty(self.n_parts + 1)
        cum[0] = 0.0
        cum[1:] = np.cumsum(self.lam)
        cum[-1] = float(self.n_parts)
        return cum


def observe(state: CorrectionState, sample: TimingSample) -> CorrectionState:
    """Append one (coefficient, normalized time) pair per splitting point."""
    if sample.n_ranks != state.n_parts:
        raise ValueError(
            f"sample has {sample.n_ranks} ranks, state expects {state.n_parts}"
        )
    mean = sample.times.sum() / state.n_parts
    upsilon = np.cumsum(sample.times)[: state.n_parts - 1] / mean
    cum = state.cumulative()
    history = tuple(
        state.history[i] + ((float(cum[i + 1]), float(upsilon[i])),)
        for i in range(state.n_parts - 1)
    )
    return CorrectionState(
        n_parts=state.n_parts,
        lam=state.lam,
        history=history,
        mode=state.mode,
        wlr_growth=state.wlr_growth,
    )


@dataclass(frozen=True)
class RegressionFit:
    alpha: float
    beta: float
    n_obs: int
    degenerate: bool = False


def fit(
    observations: tuple[Observation, ...],
    mode: RegressionMode = RegressionMode.WLR,
    wlr_growth: float = DEFAULT_WLR_GROWTH,
) -> RegressionFit:
    """Least-squares line through the origin anchor plus the observations.

    The anchor (0, 0) encodes that zero cumulative weight takes zero time
    and makes the fit well defined from the first observation on.  Under
    WLR, observation k carries weight ``wlr_growth**(k-1)``.
    """
    if len(observations) < 1:
        raise ValueError("need at least one observation")
    xs = np.array([0.0] + [o[0] for o in observations])
    ys = np.array([0.0] + [o[1] for o in observations])
    if mode is RegressionMode.WLR:
        w = np.array([1.0] + [wlr_growth**k for k in range(len(observations))])
    else:
        w = np.ones(len(xs))

    wsum = w.sum()
    xbar = (w * xs).sum() / wsum
    ybar = (w * ys).sum() / wsum
    sxx = (w * (xs - xbar) ** 2).sum()
    if sxx / wsum < 1e-12:
        return RegressionFit(alpha=ybar, beta=0.0, n_obs=len(observations), degenerate=True)
    beta = (w * (xs - xbar) * (ys - ybar)).sum() / sxx
    alpha = ybar - beta * xbar
    return RegressionFit(alpha=alpha, beta=beta, n_obs=len(observations))


def update_coefficients(state: CorrectionState) -> CorrectionState:
    """Move every splitting point to where its regression line crosses y=i.

    Proposals that cannot be trusted (flat or degenerate fit, non-finite
    crossing) keep their previous value.  A forward/backward clamp then
    restores strict monotonicity with a minimum gap so no subdomain starves.
    """
    p = state.n_parts
    cum = state.cumulative()
    proposed = cum.copy()
    for i in range(1, p):
        series = state.history[i - 1]
        if not series:
            raise ValueError(f"splitting point {i} has no observations")
        f = fit(series, state.mode, state.wlr_growth)
        if f.degenerate or f.beta <= BETA_MIN:
            log.debug("splitting point %d: unusable fit (beta=%g), keeping %g", i, f.beta, cum[i])
            continue
        candidate = (i - f.alpha) / f.beta
        if not math.isfinite(candidate):
            log.debug("splitting point %d: non-finite proposal, keeping %g", i, cum[i])
            continue
        proposed[i] = candidate

    for i in range(1, p):
        proposed[i] = max(proposed[i], proposed[i - 1] + DELTA_MIN)
    proposed[p] = float(p)
    for i in range(p - 1, 0, -1):
        proposed[i] = min(proposed[i], proposed[i + 1] - DELTA_MIN)

    lam = np.diff(proposed)
    return CorrectionState(
        n_parts=p,
        lam=lam,
        history=state.history,
        mode=state.mode,
        wlr_growth=state.wlr_growth,
    )


# ---------------------------------------------------------------------------
# Balancing loop
# ---------------------------------------------------------------------------

Timer = Callable[[Partition], TimingSample]


@dataclass(frozen=True)
class IterationRecord:
    k: int
    lam: np.ndarray
    times: np.ndarray
    metrics: BalanceMetrics
    partition: Partition


@dataclass(frozen=True)
class BalanceReport:
    n_parts: int
    mode: RegressionMode
    tol: float
    converged: bool
    iterations: tuple[IterationRecord, ...]

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    @property
    def final(self) -> IterationRecord:
        return self.iterations[-1]

    def to_json_dict(self, manifest: dict | None = None, final_partition_ref: str | None = None) -> dict:
        doc = {
            "iterations": [
                {
                    "k": rec.k,
                    "lambda": [float(v) for v in rec.lam],
                    "times": [float(v) for v in rec.times],
                    "imbalance": rec.metrics.imbalance,
                    "lb": rec.metrics.lb,
                    "max_dev": rec.metrics.max_deviation,
                }
                for rec in self.iterations
            ],
            "converged": self.converged,
            "final_partition_ref": final_partition_ref,
        }
        if manifest is not None:
            doc["manifest"] = manifest
        return doc

    def convergence_csv(self) -> str:
        """Flat per-rank table: k,rank,time,I_k."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "rank", "time", "I_k"])
        for rec in self.iterations:
            for rank in range(self.n_parts):
                writer.writerow(
                    [rec.k, rank + 1, repr(float(rec.times[rank])), repr(float(rec.metrics.per_rank[rank]))]
                )
        return buf.getvalue()


def run_balancing_loop(
    mesh: Mesh,
    cfg: SfcConfig,
    n_parts: int,
    timer: Timer,
    mode: RegressionMode = RegressionMode.WLR,
    tol: float = 0.02,
    max_iters: int = 20,
    wlr_growth: float = DEFAULT_WLR_GROWTH,
    bins: BinSequence | None = None,
) -> BalanceReport:
    """Partition, time, observe, and correct until imbalance reaches ``tol``.

    Iteration 1 always runs with unit coefficients.  The timer callback maps
    each candidate partition to a per-rank timing sample; the loop keys on
    those times only.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    seq = bins if bins is not None else project_to_bins(mesh, cfg)
    state = CorrectionState.initial(n_parts, mode=mode, wlr_growth=wlr_growth)
    records: list[IterationRecord] = []
    converged = False
    for k in range(1, max_iters + 1):
        part = split_1d(seq, n_parts, state.lam)
        sample = timer(part)
        sample = TimingSample(iteration=k, times=sample.times, phase=sample.phase)
        metrics = compute_metrics(sample)
        records.append(
            IterationRecord(k=k, lam=state.lam.copy(), times=sample.times, metrics=metrics, partition=part)
        )
        if metrics.imbalance - 1.0 <= tol:
            converged = True
            break
        if k == max_iters:
            break
        state = observe(state, sample)
        state = update_coefficients(state)
    return BalanceReport(
        n_parts=n_parts,
        mode=mode,
        tol=tol,
        converged=converged,
        iterations=tuple(records),
    )
