"""Exact two-round distributed SIR.

Round 1 pools response ranges and shard means so every worker slices on the
same grid and centers at the same global mean. Round 2 ships per-slice sums
and raw scatter; from those the master rebuilds the full-sample SIR kernel and
covariance exactly, for any partition of the rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import (
    _warn_rank,
    Dataset,
    Method,
    Mode,
    SdrEstimate,
    SliceSpec,
    inverse_psd,
    make_slice_grid,
    slice_statistics,
    top_k_eigen,
    unit_columns,
)
from ..errors import DimensionMismatch, DuplicateWorker, EmptyShard, SingularCovariance
from .messages import Broadcast1, Round1Msg, Round2Msg


def sorted_by_worker(msgs):
    msgs = sorted(msgs, key=lambda m: m.worker_id)
    if not msgs:
        raise ValueError("no messages to aggregate")
    ids = [m.worker_id for m in msgs]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise DuplicateWorker(f"duplicate worker ids {sorted(dup)}")
    return msgs


def edsir_worker_round1(shard: Dataset, worker_id: int = 0) -> Round1Msg:
    if shard.n < 1:
        raise EmptyShard(f"worker {worker_id} has no rows")
    return Round1Msg(worker_id, shard.n, float(shard.y.min()), float(shard.y.max()), shard.x.mean(axis=0))


def edsir_master_round1(msgs, H: int) -> Broadcast1:
    msgs = sorted_by_worker(msgs)
    p = msgs[0].p
    if any(m.p != p for m in msgs):
        raise DimensionMismatch("round-1 messages disagree on p")
    n = sum(m.n_s for m in msgs)
    xbar = sum((m.n_s / n) * m.xbar for m in msgs)
    spec = make_slice_grid(min(m.y_min for m in msgs), max(m.y_max for m in msgs), H)
    return Broadcast1(spec.grid, xbar)


def edsir_worker_round2(shard: Dataset, b: Broadcast1, worker_id: int = 0) -> Round2Msg:
    if shard.n < 1:
        raise EmptyShard(f"worker {worker_id} has no rows")
    if b.xbar.size != shard.p:
        raise DimensionMismatch(f"broadcast mean has length {b.xbar.size}, shard has p={shard.p}")
    stats = slice_statistics(shard, b.xbar, SliceSpec(b.grid))
    return Round2Msg(worker_id, shard.n, stats.counts, stats.sums, stats.scatter)


@dataclass(frozen=True)
class PooledSir:
    n: int
    counts: np.ndarray
    sums: np.ndarray
    kernel: np.ndarray
    sigma: np.ndarray


def edsir_pool(msgs) -> PooledSir:
    """Rebuild the full-sample slice statistics, SIR kernel and covariance."""
    msgs = sorted_by_worker(msgs)
    p, H = msgs[0].p, msgs[0].H
    if any(m.p != p or m.H != H for m in msgs):
        raise DimensionMismatch("round-2 messages disagree on p or H")
    for m in msgs:
        if int(m.counts.sum()) != m.n_s:
            raise DimensionMismatch(f"worker {m.worker_id}: slice counts do not sum to n_s")
    n = sum(m.n_s for m in msgs)
    if n < 2:
        raise SingularCovariance("need at least two observations in total")
    counts = sum(m.counts.astype(np.int64) for m in msgs)
    sums = sum(m.sums for m in msgs)
    scatter = sum(m.scatter for m in msgs)
    full = counts > 0
    s = sums[full]
    kernel = (s * (1.0 / (n * counts[full]))[:, None]).T @ s
    kernel = (kernel + kernel.T) / 2
    return PooledSir(n, counts, sums, kernel, scatter / (n - 1))


def edsir_finalize(msgs, K: int) -> SdrEstimate:
    pooled = edsir_pool(msgs)
    p = pooled.sigma.shape[0]
    if not 1 <= K <= p:
        raise ValueError(f"K must be in [1, {p}], got {K}")
    _warn_rank(K, pooled.counts.size)
    eig = top_k_eigen(pooled.kernel, K)
    beta = inverse_psd(pooled.sigma) @ eig.vectors
    params = {"H": int(pooled.counts.size), "K": K, "S": len(msgs), "partition": None, "slicing": "width"}
    return SdrEstimate(unit_columns(beta), eig.values, Method.SIR, Mode.EXACT_DISTRIBUTED, params)
