"""One-shot approximate distributed SIR/SAVE/DR.

Each worker eigendecomposes a local kernel and ships its leading eigenpairs;
the master rebuilds low-rank approximations, averages them with weights
``n_s / n`` and takes the leading eigenvectors of the average.

Two flavours of local kernel:

* local standardization (no pre-round): the shard is whitened with its own
  covariance and the Z-scale kernel is mapped back as ``W V_z W``, so every
  worker reports a symmetric matrix whose column space estimates the central
  subspace in the original coordinates;
* broadcast standardization (after a round-1 exchange): the shard is centered
  at the global mean and sliced on the global grid, and the kernel is kept on
  the centered-X scale. The master can then map the average back with the
  pooled covariance if workers also sent their scatter.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..core import (
    Dataset,
    Method,
    Mode,
    SdrEstimate,
    SliceSpec,
    Slicing,
    _symmetrize,
    default_slicing,
    dr_kernel,
    inverse_sqrt,
    sample_covariance,
    save_kernel,
    sir_kernel,
    slice_grid_for,
    slice_statistics,
    top_k_eigen,
    unit_columns,
    whiten,
)
from ..errors import DimensionMismatch, EmptyShard
from .edsir import sorted_by_worker
from .messages import Broadcast1, EigenPayload, ScatterMsg


@dataclass(frozen=True)
class FixedK:
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")


@dataclass(frozen=True)
class VarianceThreshold:
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")


class Aggregation(str, enum.Enum):
    SPECTRUM = "spectrum"
    BASIS = "basis"


def choose_k(eigenvalues, rule) -> int:
    """Number of leading eigenpairs to keep under ``rule``.

    The variance threshold counts only the nonnegative part of the spectrum.
    """
    values = np.asarray(eigenvalues, dtype=np.float64)
    p = values.size
    if isinstance(rule, FixedK):
        return min(rule.K, p)
    pos = np.clip(values, 0.0, None)
    total = pos.sum()
    if total <= 0:
        return 1
    share = np.cumsum(np.sort(pos)[::-1]) / total
    # small slack so that an exact hit of alpha is not lost to rounding
    return int(min(np.searchsorted(share, rule.alpha - 1e-12) + 1, p))


def local_kernel(shard: Dataset, method, H: int, broadcast: Broadcast1 | None = None, slicing=None) -> np.ndarray:
    """The p x p matrix a worker eigendecomposes (see module docstring)."""
    method = Method(method)
    p = shard.p
    if broadcast is None:
        slicing = default_slicing(method) if slicing is None else Slicing(slicing)
        spec = slice_grid_for(shard.y, H, slicing)
        wh = whiten(shard)
        zdata = Dataset(wh.z, shard.y)
        if method is Method.SIR:
            v = sir_kernel(slice_statistics(zdata, np.zeros(p), spec), shard.n).v
        elif method is Method.SAVE:
            v = save_kernel(zdata, np.zeros(p), spec, np.eye(p)).v
        else:
            v = dr_kernel(wh.z, spec, shard.y).v
        return _symmetrize(wh.w @ v @ wh.w)

    if broadcast.xbar.size != p:
        raise DimensionMismatch(f"broadcast mean has length {broadcast.xbar.size}, shard has p={p}")
    spec = SliceSpec(broadcast.grid)
    center = broadcast.xbar
    if method is Method.SIR:
        return sir_kernel(slice_statistics(shard, center, spec), shard.n).v
    sigma_s = sample_covariance(shard.x) if shard.n > 1 else np.zeros((p, p))
    if method is Method.SAVE:
        return save_kernel(shard, center, spec, sigma_s, standardized=False).v
    w = inverse_sqrt(sigma_s)
    v = dr_kernel((shard.x - center) @ w, spec, shard.y, check=False).v
    root = np.linalg.inv(w)
    return _symmetrize(root @ v @ root)


def approx_local(shard: Dataset, method, H: int, krule, broadcast: Broadcast1 | None = None,
                 worker_id: int = 0, slicing=None) -> EigenPayload:
    if shard.n < 1:
        raise EmptyShard(f"worker {worker_id} has no rows")
    m = local_kernel(shard, method, H, broadcast, slicing)
    full = top_k_eigen(m, shard.p)
    k = choose_k(full.values, krule)
    return EigenPayload(worker_id, shard.n, Method(method), full.values[:k], full.vectors[:, :k])


def worker_scatter(shard: Dataset, broadcast: Broadcast1, worker_id: int = 0) -> ScatterMsg:
    u = shard.x - broadcast.xbar
    return ScatterMsg(worker_id, shard.n, u.T @ u)


def aggregate_payloads(payloads, aggregation=Aggregation.SPECTRUM) -> tuple[np.ndarray, int]:
    """``sum_s (n_s/n) V_s`` with ``V_s`` rebuilt from each payload."""
    payloads = sorted_by_worker(payloads)
    aggregation = Aggregation(aggregation)
    p = payloads[0].p
    if any(pl.p != p for pl in payloads):
        raise DimensionMismatch("eigen payloads disagree on p")
    if len({pl.method for pl in payloads}) != 1:
        raise DimensionMismatch("eigen payloads mix methods")
    n = sum(pl.n_s for pl in payloads)
    v = np.zeros((p, p))
    for pl in payloads:
        u = pl.eigenvectors
        weights = pl.eigenvalues if aggregation is Aggregation.SPECTRUM else np.full(pl.K, 1.0 / pl.K)
        v += (pl.n_s / n) * ((u * weights) @ u.T)
    return _symmetrize(v), n


def approx_master(payloads, kg_rule, aggregation=Aggregation.SPECTRUM, scatters=None) -> SdrEstimate:
    """Aggregate eigen payloads into final directions.

    With ``scatters`` (one per worker, about the broadcast global mean) the
    average is taken to the standardized scale with the pooled ``Sigma^{-1/2}``,
    eigendecomposed there and mapped back; otherwise the eigenvectors of the
    average are returned as they are.
    """
    v, n = aggregate_payloads(payloads, aggregation)
    method = payloads[0].method
    back = scatters is not None
    if back:
        scatters = sorted_by_worker(scatters)
        if {s.worker_id for s in scatters} != {pl.worker_id for pl in payloads}:
            raise DimensionMismatch("scatter messages do not match the eigen payload workers")
        w = inverse_sqrt(sum(s.scatter for s in scatters) / (n - 1))
        v = _symmetrize(w @ v @ w)
    full = top_k_eigen(v, v.shape[0])
    kg = choose_k(full.values, kg_rule)
    beta = full.vectors[:, :kg]
    if back:
        beta = w @ beta
    params = {
        "K": kg, "S": len(payloads), "aggregation": Aggregation(aggregation).value,
        "K_s": [int(pl.K) for pl in sorted_by_worker(payloads)], "back_transform": back,
    }
    return SdrEstimate(unit_columns(beta), full.values[:kg], method, Mode.APPROX_DISTRIBUTED, params)
