"""Subspace-recovery metrics and Monte-Carlo aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientRepetitions, RankDeficient, SingularCovariance

RANGE_SLACK = 1e-10
RANK_RTOL = 1e-10


def _clamp_unit(value: float, name: str) -> float:
    if not -RANGE_SLACK <= value <= 1 + RANGE_SLACK:
        raise ValueError(f"{name}={value!r} outside [0, 1] beyond tolerance")
    return min(max(value, 0.0), 1.0)


def _orth(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(f"matrix of shape {a.shape} is not of full column rank")
    return u


def trace_correlation(b_true, b_hat) -> float:
    """``Tr(P_B P_Bhat) / K``.

    When the column counts differ the divisor is the larger of the two, so an
    oversized estimate cannot score 1 by containing the truth.
    """
    qa, qb = _orth(b_true), _orth(b_hat)
    k = max(qa.shape[1], qb.shape[1])
    return _clamp_unit(float(np.sum((qa.T @ qb) ** 2)) / k, "trace correlation")


def r_squared(beta_hat, b_true, sigma) -> float:
    """Squared multiple correlation of one estimated direction with span(b_true) under ``sigma``."""
    beta_hat = np.asarray(beta_hat, dtype=np.float64).ravel()
    b = np.asarray(b_true, dtype=np.float64)
    if b.ndim == 1:
        b = b[:, None]
    sigma = np.asarray(sigma, dtype=np.float64)
    denom = float(beta_hat @ sigma @ beta_hat)
    if not denom > 0:
        raise SingularCovariance("beta_hat has zero variance under sigma")
    gram = b.T @ sigma @ b
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= RANK_RTOL * max(ev[-1], 0.0) or ev[-1] <= 0:
        raise RankDeficient("B^T sigma B is singular")
    c = b.T @ sigma @ beta_hat
    num = float(c @ np.linalg.solve(gram, c))
    return _clamp_unit(num / denom, "R^2")


def r_squared_columns(beta_hat, b_true, sigma) -> list[float]:
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    if beta_hat.ndim == 1:
        beta_hat = beta_hat[:, None]
    return [r_squared(beta_hat[:, j], b_true, sigma) for j in range(beta_hat.shape[1])]


def mean_r_squared(beta_hat, b_true, sigma) -> float:
    return float(np.mean(r_squared_columns(beta_hat, b_true, sigma)))


@dataclass(frozen=True)
class MetricRecord:
    rep: int
    trace_correlation: float
    r_squared: float
    wall_time_seconds: float
    bytes_up: int
    bytes_down: int


METRIC_FIELDS = ("trace_correlation", "r_squared", "wall_time_seconds", "bytes_up", "bytes_down")


def aggregate(records) -> dict[str, dict[str, float]]:
    """Per-field mean and sample standard deviation (divisor ``R - 1``)."""
    records = list(records)
    if len(records) < 2:
        raise InsufficientRepetitions(f"need at least 2 records for a standard deviation, got {len(records)}")
    out = {"mean": {}, "std": {}}
    for name in METRIC_FIELDS:
        vals = np.array([float(getattr(r, name)) for r in records])
        mean = math.fsum(vals) / vals.size
        out["mean"][name] = mean
        out["std"][name] = math.sqrt(math.fsum((vals - mean) ** 2) / (vals.size - 1))
    return out
