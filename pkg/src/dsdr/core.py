"""Single-machine numerical core: slicing, SIR/SAVE/DR kernels, eigen solver, whitening.

Everything here is a pure function of its inputs. Arrays stored on the
dataclasses are copied and frozen (``writeable = False``) so values can be
shared across threads and handed to the protocol layer without defensive
copies.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    ConvergenceFailure,
    DegenerateRange,
    DimensionMismatch,
    InvalidSliceCount,
    NonSymmetric,
    NotStandardized,
    OutOfRange,
    SingularCovariance,
)

#: relative asymmetry tolerated by :func:`top_k_eigen`
SYMMETRY_RTOL = 1e-10
#: ``lambda_min <= SINGULAR_RTOL * lambda_max`` counts as singular
SINGULAR_RTOL = 1e-12
#: default ridge, as a fraction of the mean eigenvalue
RIDGE_SCALE = 1e-8
#: eigenvalues below ``-PSD_RTOL * trace`` mean the input is not PSD
PSD_RTOL = 1e-10


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class Method(str, enum.Enum):
    SIR = "sir"
    SAVE = "save"
    DR = "dr"


class Scale(str, enum.Enum):
    CENTERED_X = "centered_x"
    STANDARDIZED_Z = "standardized_z"


class Mode(str, enum.Enum):
    GLOBAL = "global"
    EXACT_DISTRIBUTED = "exact"
    APPROX_DISTRIBUTED = "approx"


@dataclass(frozen=True)
class Dataset:
    """An ``n x p`` predictor matrix with its length-``n`` response."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or y.ndim != 1:
            raise DimensionMismatch(f"expected x 2-D and y 1-D, got {x.shape} and {y.shape}")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise DimensionMismatch(f"empty dataset {x.shape}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.x[rows], self.y[rows])


@dataclass(frozen=True)
class SliceSpec:
    """Ascending grid ``g_0 < ... < g_H``; slice ``h`` is ``(g_{h-1}, g_h]``, slice 1 also holds ``g_0``."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 3:
            raise InvalidSliceCount(f"need at least 2 slices, got grid of size {grid.size}")
        if not np.all(np.diff(grid) > 0):
            raise DegenerateRange("grid points must be strictly ascending")
        object.__setattr__(self, "grid", _frozen(grid))

    @property
    def H(self) -> int:
        return self.grid.size - 1


@dataclass(frozen=True)
class KernelMatrix:
    v: np.ndarray
    method: Method
    scale: Scale

    def __post_init__(self):
        object.__setattr__(self, "v", _frozen(self.v))


@dataclass(frozen=True)
class EigenPair:
    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "vectors", _frozen(self.vectors))


@dataclass(frozen=True)
class SdrEstimate:
    """Estimated directions (columns of ``beta``) with their spectrum and provenance."""

    beta: np.ndarray
    eigenvalues: np.ndarray
    method: Method
    mode: Mode
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen(self.beta))
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))

    @property
    def K(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class SliceStats:
    counts: np.ndarray
    sums: np.ndarray
    scatter: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", _frozen(self.counts, dtype=np.int64))
        object.__setattr__(self, "sums", _frozen(self.sums))
        object.__setattr__(self, "scatter", _frozen(self.scatter))


# --------------------------------------------------------------------------
# slicing


def make_slice_grid(y_min: float, y_max: float, H: int) -> SliceSpec:
    """Equal-width grid of ``H`` slices over ``[y_min, y_max]``."""
    if H < 2:
        raise InvalidSliceCount(f"H must be >= 2, got {H}")
    y_min, y_max = float(y_min), float(y_max)
    if not y_min < y_max:
        raise DegenerateRange(f"empty response range [{y_min}, {y_max}]")
    width = (y_max - y_min) / H
    grid = y_min + np.arange(H + 1) * width
    # endpoints pinned so the extreme responses always fall inside the grid
    grid[0], grid[-1] = y_min, y_max
    return SliceSpec(grid)


def quantile_slice_grid(y, H: int) -> SliceSpec:
    """Equal-count grid: interior points at the empirical ``h/H`` quantiles of ``y``.

    Repeated quantiles (heavy ties) are merged, so the result may have fewer
    than ``H`` slices.
    """
    if H < 2:
        raise InvalidSliceCount(f"H must be >= 2, got {H}")
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0 or not y.min() < y.max():
        raise DegenerateRange("response is constant; nothing to slice")
    grid = np.quantile(y, np.linspace(0.0, 1.0, H + 1))
    grid[0], grid[-1] = y.min(), y.max()
    grid = np.unique(grid)
    if grid.size < 3:
        raise DegenerateRange("fewer than two distinct quantile slices")
    return SliceSpec(grid)


class Slicing(str, enum.Enum):
    WIDTH = "width"
    QUANTILE = "quantile"


def default_slicing(method) -> Slicing:
    """SIR slices by equal width (required for the exact distributed path); SAVE and DR by equal count."""
    return Slicing.WIDTH if Method(method) is Method.SIR else Slicing.QUANTILE


def slice_grid_for(y, H: int, slicing=Slicing.WIDTH) -> SliceSpec:
    y = np.asarray(y, dtype=np.float64)
    if Slicing(slicing) is Slicing.QUANTILE:
        return quantile_slice_grid(y, H)
    return make_slice_grid(y.min(), y.max(), H)


def slice_indices(y, spec: SliceSpec) -> np.ndarray:
    """Zero-based slice index of every response; raises OutOfRange outside the grid."""
    y = np.asarray(y, dtype=np.float64)
    g = spec.grid
    bad = (y < g[0]) | (y > g[-1])
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise OutOfRange(f"response {y[first]!r} (index {first}) outside [{g[0]}, {g[-1]}]")
    idx = np.searchsorted(g, y, side="left") - 1
    return np.maximum(idx, 0)


def assign_slice(y: float, spec: SliceSpec) -> int:
    """One-based slice number of a single response."""
    return int(slice_indices(np.array([y]), spec)[0]) + 1


def slice_statistics(data: Dataset, center, spec: SliceSpec) -> SliceStats:
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (data.p,):
        raise DimensionMismatch(f"center has shape {center.shape}, expected ({data.p},)")
    idx = slice_indices(data.y, spec)
    u = data.x - center
    counts = np.bincount(idx, minlength=spec.H)
    onehot = np.zeros((spec.H, data.n))
    onehot[idx, np.arange(data.n)] = 1.0
    return SliceStats(counts, onehot @ u, u.T @ u)


# --------------------------------------------------------------------------
# kernels


def sir_kernel(stats: SliceStats, n: int) -> KernelMatrix:
    """Weighted variance of slice means, ``sum_h p_h m_h m_h^T``."""
    if n < 1:
        raise ValueError("n must be positive")
    full = stats.counts > 0
    s = stats.sums[full]
    w = 1.0 / (n * stats.counts[full])
    v = (s * w[:, None]).T @ s
    return KernelMatrix(_symmetrize(v), Method.SIR, Scale.CENTERED_X)


def _slice_moments(z: np.ndarray, idx: np.ndarray, H: int):
    """Per-slice counts, means and raw second moments ``E(zz^T | h)``."""
    p = z.shape[1]
    counts = np.bincount(idx, minlength=H)
    means = np.zeros((H, p))
    second = np.zeros((H, p, p))
    order = np.argsort(idx, kind="stable")
    bounds = np.concatenate(([0], np.cumsum(counts)))
    for h in range(H):
        if counts[h] == 0:
            continue
        zh = z[order[bounds[h]:bounds[h + 1]]]
        means[h] = zh.mean(axis=0)
        second[h] = zh.T @ zh / counts[h]
    return counts, means, second


def save_kernel(data: Dataset, center, spec: SliceSpec, sigma, *, standardized: bool = True) -> KernelMatrix:
    """SAVE kernel ``sum_h p_h (var(X) - var(X | h))^2``.

    With ``standardized`` (the default) the predictors are first mapped to
    ``Z = (X - center) W`` with ``W = sigma^{-1/2}``, so ``var(X)`` becomes the
    identity and the result lives on the Z scale. ``standardized=False``
    evaluates the raw-X form with ``sigma`` in place of ``var(X)``.
    Per-slice covariances use divisor ``n_h``; single-point slices get zero.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    p = data.p
    if sigma.shape != (p, p):
        raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected ({p}, {p})")
    idx = slice_indices(data.y, spec)
    if standardized:
        z = (data.x - center) @ inverse_sqrt(sigma)
        ref = np.eye(p)
        scale = Scale.STANDARDIZED_Z
    else:
        z = data.x - center
        ref = sigma
        scale = Scale.CENTERED_X
    counts, means, second = _slice_moments(z, idx, spec.H)
    v = np.zeros((p, p))
    for h in np.flatnonzero(counts):
        cov_h = second[h] - np.outer(means[h], means[h])
        d = ref - cov_h
        v += (counts[h] / data.n) * (d @ d)
    return KernelMatrix(_symmetrize(v), Method.SAVE, scale)


def dr_kernel(z, spec: SliceSpec, yvals, *, check: bool = True) -> KernelMatrix:
    """Directional-regression kernel on standardized predictors ``z``.

    ``check=False`` skips the standardization guard; the protocol layer uses
    it when ``z`` is deliberately centered at a mean other than its own.
    """
    z = np.asarray(z, dtype=np.float64)
    n, p = z.shape
    if check:
        if n < 2:
            raise NotStandardized("need at least two rows to check standardization")
        mean = z.mean(axis=0)
        cov = np.cov(z, rowvar=False).reshape(p, p)
        if np.max(np.abs(mean)) > 1e-6 or np.linalg.norm(cov - np.eye(p)) > 1e-3:
            raise NotStandardized("z must have zero mean and identity covariance")
    idx = slice_indices(yvals, spec)
    counts, means, second = _slice_moments(z, idx, spec.H)
    w = counts / n
    term1 = np.zeros((p, p))
    for h in np.flatnonzero(counts):
        term1 += w[h] * (second[h] @ second[h])
    mean_outer = (means * w[:, None]).T @ means
    mean_inner = float(np.sum(w * np.einsum("hi,hi->h", means, means)))
    v = 2 * term1 + 2 * mean_outer @ mean_outer + 2 * mean_inner * mean_outer - 2 * np.eye(p)
    return KernelMatrix(_symmetrize(v), Method.DR, Scale.STANDARDIZED_Z)


# --------------------------------------------------------------------------
# linear algebra


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry (lowest index on ties) is positive."""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def top_k_eigen(m, k: int) -> EigenPair:
    """Leading ``k`` eigenpairs of a symmetric matrix, descending, canonical signs."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {m.shape}")
    p = m.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"k must be in [1, {p}], got {k}")
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise NonSymmetric("matrix is not symmetric within tolerance")
    try:
        values, vectors = np.linalg.eigh(_symmetrize(m))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(-values, kind="stable")[:k]
    return EigenPair(values[order], canonical_signs(vectors[:, order]))


def _psd_spectrum(sigma, ridge):
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {sigma.shape}")
    lam, q = np.linalg.eigh(_symmetrize(sigma))
    trace = float(np.sum(lam))
    if lam[0] < -PSD_RTOL * abs(trace):
        raise SingularCovariance(f"matrix is not positive semidefinite (min eigenvalue {lam[0]:.3g})")
    lam = np.clip(lam, 0.0, None)
    singular = lam[0] <= SINGULAR_RTOL * lam[-1] or lam[-1] <= 0
    if ridge is None:
        ridge = RIDGE_SCALE * trace / sigma.shape[0] if singular else 0.0
    if ridge == 0 and singular:
        raise SingularCovariance(f"covariance is numerically singular (eigenvalues {lam[0]:.3g} .. {lam[-1]:.3g})")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if lam[-1] + ridge <= 0:
        raise SingularCovariance("covariance is identically zero")
    return lam + ridge, q


def inverse_sqrt(sigma, ridge: float | None = None) -> np.ndarray:
    """``Q diag((lambda + ridge)^{-1/2}) Q^T``.

    ``ridge=None`` applies the default ridge only when ``sigma`` is
    numerically singular; ``ridge=0`` refuses singular input.
    """
    lam, q = _psd_spectrum(sigma, ridge)
    return _symmetrize((q / np.sqrt(lam)) @ q.T)


def inverse_psd(sigma, ridge: float | None = None) -> np.ndarray:
    """Inverse under the same ridge convention as :func:`inverse_sqrt`."""
    lam, q = _psd_spectrum(sigma, ridge)
    return _symmetrize((q / lam) @ q.T)


def sample_covariance(x, center=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise SingularCovariance("need at least two observations for a covariance")
    c = x.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    u = x - c
    return u.T @ u / (x.shape[0] - 1)


@dataclass(frozen=True)
class Whitened:
    z: np.ndarray
    mean: np.ndarray
    w: np.ndarray


def whiten(data: Dataset, ridge: float | None = None) -> Whitened:
    """Center at the sample mean and map by ``W = cov^{-1/2}``."""
    if data.n < 2:
        raise SingularCovariance("whitening needs at least two observations")
    mean = data.x.mean(axis=0)
    w = inverse_sqrt(sample_covariance(data.x, mean), ridge)
    return Whitened((data.x - mean) @ w, mean, w)


def unit_columns(b: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(b, axis=0)
    norms[norms == 0] = 1.0
    return canonical_signs(b / norms)


# --------------------------------------------------------------------------
# global estimators


def _warn_rank(K: int, H: int):
    if K > H - 1:
        warnings.warn(f"K={K} exceeds the SIR rank bound H-1={H - 1}; trailing directions are arbitrary",
                      RuntimeWarning, stacklevel=3)


def fit_global(data: Dataset, method, H: int, K: int, slicing=None) -> SdrEstimate:
    """Full-sample SIR, SAVE or DR.

    SIR follows the classical recipe on centered X (``beta = Sigma^{-1} eta``);
    SAVE and DR solve the whitened eigenproblem and map back by ``W``.
    ``slicing=None`` picks :func:`default_slicing` for the method.
    """
    method = Method(method)
    slicing = default_slicing(method) if slicing is None else Slicing(slicing)
    if not 1 <= K <= data.p:
        raise ValueError(f"K must be in [1, {data.p}], got {K}")
    if data.n <= data.p:
        warnings.warn(f"n={data.n} does not exceed p={data.p}; estimates will be unstable", RuntimeWarning)
    spec = slice_grid_for(data.y, H, slicing)
    params = {"H": H, "K": K, "S": 1, "partition": None, "slicing": slicing.value}

    if method is Method.SIR:
        _warn_rank(K, spec.H)
        mean = data.x.mean(axis=0)
        stats = slice_statistics(data, mean, spec)
        kernel = sir_kernel(stats, data.n)
        eig = top_k_eigen(kernel.v, K)
        sigma = stats.scatter / (data.n - 1)
        beta = inverse_psd(sigma) @ eig.vectors
    else:
        wh = whiten(data)
        if method is Method.SAVE:
            # sigma = I on the z scale, so the kernel is evaluated directly on z
            kernel = save_kernel(Dataset(wh.z, data.y), np.zeros(data.p), spec, np.eye(data.p))
        else:
            kernel = dr_kernel(wh.z, spec, data.y)
        eig = top_k_eigen(kernel.v, K)
        beta = wh.w @ eig.vectors
    return SdrEstimate(unit_columns(beta), eig.values, method, Mode.GLOBAL, params)
