"""Simulation designs: predictor laws, response models 1-8, true bases, shard partitions.

Random streams come from Philox keyed by ``(seed, stream)``, so every
generation task is replayable on its own and independent of the others.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import Dataset, canonical_signs
from .errors import EmptyShard, InsufficientDimension

STREAM_PREDICTORS = 0
STREAM_NOISE = 1
STREAM_PARTITION = 2

DEFAULT_SIGMA = 0.5
DEFAULT_PROPORTIONS = (0.05, 0.30, 0.10, 0.40, 0.15)


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(stream)]))


class PredictorMode(str, enum.Enum):
    STANDARD = "standard"
    HETEROGENEOUS = "hetero"
    DEPENDENT = "dependent"


def predictor_mean(mode: PredictorMode, p: int) -> np.ndarray:
    if PredictorMode(mode) is PredictorMode.HETEROGENEOUS:
        return (np.arange(p) % 5 + 1).astype(np.float64)
    return np.zeros(p)


def predictor_cov(mode: PredictorMode, p: int) -> np.ndarray:
    if PredictorMode(mode) is PredictorMode.DEPENDENT:
        i = np.arange(p)
        cov = 0.5 ** np.abs(i[:, None] - i[None, :])
        np.fill_diagonal(cov, 0.8)
        return cov
    return np.eye(p)


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    lam, q = np.linalg.eigh(cov)
    return canonical_signs(q) * np.sqrt(lam)


def gen_predictors(mode, n: int, p: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. rows from the multivariate normal of the given mode."""
    mode = PredictorMode(mode)
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    e = rng_for(seed, STREAM_PREDICTORS).standard_normal((n, p))
    if mode is PredictorMode.DEPENDENT:
        e = e @ _cov_factor(predictor_cov(mode, p)).T
    return e + predictor_mean(mode, p)


_MIN_P = {1: 4, 2: 4, 3: 2, 4: 2, 5: 2, 6: 6, 7: 6, 8: 6}


def min_dimension(model_id: int) -> int:
    if model_id not in _MIN_P:
        raise ValueError(f"unknown model {model_id}; expected 1..8")
    return _MIN_P[model_id]


def _check_model(model_id: int, p: int):
    if model_id not in _MIN_P:
        raise ValueError(f"unknown model {model_id}; expected 1..8")
    if p < _MIN_P[model_id]:
        raise InsufficientDimension(f"model {model_id} needs p >= {_MIN_P[model_id]}, got {p}")


def gen_response(model_id: int, x, sigma: float = DEFAULT_SIGMA, seed: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_model(model_id, x.shape[1])
    eps = rng_for(seed, STREAM_NOISE).standard_normal(x.shape[0])
    x1, x2 = x[:, 0], x[:, 1]
    if model_id == 1:
        return x[:, :4].sum(axis=1) + sigma * eps
    if model_id == 2:
        return (x1 + x2) + np.exp(x[:, 2] + x[:, 3]) + sigma * eps
    if model_id == 3:
        return x1 / (0.5 + (x2 + 1.5) ** 2) + sigma * eps
    if model_id == 4:
        return (np.sqrt(2) * x1 + np.sqrt(2) * x2) ** 2 + sigma * eps
    if model_id == 5:
        return (x1 + x2 + 1) ** 2 + sigma * eps
    s3 = x1 + x2 + x[:, 2]
    t = x1 + x[:, 4] + 3 * x[:, 5]
    if model_id == 6:
        return 0.4 * s3**2 + np.sqrt(np.abs(t)) + sigma * eps
    if model_id == 7:
        return 0.3 * np.sin(t / 4) + (1 + s3**2) * sigma * eps
    return 0.4 * s3**2 + 3 * np.sin(t / 4) + sigma * eps


def true_basis(model_id: int, p: int) -> np.ndarray:
    """Columns span the central subspace of the model, zero-padded to length ``p``."""
    _check_model(model_id, p)
    b = np.zeros((p, 2))
    r2, r3, r11 = np.sqrt(2), np.sqrt(3), np.sqrt(11)
    if model_id == 1:
        b[:4, 0] = 0.5
        return b[:, :1]
    if model_id == 2:
        b[2:4, 0] = 1 / r2
        b[0:2, 1] = 1 / r2
        return b
    if model_id == 3:
        b[0, 0] = b[1, 1] = 1.0
        return b
    if model_id in (4, 5):
        b[:2, 0] = 1 / r2
        return b[:, :1]
    b[:3, 0] = 1 / r3
    b[[0, 4, 5], 1] = np.array([1, 1, 3]) / r11
    return b


def structural_dimension(model_id: int) -> int:
    return 1 if model_id in (1, 4, 5) else 2


def gen_dataset(model_id: int, mode, n: int, p: int, seed: int, sigma: float = DEFAULT_SIGMA) -> Dataset:
    x = gen_predictors(mode, n, p, seed)
    return Dataset(x, gen_response(model_id, x, sigma, seed))


class PartitionKind(str, enum.Enum):
    HOMO_EQUAL = "homo-equal"
    HETERO_EQUAL = "hetero-equal"
    HETERO_UNEQUAL = "hetero-unequal"


@dataclass(frozen=True)
class PartitionScheme:
    kind: PartitionKind
    S: int = 5
    proportions: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PartitionKind(self.kind))
        if self.S < 1:
            raise ValueError("S must be positive")
        if self.kind is PartitionKind.HETERO_UNEQUAL:
            props = self.proportions
            if props is None:
                if self.S != len(DEFAULT_PROPORTIONS):
                    raise ValueError(f"default proportions are for S=5; give {self.S} proportions explicitly")
                props = DEFAULT_PROPORTIONS
            props = tuple(float(q) for q in props)
            if len(props) != self.S or min(props) <= 0 or abs(sum(props) - 1) > 1e-9:
                raise ValueError(f"proportions must be {self.S} positive numbers summing to 1")
            object.__setattr__(self, "proportions", props)

    def sizes(self, n: int) -> list[int]:
        if n < self.S:
            raise EmptyShard(f"cannot split {n} rows over {self.S} shards")
        if self.kind is PartitionKind.HETERO_UNEQUAL:
            sizes = [int(round(q * n)) for q in self.proportions[:-1]]
            sizes.append(n - sum(sizes))
        else:
            base, extra = divmod(n, self.S)
            sizes = [base + (1 if s < extra else 0) for s in range(self.S)]
        if min(sizes) < 1:
            raise EmptyShard(f"shard sizes {sizes} include an empty shard")
        return sizes


def partition(data: Dataset, scheme: PartitionScheme, seed: int = 0) -> list[Dataset]:
    """Split ``data`` into ``scheme.S`` disjoint shards."""
    sizes = scheme.sizes(data.n)
    if scheme.kind is PartitionKind.HOMO_EQUAL:
        order = rng_for(seed, STREAM_PARTITION).permutation(data.n)
    else:
        order = np.argsort(-data.y, kind="stable")
    cuts = np.cumsum(sizes)[:-1]
    return [data.take(rows) for rows in np.split(order, cuts)]
