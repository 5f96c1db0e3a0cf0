import numpy as np
import pytest

from dsdr.core import Method, fit_global
from dsdr.errors import EmptyShard, InsufficientDimension
from dsdr.metrics import trace_correlation
from dsdr.simgen import (
    PartitionScheme,
    gen_dataset,
    gen_predictors,
    gen_response,
    partition,
    predictor_cov,
    predictor_mean,
    rng_for,
    structural_dimension,
    true_basis,
)


def test_standard_mean_bound():
    n = 20_000
    x = gen_predictors("standard", n, 5, seed=1)
    assert np.all(np.abs(x.mean(axis=0)) <= 4 / np.sqrt(n))


def test_dependent_covariance():
    x = gen_predictors("dependent", 100_000, 4, seed=2)
    c = np.cov(x, rowvar=False)
    assert abs(c[0, 1] - 0.5) <= 0.05
    assert abs(c[0, 0] - 0.8) <= 0.05
    assert abs(c[0, 2] - 0.25) <= 0.05


@pytest.mark.parametrize("p", [1, 2, 10, 100, 500])
def test_dependent_covariance_is_positive_definite(p):
    cov = predictor_cov("dependent", p)
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > 0


def test_hetero_mean_pattern():
    assert list(predictor_mean("hetero", 7)) == [1, 2, 3, 4, 5, 1, 2]
    x = gen_predictors("hetero", 50_000, 7, seed=3)
    assert np.allclose(x.mean(axis=0), [1, 2, 3, 4, 5, 1, 2], atol=0.05)


def test_reproducible_and_stream_independent():
    a = gen_dataset(6, "dependent", 300, 8, seed=9)
    b = gen_dataset(6, "dependent", 300, 8, seed=9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c = gen_dataset(6, "dependent", 300, 8, seed=10)
    assert not np.array_equal(a.x, c.x)
    assert not np.array_equal(rng_for(1, 0).standard_normal(3), rng_for(1, 1).standard_normal(3))


def test_response_examples():
    def row(*vals, p=6):
        x = np.zeros((1, p))
        x[0, : len(vals)] = vals
        return x

    assert gen_response(1, row(1), sigma=0)[0] == 1
    assert gen_response(4, row(1, 1), sigma=0)[0] == pytest.approx(8)
    assert gen_response(3, row(1, -1.5), sigma=0)[0] == pytest.approx(2)
    assert gen_response(5, row(1, 1), sigma=0)[0] == pytest.approx(9)
    assert gen_response(2, row(1, 1, 0, 0), sigma=0)[0] == pytest.approx(3)
    assert gen_response(6, row(1, 0, 0, 0, 0, 1), sigma=0)[0] == pytest.approx(0.4 + 2)
    assert gen_response(7, row(0, 0, 0, 0, 0, 4 / 3), sigma=0)[0] == pytest.approx(0.3 * np.sin(1))
    assert gen_response(8, row(1), sigma=0)[0] == pytest.approx(0.4 + 3 * np.sin(0.25))


def test_model7_noise_is_multiplicative():
    x = np.zeros((2000, 6))
    x[:, 0] = 2.0
    y = gen_response(7, x, sigma=0.5, seed=1)
    assert np.std(y) == pytest.approx(5 * 0.5, rel=0.1)


def test_minimum_dimension():
    with pytest.raises(InsufficientDimension):
        gen_response(6, np.zeros((3, 5)))
    with pytest.raises(InsufficientDimension):
        true_basis(1, 3)
    gen_response(3, np.zeros((3, 2)))


def test_true_basis():
    b = true_basis(1, 10)
    assert np.allclose(b[:, 0], [0.5] * 4 + [0] * 6)
    assert np.array_equal(true_basis(3, 5), np.eye(5)[:, :2])
    for m in range(1, 9):
        b = true_basis(m, 12)
        assert b.shape == (12, structural_dimension(m))
        assert np.allclose(np.linalg.norm(b, axis=0), 1)
        assert np.linalg.matrix_rank(b) == b.shape[1]
    b = true_basis(7, 6)
    assert np.allclose(b[:, 1] * np.sqrt(11), [1, 0, 0, 0, 1, 3])


def test_true_basis_spans_the_signal():
    # moving x orthogonally to the basis leaves the noise-free response unchanged
    rng = np.random.default_rng(4)
    for m in range(1, 9):
        b = true_basis(m, 8)
        x = rng.standard_normal((50, 8))
        q, _ = np.linalg.qr(np.hstack([b, rng.standard_normal((8, 8 - b.shape[1]))]))
        move = rng.standard_normal((50, 8 - b.shape[1])) @ q[:, b.shape[1]:].T
        assert np.allclose(gen_response(m, x, 0.0), gen_response(m, x + move, 0.0))


def test_noise_free_sanity_anchor():
    data = gen_dataset(1, "standard", 20_000, 10, seed=5, sigma=0.0)
    est = fit_global(data, Method.SIR, 10, 1)
    assert trace_correlation(true_basis(1, 10), est.beta) >= 0.999


def test_partition_sizes():
    data = gen_dataset(1, "standard", 1000, 5, seed=1)
    assert [s.n for s in partition(data, PartitionScheme("homo-equal", 5), 1)] == [200] * 5
    assert [s.n for s in partition(data, PartitionScheme("hetero-unequal", 5), 1)] == [50, 300, 100, 400, 150]
    assert PartitionScheme("homo-equal", 3).sizes(11) == [4, 4, 3]
    with pytest.raises(EmptyShard):
        PartitionScheme("homo-equal", 5).sizes(4)
    with pytest.raises(ValueError):
        PartitionScheme("hetero-unequal", 3)
    with pytest.raises(ValueError):
        PartitionScheme("hetero-unequal", 2, (0.5, 0.6))


def test_hetero_partition_is_sorted_descending():
    data = gen_dataset(2, "standard", 997, 5, seed=2)
    shards = partition(data, PartitionScheme("hetero-equal", 4), 0)
    for a, b in zip(shards, shards[1:]):
        assert a.y.min() >= b.y.max()


@pytest.mark.parametrize("kind", ["homo-equal", "hetero-equal", "hetero-unequal"])
def test_partition_conserves_rows(kind):
    data = gen_dataset(3, "hetero", 503, 4, seed=3)
    shards = partition(data, PartitionScheme(kind, 5), 7)
    rows = np.vstack([np.column_stack([s.y, s.x]) for s in shards])
    orig = np.column_stack([data.y, data.x])
    key = lambda a: a[np.lexsort(a.T[::-1])]
    assert np.array_equal(key(rows), key(orig))


def test_homogeneous_partition_depends_on_seed():
    data = gen_dataset(1, "standard", 100, 4, seed=1)
    a = partition(data, PartitionScheme("homo-equal", 2), 1)
    b = partition(data, PartitionScheme("homo-equal", 2), 1)
    c = partition(data, PartitionScheme("homo-equal", 2), 2)
    assert np.array_equal(a[0].y, b[0].y) and not np.array_equal(a[0].y, c[0].y)
