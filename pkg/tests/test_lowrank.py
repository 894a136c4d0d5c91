import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from oracles import brute_force_rank_cost
from tlmri.errors import ParameterError
from tlmri.lowrank import _shrink_batch, _shrink_batch_gram, lowrank_groups, lowrank_summary, rank_shrink
from tlmri.patches import PatchGeometry, block_match, extract_patches, gather_groups, group_coverage
from tlmri.phantom import shepp_logan


def test_diagonal_example():
    D, r = rank_shrink(np.diag([5.0, 2.0, 0.5]), 1.0)
    np.testing.assert_allclose(D, np.diag([5.0, 2.0, 0.0]), atol=1e-12)
    assert r == 2


def test_extreme_thresholds(rng):
    Y = crandn(rng, 4, 6)
    D, r = rank_shrink(Y, 0.0)
    np.testing.assert_allclose(D, Y, atol=1e-12)
    assert r == 4
    D, r = rank_shrink(Y, np.linalg.norm(Y, 2) * 1.001)
    assert r == 0 and not D.any()
    with pytest.raises(ParameterError):
        rank_shrink(Y, -0.1)


def test_tie_is_kept():
    D, r = rank_shrink(np.diag([2.0, 1.0]), 1.0)
    assert r == 2


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), theta=st.floats(0, 4))
def test_rank_shrink_properties(seed, theta):
    Y = crandn(np.random.default_rng(seed), 5, 7)
    D, r = rank_shrink(Y, theta)
    val = np.linalg.norm(Y - D) ** 2 + theta**2 * r
    assert val == pytest.approx(brute_force_rank_cost(Y, theta), abs=1e-10)
    assert np.linalg.matrix_rank(D, tol=1e-9) == r
    assert np.linalg.norm(D) <= np.linalg.norm(Y) + 1e-12
    D2, r2 = rank_shrink(D, theta)
    np.testing.assert_allclose(D2, D, atol=1e-10)
    assert r2 == r


def test_gram_route_matches_svd(rng):
    Y = crandn(rng, 10, 16, 6)
    a = _shrink_batch(Y, 2.0)
    b = _shrink_batch_gram(Y, 2.0)
    np.testing.assert_allclose(a[0], b[0], atol=1e-9)
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_allclose(a[2], b[2], rtol=1e-9)


def _groups(img, M=4, radius=2):
    geom = PatchGeometry(2)
    X = extract_patches(img, geom)
    return geom, X, block_match(X, geom, img.shape, M, radius)


def test_constant_image_groups_are_rank_one():
    img = np.full((8, 8), 0.4 + 0j)
    geom, X, bm = _groups(img)
    _, ranks = lowrank_groups(X, bm, 0.1)
    assert np.all(ranks == 1)
    _, ranks = lowrank_groups(X, bm, 10.0)
    assert np.all(ranks == 0)


def test_zero_threshold_returns_groups(rng):
    img = crandn(rng, 8, 8)
    geom, X, bm = _groups(img)
    D, ranks = lowrank_groups(X, bm, 0.0)
    np.testing.assert_allclose(D, gather_groups(X, bm.groups), atol=1e-12)
    assert np.all(ranks == 4)


def test_summary_residual_matches_direct_sum():
    img = shepp_logan(16) + 0.05j
    geom = PatchGeometry(3)
    X = extract_patches(img, geom)
    bm = block_match(X, geom, img.shape, 5, 3)
    theta = 0.3
    D, ranks = lowrank_groups(X, bm, theta)
    for method in ("svd", "gram"):
        summary = lowrank_summary(X, bm, geom, img.shape, theta, chunk=37, method=method)
        cov = group_coverage(bm.groups, geom, img.shape, bm.M)
        direct = np.sum(np.abs(gather_groups(X, bm.groups) - D) ** 2)
        assert summary.residual(img, cov) == pytest.approx(direct, rel=1e-9, abs=1e-9)
        assert summary.value == pytest.approx(direct + theta**2 * ranks.sum(), rel=1e-9)
        assert summary.total_rank == ranks.sum()
