import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn, orthonormal, rel, tucker_tensor
from transcomp import restorations as rs
from transcomp.decompositions import (
    HTuckerFormat,
    TTFormat,
    TuckerFormat,
    htucker_decompose,
    reconstruct,
    tt_decompose,
    tucker_decompose,
)
from transcomp.tensor_core import ShapeError, mode_product


def _noisy_lowrank(rng, shape, ranks, noise=1e-4):
    return tucker_tensor(rng, shape, ranks) + noise * crandn(rng, *shape)


def _random_tucker4d(rng, shape, ranks):
    return TuckerFormat(crandn(rng, *ranks),
                        tuple(crandn(rng, n, r) for n, r in zip(shape, ranks)), 1e-6)


def _random_tt4d(rng, shape, ranks):
    n1, n2, n3, n4 = shape
    r1, r2, r3 = ranks
    return TTFormat(crandn(rng, n1, r1),
                    (crandn(rng, r1, n2, r2), crandn(rng, r2, n3, r3)),
                    crandn(rng, n4, r3), 1e-6)


def _random_htucker(rng, shape, ranks):
    r1, r2, r3, r4, r12, r34 = ranks
    return HTuckerFormat(tuple(crandn(rng, n, r) for n, r in zip(shape, ranks[:4])),
                         crandn(rng, r1, r2, r12), crandn(rng, r3, r4, r34),
                         crandn(rng, r12, r34), 1e-6)


# -- Tucker-3D ------------------------------------------------------------------

def test_tucker3d_round_trip_within_gamma(rng):
    t = _noisy_lowrank(rng, (8, 9, 10), (3, 3, 4))
    for gamma in (1e-3, 1e-6):
        f = tucker_decompose(t, gamma)
        assert rel(t, rs.restore_tucker3d(f)) <= gamma


def test_tucker3d_identity_factors_bit_exact(rng):
    t = crandn(rng, 3, 4, 5)
    f = TuckerFormat(t, tuple(np.eye(n) for n in t.shape), 0.5)
    np.testing.assert_array_equal(rs.restore_tucker3d(f), t)


def test_tucker3d_rank_one_triple_loop(rng):
    a, b, c = (orthonormal(rng, n, 1) for n in (3, 4, 2))
    f = TuckerFormat(np.full((1, 1, 1), 2.0 + 0j), (a, b, c), 0.5)
    out = rs.restore_tucker3d(f)
    for i in range(3):
        for j in range(4):
            for k in range(2):
                assert out[i, j, k] == pytest.approx(2 * a[i, 0] * b[j, 0] * c[k, 0], rel=1e-14)


def test_tucker3d_matches_mode_products(rng):
    f = TuckerFormat(crandn(rng, 2, 3, 4), (crandn(rng, 5, 2), crandn(rng, 6, 3), crandn(rng, 7, 4)), 0.1)
    ref = f.core
    for i, u in enumerate(f.factors):
        ref = mode_product(ref, u, i)
    assert rel(ref, rs.restore_tucker3d(f)) < 1e-13


def test_tucker3d_rejects_mismatch(rng):
    f = TuckerFormat(crandn(rng, 2, 2, 2), (crandn(rng, 3, 2), crandn(rng, 3, 3), crandn(rng, 3, 2)), 0.1)
    with pytest.raises(ShapeError):
        rs.restore_tucker3d(f)
    with pytest.raises(ShapeError):
        rs.restore_tucker3d(_random_tucker4d(rng, (2, 2, 2, 2), (1, 1, 1, 1)))


# -- slice vs dense oracle ------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from(["tucker4d", "tt4d", "htucker"]),
    st.lists(st.integers(1, 8), min_size=4, max_size=4),
    st.lists(st.integers(1, 4), min_size=6, max_size=6),
    st.integers(0, 2**31 - 1),
)
def test_slice_equals_dense_reconstruction(kind, shape, ranks, seed):
    rng = np.random.default_rng(seed)
    if kind == "tucker4d":
        f = _random_tucker4d(rng, shape, ranks[:4])
    elif kind == "tt4d":
        f = _random_tt4d(rng, shape, ranks[:3])
    else:
        f = _random_htucker(rng, shape, ranks)
    dense = reconstruct(f)
    ws = rs.RestorationWorkspace()
    for p in range(shape[3]):
        s = rs.restore_slice(f, p, ws)
        assert rel(dense[..., p], s) <= 1e-12


@pytest.mark.parametrize("fn", [tucker_decompose, tt_decompose, htucker_decompose])
def test_decomposed_slices_match_original(rng, fn):
    t = _noisy_lowrank(rng, (6, 7, 5, 9), (2, 3, 2, 4))
    f = fn(t, 1e-6)
    ws = rs.RestorationWorkspace()
    for p in range(9):
        assert rel(t[..., p], rs.restore_slice(f, p, ws)) <= 1e-5


def test_tucker4d_single_direction(rng):
    f3 = TuckerFormat(crandn(rng, 2, 3, 2), (crandn(rng, 4, 2), crandn(rng, 5, 3), crandn(rng, 3, 2)), 0.1)
    f4 = TuckerFormat(f3.core[..., None], f3.factors + (np.ones((1, 1), complex),), 0.1)
    np.testing.assert_allclose(rs.restore_tucker4d_slice(f4, 0), rs.restore_tucker3d(f3), rtol=1e-14)


def test_htucker_separable_chain(rng):
    vs = [crandn(rng, n, 1) for n in (3, 4, 2, 2)]
    c12, c34, root = 1.5 + 0j, -2.0 + 1j, 0.5j
    f = HTuckerFormat(tuple(vs), np.full((1, 1, 1), c12), np.full((1, 1, 1), c34),
                      np.full((1, 1), root), 0.1)
    for p in range(2):
        ref = c12 * root * c34 * vs[3][p, 0] * np.einsum("i,j,k->ijk", vs[0][:, 0], vs[1][:, 0], vs[2][:, 0])
        np.testing.assert_allclose(rs.restore_htucker_slice(f, p), ref, rtol=1e-14)


# -- TT ---------------------------------------------------------------------------

def test_tt3d_rank_one_outer_product(rng):
    a, b, c = crandn(rng, 3, 1), crandn(rng, 4), crandn(rng, 5, 1)
    f = TTFormat(a, (b.reshape(1, 4, 1),), c, 0.1)
    np.testing.assert_allclose(rs.restore_tt3d(f), np.einsum("i,j,k->ijk", a[:, 0], b, c[:, 0]), rtol=1e-14)


def test_tt3d_round_trip(rng):
    t = _noisy_lowrank(rng, (7, 8, 6), (3, 2, 3))
    f = tt_decompose(t, 1e-6)
    assert rel(t, rs.restore_tt3d(f)) <= 1e-6


def test_tt3d_matches_mode_product_evaluation(rng):
    t = crandn(rng, 3, 3, 3)
    f = tt_decompose(t, 1e-12)
    # Eq.-style evaluation: core x_1 U1 x_3 U3
    ref = mode_product(mode_product(f.cores[0], f.head_factor, 0), f.tail_factor, 2)
    assert rel(ref, rs.restore_tt3d(f)) < 1e-13
    assert rel(t, rs.restore_tt3d(f)) < 1e-13


def test_tt3d_rejects_4d(rng):
    with pytest.raises(ShapeError):
        rs.restore_tt3d(_random_tt4d(rng, (2, 2, 2, 2), (1, 1, 1)))


def test_tt4d_single_direction(rng):
    f = _random_tt4d(rng, (3, 4, 5, 1), (2, 3, 2))
    tail = np.einsum("akb,b->ka", f.cores[1], f.tail_factor[0])
    contracted = TTFormat(f.head_factor, (f.cores[0],), tail, 0.1)
    np.testing.assert_allclose(rs.restore_tt4d_slice(f, 0), rs.restore_tt3d(contracted), rtol=1e-13)


def test_tt4d_select_then_multiply(rng):
    f = _random_tt4d(rng, (3, 4, 5, 6), (2, 3, 2))
    ws = rs.RestorationWorkspace()
    rs.restore_tt4d_slice(f, 0, ws)
    core = f.cores[1]
    full = core.reshape(-1, core.shape[2], order="F") @ f.tail_factor.T
    for p in range(6):
        np.testing.assert_allclose(ws.tail_columns[:, p], full[:, p], rtol=1e-14)


def test_tt4d_cache_bit_identical_and_invalidated(rng):
    f = _random_tt4d(rng, (3, 4, 5, 6), (2, 3, 2))
    g = _random_tt4d(rng, (3, 4, 5, 6), (2, 3, 2))
    ws = rs.RestorationWorkspace()
    cached = [rs.restore_tt4d_slice(f, p, ws) for p in range(6)]
    fresh = [rs.restore_tt4d_slice(f, p, rs.RestorationWorkspace()) for p in range(6)]
    for a, b in zip(cached, fresh):
        np.testing.assert_array_equal(a, b)
    # switching format rebuilds the cache
    np.testing.assert_array_equal(rs.restore_tt4d_slice(g, 2, ws), rs.restore_tt4d_slice(g, 2))
    ws.invalidate()
    assert ws.head is None and ws.tail_columns is None


# -- workspace accounting and determinism ----------------------------------------

@pytest.mark.parametrize("fn", [tucker_decompose, tt_decompose, htucker_decompose])
def test_peak_intermediate_bound(rng, fn):
    shape = (8, 8, 8, 6)
    t = _noisy_lowrank(rng, shape, (3, 3, 3, 3), noise=1e-3)
    f = fn(t, 1e-6)
    ws = rs.RestorationWorkspace()
    for p in range(shape[3]):
        rs.restore_slice(f, p, ws)
    r = max(f.ranks)
    assert 0 < ws.peak_elements <= shape[0] * shape[1] * max(r, shape[2])


def test_peak_bound_3d(rng):
    t = _noisy_lowrank(rng, (9, 8, 7), (3, 3, 3))
    for fn in (tucker_decompose, tt_decompose):
        f = fn(t, 1e-6)
        ws = rs.RestorationWorkspace()
        rs.restore_slice(f, ws=ws)
        assert ws.peak_elements <= 9 * 8 * max(max(f.ranks), 7)


def test_restoration_deterministic(rng):
    f = _random_htucker(rng, (4, 5, 3, 6), (2, 2, 3, 2, 3, 2))
    np.testing.assert_array_equal(rs.restore_slice(f, 3), rs.restore_slice(f, 3))


@pytest.mark.parametrize("p", [-1, 6])
def test_direction_out_of_range(rng, p):
    for f in (_random_tucker4d(rng, (2, 2, 2, 6), (1, 1, 1, 1)),
              _random_tt4d(rng, (2, 2, 2, 6), (1, 1, 1)),
              _random_htucker(rng, (2, 2, 2, 6), (1,) * 6)):
        with pytest.raises(IndexError):
            rs.restore_slice(f, p)


def test_restore_slice_rejects_unknown():
    with pytest.raises(TypeError):
        rs.restore_slice(object())
