import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strokepaint.dt import (HARD, dt_exact, dt_kernel, dt_loss, dt_loss_grad, dt_matrix,
                            dt_matrix_vjp, extract_edges, sobel_xy, softmin)

values = st.lists(st.floats(-50, 50), min_size=1, max_size=12)


def test_kernel_examples():
    k = dt_kernel(3)
    s = math.sqrt(2)
    assert np.allclose(k.values, [[s, 1, s], [1, 0, 1], [s, 1, s]])
    assert k.d_max == pytest.approx(s)
    for K in (5, 11):
        k = dt_kernel(K)
        v = k.values
        assert v[K // 2, K // 2] == 0 and k.d_max == pytest.approx(math.sqrt(2) * (K // 2))
        assert np.array_equal(v, v.T) and np.array_equal(v, v[::-1]) and np.array_equal(v, v[:, ::-1])
    for bad in (2, 4, 1):
        with pytest.raises(ValueError):
            dt_kernel(bad)


def test_softmin_examples():
    assert softmin([2.5] * 4, 0.3) == 2.5
    assert softmin([1.0, 2.0], 0.3) == pytest.approx(1 + 1 / (1 + math.exp(10 / 3)), abs=1e-12)
    assert softmin([1.0, 2.0], 0.3) == pytest.approx(1.03444, abs=1e-5)
    assert abs(softmin([3.0, 3.5, 7.0], 0.01) - 3.0) < 1e-6
    with pytest.raises(ValueError):
        softmin([], 0.3)
    assert softmin([1e6, 2e6], 1e-3) == 1e6  # no overflow


@given(values, st.sampled_from([0.01, 0.1, 0.3, 1.0]))
def test_softmin_bounds_and_permutation(v, lam):
    s = softmin(v, lam)
    assert s >= min(v) - 1e-9 and s <= max(v) + 1e-9
    assert softmin(v[::-1], lam) == pytest.approx(s, abs=1e-9)


@given(values)
def test_softmin_monotone_in_temperature(v):
    seq = [softmin(v, t) for t in (1.0, 0.3, 0.1, 0.01)]
    assert all(b <= a + 1e-9 for a, b in zip(seq, seq[1:]))


def test_dt_matrix_constant_maps():
    k = dt_kernel(5)
    assert not dt_matrix(np.ones((9, 9)), k, HARD).any()
    assert np.all(dt_matrix(np.zeros((9, 9)), k, HARD) == k.d_max)


def test_dt_single_center_pixel():
    E = np.zeros((15, 15))
    E[7, 7] = 1
    k = dt_kernel(15)
    D = dt_matrix(E, k, HARD)
    yy, xx = np.mgrid[0:15, 0:15]
    assert np.allclose(D, np.hypot(yy - 7, xx - 7))
    assert np.allclose(D, np.minimum(dt_exact(E), k.d_max))


def test_dt_exact_examples():
    assert not dt_exact(np.ones((4, 4))).any()
    E = np.zeros((5, 5))
    E[2, 2] = 1
    ex = dt_exact(E)
    assert ex[0, 0] == pytest.approx(math.sqrt(8)) and ex[2, 4] == 2
    assert np.all(np.isinf(dt_exact(np.zeros((3, 3)))))
    E2 = np.zeros((9, 9))
    E2[3, 3] = 1
    E3 = np.roll(np.roll(E2, 2, 0), 1, 1)
    assert np.allclose(dt_exact(E3)[2:, 1:], dt_exact(E2)[:-2, :-1])


def test_dt_hard_vs_exact_random():
    rng = np.random.default_rng(0)
    for K in (3, 7, 11):
        k = dt_kernel(K)
        for _ in range(20):
            E = (rng.random((32, 32)) < 0.05).astype(float)
            D, ex = dt_matrix(E, k, HARD), dt_exact(E)
            assert np.all(D >= np.minimum(ex, k.d_max))
            assert np.all((D >= 0) & (D <= k.d_max))
            near = ex <= K // 2
            assert np.array_equal(D[near], ex[near])


def test_soft_hard_consistency():
    k = dt_kernel(5)
    E = np.zeros((12, 12))
    E[3, 3] = E[8, 9] = 1
    # candidate values are 0, 1, sqrt2, 2, ... and d_max: gaps exceed 0.4 only when
    # the two smallest differ by that much, which holds away from ties; compare there
    soft = dt_matrix(E, k, 0.01)
    hard = dt_matrix(E, k, HARD)
    assert np.abs(soft - hard).max() < 1e-3


def test_dt_loss_examples():
    k = dt_kernel(7)
    E = (np.random.default_rng(1).random((16, 16)) < 0.2).astype(float)
    assert dt_loss(np.maximum(E, np.eye(16)), E, k, HARD) == 0
    assert dt_loss(E, np.zeros((16, 16)), k, HARD) == 0
    Es, Eg = np.zeros((10, 10)), np.zeros((10, 10))
    Eg[5, 2] = 1
    Es[5, 5] = 1
    assert dt_loss(Es, Eg, k, HARD) == pytest.approx(3 / 100)
    assert dt_loss(Es, Eg, k, 0.3) >= 0
    with pytest.raises(ValueError):
        dt_loss(Es, np.zeros((9, 9)), k)


def test_dt_vjp_matches_finite_differences():
    rng = np.random.default_rng(2)
    k = dt_kernel(5)
    E = rng.random((9, 11))
    G = rng.random((9, 11))
    g = dt_matrix_vjp(E, k, 0.3, G)
    for _ in range(10):
        d = rng.standard_normal(E.shape)
        h = 1e-6
        fd = (np.sum(G * dt_matrix(E + h * d, k, 0.3)) - np.sum(G * dt_matrix(E - h * d, k, 0.3))) / (2 * h)
        assert np.sum(g * d) == pytest.approx(fd, rel=1e-5)
    Eg = (rng.random((9, 11)) < 0.3).astype(float)
    lg = dt_loss_grad(E, Eg, k, 0.3)
    d = rng.standard_normal(E.shape)
    fd = (dt_loss(E + 1e-6 * d, Eg, k) - dt_loss(E - 1e-6 * d, Eg, k)) / 2e-6
    assert np.sum(lg * d) == pytest.approx(fd, rel=1e-5)


def test_extract_edges():
    assert not extract_edges(np.full((8, 8, 3), 0.4)).any()
    img = np.zeros((10, 10, 3))
    img[:, 5:] = 1.0
    E = extract_edges(img)
    assert set(np.unique(E)) <= {0.0, 1.0}
    cols = np.nonzero(E.any(axis=0))[0]
    assert list(cols) == [4, 5] and E[:, 4].all() and E[:, 5].all()


def test_sobel_scaling():
    ramp = np.tile(np.arange(6.0), (5, 1))
    gx, gy = sobel_xy(ramp)
    assert np.allclose(gx[:, 1:-1], 1.0) and np.allclose(gy, 0)
