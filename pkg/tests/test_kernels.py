"""The numba kernels and their numpy twins must agree."""

import numpy as np
import pytest

from apenv import _kernels as K
from apenv.special import hyp0f1_table

pytestmark = pytest.mark.skipif(K.numba is None, reason="numba backend not active")


@pytest.fixture
def block():
    rng = np.random.default_rng(0)
    m0, p, n = 5, 7, 3000
    null_ratio = rng.exponential(size=(m0, p, n)).astype(np.float32)
    alt_mix = rng.exponential(size=(p, n)) * 3
    forced = np.full((p, n), -1, dtype=np.int8)
    forced[:, :100] = rng.integers(0, 2, size=(p, 100))
    lam = np.array([0.5, 0.0, 1.2, 0.3, 0.0])
    rows = np.array([0, 3, 6], dtype=np.int64)
    return null_ratio, lam, alt_mix, forced, rows


def test_reject_counts_agree(block):
    np.testing.assert_array_equal(K._reject_counts_nb(*block), K._reject_counts_np(*block))


def test_reject_stats_agree(block):
    c1, s1 = K._reject_stats_nb(*block)
    c2, s2 = K._reject_stats_np(*block)
    np.testing.assert_array_equal(c1, c2)
    np.testing.assert_allclose(s1, s2, rtol=1e-10)


def test_mixtures_agree():
    rng = np.random.default_rng(1)
    ratio = rng.exponential(size=(4, 6, 500)).astype(np.float32)
    w = np.array([0.1, 0.0, 0.6, 0.3])
    rows = np.arange(6, dtype=np.int64)
    np.testing.assert_allclose(K._mix_dense_nb(ratio, w, rows), K._mix_dense_np(ratio, w, rows), rtol=1e-12)
    U = rng.exponential(size=(500, 4))
    V = rng.exponential(size=(6, 4))
    scale = rng.exponential(size=(6, 500))
    want = np.array([scale[e] * sum(w[j] * V[e, j] * U[:, j] for j in range(4)) for e in rows])
    np.testing.assert_allclose(K.mix_factored(U, V, w, scale, rows), want, rtol=1e-12)


def test_iv_kernels_agree():
    tab = hyp0f1_table(2.5)
    rng = np.random.default_rng(2)
    qs, qt = rng.chisquare(5, 400) * 3, rng.chisquare(5, 400) * 3
    qst = rng.uniform(-1, 1, 400) * np.sqrt(qs * qt)
    c, d = np.array([0.5, -1.0, 0.0]), np.array([1.0, 0.8, 1.0])
    lam = np.array([10.0, 150.0, 0.0])
    args = (tab.step, tab.values, tab.derivs, tab.tail_coef, tab.lgamma_b, tab.b)
    a = K._iv_log_ratios_nb(qs, qst, qt, c, d, lam, *args)
    b = K._iv_log_ratios_np(qs, qst, qt, c, d, lam, *args)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_thread_cap_validation():
    with pytest.raises(ValueError):
        K.set_threads(0)
