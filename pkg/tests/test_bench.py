import numpy as np
import pytest

from oracles import random_nonchordal
from sparsecov.bench import (
    CORRUPTION,
    favorable_lambda,
    fit_slope,
    gen_banded,
    gen_graph_case,
    graph_run,
    lambda_for_edges,
    scaling_run,
    stream,
)
from sparsecov.exceptions import InputError
from sparsecov.sparse_sym import build_pattern
from sparsecov.threshold import threshold_covariance


def test_streams_are_distinct_and_reproducible():
    a = stream(3, 1 << 63).random(4)
    b = stream(3, (1 << 63) + 1).random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, stream(3, 1 << 63).random(4))


def test_banded_structure():
    C = gen_banded(200, bandwidth=21, seed=1)
    D = C.to_dense()
    assert np.all(np.diag(D) == 5.0)
    i, j = np.nonzero(np.tril(D, -1))
    assert np.all(i - j <= 10)
    off = D[i, j]
    assert np.all((off >= -2.0) & (off < 0.0))
    assert C.pattern.n_offdiag == i.size


def test_banded_scale():
    C = gen_banded(50, bandwidth=5, seed=2, offdiag_scale=0.05)
    off = C.values[C.pattern.offdiag_mask]
    assert np.all((off >= -0.1) & (off < 0.0))


def test_banded_corruption_rate():
    n, h = 5000, 50
    C = gen_banded(n, bandwidth=2 * h + 1, seed=4)
    slots = sum(min(h, n - 1 - j) for j in range(n - 1))
    rate = 1 - C.pattern.n_offdiag / slots
    assert abs(rate - CORRUPTION) <= 0.02


def test_banded_deterministic():
    a = gen_banded(300, 11, seed=9)
    b = gen_banded(300, 11, seed=9)
    c = gen_banded(300, 11, seed=10)
    assert a.pattern == b.pattern and np.array_equal(a.values, b.values)
    assert not (a.pattern == c.pattern and np.array_equal(a.values, c.values))


def test_banded_rejects_bad_arguments():
    with pytest.raises(InputError):
        gen_banded(10, bandwidth=4)
    with pytest.raises(InputError):
        gen_banded(10, bandwidth=11)
    with pytest.raises(InputError):
        gen_banded(10, bandwidth=3, offdiag_scale=0.0)


def test_graph_case_precision():
    G = random_nonchordal(40, np.random.default_rng(0), extra=0.1)
    X, K = gen_graph_case(G, N=50, seed=1)
    D = K.to_dense()
    off = D - np.diag(np.diag(D))
    surplus = np.diag(D) - np.abs(off).sum(axis=1)
    assert np.allclose(surplus, 1.0, atol=1e-12)
    v = K.values[G.offdiag_mask]
    assert np.all(np.abs(v) <= 1.0)
    zero = np.count_nonzero(v == 0) / v.size
    assert 0.1 < zero < 0.5
    assert K.pattern == G


def test_graph_case_sample_covariance():
    G = build_pattern(10, [(i, i + 1) for i in range(9)] + [(0, 9)])
    X, K = gen_graph_case(G, N=50_000, seed=2)
    Sigma = np.linalg.inv(K.to_dense())
    emp = X.covariance()
    assert np.abs(emp - Sigma).max() <= 0.05 * np.abs(Sigma).max()


def test_graph_case_sparse_and_dense_sampling_agree():
    G = random_nonchordal(30, np.random.default_rng(3), extra=0.1)
    a, _ = gen_graph_case(G, N=20, seed=4)
    b, _ = gen_graph_case(G, N=20, seed=4, dense_limit=0)
    assert np.allclose(a.data, b.data, rtol=1e-10, atol=1e-12)


def test_lambda_for_edges_counts():
    G = random_nonchordal(25, np.random.default_rng(5), extra=0.1)
    X, _ = gen_graph_case(G, N=100, seed=5)
    for k in (5, 20, 40):
        lam = lambda_for_edges(X, k, block_size=7)
        C, rep = threshold_covariance(X, lam, return_report=True)
        assert rep.kept == k and rep.ties == 0
    with pytest.raises(InputError):
        lambda_for_edges(X, 0)


def test_favorable_lambda_passes_conditions():
    from sparsecov.pipeline import theorem1_check

    G = random_nonchordal(20, np.random.default_rng(6), extra=0.1)
    X, _ = gen_graph_case(G, N=300, seed=6)
    lam, k = favorable_lambda(X, G.n_offdiag)
    t = theorem1_check(X.covariance(), lam)
    assert k <= G.n_offdiag
    assert (t.pd_ok and t.sign_ok) or k == 1


def test_fit_slope():
    n = np.array([10, 100, 1000])
    assert fit_slope(n, 3 * n**1.5) == pytest.approx(1.5)
    assert np.isnan(fit_slope([10], [1.0]))


def test_small_scaling_run():
    rep = scaling_run(sizes=(200, 400), bandwidth=11, seed=1)
    assert rep.sizes == [200, 400] and not rep.errors
    assert max(rep.gaps) <= 1e-9 and max(rep.feas) <= 1e-7
    assert np.isfinite(rep.slope)
    txt = rep.to_text()
    assert "slope=" in txt and "cg_ratio=" in txt
    with pytest.raises(InputError):
        scaling_run(sizes=(400, 200))


def test_infeasible_scale_is_recorded():
    rep = scaling_run(sizes=(300,), bandwidth=21, seed=1, offdiag_scale=1.0)
    assert 300 in rep.errors and rep.sizes == []


def test_graph_run():
    G = random_nonchordal(30, np.random.default_rng(7), extra=0.05)
    r = graph_run(G, N=400, seed=7, k=10)
    assert r.kept_edges == 10
    assert 0 <= r.true_positive <= r.kept_edges
    assert "true_positive=" in r.to_text()
