import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdlnet.analysis import embedding_discrepancy, kappa_norm, rank_sweep, theorem_bound
from kdlnet.data import Dataset
from kdlnet.errors import ShapeError
from kdlnet.net import fnn_to_kdl, init_network, kp_shapes, predict

SMALL = [("4|6|1", "(2,2)|(3,2)|(1,1)"), ("6|9|4|2", "(2,3)|(3,3)|(2,2)|(2,1)")]


def rearranged_sigma(W, s):
    """Singular values of the Kronecker rearrangement, computed independently."""
    R = np.empty((s.m1 * s.n1, s.m2 * s.n2))
    for j in range(s.n1):
        for i in range(s.m1):
            block = W[i * s.m2 : (i + 1) * s.m2, j * s.n2 : (j + 1) * s.n2]
            R[j * s.m1 + i] = block.flatten(order="F")
    return np.linalg.svd(R, compute_uv=False)


def random_fnn(arch, seed, phi="tanh", bias_scale=0.5):
    net = init_network(arch, phi, seed=seed)
    r = np.random.default_rng(seed + 1000)
    for layer in net.layers:
        layer.b[:] = bias_scale * r.standard_normal(layer.b.shape)
    return net


def planted_fnn(arch, shapes, rank, seed, phi="tanh"):
    """Dense net whose every weight is a sum of ``rank`` Kronecker products."""
    net = init_network(arch, phi, seed=seed)
    r = np.random.default_rng(seed)
    for layer, s in zip(net.layers, kp_shapes(shapes)):
        W = sum(np.kron(r.standard_normal((s.m1, s.n1)), r.standard_normal((s.m2, s.n2))) for _ in range(rank))
        layer.W[:] = W / np.sqrt(layer.W.size)
        layer.b[:] = 0.1 * r.standard_normal(layer.b.shape)
    return net


def test_kappa_examples(rng):
    net = fnn_to_kdl(init_network("4|4", seed=0), "(2,2)|(2,2)", 1)
    layer = net.layers[0]
    layer.W_L[:] = 0
    assert kappa_norm(layer) == 0.0
    layer.W_L[0] = np.eye(2)
    layer.W_R[0] = np.eye(2)
    assert abs(kappa_norm(layer) - 2.0) < 1e-15


def test_kappa_random_transcription(rng):
    net = init_network("(3,2)|^3(2,4)", seed=3)
    layer = net.layers[0]
    want = 0.0
    for q in range(3):
        want += np.sqrt((layer.W_L[q] ** 2).sum()) * np.sqrt((layer.W_R[q] ** 2).sum())
    assert abs(kappa_norm(layer) - want) < 1e-14
    theta = np.concatenate([layer.W_L.ravel(), layer.W_R.ravel()])
    assert kappa_norm(layer) <= theta @ theta


@pytest.mark.parametrize("arch, shapes", SMALL)
def test_bound_zero_for_exact_kronecker(arch, shapes):
    fnn = planted_fnn(arch, shapes, 1, seed=2)
    x = np.random.default_rng(0).uniform(-1, 1, fnn.layers[0].W.shape[1])
    rep = theorem_bound(fnn, shapes, 1, 1.0, x)
    # the SVD tail of a rank-1 rearrangement is roundoff, not an exact zero
    assert rep.total_bound < 1e-12
    assert embedding_discrepancy(fnn, fnn_to_kdl(fnn, shapes, 1), x) < 1e-10


def test_bound_zero_input_zero_bias():
    fnn = random_fnn("6|9|4|2", 0, bias_scale=0.0)
    rep = theorem_bound(fnn, "(2,3)|(3,3)|(2,2)|(2,1)", 1, 1.0, np.zeros(6))
    assert rep.total_bound == 0.0
    assert rep.f_zero_norms == [0.0, 0.0, 0.0]


def test_bound_components_nonnegative_and_eps_monotone():
    fnn = random_fnn("6|9|4|2", 4)
    rep = theorem_bound(fnn, "(2,3)|(3,3)|(2,2)|(2,1)", 2, 1.0, np.ones(6))
    for e in rep.epsilon:
        assert np.all(e >= 0) and np.all(np.diff(e) <= 1e-15)
    assert all(k >= 0 for k in rep.kappa) and rep.total_bound > 0
    assert rep.ranks == [2, 2, 2]


@pytest.mark.parametrize("arch, shapes", SMALL)
@pytest.mark.parametrize("k", [1, 2, 3])
def test_bound_zero_bias_closed_form(arch, shapes, k):
    fnn = random_fnn(arch, 11, bias_scale=0.0)
    x = np.random.default_rng(5).standard_normal(fnn.layers[0].W.shape[1])
    rep = theorem_bound(fnn, shapes, k, 1.0, x)
    # independent oracle: numpy SVD tails, kappa as sum of the kept singular values
    eps, kap = [], []
    for layer, s in zip(fnn.layers, kp_shapes(shapes)):
        sig = rearranged_sigma(layer.W, s)
        kk = min(k, s.max_rank)
        eps.append(np.sqrt(np.sum(sig[kk:] ** 2)))
        kap.append(np.sum(sig[:kk]))
    want = sum(eps[i] * np.prod(kap[i + 1 :]) for i in range(len(eps))) * np.linalg.norm(x)
    assert abs(rep.total_bound - want) <= 1e-12 * max(1.0, want)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), which=st.integers(0, 1), k=st.sampled_from([1, 2, 99]))
def test_bound_dominates_discrepancy(seed, which, k):
    arch, shapes = SMALL[which]
    fnn = random_fnn(arch, seed)
    x = np.random.default_rng(seed).uniform(-2, 2, fnn.layers[0].W.shape[1])
    rep = theorem_bound(fnn, shapes, k, 1.0, x)
    measured = embedding_discrepancy(fnn, fnn_to_kdl(fnn, shapes, k), x)
    assert measured <= rep.total_bound + 1e-12


def test_bound_dominates_on_batch_of_inputs():
    fnn = random_fnn("4|6|1", 8)
    X = np.random.default_rng(3).uniform(-1, 1, (100, 4))
    kdl = fnn_to_kdl(fnn, SMALL[0][1], 1)
    for x in X:
        assert embedding_discrepancy(fnn, kdl, x) <= theorem_bound(fnn, SMALL[0][1], 1, 1.0, x).total_bound


@pytest.mark.xfail(strict=True, reason="kappa sums the kept singular values, so it grows with k")
def test_bound_monotone_in_k():
    arch, shapes = SMALL[1]
    fnn = random_fnn(arch, 0)
    x = np.ones(6)
    totals = [theorem_bound(fnn, shapes, k, 1.0, x).total_bound for k in range(1, 7)]
    assert all(b <= a for a, b in zip(totals, totals[1:]))


def test_bound_shape_error():
    with pytest.raises(ShapeError):
        theorem_bound(random_fnn("4|6|1", 0), SMALL[0][1], 1, 1.0, np.ones(5))


def test_bound_csv(tmp_path):
    rep = theorem_bound(random_fnn("6|9|4|2", 1), SMALL[1][1], 1, 1.0, np.ones(6))
    rep.to_csv(tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert rows[0] == ["layer", "k", "epsilon", "kappa", "f0norm"]
    assert [r[0] for r in rows[1:]] == ["2", "3", "4", "total"]
    assert float(rows[-1][-1]) == rep.total_bound


def _testset(fnn, n=60, seed=0):
    X = np.random.default_rng(seed).uniform(-1, 1, (n, fnn.layers[0].W.shape[1]))
    Y = predict(fnn, X) + 0.05 * np.random.default_rng(seed + 1).standard_normal((n, fnn.layers[-1].W.shape[0]))
    return Dataset(X, Y)


@pytest.mark.parametrize("arch, shapes", SMALL)
def test_rank_sweep_full_rank_matches_reference(arch, shapes):
    fnn = random_fnn(arch, 3)
    sweep = rank_sweep(fnn, shapes, _testset(fnn))
    assert sweep.ks == list(range(1, max(s.max_rank for s in kp_shapes(shapes)) + 1))
    assert abs(sweep.errors[-1] - sweep.reference) < 1e-10


def test_rank_sweep_bitwise_reproducible():
    fnn = random_fnn("6|9|4|2", 3)
    ts = _testset(fnn)
    a = rank_sweep(fnn, SMALL[1][1], ts)
    b = rank_sweep(fnn, SMALL[1][1], ts)
    assert a.errors == b.errors


def test_rank_sweep_planted_rank2():
    fnn = planted_fnn("6|9|4|2", SMALL[1][1], 2, seed=6)
    sweep = rank_sweep(fnn, SMALL[1][1], _testset(fnn))
    assert abs(sweep.errors[1] - sweep.reference) < 1e-8
    assert abs(sweep.errors[0] - sweep.reference) > 1e-6


def test_rank_sweep_csv(tmp_path):
    fnn = random_fnn("4|6|1", 0)
    sweep = rank_sweep(fnn, SMALL[0][1], _testset(fnn), metric="mse")
    sweep.to_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["k", "test_error"] and rows[-1][0] == "fnn"
    assert len(rows) == len(sweep.ks) + 2
