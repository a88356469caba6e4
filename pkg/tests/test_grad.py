import itertools

import numpy as np
import pytest

from kdlnet import matlin
from kdlnet.errors import NumericError, StateError
from kdlnet.grad import (
    data_loss,
    finite_diff_grad,
    fnn_backprop,
    kdl_backprop,
    kml_backprop,
    loss_and_grad,
    network_backprop,
)
from kdlnet.net import DenseLayer, Network, get_activation, init_network, kdl_forward, kml_forward, network_forward

from conftest import max_rel_err
from test_net import degenerate_pair, random_kdl, random_kml

ACTS = ["linear", "relu", "tanh", "sigmoid"]


def perturb(net, rng, scale=0.5):
    for p in net.params():
        p += scale * rng.standard_normal(p.shape)


def batch_for(net, rng, n=3):
    X = rng.standard_normal((n, net.spec.input_size))
    Y = rng.standard_normal((n, net.spec.output_size))
    return X, Y


def min_abs_preact(net, X):
    _, records = network_forward(net, X)
    vals = []
    for rec in records:
        c = rec.cache
        for name in ("Z", "Z_L", "Z_R", "S", "Z1", "Z2", "Z3", "Z4"):
            z = getattr(c, name, None)
            if z is not None:
                vals.append(np.min(np.abs(z)))
    return min(vals)


def test_linear_single_layer_closed_form(rng):
    W, b = rng.standard_normal((2, 3)), rng.standard_normal(2)
    net = Network(init_network("3|2").spec, [DenseLayer(W, b, get_activation("linear"))], None, None)
    x, y = rng.standard_normal(3), rng.standard_normal(2)
    _, grads = loss_and_grad(net, (x[None], y[None]))
    r = W @ x + b - y
    assert np.allclose(grads[0][0], np.outer(r, x), atol=1e-14)
    assert np.allclose(grads[0][1], r, atol=1e-14)


@pytest.mark.parametrize("arch", ["4|5|3", "(2,3)|^2(3,2)|(2,2)", "((2,1),(3,1))|^2((2,2),(1,3))"])
def test_zero_residual_zero_gradient(arch):
    net = init_network(arch, seed=0)
    X = np.random.default_rng(0).standard_normal((2, net.spec.input_size))
    Y = network_forward(net, X)[0].reshape(2, -1, order="F")
    report, grads = loss_and_grad(net, (X, Y))
    assert report.total == 0.0
    assert all(np.all(g == 0) for layer in grads for g in layer)


def test_pure_regularizer_gradient(rng):
    net = init_network("(2,3)|^2(3,2)|(2,2)", seed=1)
    X = rng.standard_normal((2, 6))
    Y = network_forward(net, X)[0].reshape(2, -1, order="F")
    report, grads = loss_and_grad(net, (X, Y), lam=0.3)
    assert report.data_loss == 0.0
    assert report.total == report.data_loss + report.reg_loss
    for g, p in zip([g for layer in grads for g in layer], net.params()):
        assert np.array_equal(g, 0.3 * p)


def test_three_layer_tanh_fnn_fd(rng):
    net = init_network("4|6|5|3", "tanh", seed=3)
    perturb(net, rng)
    batch = batch_for(net, rng)
    _, g = loss_and_grad(net, batch)
    assert max_rel_err(g, finite_diff_grad(net, batch)) < 1e-6


def test_kdl_linear_rank_one_bilinear_oracle(rng):
    # dL/dW_L and dL/dW_R from the dense gradient G of W = kron(W_L^T, W_R)
    layer = random_kdl(rng, 2, 3, 4, 2, 1, "linear", "linear")
    layer.B_L[:] = 0
    A = rng.standard_normal((2, 3))
    out, cache = kdl_forward(layer, A)
    Gam = rng.standard_normal(out.shape)
    grads, Gout = kdl_backprop(layer, cache, Gam)
    # loss = <Gam, W_R A W_L>; dense gradient w.r.t. the full matrix is vec(Gam) vec(A)^T
    dWL = A.T @ layer.W_R[0].T @ Gam
    dWR = Gam @ (A @ layer.W_L[0]).T
    assert np.allclose(grads[0][0], dWL, atol=1e-12)
    assert np.allclose(grads[2][0], dWR, atol=1e-12)
    dense = matlin.kron(layer.W_L[0].T, layer.W_R[0])
    assert np.allclose(matlin.vec(Gout), dense.T @ matlin.vec(Gam), atol=1e-12)


def test_kdl_zero_gamma(rng):
    layer = random_kdl(rng, 2, 3, 4, 2, 2)
    _, cache = kdl_forward(layer, rng.standard_normal((2, 3)))
    grads, Gout = kdl_backprop(layer, cache, np.zeros((4, 2)))
    assert all(np.all(g == 0) for g in grads) and np.all(Gout == 0)


def test_kml_zero_gamma(rng):
    layer = random_kml(rng, (2, 1, 3, 1), (2, 2, 1, 3), 2)
    _, cache = kml_forward(layer, rng.standard_normal(layer.in_shape))
    grads, Gout = kml_backprop(layer, cache, np.zeros(layer.out_shape))
    assert all(np.all(g == 0) for g in grads) and np.all(Gout == 0)


def test_kml_degenerate_grads_match_kdl(rng):
    kdl, kml = degenerate_pair(rng, 3, 2, 2, 4, 2)
    A = rng.standard_normal((3, 2))
    outk, ck = kdl_forward(kdl, A)
    outm, cm = kml_forward(kml, A)
    Gam = rng.standard_normal(outk.shape)
    gk, Gk = kdl_backprop(kdl, ck, Gam)
    gm, Gm = kml_backprop(kml, cm, Gam)
    assert np.max(np.abs(Gk - Gm)) < 1e-10
    assert np.max(np.abs(np.swapaxes(gm[2].sum(axis=1), 1, 2) - gk[0])) < 1e-10  # W2 -> W_L
    assert np.max(np.abs(gm[3][..., 0] - gk[1])) < 1e-10  # B2 -> B_L
    assert np.max(np.abs(gm[6].sum(axis=1) - gk[2])) < 1e-10  # W4 -> W_R
    assert np.max(np.abs(np.swapaxes(gm[7][..., 0], 1, 2) - gk[3])) < 1e-10  # B4 -> B_R


@pytest.mark.parametrize("phi1, phi2", list(itertools.product(ACTS, ACTS)))
@pytest.mark.parametrize("k", [1, 2, 3])
def test_kdl_network_fd(phi1, phi2, k):
    done = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        net = init_network(f"(2,3)|^{k}(3,2)|^{k}(2,2)", phi1, phi2, seed=seed)
        perturb(net, rng)
        batch = batch_for(net, rng)
        if "relu" in (phi1, phi2) and min_abs_preact(net, batch[0]) < 1e-4:
            continue
        _, g = loss_and_grad(net, batch, lam=0.1)
        assert max_rel_err(g, finite_diff_grad(net, batch, lam=0.1)) < 1e-6
        done += 1
        if done == 3:
            break
    assert done == 3


@pytest.mark.parametrize("phi", ACTS)
def test_kml_network_fd(phi):
    rng = np.random.default_rng(4)
    for seed in range(20):
        net = init_network("((2,1),(3,1))|^2((2,2),(1,3))|((1,2),(2,1))", phi, seed=seed)
        perturb(net, rng, 0.3)
        batch = batch_for(net, rng, 2)
        if phi == "relu" and min_abs_preact(net, batch[0]) < 1e-4:
            continue
        _, g = loss_and_grad(net, batch)
        assert max_rel_err(g, finite_diff_grad(net, batch)) < 1e-6
        return
    pytest.fail("no kink-free draw")


def test_after_sum_kdl_fd(rng):
    from kdlnet.net import fnn_to_kdl

    kdl = fnn_to_kdl(init_network("4|9|4", "tanh", seed=2), "(2,2)|(3,3)|(2,2)", k=2)
    perturb(kdl, rng, 0.2)
    batch = batch_for(kdl, rng)
    _, g = loss_and_grad(kdl, batch)
    assert max_rel_err(g, finite_diff_grad(kdl, batch)) < 1e-6


def test_finite_diff_exact_on_quadratic(rng):
    net = init_network("3|2", "linear", seed=0)
    batch = batch_for(net, rng)
    _, g = loss_and_grad(net, batch)
    fd = finite_diff_grad(net, batch)
    assert max(np.max(np.abs(a - b)) for a, b in zip(g[0], fd[0])) < 1e-9


def test_finite_diff_one_parameter():
    # loss(w) = 0.5 * (tanh(w x) - y)^2
    net = init_network("1|1", "tanh", seed=0)
    net.layers[0].W[:] = 0.7
    x, y = 1.3, 0.2
    fd = finite_diff_grad(net, (np.array([[x]]), np.array([[y]])))[0][0][0, 0]
    t = np.tanh(0.7 * x)
    assert abs(fd - (t - y) * (1 - t * t) * x) < 1e-9


def test_finite_diff_deterministic(rng):
    net = init_network("(2,2)|(2,2)", seed=0)
    batch = batch_for(net, rng)
    a, b = finite_diff_grad(net, batch), finite_diff_grad(net, batch)
    assert all(np.array_equal(x, y) for la, lb in zip(a, b) for x, y in zip(la, lb))


def test_chain_consistency_three_layer_kdl(rng):
    net = init_network("(2,2)|^2(3,2)|(2,3)|^2(2,2)", "tanh", "sigmoid", seed=9)
    perturb(net, rng)
    X, Y = batch_for(net, rng, 4)
    _, g = loss_and_grad(net, (X, Y))
    d = [rng.standard_normal(p.shape) for p in net.params()]
    analytic = sum(np.sum(gi * di) for gi, di in zip([x for layer in g for x in layer], d))

    def loss_at(t):
        clone = net.copy()
        for p, di in zip(clone.params(), d):
            p += t * di
        Yh, _ = network_forward(clone, X)
        return data_loss(Yh, Y.reshape(Yh.shape, order="F"))

    h = 1e-6
    numeric = (loss_at(h) - loss_at(-h)) / (2 * h)
    assert abs(analytic - numeric) < 1e-6 * max(1.0, abs(analytic))


def test_embedding_directional_derivatives_agree(rng):
    from kdlnet.net import fnn_to_kdl

    fnn = init_network("4|9|4", "tanh", seed=4)
    kdl = fnn_to_kdl(fnn, "(2,2)|(3,3)|(2,2)")
    X, Y = batch_for(fnn, rng, 5)
    _, gk = loss_and_grad(kdl, (X, Y))
    # moving only the last summand's B_R by D moves the dense bias by vec(D)
    D = rng.standard_normal(kdl.layers[1].B_R.shape[1:])
    dir_kdl = np.sum(gk[1][3][-1] * D)
    _, gf = loss_and_grad(fnn, (X, Y))
    dir_fnn = np.sum(gf[1][1] * matlin.vec(D))
    assert abs(dir_kdl - dir_fnn) < 1e-10


def test_cache_mismatch_is_state_error(rng):
    a = init_network("(2,2)|(2,2)|(2,2)", seed=0)
    b = init_network("4|4|4", seed=0)
    _, records = network_forward(b, rng.standard_normal((1, 4)))
    with pytest.raises(StateError):
        network_backprop(a, records, np.zeros((1, 2, 2)))
    with pytest.raises(StateError):
        network_backprop(a, records[:1], np.zeros((1, 2, 2)))
    with pytest.raises(StateError):
        fnn_backprop(a, records, np.zeros((1, 4)))


def test_nonfinite_output_names_sample(rng):
    net = init_network("2|2", "linear")
    X = np.array([[1.0, 1.0], [np.inf, 0.0]])
    with pytest.raises(NumericError) as info:
        loss_and_grad(net, (X, np.zeros((2, 2))))
    assert info.value.sample == 1
