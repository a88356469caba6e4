"""Back-propagation for every layer family, plus the regularized loss and a
central-difference gradient oracle.

Gradients are plain nested lists: ``grads[l][t]`` has the shape of
``net.layers[l].params()[t]``.  Layer kernels return data-term gradients
only; the Tikhonov term ``lam * param`` is added by :func:`loss_and_grad`.
"""

from dataclasses import dataclass

import numpy as np

from . import matlin
from .errors import NumericError, ShapeError, StateError
from .net import DenseCache, KdlCache, KmlCache, network_forward, reshape_state

__all__ = [
    "LossReport",
    "dense_backprop",
    "kdl_backprop",
    "kml_backprop",
    "fnn_backprop",
    "network_backprop",
    "data_loss",
    "reg_loss",
    "loss_and_grad",
    "finite_diff_grad",
    "zeros_like_grads",
]


@dataclass
class LossReport:
    data_loss: float
    reg_loss: float

    @property
    def total(self):
        return self.data_loss + self.reg_loss


def _bsum_outer(X, Y, counter=None):
    """``sum_b X[b] @ Y[b]^T`` over the leading batch axis."""
    X = np.moveaxis(X, 0, -2)
    Y = np.moveaxis(Y, 0, -2)
    X = X.reshape(X.shape[:-2] + (-1,))
    Y = Y.reshape(Y.shape[:-2] + (-1,))
    return matlin.matmul(X, np.swapaxes(Y, -1, -2), counter)


def _bsum_inner(X, Y, counter=None):
    """``sum_b X[b]^T @ Y[b]`` over the leading batch axis."""
    return _bsum_outer(np.swapaxes(X, -1, -2), np.swapaxes(Y, -1, -2), counter)


def dense_backprop(layer, cache, Gamma, counter=None):
    D = matlin.hadamard(layer.phi.deriv(cache.Z), Gamma, counter)
    dW = matlin.matmul(D.T, cache.A, counter)
    db = D.sum(axis=0)
    return [dW, db], matlin.matmul(D, layer.W, counter)


def kdl_backprop(layer, cache, Gamma_in, counter=None):
    """Sensitivities of one KDL layer.

    ``Gamma_in`` is the loss derivative with respect to the layer output.
    Per summand ``D1 = phi1'(Z_R) * Gamma_in`` and
    ``D2 = (W_R^T D1) * phi2'(Z_L)``; the weight gradients are ``D1 A_L^T``
    and ``A^T D2`` summed over the batch, and the returned ``Gamma_out`` is
    ``sum_i D2 W_L^T``.
    """
    single = Gamma_in.ndim == 2
    G = Gamma_in[None] if single else Gamma_in
    B, k = cache.Z_R.shape[:2]
    if G.shape != (B,) + tuple(layer.out_shape):
        raise ShapeError(f"KDL backprop: Gamma {G.shape} does not match output {(B,) + tuple(layer.out_shape)}")
    if layer.W_L.shape[0] != k:
        raise StateError(f"KDL backprop: cache has {k} summands, layer has {layer.W_L.shape[0]}")
    if layer.phi1_after_sum:
        D1 = matlin.hadamard(layer.phi1.deriv(cache.S), G, counter)[:, None]
        D1 = np.broadcast_to(D1, cache.Z_R.shape)
    else:
        D1 = matlin.hadamard(layer.phi1.deriv(cache.Z_R), G[:, None], counter)
    WRt = np.swapaxes(layer.W_R, -1, -2)
    D2 = matlin.hadamard(matlin.matmul(WRt, D1, counter), layer.phi2.deriv(cache.Z_L), counter)
    A = np.broadcast_to(cache.A[:, None], (B, k) + cache.A.shape[1:])
    dW_R = _bsum_outer(D1, cache.A_L, counter)
    dW_L = _bsum_inner(A, D2, counter)
    dB_R = D1.sum(axis=0)
    dB_L = D2.sum(axis=0)
    Gamma_out = matlin.matmul(D2, np.swapaxes(layer.W_L, -1, -2), counter).sum(axis=1)
    if single:
        Gamma_out = Gamma_out[0]
    return [dW_L, dB_L, dW_R, dB_R], Gamma_out


def kml_backprop(layer, cache, Gamma_in, counter=None):
    """Sensitivities of one KML layer, stage 4 back to stage 1.

    Row/column-indexed weights each collect the batch sum of their own
    sensitivities; the input sensitivity sums over summands.
    """
    single = Gamma_in.ndim == 2
    G = Gamma_in[None] if single else Gamma_in
    if G.shape[1:] != tuple(layer.out_shape):
        raise ShapeError(f"KML backprop: Gamma {G.shape[1:]} does not match output {layer.out_shape}")
    if cache.Z1.shape[1] != layer.rank:
        raise StateError("KML backprop: cache and layer disagree on rank")
    r1_in, c1_in, r2_in, c2_in = layer.in_quad
    r1_out, c1_out, r2_out, c2_out = layer.out_quad
    dphi = layer.phi.deriv
    B, k = cache.Z1.shape[:2]

    Gcols = matlin.mat(np.swapaxes(G, -1, -2), r1_out, c1_out)[:, None]
    D4 = matlin.hadamard(Gcols, dphi(cache.Z4), counter)
    dW4 = _bsum_outer(D4, cache.A3, counter)
    dB4 = D4.sum(axis=0)

    dA3 = matlin.matmul(np.swapaxes(layer.W4, -1, -2), D4, counter)
    D3 = matlin.hadamard(dA3, dphi(cache.Z3), counter)
    dW3 = _bsum_inner(cache.Acols, D3, counter)
    dB3 = D3.sum(axis=0)

    dAcols = matlin.matmul(D3, np.swapaxes(layer.W3, -1, -2), counter)
    dA2 = np.swapaxes(matlin.vec(dAcols), -1, -2)  # (B, k, P_in, Q_out)
    D2 = matlin.hadamard(matlin.mat(dA2, r2_out, c2_out), dphi(cache.Z2), counter)
    dW2 = _bsum_outer(D2, cache.A1, counter)
    dB2 = D2.sum(axis=0)

    dA1 = matlin.matmul(np.swapaxes(layer.W2, -1, -2), D2, counter)
    D1 = matlin.hadamard(dA1, dphi(cache.Z1), counter)
    Arows = np.broadcast_to(cache.Arows, (B, k) + cache.Arows.shape[2:])
    dW1 = _bsum_inner(Arows, D1, counter)
    dB1 = D1.sum(axis=0)

    dArows = matlin.matmul(D1, np.swapaxes(layer.W1, -1, -2), counter).sum(axis=1)
    Gamma_out = matlin.vec(dArows)
    if single:
        Gamma_out = Gamma_out[0]
    return [dW1, dB1, dW2, dB2, dW3, dB3, dW4, dB4], Gamma_out


_KERNELS = {
    "dense": (dense_backprop, DenseCache),
    "kdl": (kdl_backprop, KdlCache),
    "kml": (kml_backprop, KmlCache),
}


def network_backprop(net, records, residual, counter=None):
    """Data-term gradients given ``residual = dLoss/dOutput`` (``Y_hat - Y`` for l2)."""
    if len(records) != len(net.layers):
        raise StateError(f"{len(records)} cached layers for a {len(net.layers)}-layer network")
    grads = [None] * len(net.layers)
    G = residual
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        rec = records[idx]
        kernel, cache_type = _KERNELS[layer.family]
        if not isinstance(rec.cache, cache_type):
            raise StateError(f"layer {idx}: cache of type {type(rec.cache).__name__} for a {layer.family} layer")
        G = reshape_state(G, layer.out_shape)
        grads[idx], G = kernel(layer, rec.cache, G, counter)
        G = reshape_state(G, rec.prev_shape[1:])
    return grads


def fnn_backprop(net, records, residual, counter=None):
    if net.family != "dense":
        raise StateError("fnn_backprop called on a non-dense network")
    return network_backprop(net, records, residual, counter)


def zeros_like_grads(net):
    return [[np.zeros_like(p) for p in layer.params()] for layer in net.layers]


def _targets(net, Y, batch):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != batch:
        raise ShapeError(f"{Y.shape[0]} targets for {batch} inputs")
    return reshape_state(Y.reshape(batch, -1) if Y.ndim == 1 else Y, net.out_shape)


def data_loss(Y_hat, Y):
    R = Y_hat - Y
    return 0.5 * float(np.sum(R * R))


def reg_loss(net, lam):
    if lam == 0:
        return 0.0
    return 0.5 * lam * float(sum(np.sum(p * p) for p in net.params()))


def _check_finite(Y_hat):
    bad = ~np.isfinite(Y_hat.reshape(Y_hat.shape[0], -1)).all(axis=1)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite network output for sample {first}", sample=first)


def loss_and_grad(net, batch, lam=0.0, counter=None):
    """``0.5 * sum_m ||Y_m - Y_hat_m||^2 + lam/2 * sum ||param||^2`` and its gradient."""
    X, Y = batch
    Y_hat, records = network_forward(net, X, counter)
    _check_finite(Y_hat)
    T = _targets(net, Y, Y_hat.shape[0])
    grads = network_backprop(net, records, Y_hat - T, counter)
    if lam:
        for g_layer, layer in zip(grads, net.layers):
            for g, p in zip(g_layer, layer.params()):
                g += lam * p
    return LossReport(data_loss(Y_hat, T), reg_loss(net, lam)), grads


def _loss_only(net, X, T, lam):
    Y_hat, _ = network_forward(net, X)
    return data_loss(Y_hat, T) + reg_loss(net, lam)


def finite_diff_grad(net, batch, lam=0.0, h=1e-6):
    """Central differences ``(L(theta + h_i e_i) - L(theta - h_i e_i)) / 2h_i``
    with ``h_i = h * max(1, |theta_i|)``, one scalar at a time."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    X, Y = batch
    X = np.asarray(X, dtype=np.float64)
    T = _targets(net, Y, X.shape[0])
    grads = zeros_like_grads(net)
    for layer, g_layer in zip(net.layers, grads):
        for p, g in zip(layer.params(), g_layer):
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                step = h * max(1.0, abs(orig))
                flat[i] = orig + step
                up = _loss_only(net, X, T, lam)
                flat[i] = orig - step
                down = _loss_only(net, X, T, lam)
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * step)
    return grads
