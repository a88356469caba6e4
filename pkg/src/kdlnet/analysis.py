"""Truncation-error analysis of FNN -> KDL embeddings.

The error bound for a rank-``k`` embedding of an ``L``-layer dense network
(layers numbered ``2..L``, ``f_1(0) = X``) reads::

    sum_{i=2}^{L} eps_i(k) * prod_{j=i+1}^{L} kappa_j * sum_{m=1}^{i-1} c1^(L-m) ||f_m(0)||_F

where ``eps_i(k)`` is the singular-value tail of layer ``i``'s rearranged
weight and ``kappa_j`` the seminorm of the embedded layer ``j``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import metrics
from .errors import ShapeError
from .kpd import epsilon_trunc
from .net import fnn_to_kdl, kp_shapes, layer_forward, predict, reshape_state

__all__ = [
    "BoundReport",
    "RankSweep",
    "kappa_norm",
    "theorem_bound",
    "embedding_discrepancy",
    "rank_sweep",
]


@dataclass
class BoundReport:
    k: int
    c1: float
    epsilon: list  # epsilon[l][j]: tail beyond rank j for layer l, j = 0..max_rank
    kappa: list
    f_zero_norms: list  # ||f_m(0)||_F for m = 1..L-1 (m = 1 is the input)
    total_bound: float
    ranks: list = field(default_factory=list)  # rank actually used per layer

    def eps_at_k(self):
        return [float(e[r]) for e, r in zip(self.epsilon, self.ranks)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "k", "epsilon", "kappa", "f0norm"])
            eps = self.eps_at_k()
            for idx, (r, e, kap) in enumerate(zip(self.ranks, eps, self.kappa)):
                # layer idx + 2 receives f_{idx+1}(0)
                w.writerow([idx + 2, r, f"{e:.17g}", f"{kap:.17g}", f"{self.f_zero_norms[idx]:.17g}"])
            w.writerow(["total", self.k, "", "", f"{self.total_bound:.17g}"])


@dataclass
class RankSweep:
    ks: list
    errors: list
    reference: float
    metric: str = "rel_l2_pct"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "test_error"])
            for k, e in zip(self.ks, self.errors):
                w.writerow([k, f"{e:.17g}"])
            w.writerow(["fnn", f"{self.reference:.17g}"])


def kappa_norm(layer):
    """``sum_q ||W_L[q]||_F * ||W_R[q]||_F`` (already the squared seminorm)."""
    nl = np.sqrt(np.sum(layer.W_L**2, axis=(1, 2)))
    nr = np.sqrt(np.sum(layer.W_R**2, axis=(1, 2)))
    return float(np.sum(nl * nr))


def _single_input(fnn, X):
    X = np.asarray(X, dtype=np.float64)
    n_in = fnn.layers[0].W.shape[1]
    if X.size != n_in:
        raise ShapeError(f"bound input has {X.size} entries, network expects {n_in}")
    return X.reshape(1, n_in)


def theorem_bound(fnn, shapes, k, c1, X):
    """Evaluate the rank-``k`` embedding error bound for one input ``X``.

    ``shapes`` is a KDL arch string or a list of :class:`KpShape`; ``k`` is
    clamped per layer to its maximal Kronecker rank.
    """
    if c1 <= 0:
        raise ValueError("Lipschitz constant c1 must be positive")
    if isinstance(shapes, str) or hasattr(shapes, "items"):
        shapes = kp_shapes(shapes)
    x = _single_input(fnn, X)
    kdl = fnn_to_kdl(fnn, shapes, k, phi2="linear")
    n = len(kdl.layers)
    L = n + 1
    ranks = [layer.rank for layer in kdl.layers]
    epsilon = [np.array([epsilon_trunc(s, j) for j in range(len(s) + 1)]) for s in kdl.info["sigma"]]
    kappa = [kappa_norm(layer) for layer in kdl.layers]
    f0 = [float(np.linalg.norm(x))]
    for layer in kdl.layers[:-1]:
        zero = np.zeros((1,) + tuple(layer.in_shape))
        out, _ = layer_forward(layer, zero)
        f0.append(float(np.linalg.norm(out)))
    total = 0.0
    for i in range(2, L + 1):
        eps_i = epsilon[i - 2][ranks[i - 2]]
        if eps_i == 0.0:
            continue
        prod = float(np.prod(kappa[i - 1 :]))  # layers i+1..L
        inner = sum(c1 ** (L - m) * f0[m - 1] for m in range(1, i))
        total += eps_i * prod * inner
    return BoundReport(int(k), float(c1), epsilon, kappa, f0, float(total), ranks)


def embedding_discrepancy(fnn, kdl, X):
    """``||Y_fnn(X) - Y_kdl(X)||_F`` for a batch (or single sample) ``X``."""
    X = np.asarray(X, dtype=np.float64)
    n_in = fnn.layers[0].W.shape[1]
    X = X.reshape(-1, n_in)
    a = predict(fnn, X)
    b = predict(kdl, reshape_state(X, kdl.in_shape))
    return float(np.linalg.norm(a - b))


def rank_sweep(fnn, shapes, testset, phi2="linear", metric="rel_l2_pct", ks=None):
    """Test error of the rank-``k`` embedding for ``k = 1..full`` (no retraining)."""
    if isinstance(shapes, str) or hasattr(shapes, "items"):
        shapes = kp_shapes(shapes)
    full = max(s.max_rank for s in shapes)
    ks = list(range(1, full + 1)) if ks is None else list(ks)
    reference = metrics(predict(fnn, testset.X), testset.Y)[metric]
    errors = []
    for k in ks:
        kdl = fnn_to_kdl(fnn, shapes, k, phi2=phi2)
        errors.append(metrics(predict(kdl, testset.X), testset.Y)[metric])
    return RankSweep(ks, errors, reference, metric)
