"""Kronecker product decompositions (KPD) of dense matrices.

A matrix ``W`` of shape ``(m1*m2, n1*n2)`` is viewed as an ``m1 x n1`` grid of
``m2 x n2`` blocks.  The rearrangement maps every block to one row, numbering
the blocks down the block columns, so that ``rearrange(kron(L, R))`` is the
rank-one matrix ``vec(L) vec(R)^T``.  Truncated SVDs of the rearrangement
therefore give Frobenius-optimal sums of Kronecker products.
"""

from dataclasses import dataclass

import numpy as np

from . import matlin
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class KpShape:
    m1: int
    n1: int
    m2: int
    n2: int

    def __post_init__(self):
        for name in ("m1", "n1", "m2", "n2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ParameterError(f"KpShape.{name} must be a positive integer, got {v!r}")

    @property
    def rows(self):
        return self.m1 * self.m2

    @property
    def cols(self):
        return self.n1 * self.n2

    @property
    def max_rank(self):
        return min(self.m1 * self.n1, self.m2 * self.n2)

    def __str__(self):
        return f"{self.m1},{self.n1},{self.m2},{self.n2}"

    @classmethod
    def parse(cls, text):
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ParameterError(f"KpShape needs 4 comma-separated integers, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise ParameterError(f"KpShape needs integers, got {text!r}") from exc


@dataclass
class KpdFactors:
    """Rank-k KPD ``W ~ sum_j kron(left[j], right[j])`` plus the full spectrum."""

    shape: KpShape
    left: np.ndarray  # (k, m1, n1)
    right: np.ndarray  # (k, m2, n2)
    sigma: np.ndarray

    @property
    def rank(self):
        return self.left.shape[0]

    @property
    def pairs(self):
        return list(zip(self.left, self.right))

    def dense(self):
        out = np.zeros((self.shape.rows, self.shape.cols))
        for L, R in self.pairs:
            out += matlin.kron(L, R)
        return out


def _check_shape(W, shape):
    if W.shape != (shape.rows, shape.cols):
        raise ShapeError(
            f"matrix of shape {W.shape} does not factor as "
            f"({shape.m1}*{shape.m2}) x ({shape.n1}*{shape.n2})"
        )


def rearrange(W, shape):
    """Map each ``m2 x n2`` block of ``W`` to the row ``vec(block)^T``."""
    W = np.asarray(W, dtype=np.float64)
    _check_shape(W, shape)
    m1, n1, m2, n2 = shape.m1, shape.n1, shape.m2, shape.n2
    # W4[i, a, j, b] = W[i*m2 + a, j*n2 + b]; row j*m1 + i, column b*m2 + a
    W4 = W.reshape(m1, m2, n1, n2)
    return W4.transpose(2, 0, 3, 1).reshape(n1 * m1, n2 * m2)


def unrearrange(Rm, shape):
    """Inverse of :func:`rearrange`."""
    Rm = np.asarray(Rm, dtype=np.float64)
    m1, n1, m2, n2 = shape.m1, shape.n1, shape.m2, shape.n2
    if Rm.shape != (m1 * n1, m2 * n2):
        raise ShapeError(f"rearranged matrix {Rm.shape} does not match shape {shape}")
    return Rm.reshape(n1, m1, n2, m2).transpose(1, 3, 0, 2).reshape(m1 * m2, n1 * n2)


def kpd_approx(W, shape, k, svd_method="auto"):
    """Optimal rank-``k`` KPD of ``W`` from the top singular triplets of its rearrangement."""
    W = np.asarray(W, dtype=np.float64)
    _check_shape(W, shape)
    if int(k) != k or not 1 <= k <= shape.max_rank:
        raise ParameterError(f"rank {k} outside [1, {shape.max_rank}] for shape {shape}")
    res = matlin.svd(rearrange(W, shape), method=svd_method)
    k = int(k)
    us = res.U[:, :k] * res.sigma[:k]
    left = matlin.mat(us.T, shape.m1, shape.n1)
    right = matlin.mat(res.V[:, :k].T, shape.m2, shape.n2)
    return KpdFactors(shape=shape, left=left, right=right, sigma=res.sigma.copy())


def kp_apply(factors, x, counter=None):
    """Apply ``sum_j kron(L_j, R_j)`` to ``x`` without forming the dense matrix.

    ``x`` may carry leading batch axes.  Uses ``vec(R X L^T)`` with
    ``X = mat(x, n2, n1)``, evaluated as ``R @ (X @ L^T)``.
    """
    s = factors.shape
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != s.cols:
        raise ShapeError(f"kp_apply: vector length {x.shape[-1]} != {s.cols}")
    X = matlin.mat(x, s.n2, s.n1)
    out = None
    for L, R in factors.pairs:
        term = matlin.matmul(R, matlin.matmul(X, L.T, counter), counter)
        out = term if out is None else matlin.add_bias(out, term, counter)
    return matlin.vec(out)


def epsilon_trunc(sigma, k):
    """l2 norm of the singular-value tail ``sigma[k:]``."""
    if k < 0:
        raise ParameterError(f"truncation rank must be >= 0, got {k}")
    tail = np.asarray(sigma, dtype=np.float64)[int(k):]
    return float(np.sqrt(np.sum(tail * tail)))
