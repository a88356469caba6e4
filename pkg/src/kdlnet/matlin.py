"""Dense matrix kernels with explicit flop accounting.

Matrices are ``float64`` numpy arrays.  Every kernel also accepts stacks of
matrices (leading batch axes), which is how the network code processes a
minibatch of matrix-shaped samples at once.

Vectorization is column-major throughout, so that

    kron(L, R) @ vec(X) == vec(R @ X @ L.T)

for ``X`` of shape ``(R.shape[1], L.shape[1])``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

__all__ = [
    "FlopCounter",
    "SvdResult",
    "as_matrix",
    "matmul",
    "add_bias",
    "hadamard",
    "vec",
    "mat",
    "kron",
    "frob",
    "svd",
    "jacobi_svd",
]

EPS = np.finfo(np.float64).eps

# above this smaller dimension "auto" hands the SVD to LAPACK (Jacobi is O(n^3)
# in python-level rounds and takes minutes at 784 x 784)
JACOBI_MAX_DIM = 300


@dataclass
class FlopCounter:
    """Per-context flop tally; one multiply plus one add counts as 2 flops."""

    flops: int = 0

    def add(self, n):
        self.flops += int(n)

    def reset(self):
        self.flops = 0


@dataclass
class SvdResult:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    sweeps: int = field(default=0, compare=False)

    def reconstruct(self):
        return (self.U * self.sigma) @ self.V.T


def as_matrix(a, name="matrix"):
    """Validate ``a`` as a finite 2-D float64 array."""
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name}: expected a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name}: contains non-finite entries")
    return m


def _batch_size(shape):
    return int(np.prod(shape[:-2], dtype=np.int64)) if len(shape) > 2 else 1


def matmul(A, B, counter=None):
    """Dense product ``A @ B`` (stack-aware), charging ``2*m*k*n`` flops per product."""
    if A.ndim < 2 or B.ndim < 2 or A.shape[-1] != B.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {A.shape} by {B.shape}")
    out = np.matmul(A, B)
    if counter is not None:
        m, k = A.shape[-2:]
        n = B.shape[-1]
        counter.add(2 * m * k * n * _batch_size(out.shape))
    return out


def add_bias(Z, B, counter=None):
    out = Z + B
    if counter is not None:
        counter.add(out.size)
    return out


def hadamard(X, Y, counter=None):
    out = X * Y
    if counter is not None:
        counter.add(out.size)
    return out


def vec(X):
    """Stack columns top-to-bottom, left-to-right.  Leading axes are kept."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2:
        raise ShapeError(f"vec: expected a matrix, got shape {X.shape}")
    lead = X.shape[:-2]
    return np.swapaxes(X, -1, -2).reshape(lead + (-1,))


def mat(x, rows, cols):
    """Inverse of :func:`vec`: fill a ``rows x cols`` matrix column by column."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 1 or x.shape[-1] != rows * cols:
        raise ShapeError(f"mat: length {x.shape[-1] if x.ndim else 0} != {rows}*{cols}")
    lead = x.shape[:-1]
    return np.swapaxes(x.reshape(lead + (cols, rows)), -1, -2)


def kron(L, R):
    """Kronecker product: block ``(i, j)`` of the result is ``L[i, j] * R``."""
    L = np.asarray(L, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    m1, n1 = L.shape
    m2, n2 = R.shape
    return (L[:, None, :, None] * R[None, :, None, :]).reshape(m1 * m2, n1 * n2)


def frob(M):
    M = np.asarray(M, dtype=np.float64)
    return float(np.sqrt(np.sum(M * M)))


def _round_robin(n):
    """Tournament schedule: ``n - 1`` rounds of ``n // 2`` disjoint pairs (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_basis(U, good):
    """Replace the columns of ``U`` not flagged ``good`` by an orthonormal completion."""
    m, n = U.shape
    basis = [U[:, j] for j in range(n) if good[j]]
    out = U.copy()
    candidates = iter(np.eye(m))
    for j in range(n):
        if good[j]:
            continue
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                basis.append(v)
                out[:, j] = v
                break
    return out


def svd(M, tol=1e-14, max_sweeps=60, method="auto"):
    """Thin SVD.

    ``method="jacobi"`` runs the one-sided Jacobi iteration below,
    ``"lapack"`` calls ``numpy.linalg.svd`` and ``"auto"`` picks Jacobi unless
    ``min(M.shape) > JACOBI_MAX_DIM``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeError(f"svd: expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError("svd: input contains non-finite entries")
    if method == "auto":
        method = "jacobi" if min(M.shape) <= JACOBI_MAX_DIM else "lapack"
    if method == "lapack":
        try:
            U, s, Vt = np.linalg.svd(M, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"svd: LAPACK failed ({exc})") from exc
        return SvdResult(U=U, sigma=s, V=Vt.T, sweeps=0)
    if method != "jacobi":
        raise ValueError(f"svd: unknown method {method!r}")
    return jacobi_svd(M, tol=tol, max_sweeps=max_sweeps)


def jacobi_svd(M, tol=1e-14, max_sweeps=60):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Works on the taller orientation.  Each sweep visits every column pair once,
    in round-robin order so that ``n/2`` disjoint rotations are applied
    together.  A pair is rotated only while ``|a_p . a_q| > tol * |a_p| |a_q|``;
    a sweep with no rotation ends the iteration.

    Returns ``SvdResult`` with ``min(rows, cols)`` singular values in
    non-increasing order.  Raises ``NumericError`` if ``max_sweeps`` is hit.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeError(f"svd: expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError("svd: input contains non-finite entries")
    rows, cols = M.shape
    if rows < cols:
        r = jacobi_svd(M.T, tol=tol, max_sweeps=max_sweeps)
        return SvdResult(U=r.V, sigma=r.sigma, V=r.U, sweeps=r.sweeps)

    n = cols
    n_even = n + (n % 2)
    # rows of At are the columns of the working matrix; padded with a zero column
    At = np.zeros((n_even, rows))
    At[:n] = M.T
    Vt = np.eye(n_even)
    schedule = _round_robin(n_even) if n_even > 1 else []

    sweeps = 0
    converged = n_even <= 1
    while not converged:
        if sweeps >= max_sweeps:
            raise NumericError(
                f"svd: no convergence after {sweeps} sweeps", iterations=sweeps
            )
        sweeps += 1
        rotated = False
        for p, q in schedule:
            ap = At[p]
            aq = At[q]
            alpha = np.einsum("ij,ij->i", ap, ap)
            beta = np.einsum("ij,ij->i", aq, aq)
            gamma = np.einsum("ij,ij->i", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            p, q = p[active], q[active]
            ap, aq = ap[active], aq[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = c[:, None]
            s = s[:, None]
            At[p] = c * ap - s * aq
            At[q] = s * ap + c * aq
            vp = Vt[p]
            vq = Vt[q]
            Vt[p] = c * vp - s * vq
            Vt[q] = s * vp + c * vq
        converged = not rotated

    At = At[:n]
    Vt = Vt[:n, :n]
    sigma = np.sqrt(np.einsum("ij,ij->i", At, At))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    At = At[order]
    V = Vt[order].T
    smax = sigma[0] if n else 0.0
    good = sigma > max(rows, n) * EPS * smax
    U = np.zeros((rows, n))
    U[:, good] = (At[good] / sigma[good, None]).T
    if not good.all():
        U = _complete_basis(U, good)
    return SvdResult(U=U, sigma=sigma, V=V, sweeps=sweeps)
