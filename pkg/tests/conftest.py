import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_matmul(A, B):
    """Triple-loop product, the reference for the vectorized kernel."""
    m, k = A.shape
    n = B.shape[1]
    C = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += A[i, t] * B[t, j]
            C[i, j] = s
    return C


def block_kron(L, R):
    """Kronecker product assembled block by block, ``block (i, j) = l_ij R``."""
    m1, n1 = L.shape
    m2, n2 = R.shape
    out = np.zeros((m1 * m2, n1 * n2))
    for i in range(m1):
        for j in range(n1):
            out[i * m2 : (i + 1) * m2, j * n2 : (j + 1) * n2] = L[i, j] * R
    return out


def jacobi_eigvals(S, tol=1e-15, max_sweeps=100):
    """Classical cyclic Jacobi eigenvalues of a symmetric matrix."""
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off <= tol * max(1.0, np.linalg.norm(A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))[::-1]


def max_rel_err(a_list, b_list):
    """Max over entries of ``|a - b| / max(1, |a|, |b|)`` across nested gradient lists."""
    worst = 0.0
    for ga, gb in zip(a_list, b_list):
        for a, b in zip(ga, gb):
            d = np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
            worst = max(worst, float(d.max()) if d.size else 0.0)
    return worst


# acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def pytest_runtest_logreport(report):
    name = report.nodeid.split("::")[-1]
    if report.when == "call" and name.startswith("test_criterion_"):
        number = int(name.split("_")[2])
        if report.failed and number not in ACCEPTANCE:
            ACCEPTANCE[number] = (False, f"error: {report.longrepr.reprcrash.message if hasattr(report.longrepr, 'reprcrash') else report.longrepr}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
