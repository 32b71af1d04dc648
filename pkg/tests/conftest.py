import numpy as np
import pytest


def gauss_solve(A, b):
    """Dense solve by Gaussian elimination with partial pivoting.

    Deliberately independent of the Cholesky path used by the package.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if b.ndim == 1:
        b = b[:, None]
    aug = np.hstack([A, b])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[pivot, col]) < 1e-300:
            raise ValueError("singular matrix in oracle solve")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = aug[col] / aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] = aug[row] - aug[row, col] * aug[col]
    x = aug[:, n:]
    return x[:, 0] if x.shape[1] == 1 else x


def gauss_logdet(A):
    """log det of an SPD matrix via LU elimination (oracle path)."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    logdet = 0.0
    sign = 1.0
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(A[col:, col])))
        if pivot != col:
            A[[col, pivot]] = A[[pivot, col]]
            sign = -sign
        logdet += np.log(abs(A[col, col]))
        if A[col, col] < 0:
            sign = -sign
        for row in range(col + 1, n):
            A[row] = A[row] - (A[row, col] / A[col, col]) * A[col]
    assert sign > 0, "oracle logdet expects positive determinant"
    return logdet


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
