"""
Dense matrix primitives shared by every solver.

The SVD is a one-sided (Hestenes) Jacobi method compiled with numba; the
rotation kernel visits column pairs in cyclic-by-row order.
"""

import contextlib
from dataclasses import dataclass

import numba
import numpy as np

SVD_TOL = 1e-12
SVD_MAX_SWEEPS = 60

_active_counters = []


class SvdConvergenceError(ArithmeticError):
    """Raised when Jacobi sweeps do not orthogonalize the columns in time."""

    def __init__(self, residual, sweeps):
        super().__init__(
            f"Jacobi SVD did not converge after {sweeps} sweeps "
            f"(max relative off-diagonal {residual:.3e})")
        self.residual = residual
        self.sweeps = sweeps


class SvdCounter:
    """Counts calls to :func:`svd` while active."""

    def __init__(self):
        self.calls = 0


@contextlib.contextmanager
def count_svd_calls():
    """Context manager yielding an :class:`SvdCounter` for the enclosed block."""
    counter = SvdCounter()
    _active_counters.append(counter)
    try:
        yield counter
    finally:
        _active_counters.remove(counter)


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.S) @ self.V.T


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array or raise ``ValueError``."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


def soft_threshold(x, eps):
    """Element-wise shrinkage ``sign(x) * max(|x| - eps, 0)``.

    Works on scalars and arrays alike; a scalar input gives a float back.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    out = np.sign(x) * np.maximum(np.abs(x) - eps, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


@numba.njit(cache=True)
def _jacobi_columns(G, tol, max_sweeps):
    """Orthogonalize the columns of ``G`` in place (cyclic-by-row order).

    Returns ``(V, worst, sweeps)``; ``worst <= tol`` signals convergence.
    """
    m, n = G.shape
    V = np.eye(n)
    scale = 0.0
    for i in range(m):
        for j in range(n):
            scale += G[i, j] * G[i, j]
    tiny = (2.220446049250313e-19) ** 2 * max(scale, 1e-300)
    worst = 0.0
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        worst = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += G[i, p] * G[i, p]
                    beta += G[i, q] * G[i, q]
                    gamma += G[i, p] * G[i, q]
                if alpha <= tiny or beta <= tiny:
                    continue
                off = abs(gamma) / (np.sqrt(alpha) * np.sqrt(beta))
                if off <= tol:
                    continue
                if off > worst:
                    worst = off
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0 else -1.0
                t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    gp = G[i, p]
                    gq = G[i, q]
                    G[i, p] = c * gp - s * gq
                    G[i, q] = s * gp + c * gq
                for i in range(n):
                    vp = V[i, p]
                    vq = V[i, q]
                    V[i, p] = c * vp - s * vq
                    V[i, q] = s * vp + c * vq
        if worst <= tol:
            break
    return V, worst, sweeps


def _complete_basis(U, keep):
    """Fill the columns of ``U`` not flagged in ``keep`` with an orthonormal complement."""
    m, r = U.shape
    k = int(keep.sum())
    if k == r:
        return U
    basis = np.hstack([U[:, keep], np.eye(m)])
    Q, _ = np.linalg.qr(basis)
    out = U.copy()
    out[:, ~keep] = Q[:, k:k + (r - k)]
    return out


def svd(M, tol=SVD_TOL, max_sweeps=SVD_MAX_SWEEPS):
    """Thin singular value decomposition by one-sided Jacobi rotations.

    Parameters
    ----------
    M : array_like, shape (m, n)
        Finite real matrix.
    tol : float
        Relative off-diagonal tolerance ``|g_p . g_q| / (|g_p| |g_q|)``.
    max_sweeps : int
        Sweep cap; exceeding it raises :class:`SvdConvergenceError`.

    Returns
    -------
    SvdFactors
        ``U`` (m, r), ``S`` (r,) non-increasing, ``V`` (n, r) with
        ``r = min(m, n)``. Each column of ``U`` has its first nonzero entry
        non-negative.
    """
    A = as_matrix(M)
    for counter in _active_counters:
        counter.calls += 1
    m, n = A.shape
    # Power-of-two rescaling (exact) keeps column inner products clear of
    # underflow and overflow.
    peak = float(np.max(np.abs(A))) if A.size else 0.0
    shift = int(np.frexp(peak)[1]) if peak > 0 else 0
    if shift:
        A = np.ldexp(A, -shift)
    transposed = m < n
    if transposed:
        A = A.T
        m, n = n, m
    # QR preconditioning: Jacobi then runs on the square factor R.
    if m > n:
        Q, G = np.linalg.qr(A)
    else:
        Q, G = None, A.copy()
    V, worst, sweeps = _jacobi_columns(G, tol, max_sweeps)
    if worst > tol:
        raise SvdConvergenceError(worst, sweeps)
    S = np.sqrt(np.einsum("ij,ij->j", G, G))
    order = np.argsort(-S, kind="stable")
    S, G, V = S[order], G[:, order], V[:, order]
    keep = S > np.finfo(float).eps * max(1, n) * (S[0] if S[0] > 0 else 1.0)
    U = np.zeros_like(G)
    U[:, keep] = G[:, keep] / S[keep]
    S = np.ldexp(np.where(keep, S, 0.0), shift)
    if Q is not None:
        U = Q @ U
    U = _complete_basis(U, keep)
    if transposed:
        U, V = V, U
    # Sign convention: first entry above noise level of each U column is >= 0.
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
            V[:, j] = -V[:, j]
    return SvdFactors(U, S, V)


def singular_values(M):
    return svd(M).S


def singular_value_threshold(M, eps):
    """Proximal operator of ``eps * ||.||_*``: shrink every singular value by ``eps``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    f = svd(M)
    s = np.maximum(f.S - eps, 0.0)
    r = int(np.count_nonzero(s))
    return (f.U[:, :r] * s[:r]) @ f.V[:, :r].T


def nuclear_norm(M):
    return float(np.sum(singular_values(M)))


@dataclass(frozen=True)
class MatrixNorms:
    frobenius: float
    spectral: float
    l1: float
    max_abs: float


def matrix_norms(M):
    A = as_matrix(M)
    return MatrixNorms(
        frobenius=float(np.sqrt(np.sum(A * A))),
        spectral=float(singular_values(A)[0]),
        l1=float(np.sum(np.abs(A))),
        max_abs=float(np.max(np.abs(A))),
    )


def spectral_norm(M):
    return float(singular_values(M)[0])


def numerical_rank(M, rtol=1e-6):
    """Count singular values above ``rtol * sigma_1``."""
    s = singular_values(M)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


class KronStats:
    """Running sum of ``X kron X`` over matrices of one shape.

    Stored as the Gram matrix ``G = sum vec(X) vec(X)^T`` (row-major vec),
    which holds the same entries as the ``(m*m) x (n*n)`` Kronecker layout
    up to a permutation. Not thread-safe during accumulation.
    """

    def __init__(self, m, n):
        if m < 1 or n < 1:
            raise ValueError("block dimensions must be positive")
        self.m = m
        self.n = n
        self.gram = np.zeros((m * n, m * n))

    @property
    def shape(self):
        return (self.m, self.n)

    def copy(self):
        out = KronStats(self.m, self.n)
        out.gram = self.gram.copy()
        return out

    def _check(self, X, name):
        X = as_matrix(X, name)
        if X.shape != self.shape:
            raise ValueError(f"{name} has shape {X.shape}, expected {self.shape}")
        return X

    def accumulate(self, X):
        """Add ``X kron X`` in place."""
        x = self._check(X, "X").ravel()
        self.gram += np.outer(x, x)
        return self

    def block(self, i, j):
        """Block ``(i, j)``: the m x n matrix ``sum_t X_t[i, j] * X_t``."""
        return self.gram[i * self.n + j].reshape(self.m, self.n).copy()

    def as_kron(self):
        """The accumulator in Kronecker layout, shape ``(m*m, n*n)``."""
        m, n = self.m, self.n
        # gram[(i,j),(p,q)] -> kron[i*m + p, j*n + q]
        return self.gram.reshape(m, n, m, n).transpose(0, 2, 1, 3).reshape(m * m, n * n)

    def grid_tr(self, Z):
        """Matrix whose ``(i, j)`` entry is ``Tr(Z^T block(i, j))``."""
        z = self._check(Z, "Z").ravel()
        return (self.gram @ z).reshape(self.m, self.n)

    def __add__(self, other):
        if self.shape != other.shape:
            raise ValueError("KronStats shapes differ")
        out = self.copy()
        out.gram += other.gram
        return out


def kron_accumulate(B, X):
    """Return a new accumulator equal to ``B + X kron X``."""
    return B.copy().accumulate(X)


def grid_tr(Z, B):
    return B.grid_tr(Z)
