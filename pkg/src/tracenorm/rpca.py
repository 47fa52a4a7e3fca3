"""Robust PCA by the inexact augmented Lagrange multiplier method.

Splits an observed matrix ``D`` into a low-rank part ``A`` and a sparse part
``E`` by solving ``min ||A||_* + lam * ||E||_1  s.t.  D = A + E``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, singular_value_threshold, soft_threshold, spectral_norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RpcaConfig:
    lam: float = None
    mu0: float = None
    rho: float = 1.5
    tol: float = 1e-7
    max_iter: int = 500

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.mu0 is not None and not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(frozen=True)
class RpcaDecomposition:
    A: np.ndarray
    E: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: tuple = ()


def default_lambda(shape):
    """``1 / sqrt(max(m, n))``."""
    return 1.0 / math.sqrt(max(shape))


def dual_scaling(D, lam):
    """``J(D) = max(||D||_2, ||D||_inf / lam)``, used to seed ``Y0 = D / J(D)``."""
    D = as_matrix(D, "D")
    max_abs = float(np.max(np.abs(D)))
    if max_abs == 0:
        raise ValueError("dual scaling is undefined for the zero matrix")
    return max(spectral_norm(D), max_abs / lam)


def rpca_ialm(D, cfg=None):
    """Decompose ``D`` into low-rank ``A`` plus sparse ``E``.

    Parameters
    ----------
    D : array_like, shape (m, n)
        Observed matrix, finite and nonzero.
    cfg : RpcaConfig, optional
        ``lam`` defaults to ``1/sqrt(max(m, n))`` and ``mu0`` to
        ``1.25 / ||D||_2``; the penalty grows as ``mu <- rho * mu``.

    Returns
    -------
    RpcaDecomposition
        Final iterate. If ``max_iter`` is reached first, ``converged`` is
        False and ``residual`` holds ``||D - A - E||_F / ||D||_F``.
    """
    cfg = cfg or RpcaConfig()
    D = as_matrix(D, "D")
    norm_d = float(np.linalg.norm(D))
    if norm_d == 0:
        raise ValueError("rpca_ialm requires a nonzero matrix")
    lam = cfg.lam if cfg.lam is not None else default_lambda(D.shape)
    sigma1 = spectral_norm(D)
    mu = cfg.mu0 if cfg.mu0 is not None else 1.25 / sigma1
    Y = D / max(sigma1, float(np.max(np.abs(D))) / lam)
    E = np.zeros_like(D)
    A = np.zeros_like(D)
    history = []
    residual = math.inf
    k = 0
    while k < cfg.max_iter:
        A = singular_value_threshold(D - E + Y / mu, 1.0 / mu)
        E = soft_threshold(D - A + Y / mu, lam / mu)
        R = D - A - E
        Y = Y + mu * R
        mu = cfg.rho * mu
        k += 1
        residual = float(np.linalg.norm(R)) / norm_d
        history.append(residual)
        if residual <= cfg.tol:
            break
    converged = residual <= cfg.tol
    if not converged:
        logger.warning("rpca_ialm stopped at max_iter=%d with residual %.3e", k, residual)
    return RpcaDecomposition(A=A, E=E, iterations=k, residual=residual,
                             converged=converged, history=tuple(history))
