"""Trace-norm regularized linear classifier for matrix samples.

The model scores a sample ``X`` as ``Tr(W^T X) + b`` and is fitted by
minimizing

    F(W, b) = sum_i (y_i - Tr(W^T X_i) - b)^2 + lam * ||W||_*

with accelerated proximal gradient steps of fixed size ``1/L`` on ``W``
and an exact least-squares update of ``b`` after every step.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linalg import as_matrix, nuclear_norm, singular_value_threshold

LIPSCHITZ_RULES = ("mn", "tight")


@dataclass(frozen=True)
class LabeledSample:
    X: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "X", as_matrix(self.X, "X"))
        if self.y not in (-1.0, 1.0):
            raise ValueError(f"label must be -1 or +1, got {self.y!r}")
        object.__setattr__(self, "y", float(self.y))


class SampleSet:
    """Samples stacked into ``X`` of shape (s, m, n) and labels ``y`` (s,)."""

    def __init__(self, samples):
        samples = list(samples)
        if not samples:
            raise ValueError("at least one sample is required")
        shape = samples[0].X.shape
        for i, smp in enumerate(samples):
            if smp.X.shape != shape:
                raise DimensionError(
                    f"sample {i} has shape {smp.X.shape}, expected {shape}", index=i)
        self.X = np.stack([smp.X for smp in samples])
        self.y = np.array([smp.y for smp in samples])

    @property
    def shape(self):
        return self.X.shape[1:]

    def __len__(self):
        return self.X.shape[0]

    def inner(self, W):
        """``Tr(W^T X_i)`` for every sample."""
        W = np.asarray(W, dtype=float)
        if W.shape != self.shape:
            raise DimensionError(f"W has shape {W.shape}, samples have {self.shape}")
        return np.einsum("smn,mn->s", self.X, W)

    def residuals(self, W, b):
        return self.y - self.inner(W) - b


def _as_set(samples):
    return samples if isinstance(samples, SampleSet) else SampleSet(samples)


@dataclass(frozen=True)
class FitInfo:
    converged: bool
    n_iter: int
    rel_change_w: float
    rel_change_b: float
    n_svd: int = 0
    exits: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class LinearMatrixModel:
    W: np.ndarray
    b: float
    lam: float
    info: FitInfo = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "W", as_matrix(self.W, "W"))
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        W = self.W.copy()
        W.flags.writeable = False
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", float(self.b))

    def score(self, X):
        X = as_matrix(X, "X")
        if X.shape != self.W.shape:
            raise DimensionError(f"X has shape {X.shape}, model expects {self.W.shape}")
        return float(np.sum(self.W * X)) + self.b

    def predict(self, X):
        return predict(self, X)


@dataclass(frozen=True)
class ApgConfig:
    lam: float = 1.0
    eps1: float = 1e-8
    eps2: float = 1e-8
    max_iter: int = 2000
    lipschitz: str = "mn"

    def __post_init__(self):
        if not (self.lam > 0 and self.eps1 > 0 and self.eps2 > 0):
            raise ValueError("lam, eps1 and eps2 must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.lipschitz not in LIPSCHITZ_RULES:
            raise ValueError(f"lipschitz must be one of {LIPSCHITZ_RULES}")


def smooth_loss(samples, W, b):
    """Squared loss ``sum_i (y_i - Tr(W^T X_i) - b)^2``."""
    r = _as_set(samples).residuals(W, b)
    return float(r @ r)


def objective(samples, model):
    return smooth_loss(samples, model.W, model.b) + model.lam * nuclear_norm(model.W)


def gradient(samples, W, b):
    """Gradient of the squared loss in ``W``: ``-2 sum_i r_i X_i``."""
    S = _as_set(samples)
    r = S.residuals(W, b)
    return -2.0 * np.einsum("s,smn->mn", r, S.X)


def lipschitz_constant(samples, rule="mn"):
    """Step-size constant for the ``W``-gradient.

    ``"mn"`` is ``2 m n sum ||X_i||_F^2``; ``"tight"`` drops the ``m n``
    factor, which Cauchy-Schwarz already allows.
    """
    S = _as_set(samples)
    m, n = S.shape
    total = float(np.sum(S.X * S.X))
    if rule == "mn":
        return 2.0 * m * n * total
    if rule == "tight":
        return 2.0 * total
    raise ValueError(f"unknown Lipschitz rule {rule!r}")


def bias_update(samples, W):
    """Least-squares bias for fixed ``W``: the mean of ``y_i - Tr(W^T X_i)``."""
    S = _as_set(samples)
    return float(np.mean(S.y - S.inner(W)))


def relative_changes(W_new, W_old, b_new, b_old):
    """Stopping quantities with denominators guarded by ``max(1, .)``."""
    dw = float(np.linalg.norm(W_new - W_old)) / max(1.0, float(np.linalg.norm(W_old)))
    db = abs(b_new - b_old) / max(1.0, abs(b_old))
    return dw, db


def next_alpha(alpha):
    return (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha)) / 2.0


def apg_fit(samples, cfg=None, warm=None, callback=None):
    """Batch accelerated proximal gradient training.

    Parameters
    ----------
    samples : list of LabeledSample or SampleSet
    cfg : ApgConfig, optional
    warm : LinearMatrixModel, optional
        Starting point; zeros otherwise.
    callback : callable, optional
        Called as ``callback(k, W, b)`` after every iteration.

    Returns
    -------
    LinearMatrixModel
        ``info.converged`` is False when ``max_iter`` was hit; the last
        relative changes are recorded either way.
    """
    cfg = cfg or ApgConfig()
    S = _as_set(samples)
    L = lipschitz_constant(S, cfg.lipschitz)
    if L == 0:
        raise ValueError("all samples are zero; the problem is degenerate")
    if warm is not None:
        W_prev = np.array(warm.W, dtype=float)
        b = warm.b
        if W_prev.shape != S.shape:
            raise DimensionError(f"warm start has shape {W_prev.shape}, samples have {S.shape}")
    else:
        W_prev = np.zeros(S.shape)
        b = 0.0
    Z = W_prev.copy()
    alpha = 1.0
    dw = db = math.inf
    converged = False
    k = 0
    while k < cfg.max_iter:
        k += 1
        G = gradient(S, Z, b)
        W = singular_value_threshold(Z - G / L, cfg.lam / L)
        alpha_next = next_alpha(alpha)
        Z = W + ((alpha - 1.0) / alpha_next) * (W - W_prev)
        alpha = alpha_next
        b_new = bias_update(S, W)
        dw, db = relative_changes(W, W_prev, b_new, b)
        W_prev, b = W, b_new
        if callback is not None:
            callback(k, W, b)
        if dw < cfg.eps1 and db < cfg.eps2:
            converged = True
            break
    info = FitInfo(converged=converged, n_iter=k, rel_change_w=dw, rel_change_b=db, n_svd=k)
    return LinearMatrixModel(W=W_prev, b=b, lam=cfg.lam, info=info)


def predict(model, X):
    """Return ``(score, label)`` with label ``+1`` when the score is non-negative."""
    s = model.score(X)
    return s, (1.0 if s >= 0 else -1.0)


def accuracy(model, samples):
    S = _as_set(samples)
    if S.shape != model.W.shape:
        raise DimensionError(f"samples have shape {S.shape}, model expects {model.W.shape}")
    scores = S.inner(model.W) + model.b
    labels = np.where(scores >= 0, 1.0, -1.0)
    return float(np.mean(labels == S.y))
