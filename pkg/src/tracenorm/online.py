"""Online training from running sufficient statistics.

After ``t`` samples the trainer keeps

    A = sum y X,   B = sum X kron X,   c = sum y,   D = sum X,
    L = 2 m n sum ||X||_F^2

which reproduce the full-data gradient ``-2A + 2 GridTr(Z, B) + 2 b D``
without storing any sample. Each arriving sample (or mini-batch) refreshes
the statistics and then moves the model from its previous value, either by
a full inner APG solve (``mode="exact"``) or by exactly two proximal steps
followed by one bias update (``mode="inexact"``).
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .classifier import (
    LIPSCHITZ_RULES, FitInfo, LinearMatrixModel, next_alpha, relative_changes,
)
from .errors import DimensionError
from .linalg import KronStats, as_matrix, nuclear_norm, singular_value_threshold

MAX_CELLS = 4096
MODES = ("exact", "inexact")


class OnlineSufficientStats:
    """The accumulated "past information" of an online run.

    Single-owner and mutable: :meth:`update` works in place; use
    :func:`stats_update` for a copy.
    """

    def __init__(self, m, n):
        if m * n > MAX_CELLS:
            raise ValueError(
                f"{m}x{n} samples need a {m * n}^2 Kronecker accumulator; "
                f"m*n is limited to {MAX_CELLS}")
        self.m = m
        self.n = n
        self.A = np.zeros((m, n))
        self.B = KronStats(m, n)
        self.c = 0.0
        self.D = np.zeros((m, n))
        self.L = 0.0
        self.t = 0

    @property
    def shape(self):
        return (self.m, self.n)

    def copy(self):
        out = OnlineSufficientStats.__new__(OnlineSufficientStats)
        out.m, out.n = self.m, self.n
        out.A, out.D = self.A.copy(), self.D.copy()
        out.B = self.B.copy()
        out.c, out.L, out.t = self.c, self.L, self.t
        return out

    def update(self, batch, offset=0):
        batch = list(batch)
        if not batch:
            return self
        Xs = []
        for i, smp in enumerate(batch):
            if smp.X.shape != self.shape:
                raise DimensionError(
                    f"sample {offset + i} has shape {smp.X.shape}, expected {self.shape}",
                    index=offset + i)
            Xs.append(smp.X)
        X = np.stack(Xs)
        y = np.array([smp.y for smp in batch])
        vecs = X.reshape(len(batch), -1)
        self.A += np.einsum("s,smn->mn", y, X)
        self.B.gram += vecs.T @ vecs
        self.c += float(np.sum(y))
        self.D += np.sum(X, axis=0)
        self.L += 2.0 * self.m * self.n * float(np.sum(vecs * vecs))
        self.t += len(batch)
        return self

    def lipschitz(self, rule="mn"):
        if rule == "mn":
            return self.L
        if rule == "tight":
            return self.L / (self.m * self.n)
        raise ValueError(f"unknown Lipschitz rule {rule!r}")

    def surrogate_gradient(self, Z, b):
        """``-2A + 2 GridTr(Z, B) + 2 b D``: the squared-loss gradient over all seen samples."""
        Z = as_matrix(Z, "Z")
        if Z.shape != self.shape:
            raise DimensionError(f"Z has shape {Z.shape}, expected {self.shape}")
        return -2.0 * self.A + 2.0 * self.B.grid_tr(Z) + 2.0 * b * self.D

    def bias(self, W):
        """Least-squares bias over the seen samples for fixed ``W``."""
        return (self.c - float(np.sum(W * self.D))) / self.t

    def smooth_loss(self, W, b):
        # Expansion of sum (y - <W,X> - b)^2 with y^2 = 1.
        Wv = np.asarray(W, dtype=float)
        quad = float(Wv.ravel() @ self.B.gram @ Wv.ravel())
        wa = float(np.sum(Wv * self.A))
        wd = float(np.sum(Wv * self.D))
        return self.t - 2.0 * wa - 2.0 * b * self.c + quad + 2.0 * b * wd + self.t * b * b

    def objective(self, W, b, lam):
        return self.smooth_loss(W, b) + lam * nuclear_norm(W)


def stats_update(stats, batch):
    """Return a copy of ``stats`` with ``batch`` folded in."""
    return stats.copy().update(batch)


def surrogate_gradient(stats, Z, b):
    return stats.surrogate_gradient(Z, b)


@dataclass(frozen=True)
class OnlineConfig:
    lam: float = 1.0
    inner_eps1: float = 1e-8
    inner_eps2: float = 1e-8
    inner_max_iter: int = 200
    mode: str = "exact"
    batch_size: int = 1
    lipschitz: str = "mn"

    def __post_init__(self):
        if not (self.lam > 0 and self.inner_eps1 > 0 and self.inner_eps2 > 0):
            raise ValueError("lam and tolerances must be positive")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.lipschitz not in LIPSCHITZ_RULES:
            raise ValueError(f"lipschitz must be one of {LIPSCHITZ_RULES}")


@dataclass(frozen=True)
class InnerExit:
    """How one per-sample inner solve ended (exact mode)."""
    t: int
    n_iter: int
    converged: bool
    rel_change_w: float
    rel_change_b: float


@dataclass(frozen=True)
class OnlineStep:
    """Observer payload, sent after each sample or mini-batch."""
    t: int
    objective: float
    steps: int
    model: LinearMatrixModel


def _exact_update(stats, W, b, cfg, L):
    thresh = cfg.lam / L
    W_prev = W
    Z = W.copy()
    b_prev = b
    alpha = 1.0
    dw = db = math.inf
    k = 0
    while k < cfg.inner_max_iter:
        k += 1
        G = stats.surrogate_gradient(Z, b_prev)
        W_k = singular_value_threshold(Z - G / L, thresh)
        alpha_next = next_alpha(alpha)
        Z = W_k + ((alpha - 1.0) / alpha_next) * (W_k - W_prev)
        alpha = alpha_next
        b_k = stats.bias(W_k)
        dw, db = relative_changes(W_k, W_prev, b_k, b_prev)
        W_prev, b_prev = W_k, b_k
        if dw < cfg.inner_eps1 and db < cfg.inner_eps2:
            return W_prev, b_prev, InnerExit(stats.t, k, True, dw, db)
    return W_prev, b_prev, InnerExit(stats.t, k, False, dw, db)


def _inexact_update(stats, W, b, cfg, L):
    thresh = cfg.lam / L
    W1 = singular_value_threshold(W - stats.surrogate_gradient(W, b) / L, thresh)
    W2 = singular_value_threshold(W1 - stats.surrogate_gradient(W1, b) / L, thresh)
    return W2, stats.bias(W2)


def _batches(stream, size):
    it = iter(stream)
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        yield chunk


def online_fit(stream, cfg=None, hook=None, warm=None):
    """Train on an ordered stream of :class:`LabeledSample`.

    Parameters
    ----------
    stream : iterable of LabeledSample
        Consumed once, in order; shuffle beforehand if needed.
    cfg : OnlineConfig, optional
    hook : callable, optional
        Receives an :class:`OnlineStep` after every sample or mini-batch,
        with the objective evaluated from the running statistics.
    warm : LinearMatrixModel, optional
        Initial model; zeros otherwise.

    Returns
    -------
    LinearMatrixModel
        ``info.exits`` lists every inner solve in exact mode.
    """
    cfg = cfg or OnlineConfig()
    stats = None
    W = None
    b = 0.0
    exits = []
    steps = 0
    n_svd = 0
    offset = 0
    for batch in _batches(stream, cfg.batch_size):
        if stats is None:
            m, n = batch[0].X.shape
            stats = OnlineSufficientStats(m, n)
            if warm is not None:
                if warm.W.shape != (m, n):
                    raise DimensionError(
                        f"warm start has shape {warm.W.shape}, samples have {(m, n)}", index=0)
                W, b = np.array(warm.W, dtype=float), warm.b
            else:
                W = np.zeros((m, n))
        stats.update(batch, offset=offset)
        offset += len(batch)
        L = stats.lipschitz(cfg.lipschitz)
        if L == 0:
            # Only zero matrices so far: the W-subproblem is flat.
            b = stats.bias(W)
        elif cfg.mode == "exact":
            W, b, ex = _exact_update(stats, W, b, cfg, L)
            exits.append(ex)
            steps += ex.n_iter
            n_svd += ex.n_iter
        else:
            W, b = _inexact_update(stats, W, b, cfg, L)
            steps += 2
            n_svd += 2
        if hook is not None:
            model = LinearMatrixModel(W=W, b=b, lam=cfg.lam)
            hook(OnlineStep(t=stats.t, objective=stats.objective(W, b, cfg.lam),
                            steps=steps, model=model))
    if stats is None:
        raise ValueError("empty stream")
    last = exits[-1] if exits else None
    info = FitInfo(
        converged=all(e.converged for e in exits),
        n_iter=steps,
        rel_change_w=last.rel_change_w if last else math.nan,
        rel_change_b=last.rel_change_b if last else math.nan,
        n_svd=n_svd,
        exits=tuple(exits),
    )
    return LinearMatrixModel(W=W, b=b, lam=cfg.lam, info=info)

