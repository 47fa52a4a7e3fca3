"""Synthetic two-class data: low-rank class templates plus Gaussian noise."""

from dataclasses import dataclass

import numpy as np

from .classifier import LabeledSample


@dataclass(frozen=True)
class SynthParams:
    m: int = 20
    n: int = 32
    rank: int = 2
    n_train: int = 40
    n_test: int = 40
    jitter: float = 0.3
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("matrix dimensions must be positive")
        if not 1 <= self.rank <= min(self.m, self.n):
            raise ValueError("rank must lie in [1, min(m, n)]")
        if self.n_train < 2 or self.n_test < 0:
            raise ValueError("need n_train >= 2 and n_test >= 0")
        if self.jitter < 0 or self.noise < 0:
            raise ValueError("jitter and noise must be non-negative")


@dataclass(frozen=True)
class SynthDataset:
    train: list
    test: list
    clean_train: list
    clean_test: list


def _class_factors(rng, m, n, r):
    U = rng.standard_normal((m, r))
    V = rng.standard_normal((n, r)) / np.sqrt(r)
    return U, V


def generate(params):
    """Draw a balanced two-class dataset.

    Class ``c`` owns factors ``U_c`` (m x r) and ``V_c`` (n x r); a clean
    sample is ``U_c (I + jitter * C) V_c^T`` with ``C`` standard normal
    r x r, so it has rank ``r``. Observed samples add i.i.d.
    ``N(0, noise^2)`` entries. Labels alternate ``+1, -1``.
    """
    p = params
    rng = np.random.default_rng(p.seed)
    factors = {1.0: _class_factors(rng, p.m, p.n, p.rank),
               -1.0: _class_factors(rng, p.m, p.n, p.rank)}

    def draw(count):
        clean, noisy = [], []
        for i in range(count):
            y = 1.0 if i % 2 == 0 else -1.0
            U, V = factors[y]
            core = np.eye(p.rank) + p.jitter * rng.standard_normal((p.rank, p.rank))
            X = U @ core @ V.T
            clean.append(LabeledSample(X, y))
            noisy.append(LabeledSample(X + p.noise * rng.standard_normal(X.shape), y))
        return clean, noisy

    clean_train, train = draw(p.n_train)
    clean_test, test = draw(p.n_test)
    return SynthDataset(train=train, test=test, clean_train=clean_train, clean_test=clean_test)
