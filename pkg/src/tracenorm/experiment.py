"""Training dispatch, feature pipeline and the corruption robustness sweep."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import audio
from .classifier import ApgConfig, LabeledSample, SampleSet, accuracy, apg_fit, objective
from .online import OnlineConfig, online_fit
from .rpca import RpcaConfig, rpca_ialm

logger = logging.getLogger(__name__)

# trainer name -> (online mode or None for batch, uses mini-batches)
TRAINERS = {
    "apg": (None, False),
    "ol_apg": ("exact", False),
    "ol_iapg": ("inexact", False),
    "ol_apg_batch": ("exact", True),
    "ol_iapg_batch": ("inexact", True),
}

CONDITIONS = (
    ("clean", "none", 0.0),
    ("wgn_5db", "wgn", 5.0),
    ("wgn_0db", "wgn", 0.0),
    ("wgn_-5db", "wgn", -5.0),
    ("le_10", "le", 0.10),
    ("le_30", "le", 0.30),
    ("le_50", "le", 0.50),
)
FEATURE_MODES = ("plain", "rpca")


@dataclass(frozen=True)
class Corruption:
    kind: str = "none"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "wgn", "le"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.kind == "le" and not 0 < self.value <= 1:
            raise ValueError("large-error fraction must lie in (0, 1]")

    def apply(self, M, seed):
        if self.kind == "wgn":
            return audio.add_wgn(M, self.value, seed)
        if self.kind == "le":
            return audio.add_large_errors(M, self.value, seed)
        return np.array(M, dtype=float)


@dataclass(frozen=True)
class ExperimentConfig:
    trainer: str = "apg"
    lam: float = 1.0
    eps1: float = 1e-8
    eps2: float = 1e-8
    max_iter: int = 2000
    inner_max_iter: int = 200
    batch_size: int = 10
    lipschitz: str = "mn"
    corruption: Corruption = field(default_factory=Corruption)
    corruption_domain: str = "raw"
    use_rpca: bool = False
    rpca_lam: float = None
    seed: int = 0

    def __post_init__(self):
        if self.trainer not in TRAINERS:
            raise ValueError(f"trainer must be one of {sorted(TRAINERS)}")
        if self.corruption_domain not in ("raw", "feature"):
            raise ValueError("corruption_domain must be raw or feature")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def apg_config(self):
        return ApgConfig(lam=self.lam, eps1=self.eps1, eps2=self.eps2,
                         max_iter=self.max_iter, lipschitz=self.lipschitz)

    def online_config(self):
        mode, batched = TRAINERS[self.trainer]
        return OnlineConfig(lam=self.lam, inner_eps1=self.eps1, inner_eps2=self.eps2,
                            inner_max_iter=self.inner_max_iter, mode=mode,
                            batch_size=self.batch_size if batched else 1,
                            lipschitz=self.lipschitz)


def entry_seed(seed, *keys):
    """Independent, reproducible integer seed for one (condition, entry) pair."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _low_rank(M, lam):
    return rpca_ialm(M, RpcaConfig(lam=lam)).A


def make_feature(raw, sample_rate, cfg, seed):
    """Feature matrix for one loaded entry.

    ``sample_rate`` is None for matrix entries: the matrix itself is the
    feature. Audio is normalized, framed into 50 rows and MFCC'd; the
    corruption lands on the frame matrix (``raw`` domain) or on the MFCC
    matrix (``feature`` domain), and robust PCA follows the corruption.
    """
    if sample_rate is None:
        M = cfg.corruption.apply(raw, seed)
        return _low_rank(M, cfg.rpca_lam) if cfg.use_rpca else M
    F = audio.frame_segment(audio.normalize(raw), audio.frame_length(sample_rate),
                            audio.FRAMES_PER_MATRIX)
    if cfg.corruption_domain == "raw":
        F = cfg.corruption.apply(F, seed)
        if cfg.use_rpca:
            F = _low_rank(F, cfg.rpca_lam)
        return audio.mfcc_rows(F, sample_rate)
    X = cfg.corruption.apply(audio.mfcc_rows(F, sample_rate), seed)
    return _low_rank(X, cfg.rpca_lam) if cfg.use_rpca else X


def shuffled(samples, seed):
    """Seeded Fisher-Yates permutation (numpy's ``permutation``)."""
    order = np.random.default_rng(seed).permutation(len(samples))
    return [samples[i] for i in order]


@dataclass(frozen=True)
class TraceRow:
    t: int
    wall_seconds: float
    objective: float
    test_accuracy: float


def train(samples, cfg, test=None, trace=None):
    """Fit a model with the configured trainer.

    If ``trace`` is a list, one :class:`TraceRow` is appended per batch
    iteration (``apg``) or per processed sample/mini-batch (online), with
    the objective over the full training set.
    """
    train_set = SampleSet(samples)
    test_set = SampleSet(test) if test else None
    start = time.perf_counter()
    paused = 0.0

    def record(t, model):
        nonlocal paused
        if trace is None:
            return
        t0 = time.perf_counter()
        acc = accuracy(model, test_set) if test_set is not None else float("nan")
        trace.append(TraceRow(t, t0 - start - paused, objective(train_set, model), acc))
        paused += time.perf_counter() - t0

    mode, _ = TRAINERS[cfg.trainer]
    if mode is None:
        from .classifier import LinearMatrixModel

        def cb(k, W, b):
            record(k, LinearMatrixModel(W=W, b=b, lam=cfg.lam))

        return apg_fit(train_set, cfg.apg_config(), callback=cb if trace is not None else None)
    stream = shuffled(list(samples), cfg.seed)
    hook = (lambda step: record(step.t, step.model)) if trace is not None else None
    return online_fit(stream, cfg.online_config(), hook=hook)


@dataclass(frozen=True)
class RobustnessRow:
    condition: str
    feature_mode: str
    accuracy: float
    train_seconds: float
    status: str = "ok"


def _featurize(items, cfg, cond_index, offset):
    out = []
    for i, (raw, rate, label) in enumerate(items):
        X = make_feature(raw, rate, cfg, entry_seed(cfg.seed, cond_index, offset + i))
        out.append(LabeledSample(X, label))
    return out


def _run_condition(args):
    cond_index, train_items, test_items, base = args
    name, kind, value = CONDITIONS[cond_index]
    rows = []
    for mode in FEATURE_MODES:
        cfg = replace(base, corruption=Corruption(kind, value), use_rpca=(mode == "rpca"))
        try:
            tr = _featurize(train_items, cfg, cond_index, 0)
            te = _featurize(test_items, cfg, cond_index, len(train_items))
            t0 = time.perf_counter()
            model = train(tr, cfg)
            secs = time.perf_counter() - t0
            rows.append(RobustnessRow(name, mode, accuracy(model, te), secs))
        except (ValueError, ArithmeticError) as exc:
            logger.error("cell %s/%s failed: %s", name, mode, exc)
            rows.append(RobustnessRow(name, mode, float("nan"), float("nan"), f"failed: {exc}"))
    return rows


def robustness_sweep(train_items, test_items, base, conditions=None, jobs=1):
    """Accuracy of plain vs robust-PCA features under each corruption.

    ``train_items``/``test_items`` are ``(raw, sample_rate, label)`` tuples
    as produced by the loaders. Both splits are corrupted. Cells are
    independent; with ``jobs > 1`` they run in worker processes and are
    gathered in condition order.
    """
    if not train_items or not test_items:
        raise ValueError("robustness sweep needs train and test entries")
    names = [c[0] for c in CONDITIONS]
    wanted = names if conditions is None else list(conditions)
    unknown = set(wanted) - set(names)
    if unknown:
        raise ValueError(f"unknown conditions {sorted(unknown)}")
    tasks = [(names.index(n), train_items, test_items, base) for n in wanted]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_condition, tasks))
    else:
        results = [_run_condition(t) for t in tasks]
    return [row for rows in results for row in rows]
