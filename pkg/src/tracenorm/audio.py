"""Audio segments to matrix features.

A segment is cut into non-overlapping frames stacked as rows; the frame
matrix is optionally replaced by its robust-PCA low-rank part, then every
row is turned into 12 cepstral coefficients plus log energy.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, rfft

from .linalg import as_matrix
from .rpca import RpcaConfig, rpca_ialm

SAMPLE_RATE = 8000
FRAME_SECONDS = 0.020
FRAMES_PER_MATRIX = 50
N_MEL = 26
N_CEPSTRA = 12
LOG_FLOOR = 1e-10
LE_SCALE = 5.0


def frame_length(sample_rate):
    """Samples in one 20 ms frame."""
    return int(round(FRAME_SECONDS * sample_rate))


def normalize(samples):
    """Shift and scale a signal to zero mean and unit variance."""
    x = np.asarray(samples, dtype=float)
    x = x - x.mean()
    sd = x.std()
    if sd == 0:
        raise ValueError("cannot normalize a constant signal")
    return x / sd


@dataclass(frozen=True)
class AudioSegment:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    @classmethod
    def from_raw(cls, samples, sample_rate=SAMPLE_RATE):
        return cls(normalize(samples), sample_rate)


def frame_segment(samples, frame_len, n_frames):
    """Rows are consecutive non-overlapping frames; the tail is dropped."""
    x = np.asarray(samples, dtype=float).ravel()
    need = frame_len * n_frames
    if frame_len < 1 or n_frames < 1:
        raise ValueError("frame_len and n_frames must be positive")
    if x.size < need:
        raise ValueError(f"segment has {x.size} samples, need {need}")
    return x[:need].reshape(n_frames, frame_len).copy()


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_band_edges(sample_rate, n_filters=N_MEL):
    """``n_filters + 2`` frequencies (Hz) equally spaced on the mel scale."""
    mels = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2)
    return mel_to_hz(mels)


def mel_filterbank(n_fft, sample_rate, n_filters=N_MEL):
    """Triangular filters, shape ``(n_filters, n_fft // 2 + 1)``.

    Triangles are evaluated at the exact bin frequencies, so narrow low
    bands never collapse onto a single bin index.
    """
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_band_edges(sample_rate, n_filters)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def _next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


def mel_energies(F, sample_rate):
    """Mel filterbank energies of each row, before the log."""
    F = as_matrix(F, "frame matrix")
    n = F.shape[1]
    if n < 32:
        raise ValueError("frames need at least 32 samples")
    n_fft = _next_pow2(n)
    spectrum = np.abs(rfft(F * np.hamming(n), n=n_fft, axis=1))
    return (spectrum ** 2) @ mel_filterbank(n_fft, sample_rate).T


def mfcc_rows(F, sample_rate=SAMPLE_RATE):
    """Per-row MFCCs: columns are c1..c12 followed by log frame energy."""
    F = as_matrix(F, "frame matrix")
    logmel = np.log(np.maximum(mel_energies(F, sample_rate), LOG_FLOOR))
    cep = dct(logmel, type=2, norm="ortho", axis=1)[:, 1:N_CEPSTRA + 1]
    energy = np.log(np.maximum(np.sum(F * F, axis=1), LOG_FLOOR))
    return np.column_stack([cep, energy])


def add_wgn(M, snr_db, seed):
    """Add white Gaussian noise at ``snr_db`` relative to the mean entry power."""
    M = as_matrix(M)
    power = float(np.mean(M * M))
    if power == 0:
        raise ValueError("SNR is undefined for the zero matrix")
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return M + sigma * rng.standard_normal(M.shape)


def add_large_errors(M, fraction, seed):
    """Overwrite ``round(fraction * M.size)`` random entries with values
    uniform on ``[-5 s, 5 s]``, ``s = max |M|``."""
    M = as_matrix(M)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    k = int(round(fraction * M.size))
    out = M.copy()
    if k == 0:
        return out
    rng = np.random.default_rng(seed)
    pos = rng.choice(M.size, size=k, replace=False)
    s = float(np.max(np.abs(M)))
    out.flat[pos] = rng.uniform(-LE_SCALE * s, LE_SCALE * s, size=k)
    return out


def low_rank_part(F, rpca_cfg=None):
    return rpca_ialm(F, rpca_cfg or RpcaConfig()).A


def extract_feature(segment, use_rpca=False, rpca_cfg=None, n_frames=FRAMES_PER_MATRIX):
    """Frame, optionally clean with robust PCA, then MFCC each row."""
    F = frame_segment(segment.samples, frame_length(segment.sample_rate), n_frames)
    if use_rpca:
        F = low_rank_part(F, rpca_cfg)
    return mfcc_rows(F, segment.sample_rate)
