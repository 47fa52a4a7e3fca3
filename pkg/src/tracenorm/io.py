"""Plain-text formats: matrices, models, manifests and 16-bit PCM WAV."""

import csv
import os
import wave
from dataclasses import dataclass

import numpy as np

from .errors import FormatError


def format_float(x):
    """17 significant digits: enough to round-trip any double."""
    return "%.17g" % x


def write_matrix(path, M):
    M = np.asarray(M, dtype=float)
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(format_float(v) for v in row) for row in M]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def parse_matrix(lines, source="<matrix>"):
    """Parse ``"m n"`` followed by ``m`` rows of ``n`` numbers."""
    rows = [ln.split() for ln in lines if ln.strip()]
    if not rows:
        raise FormatError(f"{source}: empty matrix file")
    try:
        m, n = (int(v) for v in rows[0])
    except ValueError:
        raise FormatError(f"{source}: header must be two integers 'm n'") from None
    if m < 1 or n < 1:
        raise FormatError(f"{source}: dimensions must be positive")
    body = rows[1:]
    if len(body) != m:
        raise FormatError(f"{source}: expected {m} rows, found {len(body)}")
    try:
        M = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    if any(len(row) != n for row in body):
        raise FormatError(f"{source}: every row must have {n} values")
    if not np.all(np.isfinite(M)):
        raise FormatError(f"{source}: non-finite entry")
    return M.reshape(m, n)


def read_matrix(path):
    with open(path) as f:
        return parse_matrix(f.read().splitlines(), source=str(path))


def write_model(path, model):
    W = np.asarray(model.W)
    lines = [f"W {W.shape[0]} {W.shape[1]}"]
    lines += [" ".join(format_float(v) for v in row) for row in W]
    lines.append(f"b {format_float(model.b)}")
    lines.append(f"lambda {format_float(model.lam)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_model(path):
    from .classifier import LinearMatrixModel

    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("W "):
        raise FormatError(f"{path}: model file must start with 'W m n'")
    header = lines[0].split()
    try:
        m = int(header[1])
    except (IndexError, ValueError):
        raise FormatError(f"{path}: bad model header") from None
    W = parse_matrix([" ".join(header[1:])] + lines[1:1 + m], source=str(path))
    fields = {}
    for ln in lines[1 + m:]:
        key, _, value = ln.partition(" ")
        fields[key] = value
    try:
        b = float(fields["b"])
        lam = float(fields["lambda"])
    except (KeyError, ValueError):
        raise FormatError(f"{path}: model needs 'b <value>' and 'lambda <value>' lines") from None
    return LinearMatrixModel(W=W, b=b, lam=lam)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: float
    split: str


def read_manifest(path):
    """Read a ``path,label,split`` CSV; relative paths resolve against its directory."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"path", "label", "split"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: manifest header must be path,label,split")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = float(row["label"])
            except (TypeError, ValueError):
                raise FormatError(f"{path}:{lineno}: bad label {row['label']!r}") from None
            if label not in (-1.0, 1.0):
                raise FormatError(f"{path}:{lineno}: label must be -1 or +1")
            split = (row["split"] or "").strip()
            if split not in ("train", "test"):
                raise FormatError(f"{path}:{lineno}: split must be train or test")
            p = row["path"].strip()
            if not os.path.isabs(p):
                p = os.path.join(base, p)
            entries.append(ManifestEntry(p, label, split))
    return entries


def write_manifest(path, rows):
    """``rows`` are ``(path, label, split)`` tuples; paths written as given."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for p, label, split in rows:
            w.writerow([p, int(label), split])


def read_wav(path):
    """Read mono 16-bit PCM; returns ``(samples in [-1, 1), sample_rate)``."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise FormatError(f"{path}: only mono WAV is supported")
            if w.getsampwidth() != 2:
                raise FormatError(f"{path}: only 16-bit PCM is supported")
            if w.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed WAV is not supported")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    return samples, rate


def write_wav(path, samples, sample_rate):
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())


def read_sample_matrix(path):
    """Load a manifest entry: ``.wav`` gives a 1-D signal, anything else a matrix."""
    if str(path).lower().endswith(".wav"):
        return read_wav(path)
    return read_matrix(path), None
