"""Instantaneous-frequency features from an STFT of each signal block.

Each block of M complex samples becomes a vector of T = (M - w) // hop + 1
power-weighted mean frequencies in Hz, one per STFT frame. With the default
M = 65,600, w = 128 and hop = 64 that is 1024 values, the classifier input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from .config import DEFAULT_FS
from .validation import check_blocks

WINDOW_LEN = 128
HOP_LEN = 64
POWER_FLOOR = 1e-30

# rows per vectorized chunk in extract_features; bounds peak memory
_CHUNK = 32


def hann_window(w: int) -> np.ndarray:
    """Symmetric Hann window ``0.5 * (1 - cos(2 pi n / (w - 1)))``."""
    if w < 2:
        raise ValueError(f"Hann window needs at least 2 points, got {w}")
    return np.hanning(w)


def n_frames(m: int, w: int = WINDOW_LEN, hop: int = HOP_LEN) -> int:
    return (m - w) // hop + 1


def bin_frequencies(w: int = WINDOW_LEN, fs: float = DEFAULT_FS) -> np.ndarray:
    """Centered bin frequencies ``(k - w/2) * fs / w`` matching :func:`stft` rows."""
    return (np.arange(w) - w // 2) * (fs / w)


@dataclass
class StftGrid:
    """Centered STFT: ``coefficients[k, m]`` is bin ``k`` (frequency
    ``(k - w/2) fs / w``) of frame ``m``."""

    coefficients: np.ndarray
    w: int
    hop: int
    fs: float
    window: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return bin_frequencies(self.w, self.fs)

    @property
    def n_frames(self) -> int:
        return self.coefficients.shape[-1]


def _stft_frames(blocks: np.ndarray, window: np.ndarray, hop: int) -> np.ndarray:
    # (..., frames, w) centered spectra
    frames = sliding_window_view(blocks, window.size, axis=-1)[..., ::hop, :]
    spectra = np.fft.fft(frames * window, axis=-1)
    return np.fft.fftshift(spectra, axes=-1)


def stft(block, w: int = WINDOW_LEN, hop: int = HOP_LEN, fs: float = DEFAULT_FS) -> StftGrid:
    block = np.asarray(block).reshape(-1)
    if block.size < w:
        raise ValueError(f"block of {block.size} samples is shorter than the {w}-point window")
    window = hann_window(w)
    spectra = _stft_frames(block, window, hop)
    return StftGrid(spectra.T, w, hop, fs, window)


def _weighted_frequency(power: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    # power: (..., frames, w)
    total = power.sum(axis=-1)
    moment = power @ freqs
    safe = np.where(total < POWER_FLOOR, 1.0, total)
    return np.where(total < POWER_FLOOR, 0.0, moment / safe)


def instantaneous_frequency(grid: StftGrid) -> np.ndarray:
    """Power-weighted mean bin frequency of every frame, in Hz.

    Frames whose total power is below ``1e-30`` map to 0.
    """
    power = np.abs(grid.coefficients.T) ** 2
    return _weighted_frequency(power, grid.frequencies)


def extract_features(blocks, w: int = WINDOW_LEN, hop: int = HOP_LEN, fs: float = DEFAULT_FS) -> np.ndarray:
    """Row-wise STFT + instantaneous frequency of a ``(B, M)`` batch.

    Returns a ``(B, T)`` float array in Hz. Rows are computed independently,
    so results do not depend on the batch composition.
    """
    blocks = check_blocks(blocks, min_len=w)
    out = np.empty((blocks.shape[0], n_frames(blocks.shape[1], w, hop)))
    window = hann_window(w)
    freqs = bin_frequencies(w, fs)
    for start in range(0, blocks.shape[0], _CHUNK):
        spectra = _stft_frames(blocks[start:start + _CHUNK], window, hop)
        power = spectra.real ** 2 + spectra.imag ** 2
        out[start:start + _CHUNK] = _weighted_frequency(power, freqs)
    return out


def count_wraps(if_vector, bw: float) -> int:
    """Count sawtooth resets in an IF vector.

    A reset is a maximal run of consecutive decreasing values whose total
    descent exceeds ``bw / 4``. The STFT window smears each wrap of a chirp
    over one or two frames, so single-step drops understate it.
    """
    diffs = np.diff(np.asarray(if_vector, dtype=float))
    count = 0
    run = 0.0
    for d in diffs:
        if d < 0:
            run -= d
            continue
        if run > bw / 4:
            count += 1
        run = 0.0
    if run > bw / 4:
        count += 1
    return count


class IFTransformer(TransformerMixin, BaseEstimator):
    """Transform IQ blocks into instantaneous-frequency vectors.

    Parameters
    ----------
    window_len : int, default=128
        STFT window length in samples.
    hop : int, default=64
        STFT hop in samples.
    fs : float, default=1e6
        Sampling rate used to label the bins in Hz.

    Stateless: :meth:`fit` only records the input block length.
    """

    def __init__(self, window_len: int = WINDOW_LEN, hop: int = HOP_LEN, fs: float = DEFAULT_FS):
        self.window_len = window_len
        self.hop = hop
        self.fs = fs

    def fit(self, X, y=None):
        X = check_blocks(X, min_len=self.window_len)
        self.block_len_ = X.shape[1]
        self.n_features_out_ = n_frames(X.shape[1], self.window_len, self.hop)
        return self

    def transform(self, X):
        return extract_features(X, self.window_len, self.hop, self.fs)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


def write_feature_csv(path, features, labels=None) -> None:
    """One row per IF vector; a leading class-index column when labeled."""
    features = np.asarray(features, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, row in enumerate(features):
            values = [repr(float(v)) for v in row]
            writer.writerow(([int(labels[i])] if labels is not None else []) + values)


def read_feature_csv(path, labeled: bool = True):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not labeled:
        return np.array([[float(v) for v in r] for r in rows])
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    return np.array([[float(v) for v in r[1:]] for r in rows]), labels
