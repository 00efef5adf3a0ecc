"""CSS chirp synthesis and dechirp/FFT demodulation.

IQ buffers are plain 1-D complex numpy arrays; the sampling rate travels
with the :class:`~chirpsense.config.LoRaConfig` that produced them.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .config import LoRaConfig


class SymbolError(ValueError):
    pass


def samples_per_symbol(cfg: LoRaConfig) -> int:
    return cfg.samples_per_symbol


def _check_symbols(cfg: LoRaConfig, symbols: np.ndarray) -> None:
    if symbols.size and (symbols.min() < 0 or symbols.max() >= cfg.n_levels):
        bad = symbols[(symbols < 0) | (symbols >= cfg.n_levels)][0]
        raise SymbolError(f"symbol {bad} out of range [0, {cfg.n_levels - 1}] for SF{cfg.sf}")


def _chirp_rows(cfg: LoRaConfig, symbols: np.ndarray) -> np.ndarray:
    # one row per symbol; frequency ramp wraps modulo 2**sf levels and the
    # phase is the running sum of the per-sample frequency (reset per symbol)
    n = cfg.samples_per_symbol
    k = np.arange(n)
    levels = np.mod(symbols[:, None] + k[None, :] * (cfg.bw / cfg.fs), cfg.n_levels)
    freq = levels * (cfg.bw / cfg.n_levels) - cfg.bw / 2
    phase = np.zeros(freq.shape)
    np.cumsum(2 * np.pi * freq[:, :-1] / cfg.fs, axis=1, out=phase[:, 1:])
    return np.exp(1j * phase) / np.sqrt(cfg.n_levels)


def modulate_symbol(cfg: LoRaConfig, symbol: int, polarity: str = "up") -> np.ndarray:
    """Synthesize one chirp of ``samples_per_symbol(cfg)`` samples.

    The instantaneous frequency starts at level ``symbol``, ramps at
    ``bw**2 / 2**sf`` Hz/s and wraps once from +bw/2 to -bw/2. Every
    sample has magnitude ``2**(-sf/2)``. A down-chirp is the conjugate of
    the up-chirp carrying the same symbol.
    """
    if polarity not in ("up", "down"):
        raise ValueError(f"polarity must be 'up' or 'down', got {polarity!r}")
    symbols = np.array([symbol], dtype=np.int64)
    _check_symbols(cfg, symbols)
    chirp = _chirp_rows(cfg, symbols)[0]
    return chirp if polarity == "up" else chirp.conj()


def modulate_stream(cfg: LoRaConfig, symbols: Sequence[int]) -> np.ndarray:
    """Concatenate up-chirps for ``symbols`` with no inter-symbol gap."""
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    _check_symbols(cfg, symbols)
    if symbols.size == 0:
        return np.zeros(0, dtype=complex)
    # identical symbols share one synthesized row so repeats are bit-exact
    unique, inverse = np.unique(symbols, return_inverse=True)
    rows = _chirp_rows(cfg, unique)
    return rows[inverse].reshape(-1)


def base_upchirp(cfg: LoRaConfig) -> np.ndarray:
    return modulate_symbol(cfg, 0, "up")


def base_downchirp(cfg: LoRaConfig) -> np.ndarray:
    return modulate_symbol(cfg, 0, "down")


def dechirp_spectrum(cfg: LoRaConfig, window: np.ndarray) -> np.ndarray:
    """Folded magnitude spectrum of a dechirped window, one bin per symbol.

    The full ``samples_per_symbol``-point FFT of ``window * downchirp`` is
    folded onto ``2**sf`` bins by summing the magnitudes of the
    ``fs/bw`` aliased images of each bin.
    """
    window = np.asarray(window)
    n = cfg.samples_per_symbol
    if window.shape[-1] != n:
        raise SymbolError(f"window has {window.shape[-1]} samples, expected {n} for {cfg}")
    spectrum = np.abs(np.fft.fft(window * base_downchirp(cfg), axis=-1))
    folded = spectrum.reshape(*spectrum.shape[:-1], cfg.oversampling, cfg.n_levels)
    return folded.sum(axis=-2)


def demodulate_symbol(cfg: LoRaConfig, window: np.ndarray) -> tuple[int, float]:
    """Return ``(symbol, peak_magnitude)``; ties go to the lowest bin."""
    folded = dechirp_spectrum(cfg, window)
    symbol = int(np.argmax(folded))
    return symbol, float(folded[symbol])


def demodulate_stream(cfg: LoRaConfig, x: np.ndarray, offset: int = 0) -> list[int]:
    """Demodulate every full symbol window starting at ``offset``.

    A trailing partial window is discarded.
    """
    x = np.asarray(x)
    if offset < 0 or offset >= len(x):
        raise SymbolError(f"offset {offset} outside buffer of {len(x)} samples")
    n = cfg.samples_per_symbol
    count = (len(x) - offset) // n
    if count == 0:
        return []
    windows = x[offset:offset + count * n].reshape(count, n)
    return np.argmax(dechirp_spectrum(cfg, windows), axis=-1).tolist()
