"""Chirp generator for the three jamming strategies, plus the simulated
reactive jammer: observe -> infer (BW, SF) -> emit jamming chirps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .channel import add_awgn, make_rng, measure_power, mix
from .classifier import MlpModel, classify
from .config import LoRaConfig
from .features import HOP_LEN, WINDOW_LEN, extract_features
from .framing import frame_stream
from .modem import base_downchirp, demodulate_stream, modulate_stream

STRATEGIES = ("identical_chirps", "consecutive_downchirps", "synchronized_chirps")


@dataclass(frozen=True)
class JamStrategy:
    """How the chirp generator fills the jamming buffer.

    ``fixed_symbol`` is used by identical_chirps; ``symbol_seed`` and
    ``sync_offset`` by synchronized_chirps. ``sync_offset`` places the
    first chirp boundary that many samples into the buffer; 0 models a
    jammer perfectly aligned with the receiver's demodulation windows.
    """

    kind: str = "synchronized_chirps"
    fixed_symbol: int = 0
    symbol_seed: int = 0
    sync_offset: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown jamming strategy {self.kind!r}; choose from {STRATEGIES}")
        if self.sync_offset < 0:
            raise ValueError("sync_offset must be non-negative")
        if self.fixed_symbol < 0:
            raise ValueError("fixed_symbol must be non-negative")


def generate_jam(cfg: LoRaConfig, strategy: JamStrategy, n_symbols: int) -> np.ndarray:
    """``n_symbols`` chirps of jamming signal at ``cfg``."""
    if n_symbols < 1:
        raise ValueError(f"n_symbols must be >= 1, got {n_symbols}")
    if strategy.kind == "identical_chirps":
        if strategy.fixed_symbol >= cfg.n_levels:
            raise ValueError(f"fixed_symbol {strategy.fixed_symbol} invalid for SF{cfg.sf}")
        return modulate_stream(cfg, [strategy.fixed_symbol] * n_symbols)
    if strategy.kind == "consecutive_downchirps":
        return np.tile(base_downchirp(cfg), n_symbols)
    n = cfg.samples_per_symbol
    shift = (n - strategy.sync_offset % n) % n
    rng = make_rng(strategy.symbol_seed)
    symbols = rng.integers(0, cfg.n_levels, n_symbols + (1 if shift else 0))
    return modulate_stream(cfg, symbols)[shift:shift + n_symbols * n]


@dataclass(frozen=True)
class SymbolErrorReport:
    sent: int
    errors: int
    config: str = ""
    strategy: str = ""
    gain_db: float = 0.0
    delay: int = 0
    snr_db: float = 0.0

    @property
    def ser(self) -> float:
        return self.errors / self.sent if self.sent else 0.0

    CSV_FIELDS = ("config", "strategy", "gain_db", "delay", "snr_db", "sent", "errors", "ser")

    def as_row(self) -> dict:
        return {"config": self.config, "strategy": self.strategy, "gain_db": self.gain_db,
                "delay": self.delay, "snr_db": self.snr_db, "sent": self.sent,
                "errors": self.errors, "ser": f"{self.ser:.6f}"}


def write_ser_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SymbolErrorReport.CSV_FIELDS)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.as_row())


def jam_effectiveness(cfg: LoRaConfig, target_symbols, strategy: JamStrategy, jam_gain_db: float,
                      jam_delay: int, snr_db: float, seed: int,
                      jam_cfg: LoRaConfig | None = None) -> SymbolErrorReport:
    """Symbol error rate of a target stream under jamming plus AWGN.

    The jammer (at ``jam_cfg``, default the target's own config) covers the
    target from ``jam_delay`` to its end. Noise is calibrated against the
    clean target's power; demodulation uses the target's windows.
    """
    target_symbols = np.asarray(target_symbols, dtype=np.int64)
    if target_symbols.size == 0:
        raise ValueError("target_symbols must be non-empty")
    jam_cfg = jam_cfg or cfg
    x = modulate_stream(cfg, target_symbols)
    span = len(x) - jam_delay
    rx = x
    if span > 0:
        n_jam = math.ceil(span / jam_cfg.samples_per_symbol)
        jam = generate_jam(jam_cfg, strategy, n_jam)[:span]
        rx = mix(x, jam, jam_gain_db, jam_delay)[:len(x)]
    rx = add_awgn(rx, snr_db, seed, reference_power=measure_power(x))
    decoded = np.asarray(demodulate_stream(cfg, rx, 0))
    errors = int(np.count_nonzero(decoded != target_symbols))
    label = str(jam_cfg) if jam_cfg == cfg else f"{cfg}<-{jam_cfg}"
    return SymbolErrorReport(len(target_symbols), errors, label, strategy.kind, jam_gain_db, jam_delay, snr_db)


@dataclass
class PipelineResult:
    config: LoRaConfig
    confidence: float
    jam: np.ndarray
    probabilities: np.ndarray


def model_block_len(model: MlpModel, w: int = WINDOW_LEN, hop: int = HOP_LEN) -> int:
    """Block length M whose STFT yields exactly ``model.n_inputs`` frames."""
    return (model.n_inputs - 1) * hop + w


def reactive_pipeline(observed, model: MlpModel, strategy="synchronized_chirps", n_symbols: int = 8,
                      fs: int | None = None) -> PipelineResult:
    """Frame the first block of ``observed``, classify it and jam at the inferred config."""
    observed = np.asarray(observed)
    m = model_block_len(model)
    if observed.size < m:
        raise ValueError(f"observation of {observed.size} samples is shorter than one {m}-sample block")
    if isinstance(strategy, str):
        strategy = JamStrategy(strategy)
    fs = fs or int(round(2 * model.norm_constant))
    block = frame_stream(observed[:m], m, 1, "drop")[0]
    features = extract_features(block, fs=fs)
    cls, probs = classify(model, features[0])
    cfg = LoRaConfig.from_class_index(cls, fs)
    return PipelineResult(cfg, float(probs[cls]), generate_jam(cfg, strategy, n_symbols), probs)
