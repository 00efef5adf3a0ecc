"""LoRa PHY configurations and the 18-way class encoding."""

from __future__ import annotations

from dataclasses import dataclass

BANDWIDTHS = (125_000, 250_000, 500_000)
SPREADING_FACTORS = (7, 8, 9, 10, 11, 12)
N_CLASSES = len(BANDWIDTHS) * len(SPREADING_FACTORS)
DEFAULT_FS = 1_000_000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class LoRaConfig:
    """A (bandwidth, spreading factor) pair sampled at ``fs``.

    Parameters
    ----------
    bw : int
        Chirp bandwidth in Hz, one of 125, 250 or 500 kHz.
    sf : int
        Spreading factor, 7 to 12.
    fs : int
        Complex sampling rate in Hz. Must be an integer multiple of ``bw``
        and at least twice the widest LoRa bandwidth.
    """

    bw: int
    sf: int
    fs: int = DEFAULT_FS

    def __post_init__(self):
        if self.bw not in BANDWIDTHS:
            raise ConfigError(f"bandwidth {self.bw} Hz not in {BANDWIDTHS}")
        if self.sf not in SPREADING_FACTORS:
            raise ConfigError(f"spreading factor {self.sf} not in {SPREADING_FACTORS}")
        if self.fs < 2 * max(BANDWIDTHS) or self.fs % self.bw:
            raise ConfigError(
                f"sampling rate {self.fs} Hz must be >= {2 * max(BANDWIDTHS)} "
                f"and a multiple of bw={self.bw}"
            )

    @property
    def n_levels(self) -> int:
        """Number of symbol values, 2**sf."""
        return 1 << self.sf

    @property
    def oversampling(self) -> int:
        return self.fs // self.bw

    @property
    def samples_per_symbol(self) -> int:
        return self.n_levels * self.oversampling

    @property
    def symbol_duration(self) -> float:
        """Chirp duration in seconds (2**sf / bw)."""
        return self.n_levels / self.bw

    @property
    def step_duration(self) -> float:
        return 1.0 / self.bw

    @property
    def class_index(self) -> int:
        return 6 * BANDWIDTHS.index(self.bw) + SPREADING_FACTORS.index(self.sf)

    @classmethod
    def from_class_index(cls, index: int, fs: int = DEFAULT_FS) -> "LoRaConfig":
        index = int(index)
        if not 0 <= index < N_CLASSES:
            raise ConfigError(f"class index {index} outside [0, {N_CLASSES - 1}]")
        bw_index, sf_index = divmod(index, len(SPREADING_FACTORS))
        return cls(BANDWIDTHS[bw_index], SPREADING_FACTORS[sf_index], fs)

    def __str__(self):
        return f"BW{self.bw // 1000}k/SF{self.sf}"


def all_configs(fs: int = DEFAULT_FS) -> list[LoRaConfig]:
    """The 18 LoRaWAN configurations in class-index order."""
    return [LoRaConfig.from_class_index(i, fs) for i in range(N_CLASSES)]
