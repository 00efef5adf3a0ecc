"""Channel impairments: calibrated AWGN and jammer superposition."""

from __future__ import annotations

import numpy as np

# Every random draw in the package goes through this bit generator so that
# corpora regenerate identically across platforms.
RNG_ALGORITHM = "numpy.random.PCG64"


def make_rng(*seed) -> np.random.Generator:
    """Seeded generator; several integers are mixed through a SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(s) for s in seed])))


def measure_power(x) -> float:
    """Mean ``|x|**2`` of a non-empty buffer."""
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("cannot measure the power of an empty buffer")
    return float(np.mean(x.real ** 2 + x.imag ** 2))


def add_awgn(x, snr_db: float, seed: int, reference_power: float | None = None) -> np.ndarray:
    """Return ``x + z`` with circular complex Gaussian ``z``.

    The noise power is ``P / 10**(snr_db / 10)`` where ``P`` is the measured
    power of ``x`` (or ``reference_power`` when the SNR must be calibrated
    against a different signal, e.g. the target under a jammer).
    """
    x = np.asarray(x)
    power = measure_power(x) if reference_power is None else float(reference_power)
    if not power > 0:
        raise ValueError("AWGN calibration needs a signal with positive power")
    sigma2 = power / 10 ** (snr_db / 10)
    rng = make_rng(seed)
    noise = rng.standard_normal((2, x.size)) * np.sqrt(sigma2 / 2)
    return x + (noise[0] + 1j * noise[1])


def mix(x, j, gain_db: float, delay: int = 0) -> np.ndarray:
    """Superimpose ``j`` scaled by ``gain_db`` and shifted by ``delay`` samples on ``x``."""
    if delay < 0:
        raise ValueError(f"delay must be non-negative, got {delay}")
    x = np.asarray(x)
    j = np.asarray(j)
    out = np.zeros(max(len(x), delay + len(j)), dtype=np.result_type(x, j, complex))
    out[:len(x)] = x
    out[delay:delay + len(j)] += j * 10 ** (gain_db / 20)
    return out
