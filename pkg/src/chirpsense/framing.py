"""Preprocessor: cut an IQ stream into B x M batches of signal blocks."""

from __future__ import annotations

from typing import Iterator

import numpy as np

DEFAULT_BLOCK_LEN = 65_600


def frame_stream(stream, m: int = DEFAULT_BLOCK_LEN, b: int = 1, pad_policy: str = "zero-pad") -> list[np.ndarray]:
    """Split ``stream`` into consecutive non-overlapping rows of ``m`` samples.

    Rows are grouped ``b`` at a time into ``(rows, m)`` matrices; the last
    matrix may hold fewer than ``b`` rows. A trailing partial row is
    zero-padded (``pad_policy="zero-pad"``) or discarded (``"drop"``).
    """
    if m <= 0 or b <= 0:
        raise ValueError(f"block length and batch size must be positive (m={m}, b={b})")
    if pad_policy not in ("zero-pad", "drop"):
        raise ValueError(f"unknown pad policy {pad_policy!r}")
    stream = np.asarray(stream).reshape(-1)
    n_full, tail = divmod(stream.size, m)
    rows = stream[:n_full * m].reshape(n_full, m)
    if tail and pad_policy == "zero-pad":
        last = np.zeros((1, m), dtype=stream.dtype)
        last[0, :tail] = stream[n_full * m:]
        rows = np.concatenate([rows, last])
    return [rows[i:i + b] for i in range(0, len(rows), b)]


class StreamFramer:
    """Incremental framer for a stream arriving in chunks.

    Keeps the incomplete tail between calls to :meth:`push`; single consumer.
    """

    def __init__(self, m: int = DEFAULT_BLOCK_LEN, b: int = 1):
        if m <= 0 or b <= 0:
            raise ValueError(f"block length and batch size must be positive (m={m}, b={b})")
        self.m = m
        self.b = b
        self._carry = np.zeros(0, dtype=np.complex64)
        self._rows: list[np.ndarray] = []

    def push(self, chunk) -> Iterator[np.ndarray]:
        """Feed samples; yields every completed ``b x m`` batch."""
        data = np.concatenate([self._carry, np.asarray(chunk).reshape(-1)])
        n_full = data.size // self.m
        self._rows.extend(data[:n_full * self.m].reshape(n_full, self.m))
        self._carry = data[n_full * self.m:]
        while len(self._rows) >= self.b:
            batch, self._rows = self._rows[:self.b], self._rows[self.b:]
            yield np.stack(batch)

    def flush(self, pad_policy: str = "drop") -> list[np.ndarray]:
        tail = self._carry
        self._carry = tail[:0]
        remaining = np.concatenate(self._rows + [tail]) if self._rows else tail
        self._rows = []
        if remaining.size == 0:
            return []
        return frame_stream(remaining, self.m, self.b, pad_policy)
