"""Input checks shared by the estimators.

sklearn's ``check_array`` rejects complex input, so IQ blocks get their own
validator here.
"""

from __future__ import annotations

import numpy as np


def check_blocks(X, min_len: int = 1) -> np.ndarray:
    """Coerce ``X`` to a 2-D complex array of finite IQ blocks."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array of IQ blocks, got shape {X.shape}")
    if not (np.issubdtype(X.dtype, np.complexfloating) or np.issubdtype(X.dtype, np.floating)
            or np.issubdtype(X.dtype, np.integer)):
        raise TypeError(f"IQ blocks must be numeric, got dtype {X.dtype}")
    if X.shape[0] and X.shape[1] < min_len:
        raise ValueError(f"blocks of {X.shape[1]} samples are shorter than the required {min_len}")
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError("IQ blocks contain NaN or infinite samples")
    return X


def check_labels(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
        raise ValueError("labels must be integer class indices")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    return y
