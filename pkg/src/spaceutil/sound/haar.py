"""Orthonormal Haar transform of zero-padded sound histograms."""

from __future__ import annotations

import numpy as np

FEATURE_LEN = 8
_ROOT2 = np.sqrt(2.0)


def pad_histogram(histogram) -> np.ndarray:
    """Zero-pad (..., 5) counts to (..., 8)."""
    h = np.asarray(histogram, dtype=float)
    if h.shape[-1] > FEATURE_LEN:
        raise ValueError(f"histogram longer than {FEATURE_LEN} bins")
    pad = [(0, 0)] * (h.ndim - 1) + [(0, FEATURE_LEN - h.shape[-1])]
    return np.pad(h, pad)


def haar_transform(signal) -> np.ndarray:
    """Full-depth orthonormal Haar transform along the last axis.

    Output order is ``[approx, d_coarse, d_mid(2), d_fine(4)]``.
    """
    x = np.array(signal, dtype=float)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    out = x.copy()
    length = n
    while length > 1:
        half = length // 2
        even = out[..., 0:length:2].copy()
        odd = out[..., 1:length:2].copy()
        out[..., :half] = (even + odd) / _ROOT2
        out[..., half:length] = (even - odd) / _ROOT2
        length = half
    return out


def inverse_haar_transform(coeffs) -> np.ndarray:
    c = np.array(coeffs, dtype=float)
    n = c.shape[-1]
    out = c.copy()
    length = 1
    while length < n:
        approx = out[..., :length].copy()
        detail = out[..., length:2 * length].copy()
        out[..., 0:2 * length:2] = (approx + detail) / _ROOT2
        out[..., 1:2 * length:2] = (approx - detail) / _ROOT2
        length *= 2
    return out


def haar_features(histogram) -> np.ndarray:
    """5-bin histogram (or an (n, 5) stack) -> 8 Haar coefficients each."""
    h = np.asarray(histogram, dtype=float)
    if np.any(h < 0):
        raise ValueError("histogram counts must be non-negative")
    return haar_transform(pad_histogram(h))
