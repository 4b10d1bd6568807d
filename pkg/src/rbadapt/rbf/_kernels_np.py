"""Pure-numpy radial kernel evaluation (fallback backend)."""

import numpy as np
from scipy.spatial.distance import cdist

GAUSSIAN, TPS, MQ, IMQ = 0, 1, 2, 3


def kernel_matrix(a, b, kind, sigma):
    """Phi(||a_i - b_j||) for all pairs; shape (len(a), len(b))."""
    r = cdist(a, b)
    if kind == GAUSSIAN:
        return np.exp(-(sigma * sigma) * r * r)
    if kind == TPS:
        out = np.zeros_like(r)
        mask = r > 0.0
        rm = r[mask]
        out[mask] = rm * rm * np.log(rm)
        return out
    if kind == MQ:
        return np.sqrt(r * r + sigma * sigma)
    if kind == IMQ:
        return 1.0 / np.sqrt(r * r + sigma * sigma)
    raise ValueError(f"unknown kernel code {kind}")
