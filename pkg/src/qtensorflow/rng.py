"""SplitMix64 stream used for reproducible random initial data."""
from __future__ import annotations

import numpy as np

from .grid import Grid

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of SplitMix64 started from ``seed`` (as ``uint64``)."""
    state = np.uint64(int(seed) % 2**64)
    k = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = state + k * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform(seed: int, n: int) -> np.ndarray:
    """Doubles in ``[0, 1)`` from the top 53 bits of each SplitMix64 output."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def random_qtensor_field(grid: Grid, seed: int, amplitude: float = 1.0,
                         max_norm: float | None = None) -> np.ndarray:
    """Symmetric traceless field from i.i.d. entries uniform in ``[-0.5, 0.5]``.

    Entries are drawn cell by cell in row-major order, nine per cell, then
    symmetrised, made traceless and scaled by ``amplitude``; cells whose norm
    exceeds ``max_norm`` are scaled back onto that sphere.
    """
    raw = uniform(seed, grid.ncells * 9).reshape(grid.dims + (3, 3)) - 0.5
    Q = 0.5 * (raw + np.swapaxes(raw, -1, -2))
    tr = np.trace(Q, axis1=-2, axis2=-1)
    Q = amplitude * (Q - tr[..., None, None] * np.eye(3) / 3.0)
    if max_norm is not None:
        nrm = np.sqrt(np.einsum("...ij,...ij->...", Q, Q))
        scale = np.where(nrm > max_norm, max_norm / np.where(nrm > 0, nrm, 1.0), 1.0)
        Q = Q * scale[..., None, None]
    return Q
