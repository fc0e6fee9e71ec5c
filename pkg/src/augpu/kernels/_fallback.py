"""NumPy implementation of the sampling and risk kernels.

Must stay bit-identical to ``_fast.pyx``: same counter layout, same
operation order in every floating-point expression.
"""
import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform_block(key, row0, n_rows, stride, col0, n_cols):
    rows = np.arange(row0, row0 + n_rows, dtype=np.uint64)
    cols = np.arange(col0, col0 + n_cols, dtype=np.uint64)
    ctr = rows[:, None] * np.uint64(stride) + cols[None, :]
    bits = _mix(np.uint64(key) + (ctr + np.uint64(1)) * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def normal_block(key, row0, n_rows, stride, col0, n_cols):
    return ndtri(uniform_block(key, row0, n_rows, stride, col0, n_cols))


def risk_terms(y, s, u):
    y = np.ascontiguousarray(y, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty((y.shape[0], 5))
    out[:, 0] = np.minimum(y, 1.0 - y)
    # both integrands are >= 0 in exact arithmetic; clamp rounding residue
    out[:, 1] = np.maximum(((1.0 - s) - np.abs((1.0 + s) - 2.0 * y)) * 0.5, 0.0)
    labeled = u < s
    with np.errstate(divide="ignore", invalid="ignore"):
        yt = (y - s) / (1.0 - s)
        out[:, 2] = np.where(labeled, 0.0, np.maximum((1.0 - np.abs(2.0 * yt - 1.0)) * 0.5, 0.0))
    out[:, 3] = labeled
    out[:, 4] = np.where(y < 0.5, s, 0.0)
    return out
