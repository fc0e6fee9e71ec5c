"""Seed derivation and counter-based draws.

Every random quantity is a pure function of ``(key, row, column)``, so a
dataset or Monte-Carlo sample is reproducible regardless of chunking or of
how many workers produced it.
"""
import hashlib

from . import kernels

CHUNK_ROWS = 1 << 16


def derive_key(seed, *tags):
    """Map a user seed plus purpose tags to a 64-bit stream key."""
    text = "|".join([repr(int(seed))] + [str(t) for t in tags])
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def uniforms(key, row0, n_rows, stride, col0, n_cols):
    return kernels.uniform_block(key, row0, n_rows, stride, col0, n_cols)


def normals(key, row0, n_rows, stride, col0, n_cols):
    return kernels.normal_block(key, row0, n_rows, stride, col0, n_cols)


def chunks(n, size=CHUNK_ROWS):
    for start in range(0, n, size):
        yield start, min(size, n - start)
