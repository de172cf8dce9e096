"""Seed handling shared by every module.

Replica streams are derived from a base seed by ``splitmix64(seed ^ replica)``
so that a replica's randomness does not depend on how replicas are scheduled
across workers.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replica_seed(seed: int, replica: int) -> int:
    return splitmix64((int(seed) ^ int(replica)) & MASK64)


def check_seed(seed) -> int:
    seed = int(seed)
    if seed < 0 or seed > MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(check_seed(seed)))


def derive(seed: int, *labels: int) -> int:
    """Chain ``replica_seed`` over several integer labels (replica, purpose, ...)."""
    s = check_seed(seed)
    for lab in labels:
        s = replica_seed(s, lab)
    return s


def bernoulli_positions(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Sorted indices in ``range(total)`` kept independently with probability p.

    Uses geometric gaps, so the cost scales with the number kept.
    """
    total = int(total)
    if total <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    mean = total * p
    batch = int(mean + 10.0 * np.sqrt(mean + 1.0) + 64)
    while True:
        run = pos + np.cumsum(rng.geometric(p, size=batch).astype(np.int64))
        keep = run[run < total]
        chunks.append(keep)
        if keep.shape[0] < run.shape[0]:
            break
        pos = int(run[-1])
        batch = max(64, batch // 4)
    return np.concatenate(chunks)
