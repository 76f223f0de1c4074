"""Shared test helpers."""

import numpy as np


def set_partitions(n: int, max_blocks: int):
    """All partitions of range(n) into at most max_blocks nonempty blocks,
    yielded as restricted-growth label arrays."""
    labels = np.zeros(n, dtype=np.int64)

    def rec(i, used):
        if i == n:
            yield labels.copy()
            return
        top = min(used + 1, max_blocks)
        for lab in range(top):
            labels[i] = lab
            yield from rec(i + 1, max(used, lab + 1))

    yield from rec(1, 1)


def random_psd(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((n, rank))
    return a @ a.T
