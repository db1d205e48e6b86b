import os

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for (seed, stream); streams are independent."""
    ss = np.random.SeedSequence([int(seed) & MASK64, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    try:
        n = int(os.environ.get("GALMEM_THREADS", "1"))
    except ValueError:
        n = 1
    return max(n, 1)
