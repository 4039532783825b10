import numpy as np
from tqdm import tqdm


def chunk_ranges(n, chunk_size, desc=None):
    # Yield (start, stop) windows over n items, optionally with a progress bar
    starts = range(0, n, chunk_size)
    if desc is not None and n > chunk_size:
        starts = tqdm(starts, desc=desc, leave=False)
    for i in starts:
        yield i, min(i + chunk_size, n)


def first_index(mask):
    """Multi-index of the first True entry of a boolean array, None if there is none."""
    flat = np.flatnonzero(mask)
    if flat.size == 0:
        return None
    return tuple(int(_) for _ in np.unravel_index(flat[0], mask.shape))


def pairwise_sum(values):
    # numpy reduces contiguous float arrays with pairwise summation
    return float(np.sum(np.ascontiguousarray(values, dtype=np.float64).ravel()))


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def smoothstep_deriv(t):
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 6.0 * t * (1.0 - t), 0.0)
