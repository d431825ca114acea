from typing import Sequence

import numpy as np

DEFAULT_RESAMPLES = 1000


def bootstrap_ci(
        values: Sequence[float],
        resamples: int = DEFAULT_RESAMPLES,
        seed: int = 0,
        confidence: float = 0.95,
) -> tuple[float, float, float]:
    """
    Mean and percentile bootstrap confidence interval of `values`.

    Parameters:
        values: finite samples, at least one.
        resamples (int): number of resampled means.
        seed (int): seed of the resampling stream.
        confidence (float): interval mass, 0.95 for a 95% interval.

    Returns:
        (mean, low, high)
    """
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        raise ValueError("bootstrap needs at least one value")
    if resamples < 1 or not 0.0 < confidence < 1.0:
        raise ValueError("resamples must be positive and confidence inside (0, 1)")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, data.size, size=(resamples, data.size))
    means = data[picks].mean(axis=1)
    tail = (1.0 - confidence) / 2.0 * 100.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return float(data.mean()), float(low), float(high)
