"""Particle sampling of simple scene geometry: jittered fluid blocks and straight segments."""
from typing import Optional

import numpy as np

JITTER_FRACTION = 0.1


def grid_counts(box: tuple[float, float, float, float], spacing: float) -> tuple[int, int]:
    """Cells per axis that fit in `box` = [x_min, y_min, x_max, y_max]."""
    x0, y0, x1, y1 = box
    return int(np.floor((x1 - x0) / spacing + 1e-9)), int(np.floor((y1 - y0) / spacing + 1e-9))


def fluid_block(
        box: tuple[float, float, float, float],
        spacing: float,
        rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Cell-centred grid filling `box`, row by row from the bottom, optionally jittered.

    Parameters:
        box: [x_min, y_min, x_max, y_max].
        spacing (float): grid spacing.
        rng (np.random.Generator): when given, every point moves by up to 10% of the spacing per axis.
    """
    nx, ny = grid_counts(box, spacing)
    x0, y0 = box[0], box[1]
    xs = x0 + (np.arange(nx) + 0.5) * spacing
    ys = y0 + (np.arange(ny) + 0.5) * spacing
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    if rng is not None and points.size:
        amplitude = JITTER_FRACTION * spacing
        points = points + rng.uniform(-amplitude, amplitude, size=points.shape)
    return points


def points_per_segment(length: float, spacing: float) -> int:
    """Particles used for a segment of `length`, both endpoints included."""
    return max(2, int(np.ceil(length / spacing - 1e-9)) + 1)


def segment_points(segments: np.ndarray, spacing: float) -> np.ndarray:
    """Evenly spaced particles along each segment (x0, y0, x1, y1)."""
    chunks = []
    for x0, y0, x1, y1 in np.asarray(segments, dtype=np.float64).reshape(-1, 4):
        count = points_per_segment(float(np.hypot(x1 - x0, y1 - y0)), spacing)
        t = np.linspace(0.0, 1.0, count)[:, None]
        chunks.append(np.array([x0, y0]) * (1.0 - t) + np.array([x1, y1]) * t)
    return np.concatenate(chunks) if chunks else np.zeros((0, 2))
