"""Synthetic-image benchmark: marginals, barycenter cost tensors, metrics and barycenter extraction.

Random numbers come from numpy's Philox counter-based generator, whose stream
is fixed by the seed on every platform.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tz

FG_FRACTION = 0.10
MASS_THRESHOLD = 1e-10


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class PointCloud:
    locations: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.locations.ndim != 2 or self.locations.shape[0] != self.weights.shape[0]:
            raise ValueError("one location row per weight is required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    def __len__(self):
        return len(self.weights)


def grid_locations(side: int) -> np.ndarray:
    """Pixel centres (i, j)/(side - 1) in row-major order."""
    i, j = np.divmod(np.arange(side * side), side)
    return np.stack([i, j], axis=1) / (side - 1)


def square_side(side: int, fraction: float = FG_FRACTION) -> int:
    return max(1, int(round(side * math.sqrt(fraction))))


def gen_synthetic_image(side: int, seed: int, fg_fraction: float = FG_FRACTION):
    """Random image with a bright square on a dim background, as a probability vector.

    Returns
    -------
    marginal : ndarray (side**2,)
    locations : ndarray (side**2, 2)
    """
    img, _ = synthetic_intensities(side, seed, fg_fraction)
    img = img.reshape(-1)
    return img / img.sum(), grid_locations(side)


def synthetic_intensities(side: int, seed: int, fg_fraction: float = FG_FRACTION):
    """Unnormalized image and the square's (top, left, size)."""
    if side < 2:
        raise ValueError("side must be at least 2")
    rng = rng_for(seed)
    s = square_side(side, fg_fraction)
    top, left = (int(v) for v in rng.integers(0, side - s + 1, size=2))
    img = rng.uniform(0.0, 1.0, size=(side, side))
    img[top:top + s, left:left + s] = rng.uniform(0.0, 50.0, size=(s, s))
    return img, (top, left, s)


def synthetic_marginals(side: int, m: int, seed: int) -> np.ndarray:
    """m independent images; image k is drawn with seed 1000 * seed + k."""
    rows = []
    for k in range(m):
        r, _ = gen_synthetic_image(side, seed * 1000 + k)
        rows.append(r)
    return np.array(rows)


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def barycenter_cost(location_lists, lam) -> np.ndarray:
    """C[i_1..i_m] = sum_k (lam_k / 2) ||x^k_{i_k} - A||^2 with A = sum_k lam_k x^k_{i_k}."""
    pts = [_points(x) for x in location_lists]
    lam = np.asarray(lam, dtype=np.float64)
    m = len(pts)
    if lam.shape != (m,) or np.any(lam < 0) or abs(lam.sum() - 1) > 1e-12:
        raise ValueError("lambda must be a probability vector with one entry per point set")
    n = pts[0].shape[0]
    if any(x.shape[0] != n for x in pts):
        raise ValueError("all point sets must have the same size")
    d = pts[0].shape[1]
    # broadcast x^k along its own axis
    views = []
    for k, x in enumerate(pts):
        shape = [1] * m + [d]
        shape[k] = n
        views.append(x.reshape(shape))
    A = sum(lam[k] * views[k] for k in range(m))
    C = sum(0.5 * lam[k] * ((views[k] - A) ** 2).sum(axis=-1) for k in range(m))
    return np.ascontiguousarray(np.broadcast_to(C, (n,) * m), dtype=np.float64)


def metric_d(X, marginals) -> float:
    """Sum over axes of the l1 distance between the plan's marginal and the target."""
    X = tz.as_tensor(X)
    return float(sum(np.abs(tz.marginal(X, k) - np.asarray(marginals[k])).sum() for k in range(X.ndim)))


def competitive_ratio(d1: float, d2: float) -> float:
    if not (d1 > 0 and d2 > 0):
        raise ValueError("competitive ratio needs positive distances")
    return math.log(d1 / d2)


def extract_barycenter(plan, location_lists, lam, mass_threshold: float = MASS_THRESHOLD) -> PointCloud:
    """One point sum_k lam_k x^k_{i_k} per multi-index carrying mass above the threshold.

    The threshold is relative to the plan's total mass. Points come out in
    row-major multi-index order and weights are renormalized to sum to one.
    """
    X = tz.as_tensor(plan)
    if np.any(X < 0):
        raise ValueError("plan must be nonnegative")
    pts = [_points(x) for x in location_lists]
    lam = np.asarray(lam, dtype=np.float64)
    total = X.sum()
    idx = np.argwhere(X > mass_threshold * total) if total > 0 else np.empty((0, X.ndim), int)
    if len(idx) == 0:
        raise ValueError("no entry of the plan carries mass above the threshold")
    locs = sum(lam[k] * pts[k][idx[:, k]] for k in range(X.ndim))
    w = X[tuple(idx.T)]
    return PointCloud(locs, w / w.sum())


def rasterize(cloud: PointCloud, g: int) -> np.ndarray:
    """Bilinear splat of a 2-d cloud onto a g x g grid whose nodes sit at (i, j)/(g - 1)."""
    if g < 2:
        raise ValueError("grid must be at least 2 x 2")
    img = np.zeros((g, g))
    u = np.clip(cloud.locations[:, :2], 0.0, 1.0) * (g - 1)
    base = np.minimum(np.floor(u).astype(int), g - 2)
    frac = u - base
    for di, dj in itertools.product((0, 1), repeat=2):
        wi = frac[:, 0] if di else 1 - frac[:, 0]
        wj = frac[:, 1] if dj else 1 - frac[:, 1]
        np.add.at(img, (base[:, 0] + di, base[:, 1] + dj), cloud.weights * wi * wj)
    return img


def write_pgm(path, img: np.ndarray) -> None:
    """8-bit binary PGM scaled so the brightest pixel is 255."""
    top = img.max()
    data = np.zeros(img.shape, np.uint8) if top <= 0 else np.round(255 * img / top).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())
