"""Adaptive selection of RBF centers from the target cloud.

Sparse clouds use every point as a center (placing centers anywhere else
risks moments that are numerically zero); dense clouds are summarized by
k-means representatives to cap the per-evaluation cost, which scales with
(number of centers) x (number of points).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .core import DegenerateGeometryError, InvalidInputError, PointCloud, Points
from .moments import coplanarity_ratio


@dataclass(frozen=True)
class CenterConfig:
    """Center-allocation knobs.

    Clouds with at most ``density_threshold`` points use every point as a
    center; larger ones are summarized by k-means with ``kmeans_k`` clusters
    (clamped to the cloud size).
    """

    density_threshold: int = 2000
    kmeans_k: int = 500
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.density_threshold < 4:
            raise InvalidInputError("density_threshold must be >= 4")
        if self.kmeans_k < 4:
            raise InvalidInputError("kmeans_k must be >= 4")
        if self.kmeans_max_iters < 1 or self.kmeans_tol <= 0:
            raise InvalidInputError("kmeans_max_iters must be >= 1 and kmeans_tol > 0")
        if self.seed < 0:
            raise InvalidInputError("seed must be a nonnegative integer")


def _nearest_center(points: Points, centers: Points) -> tuple[NDArray, NDArray]:
    """Labels and squared distances of each point to its closest center."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]

def _plus_plus_seed(points: Points, k: int, rng: np.random.Generator) -> Points:
    """k-means++ seeding: each new center drawn proportional to squared
    distance from the already chosen ones."""
    n = points.shape[0]
    centers = np.empty((k, 3))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining points coincide with a chosen center.
            centers[i:] = points[rng.integers(n, size=k - i)]
            break
        centers[i] = points[np.searchsorted(np.cumsum(d2), rng.uniform(0.0, total))]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(cloud: PointCloud, k: int, max_iters: int = 100, tol: float = 1e-9,
           seed: int = 0) -> Points:
    """Lloyd's algorithm from k-means++ seeding; deterministic given ``seed``.

    Stops when the largest center shift falls below ``tol`` or after
    ``max_iters`` sweeps.  Empty clusters are reseeded at the point farthest
    from its assigned center (lowest index on ties), so exactly ``k`` centers
    come back.
    """
    cloud.require_nonempty("kmeans")
    points = cloud.points
    n = points.shape[0]
    if k < 1 or k > n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")

    rng = np.random.Generator(np.random.Philox(key=seed))
    centers = _plus_plus_seed(points, k, rng)
    for _ in range(max_iters):
        labels, d2 = _nearest_center(points, centers)
        new_centers = np.empty_like(centers)
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
            else:
                far = int(np.argmax(d2))  # argmax takes the lowest index on ties
                new_centers[j] = points[far]
                d2[far] = 0.0  # do not hand the same point to two empty clusters
        shift = np.max(np.linalg.norm(new_centers - centers, axis=1))
        centers = new_centers
        if shift < tol:
            break
    return centers


def allocate_centers(cloud: PointCloud, cfg: CenterConfig) -> Points:
    """Pick RBF centers for a target cloud, shape (kappa, 3).

    All points verbatim when the cloud is at or below the density threshold,
    otherwise k-means representatives.  Raises
    :class:`DegenerateGeometryError` when the cloud (or the resulting center
    set) is coplanar or has fewer than 4 points, since such centers cannot
    pin down a rigid transform.
    """
    cloud.require_nonempty("allocate_centers")
    if len(cloud) < 4:
        raise DegenerateGeometryError(
            f"need at least 4 points to build a center set, got {len(cloud)}")
    if coplanarity_ratio(cloud.points) <= 1e-9:
        raise DegenerateGeometryError(
            "cloud points all lie in a single plane; center set would be degenerate")

    if len(cloud) <= cfg.density_threshold:
        return cloud.points.copy()

    centers = kmeans(cloud, min(cfg.kmeans_k, len(cloud)),
                     cfg.kmeans_max_iters, cfg.kmeans_tol, cfg.seed)
    if coplanarity_ratio(centers) <= 1e-9:
        raise DegenerateGeometryError("k-means produced a coplanar center set")
    return centers
