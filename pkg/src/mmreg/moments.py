"""Gaussian-RBF kernels, empirical generalized moments, and their gradients.

The k-th kernel is ``phi_k(x) = exp(-|x - c_k|^2 / sigma^2)`` for a center
``c_k`` and an isotropic width ``sigma`` (covariance ``sigma^2 * I``).  The
empirical moment of a cloud is the mean of ``phi_k`` over its points; a
cloud's moment vector is a compact signature of its spatial distribution,
and matching moment vectors is what drives registration.

Evaluation is data-parallel across centers, mirroring a one-thread-per-center
GPU decomposition.  All reductions run over a decomposition that is fixed by
the problem size alone (constant center blocks and point chunks, pairwise
tree combination), so results are bitwise identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import (
    DegenerateGeometryError,
    InvalidInputError,
    Points,
    PointCloud,
    Pose,
    rotation_matrix,
    rotation_matrix_partials,
)

# Decomposition constants. They depend only on problem size, never on the
# worker count, which is what makes parallel results reproducible.
_CENTER_BLOCK = 64
_POINT_CHUNK = 16384

# Kernel values below this flush to exact zero; their contribution to any
# moment is negligible by construction.
_UNDERFLOW = 1e-300


def coplanarity_ratio(points: Points) -> float:
    """Smallest/largest singular value of the centered point set.

    Zero when all points lie in a plane (or degenerate further); compared
    against a relative tolerance to decide the non-hyperplane condition.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        return 0.0
    s = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[2] / s[0])


@dataclass(frozen=True, eq=False)
class KernelBasis:
    """A set of RBF centers plus one isotropic width, both in meters.

    Requires at least four centers that do not all lie in a single plane
    (checked at 1e-9 relative to the center spread); that condition makes
    the full kernel map injective and the registration problem well-posed.
    """

    centers: Points
    sigma: float

    def __post_init__(self) -> None:
        centers = np.ascontiguousarray(np.asarray(self.centers, dtype=np.float64))
        if centers.ndim != 2 or centers.shape[1] != 3:
            raise InvalidInputError(f"centers must have shape (kappa, 3), got {centers.shape}")
        if not np.all(np.isfinite(centers)):
            raise InvalidInputError("centers contain NaN or Inf")
        if centers.shape[0] < 4:
            raise DegenerateGeometryError(
                f"need at least 4 centers, got {centers.shape[0]}")
        if coplanarity_ratio(centers) <= 1e-9:
            raise DegenerateGeometryError(
                "centers all lie in a single plane; kernel map would not be injective")
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise InvalidInputError(f"sigma must be finite and > 0, got {self.sigma}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def kappa(self) -> int:
        return self.centers.shape[0]

    def matches(self, other: "KernelBasis") -> bool:
        return self is other or (
            self.sigma == other.sigma and np.array_equal(self.centers, other.centers))


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Empirical moments of one cloud under one basis; values lie in [0, 1].

    Values are means of kernel terms in (0, 1]; an exact zero can only come
    from the documented underflow flush of far-away kernels.
    """

    values: NDArray[np.float64]
    basis: KernelBasis

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.basis.kappa,):
            raise InvalidInputError(
                f"expected {self.basis.kappa} moment values, got shape {values.shape}")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise InvalidInputError("moment values must lie in [0, 1]")
        object.__setattr__(self, "values", values)


def kernel_eval(basis: KernelBasis, k: int, point: NDArray[np.float64]) -> float:
    """Evaluate ``phi_k`` at one point. ``k`` is a 0-based center index."""
    if not 0 <= k < basis.kappa:
        raise InvalidInputError(f"center index {k} out of range [0, {basis.kappa})")
    d = np.asarray(point, dtype=np.float64).reshape(3) - basis.centers[k]
    value = float(np.exp(-(d @ d) / basis.sigma**2))
    return 0.0 if value < _UNDERFLOW else value


def kernel_vector(basis: KernelBasis, point: NDArray[np.float64]) -> NDArray[np.float64]:
    """Full kernel map ``[phi_1(p), ..., phi_kappa(p)]``."""
    d = basis.centers - np.asarray(point, dtype=np.float64).reshape(3)
    values = np.exp(-np.einsum("kj,kj->k", d, d) / basis.sigma**2)
    values[values < _UNDERFLOW] = 0.0
    return values


def pairwise_sum(parts: NDArray[np.float64], axis: int = 0) -> NDArray[np.float64]:
    """Fixed-order pairwise tree reduction along ``axis``.

    The combination tree depends only on the number of parts, so partial
    sums accumulated chunk-by-chunk reduce identically no matter how the
    chunks were scheduled.
    """
    arr = np.moveaxis(np.asarray(parts), axis, 0)
    while arr.shape[0] > 1:
        m = arr.shape[0] // 2
        folded = arr[0:2 * m:2] + arr[1:2 * m:2]
        if arr.shape[0] % 2:
            folded = np.concatenate([folded, arr[-1:]], axis=0)
        arr = folded
    return arr[0]


def _point_chunks(n: int) -> list[slice]:
    return [slice(i, min(i + _POINT_CHUNK, n)) for i in range(0, n, _POINT_CHUNK)]


def _center_blocks(kappa: int) -> list[slice]:
    return [slice(i, min(i + _CENTER_BLOCK, kappa)) for i in range(0, kappa, _CENTER_BLOCK)]


def _phi_block(centers: Points, pts: Points, inv_s2: float) -> NDArray[np.float64]:
    """Kernel values for a block of centers against a chunk of points, (kb, n)."""
    d = pts[None, :, :] - centers[:, None, :]
    phi = np.exp(-np.einsum("knj,knj->kn", d, d) * inv_s2)
    phi[phi < _UNDERFLOW] = 0.0
    return phi


def _moment_block(basis: KernelBasis, pts: Points, block: slice) -> NDArray[np.float64]:
    """Sum (not mean) of kernel values per center for one center block."""
    centers = basis.centers[block]
    inv_s2 = 1.0 / basis.sigma**2
    chunks = _point_chunks(pts.shape[0])
    parts = np.empty((len(chunks), centers.shape[0]))
    for i, chunk in enumerate(chunks):
        parts[i] = _phi_block(centers, pts[chunk], inv_s2).sum(axis=1)
    return pairwise_sum(parts)


def _run_blocks(fn, blocks: list[slice], n_workers: int | None):
    """Map ``fn`` over center blocks, optionally on a thread pool.

    Results are concatenated in block order; scheduling cannot affect them
    because every block computation is independent and fixed-shape.
    """
    if n_workers is not None and n_workers < 1:
        raise InvalidInputError(f"n_workers must be >= 1, got {n_workers}")
    if (n_workers == 1) or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, blocks))


def empirical_moments(basis: KernelBasis, cloud: PointCloud,
                      n_workers: int | None = None) -> MomentVector:
    """Mean kernel value per center over the cloud: ``(1/M) sum_j phi_k(y_j)``."""
    cloud.require_nonempty("empirical_moments")
    pts = cloud.points
    sums = _run_blocks(lambda b: _moment_block(basis, pts, b),
                       _center_blocks(basis.kappa), n_workers)
    return MomentVector(np.concatenate(sums) / pts.shape[0], basis)


def _fused_block(basis: KernelBasis, y: Points, feats: NDArray[np.float64],
                 block: slice) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Moment sums and gradient sums for one center block.

    ``y`` holds the transformed points ``R x + t``.  For each center the
    gradient of the (unnormalized) moment sum is

        d/dt    sum phi = sum  w * (y - c),        w = -(2/sigma^2) phi
        d/dpsi  sum phi = sum  w * (y - c) . (dR/dpsi x)

    Both reduce to one matmul of the weight matrix against the per-point
    ``feats`` columns, with the constant center offset pulled out of the sum.
    """
    centers = basis.centers[block]
    kb = centers.shape[0]
    inv_s2 = 1.0 / basis.sigma**2
    n = y.shape[0]

    chunks = _point_chunks(n)
    phi_parts = np.empty((len(chunks), kb))
    red_parts = np.empty((len(chunks), kb, 16))
    for i, chunk in enumerate(chunks):
        phi = _phi_block(centers, y[chunk], inv_s2)
        phi_parts[i] = phi.sum(axis=1)
        red_parts[i] = (phi * (-2.0 * inv_s2)) @ feats[chunk]

    phi_sum = pairwise_sum(phi_parts)
    red = pairwise_sum(red_parts)

    grad = np.empty((kb, 6))
    rho = red[:, 15]
    for m in range(3):
        # sum w * [y . a_m - c . a_m] with a_m = dR/dpsi_m x
        grad[:, m] = red[:, 12 + m] - np.einsum(
            "kj,kj->k", centers, red[:, 3 + 3 * m:6 + 3 * m])
    grad[:, 3:6] = red[:, 0:3] - centers * rho[:, None]
    return phi_sum, grad


def transformed_moments_and_gradient(
    basis: KernelBasis, cloud: PointCloud, pose: Pose,
    n_workers: int | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Moments of the transformed cloud and their pose Jacobian, in one pass.

    Returns ``(values, jac)`` where ``values[k] = mean_i phi_k(R x_i + t)``
    and ``jac[k]`` is its gradient with respect to
    (yaw, pitch, roll, tx, ty, tz).  The moment values are bitwise equal to
    ``empirical_moments`` of the pre-transformed cloud.
    """
    cloud.require_nonempty("transformed_moments_and_gradient")
    pts = cloud.points
    n = pts.shape[0]
    y = pts @ rotation_matrix(pose).T + pose.translation()
    partials = rotation_matrix_partials(pose)

    # Per-point features: y (3), dR/dpsi x for the 3 angles (9),
    # y . (dR/dpsi x) per angle (3), constant 1 -> 16 columns.
    feats = np.empty((n, 16))
    feats[:, 0:3] = y
    for m in range(3):
        a_m = pts @ partials[m].T
        feats[:, 3 + 3 * m:6 + 3 * m] = a_m
        feats[:, 12 + m] = np.einsum("nj,nj->n", y, a_m)
    feats[:, 15] = 1.0

    results = _run_blocks(
        lambda b: _fused_block(basis, y, feats, b),
        _center_blocks(basis.kappa), n_workers)
    values = np.concatenate([r[0] for r in results]) / n
    jac = np.concatenate([r[1] for r in results]) / n
    return values, jac


def moment_gradient(basis: KernelBasis, cloud: PointCloud, pose: Pose,
                    n_workers: int | None = None) -> NDArray[np.float64]:
    """Jacobian of the transformed cloud's moments, shape (kappa, 6).

    Row k holds the partial derivatives of ``mean_i phi_k(R x_i + t)`` with
    respect to (yaw, pitch, roll, tx, ty, tz).
    """
    _, jac = transformed_moments_and_gradient(basis, cloud, pose, n_workers)
    return jac
