import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fd_moment_jacobian, quadrature_moment_oracle
from mmreg import (
    DegenerateGeometryError,
    InvalidInputError,
    KernelBasis,
    MomentVector,
    PointCloud,
    Pose,
    empirical_moments,
    kernel_eval,
    kernel_vector,
    moment_gradient,
    pairwise_sum,
    rng_stream,
)
from mmreg.moments import coplanarity_ratio

TETRA = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def tetra_basis(sigma=0.5) -> KernelBasis:
    return KernelBasis(TETRA, sigma)


def random_basis(rng, kappa=32, sigma=0.5) -> KernelBasis:
    return KernelBasis(rng.normal(size=(kappa, 3)), sigma)


# --- kernel_eval --------------------------------------------------------------

def test_kernel_at_center_is_one():
    basis = tetra_basis()
    assert kernel_eval(basis, 0, [0.0, 0.0, 0.0]) == 1.0


def test_kernel_at_distance_sigma_is_inv_e():
    basis = tetra_basis(sigma=0.25)
    value = kernel_eval(basis, 0, [0.25, 0.0, 0.0])
    assert value == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_kernel_matches_high_precision_oracle():
    # Oracle: 50-digit evaluation of exp(-|p - c|^2 / sigma^2).
    rng = rng_stream(7)
    basis = random_basis(rng, kappa=8, sigma=0.9)
    with mpmath.workdps(50):
        for _ in range(50):
            k = int(rng.integers(8))
            p = rng.uniform(-1.0, 1.0, size=3)
            d = [mpmath.mpf(p[i]) - mpmath.mpf(basis.centers[k, i]) for i in range(3)]
            exact = mpmath.e ** (-(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
                                 / mpmath.mpf(basis.sigma) ** 2)
            got = kernel_eval(basis, k, p)
            assert abs(got - float(exact)) <= 1e-15 * float(exact)


def test_kernel_bounds_and_monotone_decay():
    basis = tetra_basis(sigma=0.4)
    radii = np.linspace(0.0, 3.0, 40)
    values = [kernel_eval(basis, 0, [r, 0.0, 0.0]) for r in radii]
    assert all(0.0 < v <= 1.0 for v in values)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_kernel_index_out_of_range():
    with pytest.raises(InvalidInputError):
        kernel_eval(tetra_basis(), 4, [0.0, 0.0, 0.0])


def test_kernel_underflow_flushes_to_zero():
    basis = tetra_basis(sigma=1e-3)
    assert kernel_eval(basis, 0, [100.0, 0.0, 0.0]) == 0.0


# --- empirical_moments ---------------------------------------------------------

def test_single_point_cloud_at_center():
    basis = tetra_basis()
    mv = empirical_moments(basis, PointCloud([[0.0, 0.0, 0.0]]))
    assert mv.values[0] == 1.0


def test_identical_copies_equal_single_kernel_value():
    # Mean of 8 equal terms is exact (power-of-two sum).
    basis = tetra_basis(sigma=0.3)
    p = np.array([0.21, -0.4, 0.55])
    cloud = PointCloud(np.tile(p, (8, 1)))
    mv = empirical_moments(basis, cloud)
    expected = np.array([kernel_eval(basis, k, p) for k in range(4)])
    assert np.array_equal(mv.values, expected)


def test_empty_cloud_raises():
    with pytest.raises(InvalidInputError):
        empirical_moments(tetra_basis(), PointCloud(np.empty((0, 3))))


def test_values_in_unit_interval():
    rng = rng_stream(8)
    basis = random_basis(rng)
    cloud = PointCloud(rng.normal(size=(500, 3)))
    mv = empirical_moments(basis, cloud)
    assert np.all(mv.values > 0.0) and np.all(mv.values <= 1.0)


def test_permutation_invariance():
    rng = rng_stream(9)
    basis = random_basis(rng)
    pts = rng.normal(size=(40000, 3))  # multiple reduction chunks
    mv = empirical_moments(basis, PointCloud(pts))
    shuffled = pts[rng.permutation(len(pts))]
    mv2 = empirical_moments(basis, PointCloud(shuffled))
    assert np.max(np.abs(mv.values - mv2.values)) < 1e-12 * np.max(mv.values)


def test_parallel_moments_bitwise_equal():
    rng = rng_stream(10)
    basis = random_basis(rng, kappa=200)
    cloud = PointCloud(rng.normal(size=(50000, 3)))
    serial = empirical_moments(basis, cloud, n_workers=1)
    for workers in (2, 3, 7):
        parallel = empirical_moments(basis, cloud, n_workers=workers)
        assert np.array_equal(serial.values, parallel.values)


def test_monte_carlo_rate_minus_half():
    # |mean-over-samples - quadrature oracle| should shrink like N^-1/2 for
    # uniform draws in the unit cube; regression over four decades of N.
    centers = np.array([[0.31, 0.42, 0.57], TETRA[1], TETRA[2], TETRA[3]])
    sigma = 0.45
    basis = KernelBasis(centers, sigma)
    exact = quadrature_moment_oracle(centers[0], sigma)
    sizes = [100, 1000, 10_000, 100_000]
    mean_abs_err = []
    for stream, n in enumerate(sizes):
        errs = []
        for rep in range(60):
            pts = rng_stream(123 + rep, stream).uniform(size=(n, 3))
            mv = empirical_moments(basis, PointCloud(pts))
            errs.append(abs(mv.values[0] - exact))
        mean_abs_err.append(np.mean(errs))
    slope = np.polyfit(np.log10(sizes), np.log10(mean_abs_err), 1)[0]
    assert -0.65 < slope < -0.35


# --- moment_gradient -----------------------------------------------------------

def test_gradient_zero_for_symmetric_cloud():
    basis = tetra_basis(sigma=0.5)
    d = np.array([0.3, -0.1, 0.2])
    cloud = PointCloud(np.stack([TETRA[0] + d, TETRA[0] - d]))
    jac = moment_gradient(basis, cloud, Pose.identity())
    assert np.max(np.abs(jac[0, 3:6])) < 1e-12


def test_gradient_zero_at_kernel_peak():
    basis = tetra_basis()
    cloud = PointCloud(TETRA[:1])
    jac = moment_gradient(basis, cloud, Pose.identity())
    assert np.max(np.abs(jac[0])) < 1e-12


def test_gradient_matches_finite_differences():
    rng = rng_stream(11)
    basis = random_basis(rng, kappa=16, sigma=0.7)
    cloud = PointCloud(rng.normal(size=(200, 3)))
    for _ in range(10):
        vec = np.concatenate([rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.3, 0.3, 3)])
        jac = moment_gradient(basis, cloud, Pose.from_vector(vec))
        fd = fd_moment_jacobian(basis, cloud, vec)
        assert np.max(np.abs(jac - fd)) <= 1e-5 * max(np.max(np.abs(fd)), 1e-12)


def test_parallel_gradient_bitwise_equal():
    rng = rng_stream(12)
    basis = random_basis(rng, kappa=150)
    cloud = PointCloud(rng.normal(size=(30000, 3)))
    pose = Pose(0.2, -0.1, 0.3, 0.5, -0.2, 0.1)
    serial = moment_gradient(basis, cloud, pose, n_workers=1)
    parallel = moment_gradient(basis, cloud, pose, n_workers=4)
    assert np.array_equal(serial, parallel)


# --- injectivity and degeneracy ------------------------------------------------

def test_kernel_map_separates_points():
    rng = rng_stream(13)
    basis = random_basis(rng, kappa=16, sigma=0.6)
    lo = basis.centers.min(axis=0) - 3 * basis.sigma
    hi = basis.centers.max(axis=0) + 3 * basis.sigma
    for _ in range(1000):
        p, q = rng.uniform(size=(2, 3)) * (hi - lo) + lo
        if np.array_equal(p, q):
            continue
        diff = np.max(np.abs(kernel_vector(basis, p) - kernel_vector(basis, q)))
        assert diff > 1e-12


def test_basis_rejects_too_few_centers():
    with pytest.raises(DegenerateGeometryError):
        KernelBasis(TETRA[:3], 0.5)


def test_basis_rejects_coplanar_centers():
    flat = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    with pytest.raises(DegenerateGeometryError):
        KernelBasis(flat, 0.5)


def test_basis_rejects_nearly_coplanar_centers():
    flat = TETRA.copy()
    flat[3, 2] = 1e-12  # plane thickness far below the 1e-9 relative tolerance
    with pytest.raises(DegenerateGeometryError):
        KernelBasis(flat, 0.5)


def test_basis_rejects_bad_sigma():
    with pytest.raises(InvalidInputError):
        KernelBasis(TETRA, 0.0)
    with pytest.raises(InvalidInputError):
        KernelBasis(TETRA, math.inf)


def test_coplanarity_ratio_healthy_for_volume_filling():
    assert coplanarity_ratio(rng_stream(14).normal(size=(100, 3))) > 0.1


def test_moment_vector_rejects_out_of_range():
    basis = tetra_basis()
    with pytest.raises(InvalidInputError):
        MomentVector(np.array([0.5, 0.5, 0.5, 1.5]), basis)
    with pytest.raises(InvalidInputError):
        MomentVector(np.array([0.5, 0.5, 0.5]), basis)


# --- pairwise reduction ---------------------------------------------------------

def test_pairwise_sum_exact_on_integers():
    rng = rng_stream(15)
    parts = rng.integers(-100, 100, size=(37, 5)).astype(np.float64)
    assert np.array_equal(pairwise_sum(parts), parts.sum(axis=0))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 64))
def test_pairwise_sum_close_to_numpy(n):
    rng = np.random.default_rng(n)
    parts = rng.normal(size=(n, 3))
    assert np.allclose(pairwise_sum(parts), parts.sum(axis=0), rtol=1e-13, atol=1e-15)
