"""Shared independent oracles for the test suite.

Everything here deliberately avoids the library's own evaluation paths:
quadrature instead of sampling, finite differences instead of analytic
gradients, plain Python loops instead of the vectorized kernels.
"""

import numpy as np

from mmreg import Pose, transformed_moments_and_gradient


def quadrature_moment_oracle(center, sigma, nodes=80):
    """Mean of the Gaussian RBF kernel over the unit cube [0,1]^3 by
    tensor-product Gauss-Legendre quadrature (dense 3D grid)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * (x + 1.0)   # map [-1,1] -> [0,1]
    w = 0.5 * w
    gx, gy, gz = np.meshgrid(x, x, x, indexing="ij")
    wx, wy, wz = np.meshgrid(w, w, w, indexing="ij")
    d2 = (gx - center[0]) ** 2 + (gy - center[1]) ** 2 + (gz - center[2]) ** 2
    return float(np.sum(wx * wy * wz * np.exp(-d2 / sigma**2)))


def fd_moment_jacobian(basis, cloud, pose_vec, h=1e-6):
    """Central-difference Jacobian of the transformed-cloud moments."""
    pose_vec = np.asarray(pose_vec, dtype=np.float64)
    jac = np.empty((basis.kappa, 6))
    for i in range(6):
        plus, minus = pose_vec.copy(), pose_vec.copy()
        plus[i] += h
        minus[i] -= h
        mp, _ = transformed_moments_and_gradient(basis, cloud, Pose.from_vector(plus))
        mm, _ = transformed_moments_and_gradient(basis, cloud, Pose.from_vector(minus))
        jac[:, i] = (mp - mm) / (2.0 * h)
    return jac


def fd_gradient(fun, x, h=1e-6):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty(x.size)
    for i in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus[i] += h
        minus[i] -= h
        grad[i] = (fun(plus) - fun(minus)) / (2.0 * h)
    return grad
