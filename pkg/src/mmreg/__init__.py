"""Correspondence-free rigid point cloud registration by moment matching.

Two clouds sampled from the same surface are aligned by matching their
empirical Gaussian-RBF generalized moments: the sum of squared per-center
moment differences is minimized over SE(3) with BFGS.  No point
correspondences, normals, or voxel statistics are needed, which keeps the
method robust on sparse and noisy clouds.

Typical use::

    from mmreg import MmrConfig, register
    report = register(source_cloud, target_cloud, MmrConfig())
    print(report.estimated_pose, report.final_loss)
"""

from .centers import CenterConfig, allocate_centers, kmeans
from .core import (
    DegenerateGeometryError,
    InvalidInputError,
    NumericalFailureError,
    PointCloud,
    Pose,
    apply,
    compose,
    inverse,
    pose_from_matrix,
    rotation_matrix,
    transform_points,
)
from .metrics import ErrorPair, pose_errors
from .moments import (
    KernelBasis,
    MomentVector,
    empirical_moments,
    kernel_eval,
    kernel_vector,
    moment_gradient,
    pairwise_sum,
    transformed_moments_and_gradient,
)
from .optimize import (
    BfgsResult,
    MmrConfig,
    RegistrationReport,
    bfgs_minimize,
    loss,
    loss_gradient,
    register,
)
from .ply_io import (
    PlyCorruptError,
    PlyError,
    PlyHeaderInfo,
    PlyUnsupportedFormatError,
    PlyUnsupportedLayoutError,
    read_ply,
    write_ply,
    write_results_csv,
)
from .synth import (
    SHAPE_IDS,
    ExperimentSpec,
    NoiseSpec,
    PoseRange,
    add_gaussian_noise,
    add_uniform_outliers,
    aggregate_rows,
    consistency_study,
    icp_baseline,
    make_shape,
    rng_stream,
    run_experiment,
    sample_pose,
    uniform_downsample,
)

__version__ = "0.1.0"

__all__ = [
    "BfgsResult",
    "CenterConfig",
    "DegenerateGeometryError",
    "ErrorPair",
    "ExperimentSpec",
    "InvalidInputError",
    "KernelBasis",
    "MmrConfig",
    "MomentVector",
    "NoiseSpec",
    "NumericalFailureError",
    "PlyCorruptError",
    "PlyError",
    "PlyHeaderInfo",
    "PlyUnsupportedFormatError",
    "PlyUnsupportedLayoutError",
    "PointCloud",
    "Pose",
    "PoseRange",
    "RegistrationReport",
    "SHAPE_IDS",
    "add_gaussian_noise",
    "add_uniform_outliers",
    "aggregate_rows",
    "allocate_centers",
    "apply",
    "bfgs_minimize",
    "compose",
    "consistency_study",
    "empirical_moments",
    "icp_baseline",
    "inverse",
    "kernel_eval",
    "kernel_vector",
    "kmeans",
    "loss",
    "loss_gradient",
    "make_shape",
    "moment_gradient",
    "pairwise_sum",
    "pose_errors",
    "pose_from_matrix",
    "read_ply",
    "register",
    "rng_stream",
    "rotation_matrix",
    "run_experiment",
    "sample_pose",
    "transform_points",
    "transformed_moments_and_gradient",
    "uniform_downsample",
    "write_ply",
    "write_results_csv",
]
