"""Spectral smooth goodness-of-fit tests built on diffusion-map eigenbases."""

__version__ = "0.1.0"

from .diffusion_basis import (  # noqa: E402
    DiffusionBasis,
    MarkovMatrix,
    build_basis,
    eigenbasis,
    load_basis,
    nystrom_extend,
    row_normalize,
    s_hat,
    save_basis,
)
from .errors import (  # noqa: E402
    CalibrationError,
    ConfigurationError,
    DegenerateEigenvalueError,
    IdxParseError,
    NumericalError,
    SSTError,
    UsageError,
)
from .kernel_space import (  # noqa: E402
    KernelConfig,
    bandwidth_grid,
    gaussian_kernel,
    gram_matrix,
    squared_euclidean,
)
from .null_models import ScenarioSpec, ad_statistic, bootstrap_sample, ks_statistic, sample, stream  # noqa: E402
from .smooth_test import (  # noqa: E402
    CalibratedSST,
    DensityRatio,
    LambdaSetting,
    NullCalibration,
    SstConfig,
    SstResult,
    calibrate,
    density_ratio_eval,
    estimate_coefficients,
    lambda_grid,
    mc_p_value,
    run_sst,
    standardize,
    t_lambda,
    t_sst,
)
