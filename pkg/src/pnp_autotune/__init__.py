"""Plug-and-play MRI reconstruction with automatically tuned stepsizes.

Submodules
----------
forward_model
    Multi-coil Cartesian MRI operator, phantoms, masks and noise.
denoisers
    Plug-in denoisers (identity, linear filters, Haar soft thresholding).
solvers
    PnP primal-dual splitting with fixed and autotuned stepsizes.
metrics
    rSNR, SSIM and discrepancy diagnostics.
harness
    Command-line experiment runner.
"""

from .errors import DivergenceError, InvalidInputError
from .forward_model import (
    ForwardOperator,
    KSpaceData,
    SamplingMask,
    add_noise,
    apply_adjoint,
    apply_forward,
    estimate_operator_norm,
    generate_cartesian_mask,
    generate_coil_maps,
    generate_phantom,
)
from .denoisers import (
    IdentityDenoiser,
    LinearDiagonalDenoiser,
    WaveletSoftThresholdDenoiser,
    make_denoiser,
)
from .metrics import QualityReport, discrepancy_ratio, quality_report, rsnr_db, ssim
from .solvers import (
    ALGORITHMS,
    SolverConfig,
    SolverResult,
    genie_tune,
    run_pds_ato,
    run_pds_atm1,
    run_pds_atm2,
    run_pnp_pds,
    run_solver,
)

__version__ = "0.1.0"
