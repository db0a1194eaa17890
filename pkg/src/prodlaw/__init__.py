"""Spectral simulation and verification for products of i.i.d. random matrices."""

__version__ = "0.1.0"

from .ensembles import (
    EnsembleSpec,
    EntryLaw,
    TruncationPolicy,
    derive_phi,
    moment_audit,
    sample_factor,
    sample_factors,
)
from .limit_law import (
    LimitLawAtZ,
    LocalLawGrid,
    build_domain_grid,
    density_p,
    descent_schedule,
    disk_log_potential,
    gamma_edge,
    limiting_cdf_G,
    limiting_density_g,
    log_potential_limit,
    radial_cdf,
    solve_s,
    stieltjes_many,
    support_endpoints,
)
from .linearize import (
    BlockLinearization,
    Hermitization,
    ProductModel,
    ShiftedMatrix,
    build_linearization,
    hermitize,
    product_matrix,
    sample_unit_disk,
    shift,
)
from .spectra import (
    ComplexSpectrum,
    SingularSpectrum,
    empirical_stieltjes,
    esd_cdf,
    extreme_value_monitor,
    partial_trace,
    partial_traces,
    product_eigenvalues,
    singular_spectrum,
    singular_values,
)
from .verification import (
    BumpProfile,
    DistanceReport,
    LambdaRecord,
    SmoothedTestFunction,
    green_identity_check,
    kolmogorov_distance,
    ks_distance,
    lambda_sweep,
    log_potential_empirical,
    moment_inequality_probe,
    scaling_regression,
    selfconsistency_residual,
    smoothed_statistic,
    smoothing_bound,
)
