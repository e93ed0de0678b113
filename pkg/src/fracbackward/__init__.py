"""Backward problem for a time-fractional fourth-order parabolic equation.

Spectral forward solver, Mittag-Leffler evaluation, quasi-boundary value
and Fourier truncation regularization, and a convergence-rate harness.
"""

from .constants import DerivedConstants, derived_constants
from .exceptions import (
    ConfigurationError,
    DegenerateNoiseError,
    DomainError,
    FracBackwardError,
    NoRootError,
    ParameterError,
)
from .experiment import (
    ExperimentResult,
    ExperimentSpec,
    RateRecord,
    SlopeFit,
    emit_outputs,
    fit_slopes,
    run_experiment,
)
from .forward import EffectiveData, ForwardSolution, effective_data, forward_solve, psi
from .inverse import (
    BackwardOperator,
    apply_T,
    build_operator,
    conditional_stability_check,
    exact_backward,
    illposedness_demo,
)
from .mittag_leffler import (
    MLBoundConstants,
    MLOrder,
    estimate_bound_constants,
    ml_eval,
    ml_kernel,
    ml_kernel_l1,
)
from .regularization import (
    DiscrepancyConfig,
    FtmConfig,
    QbvmConfig,
    RegularizedSolution,
    aposteriori_beta,
    aposteriori_N,
    apriori_beta,
    apriori_N,
    discrepancy_phi,
    envelope_max,
    ftm_solve,
    qbvm_solve,
    theoretical_rate,
)
from .spectral import (
    NoisyData,
    SourceSet,
    SpectralDomain,
    SpectralField,
    TimeSource,
    build_domain,
    inject_noise,
    synthesize_source_member,
)

__version__ = "0.1.0"
