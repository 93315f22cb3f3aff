"""Continuous-time data-based trajectory representation for LTI systems."""

from .errors import (
    BoundsError,
    DimensionError,
    DomainError,
    InfeasibleError,
    MissingArtifactError,
    PreconditionError,
    SingularityError,
)
from .excitation import (
    DtPeSequence,
    PeCertificate,
    PeDataset,
    build_pe_input,
    certify_pe,
    check_assumption_T,
    collect_dataset,
    design_dt_pe_sequence,
    forbidden_periods,
)
from .hankel import SampledSignal, derivative_signal, dt_hankel, hankel_deep, hankel_row
from .linalg import eigenvalues, matrix_exponential, numerical_rank, pseudoinverse
from .lti import (
    LtiSystem,
    PiecewiseConstant,
    Polynomial,
    SinusoidSum,
    SquareWave,
    exact_discretize,
    simulate,
    step_discrete,
)
from .presets import preset
from .willems import (
    AlphaSolution,
    Reconstruction,
    TargetSpec,
    alpha_initial,
    generate_trajectory,
    reconstruct,
    reset_alpha,
    solve_alpha,
)

__version__ = "0.1.0"

__all__ = [
    "alpha_initial",
    "AlphaSolution",
    "BoundsError",
    "build_pe_input",
    "certify_pe",
    "check_assumption_T",
    "collect_dataset",
    "derivative_signal",
    "design_dt_pe_sequence",
    "DimensionError",
    "DomainError",
    "dt_hankel",
    "DtPeSequence",
    "eigenvalues",
    "exact_discretize",
    "forbidden_periods",
    "generate_trajectory",
    "hankel_deep",
    "hankel_row",
    "InfeasibleError",
    "LtiSystem",
    "matrix_exponential",
    "MissingArtifactError",
    "numerical_rank",
    "PeCertificate",
    "PeDataset",
    "PiecewiseConstant",
    "Polynomial",
    "PreconditionError",
    "preset",
    "pseudoinverse",
    "reconstruct",
    "Reconstruction",
    "reset_alpha",
    "SampledSignal",
    "simulate",
    "SingularityError",
    "SinusoidSum",
    "solve_alpha",
    "SquareWave",
    "step_discrete",
    "TargetSpec",
]
