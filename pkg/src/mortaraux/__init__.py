"""Auxiliary space preconditioners built on a modified mortar reformulation of H1 problems.

The typical pipeline is mesh -> agglomerates -> clone spaces -> mortar blocks
-> local factorizations and Schur complement -> smoother + auxiliary space
preconditioner -> PCG. :func:`mortaraux.experiment.build_problem` runs it end
to end from a :class:`mortaraux.experiment.RunConfig`.
"""
from .auxspace import AuxSpacePreconditioner, fictitious_preconditioner
from .errors import (
    ConfigurationError,
    DataError,
    GeometryError,
    IndefiniteOperatorError,
    MortarError,
    SingularElementError,
    SolverFailure,
    TopologyError,
)
from .experiment import ReportRow, RunConfig, build_problem, run_study
from .krylov import SolveReport, lanczos_estimates, pcg
from .smoother import ChebyshevSmoother, chebyshev_roots

__version__ = "0.1.0"

__all__ = [
    "AuxSpacePreconditioner",
    "ChebyshevSmoother",
    "ConfigurationError",
    "DataError",
    "GeometryError",
    "IndefiniteOperatorError",
    "MortarError",
    "ReportRow",
    "RunConfig",
    "SingularElementError",
    "SolveReport",
    "SolverFailure",
    "TopologyError",
    "build_problem",
    "chebyshev_roots",
    "fictitious_preconditioner",
    "lanczos_estimates",
    "pcg",
    "run_study",
]
