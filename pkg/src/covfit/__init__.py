"""Maximum likelihood estimation in Gaussian covariance graph models."""

__version__ = "0.1.0"

from .anderson import anderson_step, build_system, fit_anderson
from .errors import (
    CovfitError,
    DegenerateSystemError,
    DimensionError,
    InputError,
    ModelDataError,
    ModelMembershipError,
    NotPositiveDefiniteError,
    NumericalError,
)
from .gaussian import (
    CovarianceMatrix,
    ModelScore,
    SampleSummary,
    empirical_covariance,
    from_correlation_table,
    in_model,
    likelihood_residual,
    log_likelihood,
    score,
)
from .graph import (
    BidirectedGraph,
    Dag,
    SeparationQuery,
    bidirected_equivalent_exists,
    d_separated,
    dag_equivalent_exists,
    latent_projection,
    m_separated,
    pairwise_independences,
)
from .icf import FitResult, IcfOptions, fit, icf_step, pseudo_gram
