"""Maximum-likelihood factor analysis via difference-of-convex programming.

The heavy lifting happens in the C++ extension ``factmle._core``; this
package re-exports its public surface.  The central object is
:class:`CovarianceInput`, built either from a raw data matrix (columns
are mean-centered, S = X'X/n) or from a covariance matrix, and consumed
by the solver entry points below.

Quick start::

    import factmle
    cov, truth = factmle.generate_synthetic(p=50, n=500, r0=3, seed=1)
    fit = factmle.solve(cov, r=3)
    fit["psi"], fit["loadings"], fit["neg_loglik"]
"""

from ._core import (
    CertificationFailure,
    CovarianceInput,
    DomainError,
    NumericalError,
    ParseError,
    eig_top,
    generate_synthetic,
    load_csv,
    neg_loglik,
    objective,
    solve,
    solve_block,
    solve_continuation,
    solve_em,
    solve_path,
    solve_ridge,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceInput",
    "CertificationFailure",
    "DomainError",
    "NumericalError",
    "ParseError",
    "eig_top",
    "generate_synthetic",
    "load_csv",
    "neg_loglik",
    "objective",
    "solve",
    "solve_block",
    "solve_continuation",
    "solve_em",
    "solve_path",
    "solve_ridge",
    "__version__",
]
