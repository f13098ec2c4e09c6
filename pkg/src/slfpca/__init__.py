"""Sparse logistic functional principal component analysis for binary functional data."""

from .bspline import BSplineBasis, build_basis, eval_basis, gram_matrix
from .errors import (DataError, InvalidArgumentError, NumericalSingularityError,
                     OutOfDomainError, SlfpcaError)

__version__ = "0.1.0"
