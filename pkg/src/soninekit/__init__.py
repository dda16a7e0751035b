"""Matrix Sonine equations, generalized fractional operators and
viscoelastic relaxation/creep duality with completely monotone kernels."""
from .errors import (
    DomainError,
    HypothesisViolation,
    NonContractionError,
    SonineKitError,
    UnsupportedError,
)
from .kernels import (
    BernsteinFn,
    BesselK,
    BesselL,
    DampedPowerLaw,
    DampedPowerLawDual,
    Exponential,
    MatrixKernel,
    PowerLaw,
    antiderivative,
    eval_kernel,
    f0_limit,
    f_infinity,
)
from .quadconv import MeasureFn, SampledMatrixFunction, TimeGrid, make_grid

__all__ = [
    "BernsteinFn", "BesselK", "BesselL", "DampedPowerLaw", "DampedPowerLawDual",
    "DomainError", "Exponential", "HypothesisViolation", "MatrixKernel", "MeasureFn",
    "NonContractionError", "PowerLaw", "SampledMatrixFunction", "SonineKitError",
    "TimeGrid", "UnsupportedError", "antiderivative", "eval_kernel", "f0_limit",
    "f_infinity", "make_grid",
]
__version__ = "0.1.0"
