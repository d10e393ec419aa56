"""Exception hierarchy shared by all modules."""


class VarCovError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(VarCovError, ValueError):
    pass


class NumericalFailure(VarCovError, ArithmeticError):
    pass


class NotPositiveDefinite(VarCovError, ValueError):
    pass


class InsufficientData(VarCovError, ValueError):
    pass


class InvalidRank(VarCovError, ValueError):
    pass


class SingularEstimate(VarCovError, ArithmeticError):
    """Raised when a covariance estimate has no inverse (zero isotropic part)."""


class RankDeficientDesign(VarCovError, ArithmeticError):
    """The GLS normal matrix of a VAR regression is singular."""


class NonCausalModel(VarCovError, ValueError):
    """Companion matrix has spectral radius at or above one."""


class InvalidOrder(VarCovError, ValueError):
    pass


class InvalidCase(VarCovError, ValueError):
    pass
