"""Exception hierarchy.

Every error carries a short machine-readable ``code`` that the CLI prints
alongside the message.
"""


class MMRegError(Exception):
    code = "error"


class ContractError(MMRegError, ValueError):
    """Caller violated a documented precondition (shapes, finiteness...)."""

    code = "contract"


class SingularScatterError(MMRegError, ArithmeticError):
    code = "singular_scatter"


class RankDeficiencyError(MMRegError, ArithmeticError):
    def __init__(self, message, rank=None, dim=None):
        super().__init__(message)
        self.rank = rank
        self.dim = dim

    code = "rank_deficient"


class NoSupportError(MMRegError, ArithmeticError):
    """All observations received zero weight."""

    code = "no_support"


class DegenerateDataError(MMRegError, ArithmeticError):
    code = "degenerate_data"


class DegenerateKernelError(MMRegError, ArithmeticError):
    code = "degenerate_kernel"


class DataError(MMRegError, ValueError):
    """Input file could not be turned into a Dataset."""

    code = "data"


class UsageError(MMRegError, ValueError):
    code = "usage"
