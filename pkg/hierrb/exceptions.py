class HierRBError(Exception):
    """Base class of all toolkit errors"""


class ConfigError(HierRBError):
    pass


class ParameterError(HierRBError):
    pass


class EmptyPartitionError(HierRBError):
    """Every point was excluded, Theta is undefined"""


class MeshError(HierRBError):
    pass


class MissingParameterError(HierRBError):
    """A mu-dependent inner product was evaluated without mu"""


class TruthSolveError(HierRBError):
    def __init__(self, mu, message: str = "truth system is singular"):
        self.mu = tuple(mu) if mu is not None else None
        super().__init__(f"{message} at mu={self.mu}")


class EigenSolveError(HierRBError):
    def __init__(self, mu, message: str = "eigensolver did not converge"):
        self.mu = tuple(mu) if mu is not None else None
        super().__init__(f"{message} at mu={self.mu}")


class ReducedSolveError(HierRBError):
    def __init__(self, mu, n: int):
        self.mu = tuple(mu)
        self.n = n
        super().__init__(f"reduced system of size {n} is singular at mu={self.mu}")


class BasisExtensionError(HierRBError):
    """All new snapshots were linearly dependent; `basis` is the unchanged basis"""

    def __init__(self, basis, message: str = "all new snapshots were dropped"):
        self.basis = basis
        super().__init__(message)


class StabilityBoundError(HierRBError):
    """Nonpositive stability lower bound (usually a failed SCM)"""


class SaturationError(HierRBError):
    def __init__(self, theta: float, message: str = "", trace=None):
        self.theta = theta
        self.trace = trace
        super().__init__(message or f"saturation does not hold: Theta={theta:.6g} >= 1")


class EnrichmentError(HierRBError):
    """Taylor enrichment produced no new direction"""


class DuplicateSelectionError(HierRBError):
    def __init__(self, mu, message: str = ""):
        self.mu = tuple(mu)
        super().__init__(message or f"parameter {self.mu} selected twice")


class ScmConvergenceError(HierRBError):
    def __init__(self, state, message: str = ""):
        self.state = state
        super().__init__(message or "SCM did not reach the target gap")


class EffectivityBoundError(HierRBError):
    pass


class ArtifactError(HierRBError):
    pass
