"""Exception hierarchy shared by all modules."""


class SteadyDiffError(Exception):
    """Base class for every error raised by the package."""


class ModelSpecError(SteadyDiffError):
    """The chain or model specification is inconsistent (negative rates, bad domain...)."""


class NotDriftZeroError(ModelSpecError):
    """A proposed center is not a zero of the fluid drift."""

    def __init__(self, center, residual, tol):
        self.center = center
        self.residual = residual
        self.tol = tol
        super().__init__(f"center {center!r} is not a drift zero: |F| = {residual:.3e} > {tol:.3e}")


class NotSPDError(SteadyDiffError):
    def __init__(self, message, eigenvalue=None):
        self.eigenvalue = eigenvalue
        super().__init__(message)


class ConvergenceError(SteadyDiffError):
    """An iterative solver failed; ``best`` carries the best iterate found."""

    def __init__(self, message, best=None, residual=None):
        self.best = best
        self.residual = residual
        super().__init__(message)


class MultipleRootsError(SteadyDiffError):
    def __init__(self, roots):
        self.roots = roots
        super().__init__(f"found {len(roots)} distinct drift zeros; refusing to pick one: {roots}")


class DivergenceError(SteadyDiffError):
    def __init__(self, message, last_time=None):
        self.last_time = last_time
        super().__init__(message)


class BoxTooSmallError(SteadyDiffError):
    """Probability mass is still significant at the edge of a truncation box or grid."""


class IrreducibilityError(SteadyDiffError):
    def __init__(self, message, blocks=None):
        self.blocks = blocks or []
        super().__init__(message)


class HypothesisCheckError(SteadyDiffError):
    """A structural hypothesis (Lyapunov, admissibility, growth) could not be verified."""


class CertificationError(HypothesisCheckError):
    def __init__(self, message, counterexample=None):
        self.counterexample = counterexample
        super().__init__(message)


class AdmissibilityError(HypothesisCheckError):
    pass


class InsufficientDataError(SteadyDiffError):
    """Too few batches / rows / samples to produce the requested statistic."""
