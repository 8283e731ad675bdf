"""Exception hierarchy shared by every solver module."""


class CircstabError(Exception):
    """Base class for all library errors."""


class NumericalFailure(CircstabError):
    """A computation ran but did not produce a trustworthy number."""


class InvalidInput(CircstabError):
    """Inputs violate an operation's precondition."""


# profiles
class OutOfDomain(InvalidInput):
    pass


class DistributionalPoint(InvalidInput):
    """Pointwise evaluation requested at the support of a Dirac mass."""


class Unbounded(InvalidInput):
    pass


class NotRegularValue(InvalidInput):
    pass


class TangencySuspected(NumericalFailure):
    pass


# rayleigh_bvp
class SingularCoefficient(InvalidInput):
    pass


class InterfaceZero(NumericalFailure):
    """The shooting solution vanishes at the interface (fixed-boundary eigenvalue)."""


class IntegratorFailure(NumericalFailure):
    pass


# dispersion
class BadParams(InvalidInput):
    pass


class StableBranchMissing(InvalidInput):
    pass


class NoComplexPair(NumericalFailure):
    pass


class NoSolution(InvalidInput):
    pass


# mode_search
class BoundaryRootSuspected(NumericalFailure):
    pass


class NonConvergence(NumericalFailure):
    pass


# semicircle
class InsufficientTrace(InvalidInput):
    pass


# critical_layer
class IdentityDrift(NumericalFailure):
    pass


class HypothesisViolated(InvalidInput):
    pass


class ZeroPrediction(NumericalFailure):
    pass


class NewtonDiverged(NumericalFailure):
    pass


class LeftHalfPlane(NumericalFailure):
    pass
