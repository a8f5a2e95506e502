"""Exception and warning types shared across the package."""


class FreefockError(Exception):
    """Base class for all errors raised by this package."""


# --- index space / model construction ---

class DuplicateLabel(FreefockError):
    """A base label appears more than once in the label list."""


class InvalidComponentCount(FreefockError):
    """Vector component count A must be a positive integer."""


class GridTooSmall(FreefockError):
    """Time grid too short for a second-difference stencil (T >= 3)."""


class ShapeError(FreefockError):
    """Array shapes inconsistent with the declared index space."""


class UnsupportedDegree(FreefockError):
    """Only the cubic interaction family (degree 3) is supported."""


class MissingGreen(FreefockError):
    """Operation requires a Green's function for K, none available."""


# --- Fock space ---

class LevelOutOfRange(FreefockError):
    """Requested grading level exceeds the truncation level L."""


class NormalizationError(FreefockError):
    """Level-0 component of a generating vector must equal 1."""


class BudgetExceeded(FreefockError):
    """Dense storage for the requested configuration exceeds the budget."""


# --- inverses ---

class NotNilpotent(FreefockError):
    """Neumann inversion needs a strictly raising (nilpotent) remainder."""


class WeightNotNormalized(FreefockError):
    """Left-inverse weight chi must sum to one."""


class DivisionByZeroSource(FreefockError):
    """chi is supported on a label where the source kernel G vanishes."""


class SingularInteraction(FreefockError):
    """Effective interaction weight lam*M(y) vanishes somewhere."""


class ResonantDeformation(FreefockError):
    """1 + O(z) = 0 at some z: the deformed right inverse does not exist."""

    def __init__(self, message, labels=()):
        super().__init__(message)
        self.labels = tuple(labels)


# --- solvers ---

class SeriesDiverging(FreefockError):
    """Perturbation increments grew over several consecutive orders.

    Carries the partial result on ``self.partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SingularClosure(FreefockError):
    """A diagonal block of the closed equation is singular."""

    def __init__(self, message, level=None, null_dim=None):
        super().__init__(message)
        self.level = level
        self.null_dim = null_dim


class SingularRationalForm(FreefockError):
    """Zero pivot encountered while building the auxiliary Y operator."""


# --- oracle ---

class TrajectoryDiverged(FreefockError):
    """A sampled trajectory exceeded the blow-up threshold."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class NotADistribution(FreefockError):
    """Marginalization input has negative entries or does not sum to 1."""


class CombinatorialBudget(FreefockError):
    """Moment order too high for pairing enumeration (max 8)."""


# --- configuration ---

class ConfigError(FreefockError):
    """Experiment configuration failed schema validation."""


class ConditioningWarning(UserWarning):
    """Polynomial degree fit is ill conditioned; result may be unreliable."""
