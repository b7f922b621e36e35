"""Shared exception types.

Every failure mode that callers are expected to catch is a subclass of
:class:`PwavelabError`, so CLI code can map the whole family onto exit
codes without enumerating modules.
"""


class PwavelabError(Exception):
    """Base class for all package-specific failures."""


class NonRepulsive(PwavelabError):
    """The pair potential takes negative values; only V >= 0 is handled."""


class NoConvergence(PwavelabError):
    """An iterative refinement loop hit its cap before reaching tolerance."""


class DegenerateExterior(PwavelabError):
    """Exterior matching produced a vanishing constant part.

    For a repulsive potential the matched solution always has A >= 1, so
    hitting this indicates an internal inconsistency rather than bad input.
    """


class DimensionUnsupported(PwavelabError):
    """The requested operation is not defined for this dimension."""


# The expansion-side operations use this alias for the same condition.
UnsupportedDim = DimensionUnsupported


class GridMismatch(PwavelabError):
    """A tabulated solution does not cover the requested radial range."""


class CutoffInsideCore(PwavelabError):
    """The cutoff scale 1/k_F reaches into the support of the potential."""


class QuadratureFailure(PwavelabError):
    """Adaptive quadrature refinement failed to converge."""


class InsufficientSamples(PwavelabError):
    """A fit was requested with fewer sample points than the model needs."""


class Overflow(PwavelabError):
    """A lattice enumeration would exceed the configured size cap."""


class SectorTooLarge(PwavelabError):
    """A Fock-space sector exceeds the configured dimension cap."""


class SectorMissing(PwavelabError):
    """A basis lacks the particle-number sectors an operation requires."""


class ExpDivergence(PwavelabError):
    """Taylor application of a matrix exponential failed to contract."""


class ConfigError(PwavelabError):
    """A run configuration is missing a key or holds an invalid value."""


class CutoffTooSmall(UserWarning):
    """Momentum cutoff clips part of the regularized pair excitations.

    Warning category, not an error: the affected weight is reported by the
    model builder instead of aborting the run.
    """


class MissingEffectiveRange(UserWarning):
    """No effective-range input, so its energy term is left out.

    Warning category: the remaining terms are still well defined and the
    breakdown records the omission as a flag.
    """
