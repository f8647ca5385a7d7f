"""Exception types shared across the package."""


class MFGCSError(Exception):
    """Base class for all package-specific errors."""


# -- geometry ---------------------------------------------------------------

class OutsideCollar(MFGCSError):
    """Point is too far from the boundary for a unique projection."""


class NotOnBoundary(MFGCSError):
    """Operation requires a boundary point."""


class ChartFailure(MFGCSError):
    """Chart construction could not be certified at the requested radius."""


class OutOfChart(MFGCSError):
    """Point or coordinate vector lies outside a chart's certified range."""


# -- lagrangian -------------------------------------------------------------

class NoConvergence(MFGCSError):
    """Inner solve (Newton / golden section) failed to converge."""


# -- constants --------------------------------------------------------------

class SmallnessViolated(MFGCSError):
    """The small-coupling feasibility condition fails; no budget exists."""


class NoBudget(MFGCSError):
    """Doubling search exceeded its cap without finding a budget."""


# -- trajopt ----------------------------------------------------------------

class GridMismatch(MFGCSError):
    """Time grids of two objects do not match."""


class InfeasibleStart(MFGCSError):
    """Initial point lies outside the closed state region."""


class Combinatorics(MFGCSError):
    """Brute-force enumeration would exceed its candidate cap."""


# -- measures ---------------------------------------------------------------

class SizeLimit(MFGCSError):
    """Exact transport solve refused: atom-count product too large."""


# -- approx -----------------------------------------------------------------

class PerturbationTooLarge(MFGCSError):
    """Initial-point perturbation exceeds the certified smallness radius."""


class CaseInequalityFailure(MFGCSError):
    """Sub-interval shrinking bottomed out before the case checks passed."""


class DegenerateStart(MFGCSError):
    """Half-line scaling is undefined for this start configuration."""


# -- cli --------------------------------------------------------------------

class ConfigError(MFGCSError):
    """Scenario configuration is malformed or references unknown presets."""


class NotConverged(MFGCSError):
    """Fixed-point iteration stopped at its cap above tolerance."""
