"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`WarpLabError`
so callers (the CLI in particular) can separate operational failures from bugs.
"""


class WarpLabError(Exception):
    pass


class DomainError(WarpLabError, ValueError):
    """A coordinate or interval lies outside the admissible domain."""


class PoleProximityError(DomainError):
    """Query too close to a zero of the warping function."""

    def __init__(self, s, f_value, tol):
        self.s = float(s)
        self.f_value = float(f_value)
        self.tol = float(tol)
        super().__init__(
            f"f({self.s:.17g}) = {self.f_value:.3g} is within the pole guard "
            f"(tol_pos = {self.tol:.3g}); curvature is singular there"
        )


class UnsupportedPointError(DomainError):
    """The requested derivative is not available at this point."""


class ConstructionError(WarpLabError, ValueError):
    """A warping function violates its invariants.

    ``violations`` maps field names to human readable descriptions.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = {"profile": violations}
        self.violations = dict(violations)
        msg = "; ".join(f"{k}: {v}" for k, v in self.violations.items())
        super().__init__(msg)


class ShapeError(WarpLabError, ValueError):
    """Grid functions with mismatched intervals or resolutions."""


class PreconditionError(WarpLabError, ValueError):
    pass


class DisconnectedRegionError(WarpLabError):
    """The warping function vanishes between two query points."""


class EmptyWindowError(WarpLabError):
    """The superlevel set {f >= 1/k} is empty."""


class WindowDisconnectedError(WarpLabError):
    """The superlevel set {f >= 1/k} is not a single interval.

    The connectedness of this set is only guaranteed once k is large enough,
    so this signals that the chosen k is below that threshold.
    """

    def __init__(self, k, components):
        self.k = k
        self.components = [tuple(map(float, c)) for c in components]
        super().__init__(
            f"{{f >= 1/{k}}} has {len(self.components)} components "
            f"{self.components}; connectedness requires a larger k"
        )
