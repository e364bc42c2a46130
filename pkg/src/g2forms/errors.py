"""Exception types shared across the package."""


class G2FormsError(Exception):
    """Base class for domain errors."""


class NotDefinite(G2FormsError):
    """A 3-form on R^6 has non-negative quartic invariant."""

    def __init__(self, lam: float, msg: str | None = None):
        self.lam = float(lam)
        super().__init__(msg or f"3-form is not definite (lambda = {self.lam:.6g} >= 0)")


class Degenerate(G2FormsError):
    """The quartic invariant is numerically indistinguishable from zero."""

    def __init__(self, lam: float):
        self.lam = float(lam)
        super().__init__(f"3-form is degenerate (lambda = {self.lam:.3g})")


class NotPositive(G2FormsError):
    """A 3-form on R^7 does not define a Riemannian metric."""


class NotType22(G2FormsError):
    """A 4-form has a significant component outside bidegree (2,2)."""

    def __init__(self, fraction: float):
        self.fraction = float(fraction)
        super().__init__(f"4-form is not of type (2,2): off-type fraction {self.fraction:.3g}")


class NotClosed(G2FormsError):
    """A field expected to be closed has a large exterior derivative."""

    def __init__(self, residual: float):
        self.residual = float(residual)
        super().__init__(f"field is not closed (max |d| = {self.residual:.3g})")


class Lemma1Violation(G2FormsError):
    """d(rho tilde) of a closed structure failed the (2,2) type check."""

    def __init__(self, fraction: float):
        self.fraction = float(fraction)
        super().__init__(f"d rho~ has off-(2,2) fraction {self.fraction:.3g}")


class NotHypersurface(G2FormsError):
    """An embedding is not an immersion of codimension one."""


class SpacelikeLost(G2FormsError):
    """A Newton iterate left the spacelike region and could not be recovered."""


class MaxIters(G2FormsError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, iters: int, residual: float):
        self.iters = iters
        self.residual = float(residual)
        super().__init__(f"no convergence after {iters} iterations (residual {self.residual:.3g})")


class DependentSigmas(G2FormsError):
    """Closed 2-forms in a torus reduction are pointwise linearly dependent."""


class PositivityLost(G2FormsError):
    """A construction produced a 3-form that is no longer positive."""

    def __init__(self, where, margin: float):
        self.where = where
        self.margin = float(margin)
        super().__init__(f"positivity lost at {where} (margin {self.margin:.3g})")


class NoAdmissibleParameters(G2FormsError):
    """A parameter search found no admissible point."""


class ParseError(G2FormsError):
    """Syntax error in an expression, with its byte offset."""

    def __init__(self, msg: str, offset: int):
        self.offset = offset
        super().__init__(f"{msg} at offset {offset}")


class NotSpacelike(G2FormsError):
    """A submanifold of an indefinite space fails to be spacelike."""

    def __init__(self, where, margin: float):
        self.where = where
        self.margin = float(margin)
        super().__init__(f"not spacelike at {where} (min eigenvalue {self.margin:.3g})")


class NonSymmetricS(G2FormsError):
    """The structure matrix of a torus reduction is not symmetric."""

    def __init__(self, asymmetry: float):
        self.asymmetry = float(asymmetry)
        super().__init__(f"S is not symmetric (defect {self.asymmetry:.3g}); is sigma closed?")


class OmegaNotTaming(G2FormsError):
    """A 2-form fails to tame the complex structure at some sample."""

    def __init__(self, where, margin: float):
        self.where = where
        self.margin = float(margin)
        super().__init__(f"2-form does not tame at {where} (margin {self.margin:.3g})")


class DomainError(G2FormsError):
    """An expression was evaluated outside its domain (1/0, log of a nonpositive, ...)."""
