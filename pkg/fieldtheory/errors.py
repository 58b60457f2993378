# fieldtheory/errors.py
"""
Exception hierarchy for the field theory services.

Everything raised on purpose by fieldtheory.services derives from
FieldTheoryError, so management commands can catch one type and turn it into
a CommandError with a sensible exit status.
"""


class FieldTheoryError(Exception):
    """Base class for all numerical and configuration failures."""


class AlgebraError(FieldTheoryError, ValueError):
    pass


class MeshError(FieldTheoryError, ValueError):
    pass


class FieldShapeError(FieldTheoryError, ValueError):
    pass


class SingularVierbeinError(FieldTheoryError):
    def __init__(self, site, determinant):
        self.site = tuple(int(i) for i in site)
        self.determinant = float(determinant)
        super().__init__(f"singular vierbein at site {self.site} (det={self.determinant:.3e})")


class DivergenceError(FieldTheoryError):
    def __init__(self, step, norm):
        self.step = int(step)
        self.norm = float(norm)
        super().__init__(f"evolution diverged at step {self.step} (field norm {self.norm:.3e})")


class ProjectionError(FieldTheoryError):
    def __init__(self, iterations, residual):
        self.iterations = int(iterations)
        self.residual = float(residual)
        super().__init__(
            f"constraint projection did not converge in {self.iterations} iterations "
            f"(residual {self.residual:.3e})"
        )


class PCAError(FieldTheoryError):
    def __init__(self, level, message):
        self.level = int(level)
        super().__init__(f"PCA level {self.level}: {message}")


class RankAmbiguityError(FieldTheoryError):
    def __init__(self, singular_value, threshold):
        self.singular_value = float(singular_value)
        self.threshold = float(threshold)
        super().__init__(
            f"rank decision is ambiguous: singular value {self.singular_value:.3e} is within 10x "
            f"of the threshold {self.threshold:.3e}; refine the mesh or loosen the tolerance"
        )
