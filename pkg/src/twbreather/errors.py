"""Exception hierarchy. Each class carries a short category used as the CLI error tag."""


class TWError(Exception):
    category = "error"


class ConfigError(TWError, ValueError):
    category = "config"


class ShapeError(TWError, ValueError):
    category = "shape"


class IntegrationError(TWError, ArithmeticError):
    """A trajectory produced non-finite values."""

    category = "integration"

    def __init__(self, message, trajectory=None, t=None, rows=()):
        self.trajectory = trajectory
        self.t = t
        self.rows = tuple(rows)
        where = []
        if trajectory is not None:
            where.append(f"trajectory={trajectory}")
        if t is not None:
            where.append(f"t={t:.6g}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EmptyEnsembleError(TWError, ValueError):
    category = "ensemble"


class NumericalError(TWError, ArithmeticError):
    category = "numerical"
