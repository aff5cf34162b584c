"""Exception types shared across the package."""


class GradleakError(Exception):
    """Base class for all errors raised by gradleak."""


class ShapeError(GradleakError, ValueError):
    """Tensor or geometry shapes do not agree."""


class ArchitectureError(GradleakError, ValueError):
    """An architecture document is malformed or its shape chain is invalid.

    ``layer`` holds the index of the first offending layer when known.
    """

    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class SerializationError(GradleakError, ValueError):
    """A JSON document cannot be decoded into the requested container."""


class InvalidActivationOutput(GradleakError, ValueError):
    """A value lies outside the range of the activation that supposedly produced it."""


class AllBiasGradientsZero(GradleakError):
    """No dense-layer bias gradient is large enough to divide by; the attack cannot start."""


class RankDeficient(GradleakError):
    """The stacked constraint matrix has fewer independent rows than unknowns."""

    def __init__(self, rank, n_unknowns, layer=None):
        self.rank = int(rank)
        self.n_unknowns = int(n_unknowns)
        self.layer = layer
        where = f"layer {layer}: " if layer is not None else ""
        super().__init__(f"{where}rank {self.rank} < {self.n_unknowns} unknowns")
