"""Shared exception types."""


class CovRepairError(Exception):
    """Base class for all library errors."""


class SchemaError(CovRepairError):
    pass


class UnknownValue(CovRepairError):
    pass


class WrongArity(CovRepairError):
    pass


class EmptyMupSet(CovRepairError):
    pass


class NotUncovered(CovRepairError):
    """A pattern handed to gap computation already meets the threshold."""


class SizeLimit(CovRepairError):
    """Exhaustive search refused: instance exceeds the configured bounds."""


class DimensionMismatch(CovRepairError):
    pass


class Degenerate(CovRepairError):
    """Training input contains NaN/inf or is otherwise unusable."""


class TooFewCalibrationLabels(CovRepairError):
    pass


class InvalidN(CovRepairError):
    pass


class InvalidAlpha(CovRepairError):
    pass


class EmptyPool(CovRepairError):
    """No sibling combination of the target has any tuples."""


class EmptyNeighborhood(CovRepairError):
    pass


class MissingPayload(CovRepairError):
    """Guide tuple has no payload or mask file although masking was requested."""


class EmptyMask(CovRepairError):
    pass


class MissingPlaceholderValue(CovRepairError):
    pass


class BackendUnavailable(CovRepairError):
    """Generation backend could not be reached; the run is resumable."""


class AuthFailure(CovRepairError):
    pass


class ContentRejected(CovRepairError):
    """The live service refused to produce (or embed) the requested content."""


class EmbeddingUnavailable(CovRepairError):
    pass


class AttemptsExhausted(CovRepairError):
    """A combination ran out of generation attempts before filling its quota."""


class CorruptState(CovRepairError):
    """Run directory missing, unreadable, or failing its checksum."""


class RunPaused(CovRepairError):
    """An operator asked the driver to stop at the next candidate boundary."""


class ZeroOverallMetric(CovRepairError):
    pass
