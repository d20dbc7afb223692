"""Exception types raised across the package.

All of them derive from :class:`VFAError`, which is itself a ``ValueError``
so callers that only care about bad input can catch the builtin.
"""


class VFAError(ValueError):
    """Base class for domain errors."""


class MissingKeypoint(VFAError):
    pass


class DegenerateVertebra(VFAError):
    pass


class InvalidKeypoints(VFAError):
    pass


class ClassMismatch(VFAError):
    pass


class EmptyBatch(VFAError):
    pass


class NonFiniteDensity(VFAError, ArithmeticError):
    pass


class Diverged(VFAError, ArithmeticError):
    pass


class InsufficientData(VFAError):
    pass


class EmptyTruth(VFAError):
    pass


class SingleClass(VFAError):
    pass


class MismatchedSets(VFAError):
    pass


class EmptyPatient(VFAError):
    pass


class UnreachableSeverity(VFAError):
    pass


class InsufficientNeighbors(VFAError):
    pass


class IdMismatch(VFAError):
    def __init__(self, ids):
        self.ids = sorted(ids)
        super().__init__("unmatched vertebra ids: " + ", ".join(self.ids))


class ModelParse(VFAError):
    pass
