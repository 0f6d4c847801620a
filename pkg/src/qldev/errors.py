"""Exception hierarchy.

Every error carries a short machine-readable ``kind`` so the CLI can map it
to an exit code and a one-line JSON diagnostic.
"""


class QLDevError(Exception):
    kind = "error"
    exit_code = 2

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class ValidationError(QLDevError, ValueError):
    kind = "validation"


class DomainError(ValidationError):
    kind = "domain"


class SupportError(ValidationError):
    kind = "support"


class RankError(ValidationError):
    kind = "rank"


class StructureError(ValidationError):
    kind = "structure"


class BoundaryError(ValidationError):
    kind = "boundary"


class FeasibilityError(ValidationError):
    kind = "feasibility"


class ConfigurationError(ValidationError):
    kind = "configuration"


class EstimationError(QLDevError, RuntimeError):
    kind = "estimation"


class CapacityError(QLDevError, MemoryError):
    kind = "capacity"
    exit_code = 3
