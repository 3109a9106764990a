"""Exception types shared across the package.

Each error carries a stable ``kind`` string that the command line front end
maps onto an exit code and a machine readable error record.
"""


class GWFractalError(Exception):
    kind = "error"


class ParameterError(GWFractalError, ValueError):
    """An argument is outside the documented domain."""

    kind = "parameter"


class ModelInvalidError(GWFractalError, ValueError):
    """A model description is malformed or violates criticality."""

    kind = "model-invalid"


class DegenerateModelError(ModelInvalidError):
    """The requested quantity is infinite or undefined for a degenerate model."""

    kind = "degenerate-model"


class UnsupportedModelError(GWFractalError, TypeError):
    """The operation is not available for this model family."""

    kind = "unsupported"


class ResourceGuardError(GWFractalError, MemoryError):
    """A run would exceed a memory or cost guard."""

    kind = "resource"
