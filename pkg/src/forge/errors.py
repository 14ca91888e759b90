"""Domain exceptions shared across the forge package.

Every error a CLI user can trigger derives from ForgeError so the entry
point can map it to exit code 1 with a machine-readable JSON payload.
"""


class ForgeError(Exception):
    """Base class for all forge domain errors."""


class MissingFile(ForgeError):
    """A manifest or a file it references does not exist."""


class SchemaError(ForgeError):
    """Structurally invalid input: bad field, bad shape, duplicate id."""


class InvalidProbability(ForgeError):
    """A prediction row is not a probability distribution beyond tolerance."""


class EmptyLibrary(ForgeError):
    """Operation requires at least one model in the library."""


class IoError(ForgeError):
    """Filesystem write/read failure."""


class ShapeMismatch(ForgeError):
    """Prediction matrices or labels disagree on dimensions."""


class EmptyList(ForgeError):
    """A combiner received no prediction matrices."""


class BadWeights(ForgeError):
    """Combination weights are negative or do not sum to 1."""


class UnknownModelId(ForgeError):
    """A selection references a model id absent from the library."""


class InfeasibleBudget(ForgeError):
    """No single model fits the budget; no feasible ensemble exists."""


class TooLarge(ForgeError):
    """Exhaustive enumeration guard tripped."""


class BadK(ForgeError):
    """Requested ensemble size is out of range."""


class OutOfMemory(ForgeError):
    """No device has enough memory for a DNN during allocation."""


class MalformedState(ForgeError):
    """An allocation state violates its structural invariants."""


class InfeasibleStart(ForgeError):
    """Local-search refinement was started from an infeasible allocation."""


class BadConfig(ForgeError):
    """Scheduler or search-space configuration is invalid."""


class ParseError(ForgeError):
    """A sweep/report file could not be parsed."""
