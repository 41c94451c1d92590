"""Exception hierarchy. Every error carries a short ``code`` string that the
CLI prints and that tests match on."""


class DickeError(Exception):
    code = "error"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details


class DegenerateSteadyStateError(DickeError):
    code = "degenerate-steady-state"


class ConvergenceError(DickeError):
    code = "no-convergence"


class CutoffExceededError(DickeError):
    code = "cutoff-exceeded"


class DimensionCapError(DickeError):
    code = "dimension-cap"


class GridTruncationError(DickeError):
    code = "grid-truncation"


class MissingSubspaceError(DickeError):
    code = "missing-subspace"


class MomentConeError(DickeError):
    code = "moment-cone"


class NonUniqueNullError(DickeError):
    code = "non-unique-null"


class SpectrumError(DickeError):
    code = "spectrum-failure"


class LimitCycleError(DickeError):
    code = "limit-cycle"


class DivergedError(DickeError):
    code = "diverged"


class MultimodalError(DickeError):
    code = "multimodal"
