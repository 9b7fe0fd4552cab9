"""Exception hierarchy shared by every workbench module."""


class WorkbenchError(Exception):
    """Base class for all workbench failures."""


class NonZeroMean(WorkbenchError):
    """A periodic Poisson problem was given a source with nonzero mean."""


class NegativePowerOnMean(WorkbenchError):
    """A negative homogeneous power was applied to a field with nonzero mean."""


class OutOfBand(WorkbenchError):
    """A dyadic block lies outside the wavenumbers the grid can represent."""


class VacuumState(WorkbenchError):
    """Density dropped below the vacuum floor."""


class CflViolation(WorkbenchError):
    """The time step exceeds the acoustic CFL bound."""


class _TimedFailure(WorkbenchError):
    def __init__(self, message, time, norm):
        super().__init__(f"{message} at t={time:.6g} (value {norm:.6g})")
        self.time = time
        self.norm = norm


class BlowupDetected(_TimedFailure):
    """A field became non-finite or exceeded the blowup threshold."""


class HyperbolicityLost(_TimedFailure):
    """The sound speed fell below the configured floor c0."""


class StencilOutOfRange(WorkbenchError):
    """A centered time stencil does not fit inside the snapshot stack."""


class HypothesisViolation(WorkbenchError):
    """Sampler parameters leave the range an inequality is stated for."""


class LeftDomain(WorkbenchError):
    """A ray left the time range covered by the snapshot stack."""


class ConstraintDrift(WorkbenchError):
    """The null constraint drifted beyond tolerance along a ray."""


class FoldDetected(WorkbenchError):
    """Neighbouring rays crossed, so the foliation stopped being a graph."""

    def __init__(self, message, time):
        super().__init__(f"{message} (first fold near t={time:.6g})")
        self.time = time


class DegenerateFrame(WorkbenchError):
    """Gram-Schmidt hit a vanishing pivot while building the null frame."""


class ConfigError(WorkbenchError):
    """A configuration file is missing keys or holds invalid values."""


class SnapshotFormatError(WorkbenchError):
    """A snapshot file has the wrong magic bytes, version or size."""
