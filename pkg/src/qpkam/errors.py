"""Shared exception types."""


class QpkamError(Exception):
    """Base class for all library errors."""


class FrequencyMismatch(QpkamError):
    """Two series with different frequency data were combined."""


class ActionOutOfRange(QpkamError):
    """Evaluation requested outside the stored action radius."""


class ShiftTooLarge(QpkamError):
    """Re-expansion residual of a composition exceeded tolerance."""


class ResonanceDetected(QpkamError):
    """A small divisor fell below the numerical resonance floor."""


class DivisorUnderflow(QpkamError):
    """A retained divisor is too small to divide by safely."""


class ParityViolation(QpkamError):
    """A series does not have the parity its tag claims."""


class RealityViolation(QpkamError):
    """Coefficient conjugate symmetry is broken."""


class ContractionFailure(QpkamError):
    """Fixed-point inversion did not converge."""


class DegenerateSchedule(QpkamError):
    """Iteration schedule violates its admissibility constraints."""


class DivergenceDetected(QpkamError):
    """Perturbation norms grew for two consecutive steps."""


class OrbitEscape(QpkamError):
    """An orbit left the configured action window."""


class InsufficientData(QpkamError):
    """Not enough samples for the requested statistic."""


class FitDegenerate(QpkamError):
    """Too few points for a meaningful regression."""


class ZeroTwist(QpkamError):
    """The twist coefficient vanishes; no invariant-curve conclusion."""


class IntegratorFailure(QpkamError):
    """The ODE integrator reported failure."""


class ConfigError(QpkamError):
    """Invalid experiment configuration."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
