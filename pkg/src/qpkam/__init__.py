"""Numerical laboratory for invariant curves of reversible quasi-periodic
systems: series arithmetic, Diophantine certificates, analytic smoothing,
homological solvers, the iteration engine and a dynamics workbench.
"""

__version__ = "0.1.0"

from .engine import (InvariantCurve, IterationSchedule, IterationState,
                     YPoly, extract_curve, invert_transform, kam_step, run,
                     schedule, small_twist_precondition)
from .errors import QpkamError
from .frequencies import (DiophCertificate, FrequencyData, certify,
                          divisor_sum, divisor_sum_bound)
from .homological import (PerturbationPair, TransformPair, bessel_check,
                          residual, solve_homological)
from .maps import (OrbitRecord, ReversibleMapSpec, integrable_map,
                   iterate_map, rotation_number)
from .oscillator import (Forcing, OscillatorSpec, action_angle_chain,
                         arctan_oscillator, oscillator_poincare, scalar_fn,
                         solve_s3, twist_coefficient)
from .series import EVEN, ODD, QPSeries, compose, random_series
from .smoothing import (KernelProfile, LacunaryProbe, SmoothingSchedule,
                        dyadic_decompose, error_decay_probe, smooth)

__all__ = [
    "DiophCertificate", "EVEN", "Forcing", "FrequencyData", "InvariantCurve",
    "IterationSchedule", "IterationState", "KernelProfile", "LacunaryProbe",
    "ODD", "OrbitRecord", "OscillatorSpec", "PerturbationPair", "QPSeries",
    "QpkamError", "ReversibleMapSpec", "SmoothingSchedule", "TransformPair",
    "YPoly", "action_angle_chain", "arctan_oscillator", "bessel_check",
    "certify", "compose", "divisor_sum", "divisor_sum_bound",
    "dyadic_decompose", "error_decay_probe", "extract_curve",
    "integrable_map", "invert_transform", "iterate_map", "kam_step",
    "oscillator_poincare", "random_series", "residual", "rotation_number",
    "run", "scalar_fn", "schedule", "small_twist_precondition", "smooth",
    "solve_homological", "solve_s3", "twist_coefficient",
]
