"""Fourier-space solution of the reversible homological equations.

At each iteration step the pair (u*, v*) must satisfy

    gamma * du*/dx + du*/dt + f_hat - v* = 0,
    gamma * dv*/dx + dv*/dt + g_hat     = 0,

with f_hat even and g_hat odd under (x, t) -> (-x, -t).  Mode by mode this
is division by the small divisor d = <k,omega>*gamma + l:

    v*_{k,l} = i g_hat_{k,l} / d          (k,l) != (0,0)
    v*_{0,0} = f_hat_{0,0}
    u*_{k,l} = i (f_hat_{k,l} - v*_{k,l}) / d,   u*_{0,0} = 0.

The parity algebra then forces u* odd and v* even.  Modes outside the
Diophantine certificate window are dropped rather than divided by an
unverified divisor; their majorant is reported in the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivisorUnderflow, ParityViolation
from .series import EVEN, ODD, QPSeries

DIVISOR_FLOOR = 1e-14


@dataclass(frozen=True)
class PerturbationPair:
    """Even angular perturbation f_hat and odd action perturbation g_hat."""

    f_hat: QPSeries
    g_hat: QPSeries

    def __post_init__(self):
        if self.f_hat.parity != EVEN:
            raise ParityViolation("f_hat must carry the even parity tag")
        if self.g_hat.parity != ODD:
            raise ParityViolation("g_hat must carry the odd parity tag")
        self.f_hat.check_parity()
        self.g_hat.check_parity()
        k0 = (0,) * self.g_hat.freq.m
        mean = self.g_hat.coeff(k0, 0)
        scale = max(self.g_hat.max_coeff(), 1.0)
        if np.max(np.abs(mean)) > 1e-12 * scale:
            raise ParityViolation("mean mode of g_hat must vanish")

    @property
    def freq(self):
        return self.f_hat.freq

    def norms(self, s=0.0):
        return self.f_hat.norm(s), self.g_hat.norm(s)


@dataclass(frozen=True)
class TransformPair:
    """Coordinate-change pair with mandated parity: u odd, v even."""

    u: QPSeries
    v: QPSeries
    direction: str  # "forward" (u, v) or "inverse" (u*, v*)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.direction not in ("forward", "inverse"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.u.parity != ODD or self.v.parity != EVEN:
            raise ParityViolation("transform requires u odd and v even")
        self.u.check_parity()
        self.v.check_parity()

    def norms(self, s=0.0):
        return self.u.norm(s), self.v.norm(s)


def solve_homological(pert: PerturbationPair, freq, cert) -> TransformPair:
    """Solve the homological pair; returns the inverse-direction transform."""
    f_hat, g_hat = pert.f_hat, pert.g_hat
    k0 = (0,) * freq.m

    u_terms = {}
    v_terms = {}
    dropped = 0.0
    min_div = np.inf

    keys = set(f_hat.terms) | set(g_hat.terms)
    for k, l in keys:
        if (k, l) == (k0, 0):
            continue
        if any(v != 0 for v in k) and not cert.covers(k):
            dropped += f_hat.coeff_sup_bound(k, l) + g_hat.coeff_sup_bound(k, l)
            continue
        d = freq.divisor(k, l)
        if abs(d) < DIVISOR_FLOOR:
            raise DivisorUnderflow(
                f"divisor {d:.3e} at (k, l) = {(k, l)} below the floor"
            )
        if any(v != 0 for v in k):
            assert abs(d) >= cert.lower_bound(k) * (1 - 1e-12), \
                "certificate violated by an encountered divisor"
        min_div = min(min_div, abs(d))
        vc = 1j * np.asarray(g_hat.coeff(k, l)) / d
        if np.any(vc != 0.0):
            v_terms[(k, l)] = vc
        uc = 1j * (np.asarray(f_hat.coeff(k, l), dtype=complex) - vc) / d
        if np.any(uc != 0.0):
            u_terms[(k, l)] = uc

    mean = f_hat.coeff(k0, 0)
    if np.any(np.asarray(mean) != 0.0):
        v_terms[(k0, 0)] = np.asarray(mean, dtype=complex)

    ref = f_hat
    u = QPSeries(freq, u_terms, ref.K_max, ref.L_max, ref.D_y, ref.r, ODD)
    v = QPSeries(freq, v_terms, ref.K_max, ref.L_max, ref.D_y, ref.r, EVEN)
    u.check_parity()
    v.check_parity()
    return TransformPair(
        u=u, v=v, direction="inverse",
        diagnostics={"dropped_tail": dropped,
                     "min_divisor": None if not np.isfinite(min_div) else min_div},
    )


def _transport(f: QPSeries, freq) -> QPSeries:
    """gamma * df/dx + df/dt, multiplying each mode by i * divisor.

    Using the divisor in one multiplication avoids the catastrophic
    cancellation of forming the two derivative series separately when
    <k,omega>*gamma and l are large and nearly opposite.
    """
    terms = {(k, l): 1j * freq.divisor(k, l) * np.asarray(c)
             for (k, l), c in f.terms.items()}
    return QPSeries(f.freq, terms, f.K_max, f.L_max, f.D_y, f.r, None)


def residual(pert: PerturbationPair, tp: TransformPair, freq, s=0.0):
    """Strip norms of both homological equation residuals."""
    if tp.direction != "inverse":
        raise ValueError("residual expects the inverse-direction pair")
    u, v = tp.u, tp.v
    e1 = _transport(u, freq) + pert.f_hat - v
    e2 = _transport(v, freq) + pert.g_hat
    return e1.norm(s), e2.norm(s)


def bessel_check(f: QPSeries, s: float, y: float = 0.0):
    """Coefficient-energy bound lhs <= 2^(m+1) * rhs for a finite spectrum.

    lhs sums |f_{k,l}(y)|^2 * exp(2 s (|k|_1 + |l|)); rhs is the square of
    the computable shell majorant sum |f_{k,l}(y)| * exp(s (|k|_1 + |l|)),
    an upper bound for the sup of the shell on the strip of half-width s.
    """
    lhs = 0.0
    majorant = 0.0
    for (k, l), _ in f.terms.items():
        a = abs(complex(f.coeff(k, l, y)))
        w = np.exp(s * (sum(abs(v) for v in k) + abs(l)))
        lhs += a * a * w * w
        majorant += a * w
    m = f.freq.m
    return lhs, 2 ** (m + 1) * majorant**2
