"""Quasi-periodically forced oscillator laboratory.

The model equation is

    x'' + phi(x) f(x') + omega0^2 x + g(x) = p(t)

with saturating nonlinearities and an even quasi-periodic forcing.  In the
plane it becomes the first order system

    x' = -omega0 y,
    y' =  omega0 x + omega0^{-1} (phi(x) f(omega0 y) + g(x) - p(t)),

reversible with respect to G(x, y) = (x, -y) together with t -> -t.  The
module provides Poincare sections at the forcing period, the chain of
near-identity transforms that exposes the limit twist in the action, and
the twist coefficient that gates the invariant-curve regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

try:
    from numba import njit as _njit
except ImportError:          # pragma: no cover - numba is an optional speedup
    _njit = None

from .errors import (DivisorUnderflow, IntegratorFailure, OrbitEscape,
                     ParityViolation, ZeroTwist)
from .maps import OrbitRecord


@dataclass(frozen=True)
class SaturatingFn:
    """Scalar nonlinearity with finite limits at -inf and +inf."""

    fn: callable
    lim_neg: float
    lim_pos: float
    name: str = "custom"

    def __call__(self, x):
        return self.fn(x)

    def is_even(self, probe=None, tol=1e-9):
        if probe is None:
            probe = np.linspace(0.1, 50.0, 37)
        return bool(np.max(np.abs(self.fn(probe) - self.fn(-probe))) <= tol)


def scalar_fn(name, scale=1.0):
    """Registry of named saturating nonlinearities."""
    if name == "zero":
        return SaturatingFn(lambda x: np.zeros_like(np.asarray(x, float)),
                            0.0, 0.0, "zero")
    if name == "arctan":
        return SaturatingFn(lambda x: scale * np.arctan(x),
                            -scale * np.pi / 2, scale * np.pi / 2, "arctan")
    if name == "even_arctan":
        # arctan of x^2: even, smooth, limit scale*pi/2 on both sides
        return SaturatingFn(lambda x: scale * np.arctan(np.square(x)),
                            scale * np.pi / 2, scale * np.pi / 2,
                            "even_arctan")
    if name == "tanh":
        return SaturatingFn(lambda x: scale * np.tanh(x),
                            -scale, scale, "tanh")
    raise KeyError(f"unknown scalar function {name!r}")


_FN_CODES = {"zero": 0, "arctan": 1, "even_arctan": 2, "tanh": 3}


def _fn_code(fn):
    """(code, scale) pair for the registry functions, None for custom ones."""
    code = _FN_CODES.get(fn.name)
    if code is None:
        return None
    if code == 0:
        return (0, 0.0)
    if code in (1, 2):
        return (code, fn.lim_pos * 2.0 / np.pi)
    return (3, fn.lim_pos)


def _build_rk4_kernel():
    import math

    def fn_eval(code, scale, x):
        if code == 0:
            return 0.0
        if code == 1:
            return scale * math.atan(x)
        if code == 2:
            return scale * math.atan(x * x)
        return scale * math.tanh(x)

    def kernel(z0, period, n_periods, n_sub, w, codes, scales, freqs, amps,
               r_ceiling):
        def rhs(t, x, y):
            p = 0.0
            for q in range(len(amps)):
                p += amps[q] * math.cos(freqs[q] * t)
            dy = w * x + (fn_eval(codes[0], scales[0], x)
                          * fn_eval(codes[1], scales[1], w * y)
                          + fn_eval(codes[2], scales[2], x) - p) / w
            return -w * y, dy

        out = np.empty((n_periods + 1, 2))
        x, y = z0[0], z0[1]
        out[0, 0] = x
        out[0, 1] = y
        h = period / n_sub
        count = n_periods
        escaped = False
        r2max = r_ceiling * r_ceiling
        for i in range(n_periods):
            t0 = period * i
            for j in range(n_sub):
                t = t0 + h * j
                k1x, k1y = rhs(t, x, y)
                k2x, k2y = rhs(t + 0.5 * h, x + 0.5 * h * k1x,
                               y + 0.5 * h * k1y)
                k3x, k3y = rhs(t + 0.5 * h, x + 0.5 * h * k2x,
                               y + 0.5 * h * k2y)
                k4x, k4y = rhs(t + h, x + h * k3x, y + h * k3y)
                x += h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0
                y += h * (k1y + 2 * k2y + 2 * k3y + k4y) / 6.0
            out[i + 1, 0] = x
            out[i + 1, 1] = y
            if x * x + y * y > r2max:
                escaped = True
                count = i + 1
                break
        return out[: count + 1], escaped, count

    if _njit is not None:
        fn_eval = _njit(inline="always")(fn_eval)
        kernel = _njit(kernel)
    return kernel


_RK4_KERNEL = None


def _rk4_kernel():
    global _RK4_KERNEL
    if _RK4_KERNEL is None:
        _RK4_KERNEL = _build_rk4_kernel()
    return _RK4_KERNEL


@dataclass(frozen=True)
class Forcing:
    """Even real quasi-periodic forcing sum_j amps[j] cos(<k_j, mu> t)."""

    mu: tuple
    wavevectors: tuple          # tuple of integer tuples, one per cosine
    amps: tuple

    @classmethod
    def cosines(cls, mu, terms):
        """terms: mapping from integer tuple k to a cosine amplitude."""
        mu = tuple(float(v) for v in mu)
        ks = tuple(tuple(int(v) for v in k) for k in terms)
        for k in ks:
            if len(k) != len(mu):
                raise ValueError("wavevector length does not match mu")
        return cls(mu=mu, wavevectors=ks,
                   amps=tuple(float(terms[k]) for k in terms))

    @classmethod
    def zero(cls, mu):
        return cls.cosines(mu, {})

    @property
    def freqs(self):
        return np.array([float(np.dot(k, self.mu)) for k in self.wavevectors])

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if not self.amps:
            return np.zeros(t.shape)
        return np.cos(np.multiply.outer(t, self.freqs)) @ np.asarray(self.amps)

    def sup_bound(self):
        return float(np.sum(np.abs(self.amps)))


@dataclass(frozen=True)
class OscillatorSpec:
    omega0: float
    phi: SaturatingFn
    f_damp: SaturatingFn
    g_nl: SaturatingFn
    p_force: Forcing
    r_ceiling: float = np.inf

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if not self.f_damp.is_even():
            raise ParityViolation("f_damp must be an even function")
        for fn in (self.phi, self.f_damp, self.g_nl):
            if not (np.isfinite(fn.lim_neg) and np.isfinite(fn.lim_pos)):
                raise ValueError(f"{fn.name} must have finite limits")

    def rhs(self, t, z):
        x, y = z
        w = self.omega0
        return (-w * y,
                w * x + (self.phi(x) * self.f_damp(w * y) + self.g_nl(x)
                         - self.p_force.eval(t)) / w)

    def bounded_term_sup(self, probe_radius=1e4, n_probe=201):
        """Empirical C with |phi f + g - p| <= C omega0 on any orbit."""
        xs = np.linspace(-probe_radius, probe_radius, n_probe)
        sup_pf = float(np.max(np.abs(self.phi(xs))) *
                       np.max(np.abs(self.f_damp(xs))))
        sup_g = float(np.max(np.abs(self.g_nl(xs))))
        return (sup_pf + sup_g + self.p_force.sup_bound()) / self.omega0

    def amplitude_floor(self):
        """Radius floor 2 C / omega0 below which the angle may stall."""
        return 2.0 * self.bounded_term_sup() / self.omega0


def arctan_oscillator(omega0=1.0, forcing=None):
    """The saturating reference instance used throughout the experiments."""
    if forcing is None:
        forcing = Forcing.zero((1.0,))
    return OscillatorSpec(
        omega0=omega0,
        phi=scalar_fn("arctan"),
        f_damp=scalar_fn("even_arctan"),
        g_nl=scalar_fn("arctan", scale=2.0 / np.pi),
        p_force=forcing,
    )


def oscillator_poincare(spec, z0, n_periods, rtol=1e-12, atol=1e-12,
                        method="DOP853", n_sub=256):
    """Section map orbit at the period of the first forcing frequency.

    Section points are stored as (theta, r) pairs; escape past r_ceiling
    truncates the record and sets the flag.  method="rk4" selects a
    fixed-step kernel (n_sub stages per period, compiled when numba is
    present) for long runs; it requires the registry nonlinearities.
    """
    if not spec.p_force.mu:
        raise ValueError("forcing must carry at least one frequency")
    period = 2.0 * np.pi / spec.p_force.mu[0]
    if method == "rk4":
        codes = [_fn_code(fn) for fn in (spec.phi, spec.f_damp, spec.g_nl)]
        if any(c is None for c in codes):
            raise ValueError("rk4 path supports registry nonlinearities only")
        xy, escaped, count = _rk4_kernel()(
            np.asarray(z0, float), period, int(n_periods), int(n_sub),
            spec.omega0, np.array([c[0] for c in codes], dtype=np.int64),
            np.array([c[1] for c in codes]), np.asarray(spec.p_force.freqs),
            np.asarray(spec.p_force.amps, dtype=float),
            float(spec.r_ceiling))
        samples = np.column_stack(
            [np.arctan2(xy[:, 1], xy[:, 0]), np.hypot(xy[:, 0], xy[:, 1])])
        return OrbitRecord(samples=samples, iterations=count, escaped=escaped)
    t_eval = period * np.arange(n_periods + 1)
    events = None
    if np.isfinite(spec.r_ceiling):
        def escape(t, z):
            return z[0] * z[0] + z[1] * z[1] - spec.r_ceiling**2
        escape.terminal = True
        events = escape
    sol = solve_ivp(spec.rhs, (0.0, t_eval[-1]), np.asarray(z0, float),
                    method=method, t_eval=t_eval, rtol=rtol, atol=atol,
                    events=events, dense_output=False)
    if sol.status == -1:
        raise IntegratorFailure(sol.message)
    x, y = sol.y
    samples = np.column_stack([np.arctan2(y, x), np.hypot(x, y)])
    escaped = sol.status == 1
    return OrbitRecord(samples=samples, iterations=len(samples) - 1,
                       escaped=escaped)


def time_reversal_residual(spec, z0, t_span, rtol=1e-12, atol=1e-12):
    """Forward/backward symmetry defect of one orbit segment.

    If z(t) is a solution then (x, -y)(-t) is one as well; the residual is
    the mismatch at t = 0 after integrating the reflected endpoint back.
    """
    z0 = np.asarray(z0, dtype=float)
    fwd = solve_ivp(spec.rhs, (0.0, t_span), z0, method="DOP853",
                    rtol=rtol, atol=atol)
    if not fwd.success:
        raise IntegratorFailure(fwd.message)
    zT = fwd.y[:, -1]
    back = solve_ivp(spec.rhs, (-t_span, 0.0), np.array([zT[0], -zT[1]]),
                     method="DOP853", rtol=rtol, atol=atol)
    if not back.success:
        raise IntegratorFailure(back.message)
    w0 = back.y[:, -1]
    return float(max(abs(w0[0] - z0[0]), abs(w0[1] + z0[1])))


def _angular_average(integrand, lam):
    # full_output also suppresses the harmless roundoff warning emitted for
    # integrands that are flat over most of the circle
    out = quad(integrand, 0.0, 2.0 * np.pi,
               points=[np.pi / 2, 3 * np.pi / 2], limit=200, full_output=1)
    return out[0] / (2.0 * np.pi * lam)


def J1(spec, lam):
    """Angular average of phi f cos at radius lam, divided by lam."""
    w = spec.omega0
    return _angular_average(
        lambda ph: spec.phi(lam * np.cos(ph))
        * spec.f_damp(w * lam * np.sin(ph)) * np.cos(ph), lam)


def J2(spec, lam):
    """Angular average of g cos at radius lam, divided by lam."""
    return _angular_average(
        lambda ph: spec.g_nl(lam * np.cos(ph)) * np.cos(ph), lam)


def lam_J1_limit(spec):
    """Limit of lam * J1(lam) as lam grows."""
    return (spec.phi.lim_pos - spec.phi.lim_neg) * spec.f_damp.lim_pos / np.pi


def lam_J2_limit(spec):
    return (spec.g_nl.lim_pos - spec.g_nl.lim_neg) / np.pi


def S1(spec, theta, r):
    """Integral removing the order-one radial drift at radius r."""
    w = spec.omega0

    def integrand(ph):
        return (spec.phi(r * np.cos(ph)) * spec.f_damp(w * r * np.sin(ph))
                + spec.g_nl(r * np.cos(ph))) * np.sin(ph)

    val, _ = quad(integrand, 0.0, theta, limit=200)
    return -val / w**2


@dataclass(frozen=True)
class S3Field:
    """Oscillatory correction S3(theta, tau) removing the p cos(theta) term.

    S3 = e^{i theta} sum_k chi_k^+ e^{i <k,mu> tau} + conjugate-side sum,
    where chi_k^{+/-} = i p_k / (2 omega0^3 (<k,mu>/omega0 +/- 1)).
    """

    omega0: float
    mu: tuple
    freqs: tuple                  # <k, mu> per mode, complex exponential form
    p_complex: tuple              # complex Fourier coefficients p_k
    chi_plus: tuple
    chi_minus: tuple

    def _sums(self, tau):
        tau = np.asarray(tau, dtype=float)
        ph = np.exp(1j * np.multiply.outer(tau, np.asarray(self.freqs)))
        return ph @ np.asarray(self.chi_plus), ph @ np.asarray(self.chi_minus)

    def eval(self, theta, tau):
        theta = np.asarray(theta, dtype=float)
        sp, sm = self._sums(tau)
        return np.real(np.exp(1j * theta) * sp + np.exp(-1j * theta) * sm)

    def d_theta(self, theta, tau):
        theta = np.asarray(theta, dtype=float)
        sp, sm = self._sums(tau)
        return np.real(1j * np.exp(1j * theta) * sp
                       - 1j * np.exp(-1j * theta) * sm)

    def d_tau(self, theta, tau):
        theta = np.asarray(theta, dtype=float)
        tau = np.asarray(tau, dtype=float)
        f = np.asarray(self.freqs)
        ph = 1j * f * np.exp(1j * np.multiply.outer(tau, f))
        sp = ph @ np.asarray(self.chi_plus)
        sm = ph @ np.asarray(self.chi_minus)
        return np.real(np.exp(1j * theta) * sp + np.exp(-1j * theta) * sm)

    def pde_residual(self, p_force, n_grid=64):
        """sup-grid residual of the defining transport equation."""
        w = self.omega0
        th = np.linspace(0.0, 2 * np.pi, n_grid, endpoint=False)
        nonzero = [abs(f) for f in self.freqs if f != 0.0]
        tau_span = 2 * np.pi / min(nonzero) if nonzero else 2 * np.pi
        tau = np.linspace(0.0, tau_span, n_grid, endpoint=False)
        TH, TA = np.meshgrid(th, tau, indexing="ij")
        res = (w**-3 * p_force.eval(TA) * np.cos(TH)
               + self.d_theta(TH, TA) + self.d_tau(TH, TA) / w)
        return float(np.max(np.abs(res)))


def solve_s3(spec, cert=None, divisor_floor=1e-12):
    """Mode-by-mode solve of the transport equation for S3.

    Every cosine term amp cos(<k,mu> tau) contributes the complex pair
    p_{+/-k} = amp / 2.  Divisors <k,mu>/omega0 +/- 1 are checked against
    the certificate bound when one is supplied.
    """
    w = spec.omega0
    freqs, p_c = [], []
    for k, amp in zip(spec.p_force.wavevectors, spec.p_force.amps):
        f = float(np.dot(k, spec.p_force.mu))
        if all(v == 0 for v in k):
            freqs.append(0.0)
            p_c.append(complex(amp))
            continue
        freqs.append(f)
        p_c.append(complex(amp / 2.0))
        freqs.append(-f)
        p_c.append(complex(amp / 2.0))
        if cert is not None:
            bound = cert.lower_bound(k)
            for sgn in (1.0, -1.0):
                if abs(f / w + sgn) < bound * (1 - 1e-12):
                    raise DivisorUnderflow(
                        f"divisor at k = {k} beats the certificate bound"
                    )
    chi_p, chi_m = [], []
    for f, pk in zip(freqs, p_c):
        dp, dm = f / w + 1.0, f / w - 1.0
        if min(abs(dp), abs(dm)) < divisor_floor:
            raise DivisorUnderflow(
                f"resonant divisor for forcing frequency {f:.6g}"
            )
        chi_p.append(1j * pk / (2.0 * w**3 * dp))
        chi_m.append(1j * pk / (2.0 * w**3 * dm))
    return S3Field(omega0=w, mu=spec.p_force.mu, freqs=tuple(freqs),
                   p_complex=tuple(p_c), chi_plus=tuple(chi_p),
                   chi_minus=tuple(chi_m))


def action_angle_chain(spec, lambdas=(10.0, 100.0, 1000.0), cert=None):
    """Run the transform chain and report its decay diagnostics.

    Returns a dict with the J1/J2 tables, the measured approach of
    lam * J1 to its limit, the log-log decay slope of J1 + J2 (declared
    class: one inverse power of the radius), the S3 transport residual and
    the empirical amplitude floor.
    """
    lambdas = np.asarray(sorted(lambdas), dtype=float)
    floor = spec.amplitude_floor()
    if lambdas[0] <= floor:
        raise OrbitEscape(
            f"lambda grid reaches below the amplitude floor {floor:.3g}"
        )
    j1 = np.array([J1(spec, la) for la in lambdas])
    j2 = np.array([J2(spec, la) for la in lambdas])
    lim1, lim2 = lam_J1_limit(spec), lam_J2_limit(spec)
    rel = np.abs(lambdas * j1 - lim1) / abs(lim1) if lim1 else np.abs(
        lambdas * j1)
    total = np.abs(j1 + j2)
    if np.all(total > 0):
        slope = float(np.polyfit(np.log(lambdas), np.log(total), 1)[0])
    else:
        slope = np.nan
    s3 = solve_s3(spec, cert=cert)
    out = {
        "lambdas": lambdas.tolist(),
        "J1": j1.tolist(),
        "J2": j2.tolist(),
        "lam_J1_limit": lim1,
        "lam_J2_limit": lim2,
        "lam_J1_rel_err": rel.tolist(),
        "decay_slope": slope,
        "s3_residual": s3.pde_residual(spec.p_force),
        "amplitude_floor": floor,
    }
    return s3, out


def twist_coefficient(spec, require=False):
    """Limit twist of the section map in the reciprocal action.

    gamma1 = -2 omega0^{-3} ((phi(+inf) - phi(-inf)) f(+inf)
                             + (g(+inf) - g(-inf))).
    """
    w = spec.omega0
    val = -2.0 / w**3 * (
        (spec.phi.lim_pos - spec.phi.lim_neg) * spec.f_damp.lim_pos
        + (spec.g_nl.lim_pos - spec.g_nl.lim_neg)
    )
    if require and val == 0.0:
        raise ZeroTwist("twist coefficient vanishes; no curve conclusion")
    return val
