"""Forced oscillator laboratory: section maps, transform chain, twist."""

import numpy as np
import pytest

from qpkam import FrequencyData, certify
from qpkam.errors import (DivisorUnderflow, OrbitEscape, ParityViolation,
                          ZeroTwist)
from qpkam.oscillator import (Forcing, J1, J2, OscillatorSpec, S1,
                              action_angle_chain, arctan_oscillator,
                              lam_J1_limit, lam_J2_limit, oscillator_poincare,
                              scalar_fn, solve_s3, time_reversal_residual,
                              twist_coefficient)


def two_freq_forcing(amp1=1.0, amp2=0.5):
    # fully irrational pair: every divisor <k,mu>/omega0 +/- 1 is safe
    return Forcing.cosines((np.sqrt(2.0), np.sqrt(3.0)),
                           {(1, 0): amp1, (0, 1): amp2})


def forcing_certificate(spec, sigma=2.01, K=20):
    return certify(FrequencyData(spec.p_force.mu, 1.0 / spec.omega0), sigma, K)


class TestScalarFn:
    def test_limits(self):
        f = scalar_fn("arctan", 2.0)
        assert abs(f(1e8) - np.pi) < 1e-7
        assert f.lim_pos == np.pi and f.lim_neg == -np.pi
        e = scalar_fn("even_arctan")
        assert e.is_even()
        assert abs(e(50.0) - e(-50.0)) < 1e-15

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            scalar_fn("bogus")


class TestForcing:
    def test_eval(self):
        p = two_freq_forcing()
        ts = np.linspace(0, 5, 11)
        direct = np.cos(np.sqrt(2.0) * ts) + 0.5 * np.cos(np.sqrt(3.0) * ts)
        np.testing.assert_allclose(p.eval(ts), direct, atol=1e-14)
        assert p.sup_bound() == 1.5

    def test_zero(self):
        p = Forcing.zero((1.0,))
        assert p.eval(2.0) == 0.0


class TestPoincare:
    def test_harmonic_limit_conserves_action(self):
        spec = OscillatorSpec(1.0, scalar_fn("zero"), scalar_fn("zero"),
                              scalar_fn("zero"), Forcing.zero((1.0,)))
        rec = oscillator_poincare(spec, (2.0, 0.0), 100)
        r = rec.samples[:, 1]
        assert np.max(np.abs(r - 2.0)) < 1e-10

    def test_time_reversal(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        assert time_reversal_residual(spec, (5.0, 0.0), 30.0) <= 1e-7

    def test_rk4_matches_adaptive(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        a = oscillator_poincare(spec, (30.0, 0.0), 200, method="rk4")
        b = oscillator_poincare(spec, (30.0, 0.0), 200, rtol=1e-11,
                                atol=1e-11)
        assert np.max(np.abs(a.samples[:, 1] - b.samples[:, 1])) < 1e-2
        dtheta = np.angle(np.exp(1j * (a.samples[:, 0] - b.samples[:, 0])))
        assert np.max(np.abs(dtheta)) < 1e-2

    def test_escape_flag(self):
        # strong negative damping drives the amplitude out
        grow = Forcing.zero((1.0,))
        spec = OscillatorSpec(1.0, scalar_fn("tanh", -40.0),
                              scalar_fn("even_arctan"), scalar_fn("zero"),
                              grow, r_ceiling=30.0)
        rec = oscillator_poincare(spec, (20.0, 5.0), 200)
        assert rec.escaped
        assert rec.iterations < 200

    def test_odd_damping_rejected(self):
        with pytest.raises(ParityViolation):
            OscillatorSpec(1.0, scalar_fn("zero"), scalar_fn("arctan"),
                           scalar_fn("zero"), Forcing.zero((1.0,)))


class TestS3:
    def test_zero_forcing(self):
        spec = arctan_oscillator(1.0, Forcing.zero((1.0,)))
        s3 = solve_s3(spec)
        assert s3.eval(0.3, 1.1) == 0.0

    def test_single_mode_closed_form(self):
        # p = amp cos(nu tau): the transport equation is solved by
        # -amp/(2 w^3) [sin(nu tau + theta)/(1 + nu/w)
        #               + sin(nu tau - theta)/(nu/w - 1)]
        amp, w = 0.8, 1.3
        mu = (np.sqrt(2.0),)
        spec = OscillatorSpec(w, scalar_fn("arctan"),
                              scalar_fn("even_arctan"), scalar_fn("zero"),
                              Forcing.cosines(mu, {(1,): amp}))
        nu = mu[0]
        s3 = solve_s3(spec)
        alpha = -amp / (2 * w**3 * (1 + nu / w))
        beta = -amp / (2 * w**3 * (nu / w - 1))
        for th, ta in [(0.0, 0.0), (0.7, 1.9), (2.5, 4.4)]:
            closed = alpha * np.sin(nu * ta + th) + beta * np.sin(nu * ta - th)
            assert abs(s3.eval(th, ta) - closed) < 1e-14
        assert s3.pde_residual(spec.p_force) <= 1e-10

    def test_two_frequency_certified_residual(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        cert = forcing_certificate(spec)
        s3 = solve_s3(spec, cert=cert)
        assert s3.pde_residual(spec.p_force) <= 1e-10

    def test_resonant_forcing_rejected(self):
        spec = arctan_oscillator(1.0, Forcing.cosines((1.0,), {(1,): 1.0}))
        with pytest.raises(DivisorUnderflow):
            solve_s3(spec)

    def test_derivatives_consistent(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        s3 = solve_s3(spec)
        h = 1e-6
        th, ta = 0.9, 2.1
        fd_th = (s3.eval(th + h, ta) - s3.eval(th - h, ta)) / (2 * h)
        fd_ta = (s3.eval(th, ta + h) - s3.eval(th, ta - h)) / (2 * h)
        assert abs(s3.d_theta(th, ta) - fd_th) < 1e-8
        assert abs(s3.d_tau(th, ta) - fd_ta) < 1e-8


class TestAverages:
    def test_lam_J1_converges(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        lim = lam_J1_limit(spec)
        assert abs(lim - np.pi * (np.pi / 2) / np.pi) < 1e-14
        rel = abs(1e3 * J1(spec, 1e3) - lim) / abs(lim)
        assert rel <= 1e-2

    def test_lam_J2_converges(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        lim = lam_J2_limit(spec)
        assert abs(lim - 2.0 / np.pi) < 1e-14
        rel = abs(1e3 * J2(spec, 1e3) - lim) / abs(lim)
        assert rel <= 1e-2

    def test_chain_diagnostics(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        cert = forcing_certificate(spec)
        s3, info = action_angle_chain(spec, cert=cert)
        assert info["s3_residual"] <= 1e-10
        assert all(r1 > r2 for r1, r2 in zip(info["lam_J1_rel_err"],
                                             info["lam_J1_rel_err"][1:]))
        # J1 + J2 decays like one inverse power of the radius
        assert abs(info["decay_slope"] + 1.0) <= 0.3

    def test_amplitude_floor_guard(self):
        spec = arctan_oscillator(1.0, two_freq_forcing())
        with pytest.raises(OrbitEscape):
            action_angle_chain(spec, lambdas=(1.0, 10.0, 100.0))

    def test_s1_removes_radial_drift(self):
        # d S1 / d theta = -(phi f + g)(r cos, w r sin) sin(theta) / w^2
        spec = arctan_oscillator(1.0, two_freq_forcing())
        h = 1e-4
        r, th = 20.0, 1.2
        fd = (S1(spec, th + h, r) - S1(spec, th - h, r)) / (2 * h)
        w = spec.omega0
        direct = -(spec.phi(r * np.cos(th)) * spec.f_damp(w * r * np.sin(th))
                   + spec.g_nl(r * np.cos(th))) * np.sin(th) / w**2
        assert abs(fd - direct) < 1e-6


class TestTwist:
    def test_arctan_instance_value(self):
        spec = arctan_oscillator(1.0, Forcing.zero((1.0,)))
        # direct evaluation of the defining combination of limits
        direct = -2.0 * ((np.pi / 2 - (-np.pi / 2)) * (np.pi / 2)
                         + (1.0 - (-1.0)))
        assert abs(direct - (-(np.pi**2 + 4.0))) < 1e-12
        assert abs(twist_coefficient(spec) - direct) < 1e-12

    def test_omega_homogeneity(self):
        s1 = arctan_oscillator(1.0, Forcing.zero((1.0,)))
        s2 = arctan_oscillator(2.0, Forcing.zero((1.0,)))
        assert abs(twist_coefficient(s1) / 8.0 - twist_coefficient(s2)) < 1e-12

    def test_zero_twist_flagged(self):
        spec = OscillatorSpec(1.0, scalar_fn("zero"), scalar_fn("zero"),
                              scalar_fn("zero"), Forcing.zero((1.0,)))
        assert twist_coefficient(spec) == 0.0
        with pytest.raises(ZeroTwist):
            twist_coefficient(spec, require=True)
