"""Smoothing operator: plateau/cutoff behavior and decay-rate probes."""

import numpy as np
import pytest

from qpkam import EVEN, ODD, KernelProfile, LacunaryProbe, QPSeries, \
    SmoothingSchedule, dyadic_decompose, error_decay_probe, random_series, smooth
from qpkam.errors import DegenerateSchedule, FitDegenerate
from qpkam.smoothing import DEFAULT_KERNEL, frequency_size, smooth_step


class TestSmoothStep:
    def test_endpoints(self):
        assert smooth_step(-1.0) == 0.0
        assert smooth_step(0.0) == 0.0
        assert smooth_step(1.0) == 1.0
        assert smooth_step(2.0) == 1.0

    def test_monotone(self):
        x = np.linspace(-0.5, 1.5, 401)
        v = smooth_step(x)
        assert np.all(np.diff(v) >= 0)

    def test_midpoint(self):
        assert abs(smooth_step(0.5) - 0.5) < 1e-15


class TestKernelProfile:
    def test_plateau_and_support(self):
        chi = KernelProfile(a=1.0).chi
        assert np.all(chi(np.linspace(0, 0.5, 20)) == 1.0)
        assert np.all(chi(np.linspace(1.0, 3.0, 20)) == 0.0)
        mid = chi(0.75)
        assert 0.0 < mid < 1.0

    def test_scaled_support(self):
        chi = KernelProfile(a=2.0).chi
        assert chi(0.9) == 1.0
        assert chi(2.1) == 0.0


class TestSmoothOperator:
    def test_multiplier_per_mode(self, freq1, rng):
        f = random_series(freq1, rng, 6, K_max=10, L_max=10, D_y=3)
        delta = 0.21
        g = smooth(f, delta)
        for (k, l), c in f.terms.items():
            w = DEFAULT_KERNEL.chi(
                delta * max(abs(k[0] * freq1.omega[0]), abs(l)))
            got = g.terms.get((k, l), np.zeros(1))
            n = max(len(c), len(got))
            ce = np.zeros(n, complex)
            ge = np.zeros(n, complex)
            ce[:len(c)] = w * np.asarray(c)
            ge[:len(got)] = got
            assert np.max(np.abs(ce - ge)) < 1e-15

    def test_low_modes_untouched(self, freq1):
        f = QPSeries.cosine(freq1, (1,), 0, 1.0)
        g = smooth(f, 0.4)  # delta * nu = 0.4 < 1/2
        np.testing.assert_allclose(g.coeff((1,), 0), f.coeff((1,), 0))

    def test_high_modes_annihilated(self, freq1):
        f = QPSeries.cosine(freq1, (8,), 0, 1.0)
        g = smooth(f, 0.2)  # delta * nu = 1.6 > 1
        assert not g.terms

    def test_parity_and_reality_preserved(self, freq1, rng):
        for parity in (EVEN, ODD):
            f = random_series(freq1, rng, 6, parity=parity)
            g = smooth(f, 0.1)
            assert g.parity == parity
            g.check_parity()
            g.check_reality()

    def test_frequency_size(self, freq2):
        assert frequency_size(freq2, (1, 1), -4) == 4.0
        assert abs(frequency_size(freq2, (0, 2), 1)
                   - 2 * np.sqrt(2.0)) < 1e-15

    def test_invalid_delta(self, freq1):
        f = QPSeries.cosine(freq1, (1,), 0, 1.0)
        with pytest.raises(ValueError):
            smooth(f, 0.0)


class TestSchedule:
    def test_formulas(self):
        sc = SmoothingSchedule(1e-3, 0.01, 1, 4)
        assert sc.p == 2 * 1 + 1 + 0.01
        assert sc.sigma == 1 + 0.01 / 100
        assert abs(sc.mu_tilde
                   - 0.01 / (100 * (2 * sc.sigma + 1 + 0.01))) < 1e-18
        for n in range(5):
            assert abs(sc.eps(n) - 1e-3 ** ((1 + sc.mu_tilde) ** n)) < 1e-18
            assert abs(sc.s(n) - sc.eps(n) ** (1 / sc.p)) < 1e-15

    def test_radii_decrease(self):
        sc = SmoothingSchedule(1e-3, 0.01, 1, 6)
        r = sc.radii()
        assert np.all(np.diff(r) < 0)
        assert r[0] <= 0.5

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateSchedule):
            SmoothingSchedule(0.5, 0.01, 1, 4)


class TestDyadicDecompose:
    def test_telescoping_exact(self, freq1, rng):
        f = random_series(freq1, rng, 8, K_max=12, L_max=12, D_y=2,
                          parity=EVEN)
        sc = SmoothingSchedule(1e-3, 0.01, 1, 5)
        pieces = dyadic_decompose(f, sc, 4)
        assert len(pieces) == 5
        total = pieces[0]
        for p in pieces[1:]:
            total = total + p
        ref = smooth(f, sc.s(4))
        for key, c in ref.terms.items():
            got = total.coeff(*key)
            n = max(len(c), len(got))
            ce = np.zeros(n, complex)
            ge = np.zeros(n, complex)
            ce[:len(c)] = c
            ge[:len(got)] = got
            assert np.max(np.abs(ce - ge)) < 1e-14

    def test_pieces_inherit_parity(self, freq1, rng):
        f = random_series(freq1, rng, 6, parity=ODD)
        sc = SmoothingSchedule(1e-3, 0.01, 1, 4)
        for p in dyadic_decompose(f, sc, 3):
            assert p.parity == ODD
            p.check_parity()

    def test_band_limited_input_collapses(self, freq1):
        # all modes below the first plateau: every later piece vanishes
        f = QPSeries.cosine(freq1, (1,), 0, 1.0)
        sc = SmoothingSchedule(1e-3, 0.01, 1, 4)
        pieces = dyadic_decompose(f, sc, 3)
        np.testing.assert_allclose(pieces[0].coeff((1,), 0), f.coeff((1,), 0))
        for p in pieces[1:]:
            assert not p.terms


class TestLacunaryProbe:
    def test_sup_error_attained_at_zero(self):
        probe = LacunaryProbe(2.0, n_terms=20)
        delta = 0.05
        exact = probe.sup_error(delta)
        xs = np.linspace(-0.1, 0.1, 2001)
        sampled = np.max(np.abs(probe.eval_smoothed(xs, delta)
                                - probe.eval(xs)))
        assert sampled <= exact + 1e-12
        at_zero = abs(probe.eval_smoothed(0.0, delta) - probe.eval(0.0))
        assert abs(at_zero - exact) < 1e-12

    @pytest.mark.parametrize("p_test", [1.0, 2.5, 4.0])
    def test_decay_slope(self, p_test):
        deltas = np.logspace(-0.5, -2.5, 8)
        slope, table = error_decay_probe(p_test, deltas)
        assert len(table) == 8
        assert abs(slope - p_test) <= 0.3

    def test_too_few_deltas(self):
        with pytest.raises(FitDegenerate):
            error_decay_probe(2.0, [0.1, 0.05, 0.02])
