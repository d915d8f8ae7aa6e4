"""Diophantine certificates against brute-force scans.

[DERIVED] constants were computed with mpmath at 40 digits by exhaustive
minimization of |<k,omega> gamma + l| |k|^sigma over the stated windows.
"""

import numpy as np
import pytest

from qpkam import DiophCertificate, FrequencyData, certify, divisor_sum, \
    divisor_sum_bound
from qpkam.errors import ResonanceDetected
from qpkam.frequencies import iter_indices


def brute_c0(freq, sigma, K):
    """Independent scan written as plain loops over k and nearby l."""
    best = np.inf
    witness = None
    ranges = [range(-K, K + 1)] * freq.m
    import itertools
    for k in itertools.product(*ranges):
        if all(v == 0 for v in k):
            continue
        d = float(np.dot(k, freq.omega)) * freq.gamma
        for l in (int(np.floor(-d)), int(np.ceil(-d))):
            val = abs(d + l) * max(abs(v) for v in k) ** sigma
            if val < best:
                best = val
                witness = (k, l)
    return best, witness


class TestCertify:
    def test_m1_oracle(self, freq1):
        cert = certify(freq1, 1.01, 40)
        # [DERIVED] exhaustive scan, |k| <= 40, sigma = 1.01
        assert abs(cert.c0 - 0.3455325179520259) < 1e-13
        assert cert.worst_k == (-2,)
        assert cert.worst_l == 3

    def test_m1_matches_markov_constant_loosely(self, freq1):
        # the sigma = 1 minimum for sqrt(2) approaches 1/(2 sqrt(2))
        cert = certify(freq1, 1.01, 40)
        assert abs(cert.c0 - 1.0 / (2.0 * np.sqrt(2.0))) < 0.011

    def test_m2_golden_oracle(self, freq2):
        cert = certify(freq2, 2.01, 200)
        assert cert.c0 > 0
        # [DERIVED] exhaustive scan, |k|_inf <= 200, sigma = 2.01
        assert abs(cert.c0 - 0.020188483284412362) < 1e-13
        assert cert.worst_k == (-4, -2)
        assert cert.worst_l == 5

    def test_matches_brute_force(self, freq2):
        cert = certify(freq2, 2.01, 12)
        best, witness = brute_c0(freq2, 2.01, 12)
        assert abs(cert.c0 - best) < 1e-14
        assert (cert.worst_k, cert.worst_l) == witness

    def test_lower_bound_holds_on_scanned_range(self, freq1):
        cert = certify(freq1, 1.01, 60)
        for k in range(-60, 61):
            if k == 0:
                continue
            d = k * freq1.gamma
            div = abs(d - round(d))
            assert div >= cert.lower_bound((k,)) * (1 - 1e-12)

    def test_c0_monotone_in_window(self, freq1):
        prev = np.inf
        for K in (5, 10, 20, 40, 80):
            c0 = certify(freq1, 1.01, K).c0
            assert c0 <= prev + 1e-15
            prev = c0

    def test_gamma_plus_integer_invariance(self):
        # for omega = (1,) the divisor sets of gamma and gamma + 1 coincide
        a = certify(FrequencyData((1.0,), np.sqrt(2.0)), 1.01, 40)
        b = certify(FrequencyData((1.0,), np.sqrt(2.0) + 1.0), 1.01, 40)
        assert abs(a.c0 - b.c0) < 1e-12

    def test_resonance_detected(self):
        with pytest.raises(ResonanceDetected):
            certify(FrequencyData((1.0,), 0.5), 1.01, 10)

    def test_covers(self, freq1):
        cert = certify(freq1, 1.01, 10)
        assert cert.covers((7,))
        assert not cert.covers((11,))

    def test_scan_csv_rows(self, freq1):
        rows = []
        cert = certify(freq1, 1.01, 15,
                       scan_csv=lambda r, w, c: rows.append((r, w, c)))
        assert [r[0] for r in rows] == list(range(1, 16))
        # running minimum is monotone and ends at c0
        running = [r[2] for r in rows]
        assert all(b <= a + 1e-15 for a, b in zip(running, running[1:]))
        assert abs(running[-1] - cert.c0) < 1e-15

    def test_to_dict(self, freq1):
        doc = certify(freq1, 1.01, 10).to_dict()
        assert set(doc) == {"c0", "sigma", "K_checked", "L_window", "worst"}
        assert doc["worst"]["k"] == [-2]


class TestFrequencyData:
    def test_validation(self):
        with pytest.raises(ValueError):
            FrequencyData((), 1.0)
        with pytest.raises(ValueError):
            FrequencyData((0.0,), 1.0)
        with pytest.raises(ValueError):
            FrequencyData((1.0, 1.0), 1.0)

    def test_divisor(self, freq1):
        assert abs(freq1.divisor((2,), -3)
                   - (2 * np.sqrt(2.0) - 3)) < 1e-15

    def test_m(self, freq2):
        assert freq2.m == 2


class TestDivisorSum:
    def test_small_oracles(self, freq1):
        # [DERIVED] mpmath: sums of 1/divisor^2 over 0 < |k| + |l| <= nu
        assert abs(divisor_sum(freq1, 1) - 1.0) < 1e-13
        assert abs(divisor_sum(freq1, 2) - 13.25) < 1e-12
        assert abs(divisor_sum(freq1, 5) - 93.312923401369689) < 1e-10

    def test_monotone_in_nu(self, freq1):
        vals = [divisor_sum(freq1, nu) for nu in range(1, 12)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_bound_holds_up_to_50(self, freq1):
        cert = certify(freq1, 1.01, 60)
        for nu in range(1, 51):
            assert divisor_sum(freq1, nu) <= divisor_sum_bound(cert, 1, nu)

    def test_bound_formula(self, freq1):
        cert = certify(freq1, 1.01, 10)
        expected = (np.pi**2 / 8) * 3**4 * cert.c0**-2 * 5 ** (2 * 1.01)
        assert abs(divisor_sum_bound(cert, 1, 5) - expected) < 1e-10

    def test_invalid_nu(self, freq1):
        with pytest.raises(ValueError):
            divisor_sum(freq1, 0)


def test_iter_indices_count():
    idx = list(iter_indices(2, 2, 1))
    assert len(idx) == 25 * 3
    assert ((0, 0), 0) in idx
