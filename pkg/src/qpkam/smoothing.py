"""Analytic smoothing of finitely smooth data, realized in Fourier space.

The smoothing operator acts on a series by multiplying the coefficient at
(k, l) with chi(delta * ||(<k,omega>, l)||), where chi is the Fourier
transform profile of a compactly supported C-infinity kernel: identically 1
on [0, a/2], identically 0 beyond a, glued with the standard exp(-1/x)
transition.  For series data the multiplier form is exact; the physical
convolution form is only used as an independent oracle in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSchedule, FitDegenerate


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lo = np.where(x > 0.0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
        hi = np.where(x < 1.0, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
    return lo / (lo + hi)


@dataclass(frozen=True)
class KernelProfile:
    """Plateau cutoff profile chi with support radius a."""

    a: float = 1.0

    def chi(self, rho):
        """chi(rho): 1 on [0, a/2], 0 on [a, inf), monotone in between."""
        rho = np.asarray(rho, dtype=float)
        return smooth_step((self.a - rho) / (self.a / 2.0))


DEFAULT_KERNEL = KernelProfile()


def frequency_size(freq, k, l):
    """Max-norm size ||(<k,omega>, l)|| of a mode."""
    return max(abs(float(np.dot(k, freq.omega))), abs(l))


def smooth(f, delta, kernel=DEFAULT_KERNEL):
    """Apply the smoothing multiplier; parity and reality are preserved."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    terms = {}
    for (k, l), c in f.terms.items():
        w = float(kernel.chi(delta * frequency_size(f.freq, k, l)))
        if w != 0.0:
            terms[(k, l)] = w * c
    return type(f)(f.freq, terms, f.K_max, f.L_max, f.D_y, f.r, f.parity)


@dataclass(frozen=True)
class SmoothingSchedule:
    """Smoothing radii s_n = eps_n^(1/p) with eps_n = eps^((1+mu_tilde)^n)."""

    epsilon: float
    mu: float
    m: int
    n_max: int
    p: float = field(init=False)
    sigma: float = field(init=False)
    mu_tilde: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        sigma = self.m + self.mu / 100.0
        object.__setattr__(self, "p", 2 * self.m + 1 + self.mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(
            self, "mu_tilde", self.mu / (100.0 * (2 * sigma + 1 + self.mu))
        )
        if self.s(0) > 0.5:
            raise DegenerateSchedule(
                f"s_0 = {self.s(0):.4f} > 1/2; choose a smaller epsilon"
            )

    def eps(self, n):
        return self.epsilon ** ((1.0 + self.mu_tilde) ** n)

    def s(self, n):
        return self.eps(n) ** (1.0 / self.p)

    def radii(self):
        return np.array([self.s(n) for n in range(self.n_max + 1)])


def dyadic_decompose(f, schedule, N, kernel=DEFAULT_KERNEL):
    """Telescoping analytic pieces [f_0, ..., f_N].

    f_0 = S_{s_0} f and f_n = S_{s_n} f - S_{s_{n-1}} f, so partial sums
    equal S_{s_N} f exactly in coefficient space.  Each piece inherits the
    parity tag of f.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    pieces = []
    prev = smooth(f, schedule.s(0), kernel)
    pieces.append(prev)
    for n in range(1, N + 1):
        cur = smooth(f, schedule.s(n), kernel)
        pieces.append(cur - prev)
        prev = cur
    return [p if p.parity == f.parity else _retag(p, f.parity)
            for p in pieces]


def _retag(f, parity):
    return type(f)(f.freq, f.terms, f.K_max, f.L_max, f.D_y, f.r, parity)


class LacunaryProbe:
    """Lacunary cosine series sum_j q^(-p j) cos(q^j x) of Holder class p."""

    def __init__(self, p, n_terms=40, q=2):
        self.p = float(p)
        self.q = int(q)
        self.n_terms = int(n_terms)
        self.freqs = float(q) ** np.arange(n_terms)
        self.amps = self.freqs ** (-self.p)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return np.cos(np.multiply.outer(x, self.freqs)) @ self.amps

    def eval_smoothed(self, x, delta, kernel=DEFAULT_KERNEL):
        x = np.asarray(x, dtype=float)
        w = kernel.chi(delta * self.freqs)
        return np.cos(np.multiply.outer(x, self.freqs)) @ (w * self.amps)

    def sup_error(self, delta, kernel=DEFAULT_KERNEL):
        """Exact sup |S_delta f - f|: all error terms align at x = 0."""
        w = kernel.chi(delta * self.freqs)
        return float(np.sum((1.0 - w) * self.amps))


def error_decay_probe(p_test, deltas, kernel=DEFAULT_KERNEL, n_terms=40):
    """Fit the decay exponent of sup |S_delta f - f| for a Holder-p probe.

    Returns (slope, table) where table is a list of (delta, sup_error)
    rows.  The contract is slope within +-0.3 of p_test.
    """
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    if len(deltas) < 4:
        raise FitDegenerate("need at least 4 deltas for a slope fit")
    probe = LacunaryProbe(p_test, n_terms=n_terms)
    errs = np.array([probe.sup_error(d, kernel) for d in deltas])
    keep = errs > 0
    if np.count_nonzero(keep) < 4:
        raise FitDegenerate("too many exact-reproduction deltas in the sweep")
    slope = np.polyfit(np.log(deltas[keep]), np.log(errs[keep]), 1)[0]
    return float(slope), list(zip(deltas.tolist(), errs.tolist()))
