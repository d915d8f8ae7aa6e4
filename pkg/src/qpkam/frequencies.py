"""Frequency data and Diophantine certificates.

A frequency pair (omega, gamma) enters every small-divisor denominator as
<k, omega>*gamma + l.  Rational independence of omega cannot be decided in
floating point, so solvers consume an empirical certificate instead: a finite
scan of all 0 < |k| <= K that records the worst divisor and the constant c0
such that |<k,omega>*gamma + l| >= c0 / |k|^sigma on the scanned range.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ResonanceDetected

RESONANCE_FLOOR = 1e-14


@dataclass(frozen=True)
class FrequencyData:
    """Spatial frequency vector omega together with the drift gamma."""

    omega: tuple
    gamma: float

    def __post_init__(self):
        omega = tuple(float(w) for w in self.omega)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "gamma", float(self.gamma))
        if len(omega) == 0:
            raise ValueError("omega must have at least one entry")
        if any(w == 0.0 for w in omega):
            raise ValueError("omega entries must be nonzero")
        if len(set(omega)) != len(omega):
            raise ValueError("omega entries must be pairwise distinct")

    @property
    def m(self):
        return len(self.omega)

    def dot(self, k):
        """<k, omega> for an integer vector k."""
        return float(np.dot(k, self.omega))

    def divisor(self, k, l):
        """<k, omega>*gamma + l."""
        return self.dot(k) * self.gamma + l


@dataclass(frozen=True)
class DiophCertificate:
    """Result of a finite Diophantine scan for a (omega, gamma) pair."""

    c0: float
    sigma: float
    K_checked: int
    L_window: int
    worst_k: tuple
    worst_l: int
    worst_divisor: float

    def lower_bound(self, k):
        """Certified lower bound c0/|k|^sigma for the divisor at k != 0."""
        kn = int(np.max(np.abs(k)))
        if kn == 0:
            raise ValueError("lower_bound is only defined for k != 0")
        return self.c0 / kn**self.sigma

    def covers(self, k):
        return int(np.max(np.abs(k))) <= self.K_checked

    def to_dict(self):
        return {
            "c0": self.c0,
            "sigma": self.sigma,
            "K_checked": self.K_checked,
            "L_window": self.L_window,
            "worst": {
                "k": list(self.worst_k),
                "l": self.worst_l,
                "divisor": self.worst_divisor,
            },
        }


def _index_grid(m, K):
    """All integer vectors 0 < |k|_inf <= K as an (n, m) array."""
    if m == 1:
        ks = np.arange(-K, K + 1)
        ks = ks[ks != 0]
        return ks[:, None]
    axes = [np.arange(-K, K + 1)] * m
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    return grid[np.any(grid != 0, axis=1)]


def certify(freq: FrequencyData, sigma: float, K_max: int,
            scan_csv=None) -> DiophCertificate:
    """Scan all 0 < |k| <= K_max and certify c0 = min |divisor| * |k|^sigma.

    For each k only the integer l nearest to -<k,omega>*gamma matters: every
    other l leaves a divisor of magnitude >= 1/2.  A divisor below the
    resonance floor aborts the scan.

    scan_csv, if given, is a callable fed (|k|, worst divisor at this |k|,
    running c0 minimum) rows in increasing |k| order.
    """
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    ks = _index_grid(freq.m, K_max)
    d = ks @ np.asarray(freq.omega) * freq.gamma
    nearest = np.rint(d)
    div = np.abs(d - nearest)
    knorm = np.max(np.abs(ks), axis=1)

    bad = np.flatnonzero(div < RESONANCE_FLOOR)
    if bad.size:
        i = bad[np.argmin(knorm[bad])]
        raise ResonanceDetected(
            f"resonance at k={tuple(int(v) for v in ks[i])}, "
            f"l={-int(nearest[i])}, divisor={div[i]:.3e}"
        )

    weighted = div * knorm.astype(float) ** sigma
    i = int(np.argmin(weighted))
    c0 = float(weighted[i])

    if scan_csv is not None:
        running = np.inf
        for radius in range(1, K_max + 1):
            sel = knorm == radius
            worst = float(np.min(div[sel]))
            running = min(running, float(np.min(weighted[sel])))
            scan_csv(radius, worst, running)

    return DiophCertificate(
        c0=c0,
        sigma=float(sigma),
        K_checked=int(K_max),
        L_window=int(np.max(np.abs(nearest))),
        worst_k=tuple(int(v) for v in ks[i]),
        worst_l=-int(nearest[i]),
        worst_divisor=float(div[i]),
    )


def divisor_sum(freq: FrequencyData, nu: int) -> float:
    """Sum of 1/|<k,omega>*gamma + l|^2 over 0 < |k|+|l| <= nu with k != 0.

    |k| is the max norm of k.  The caller compares the result against the
    bound (pi^2/8) * 3^(m+3) * c0^(-2) * nu^(2 sigma).
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    total = 0.0
    omega = np.asarray(freq.omega)
    for radius in range(1, nu + 1):
        ks = _index_grid(freq.m, radius)
        ks = ks[np.max(np.abs(ks), axis=1) == radius]
        d = ks @ omega * freq.gamma
        lmax = nu - radius
        for l in range(-lmax, lmax + 1):
            total += float(np.sum(1.0 / (d + l) ** 2))
    return total


def divisor_sum_bound(cert: DiophCertificate, m: int, nu: int) -> float:
    """(pi^2/8) * 3^(m+3) * c0^(-2) * nu^(2 sigma)."""
    return (np.pi**2 / 8.0) * 3 ** (m + 3) * cert.c0 ** (-2) * nu ** (2 * cert.sigma)


def iter_indices(m, K_max, L_max):
    """All (k, l) with |k|_inf <= K_max, |l| <= L_max, as (tuple, int) pairs."""
    axes = [range(-K_max, K_max + 1)] * m
    for k in itertools.product(*axes):
        for l in range(-L_max, L_max + 1):
            yield k, l
