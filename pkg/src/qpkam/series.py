"""Quasi-periodic Fourier series with polynomial action dependence.

A series is a finite sum

    f(x, y, t) = sum over (k, l) of  c_{k,l}(y) * exp(i(<k,omega> x + l t)),

where each coefficient c_{k,l} is a Chebyshev polynomial in y on [-r, r] of
degree at most D_y.  Under the reflection (x, t) -> (-x, -t) the mode (k, l)
maps to (-k, -l), so parity and reality are plain coefficient symmetries:

    reality:  c_{-k,-l} = conj(c_{k,l})
    even:     c_{-k,-l} = c_{k,l}
    odd:      c_{-k,-l} = -c_{k,l}

All operations return new instances; series are treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import (
    ActionOutOfRange,
    FrequencyMismatch,
    ParityViolation,
    RealityViolation,
    ShiftTooLarge,
)
from .frequencies import FrequencyData

EVEN = "even"
ODD = "odd"

REALITY_TOL = 1e-12


def _mul_parity(a, b):
    if a is None or b is None:
        return None
    return EVEN if a == b else ODD


def _add_parity(a, b):
    return a if a == b else None


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    n = len(c)
    while n > 1 and c[n - 1] == 0.0:
        n -= 1
    return np.ascontiguousarray(c[:n])


@dataclass(frozen=True)
class StripNorm:
    """Weighted-l1 majorant of a series on the strip domain D(s, r)."""

    s: float
    r: float
    value: float


class QPSeries:
    __slots__ = ("freq", "terms", "K_max", "L_max", "D_y", "r", "parity",
                 "_packed")

    def __init__(self, freq, terms, K_max, L_max, D_y, r, parity=None,
                 check=True):
        self.freq = freq
        self.K_max = int(K_max)
        self.L_max = int(L_max)
        self.D_y = int(D_y)
        self.r = float(r)
        self.parity = parity
        if self.r <= 0:
            raise ValueError("action radius r must be positive")
        if parity not in (None, EVEN, ODD):
            raise ValueError(f"unknown parity tag {parity!r}")
        clean = {}
        for (k, l), c in terms.items():
            k = tuple(int(v) for v in np.atleast_1d(k))
            if len(k) != freq.m:
                raise ValueError("index length does not match frequency count")
            if max(abs(v) for v in k) > self.K_max or abs(l) > self.L_max:
                raise ValueError(f"index {(k, l)} outside truncation bounds")
            c = _trim(c)
            if len(c) > self.D_y + 1:
                raise ValueError("Chebyshev degree exceeds D_y")
            if np.any(c != 0.0):
                clean[(k, int(l))] = c
        self.terms = clean
        self._packed = None
        if check:
            self.check_reality()

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, freq, K_max=16, L_max=16, D_y=8, r=1.0, parity=None):
        return cls(freq, {}, K_max, L_max, D_y, r, parity)

    @classmethod
    def constant(cls, freq, value, K_max=16, L_max=16, D_y=8, r=1.0):
        k0 = (0,) * freq.m
        return cls(freq, {(k0, 0): [value]}, K_max, L_max, D_y, r, parity=EVEN)

    @classmethod
    def cosine(cls, freq, k, l, amplitude=1.0, **kw):
        """amplitude * cos(<k,omega> x + l t) as a conjugate mode pair."""
        k = tuple(int(v) for v in k)
        mk = tuple(-v for v in k)
        a = amplitude / 2.0
        return cls(freq, {(k, l): [a], (mk, -l): [a]},
                   parity=EVEN, **_series_kw(freq, k, l, kw))

    @classmethod
    def sine(cls, freq, k, l, amplitude=1.0, **kw):
        """amplitude * sin(<k,omega> x + l t) as a conjugate mode pair."""
        k = tuple(int(v) for v in k)
        mk = tuple(-v for v in k)
        a = amplitude / 2.0
        return cls(freq, {(k, l): [-1j * a], (mk, -l): [1j * a]},
                   parity=ODD, **_series_kw(freq, k, l, kw))

    # -- invariants ---------------------------------------------------------

    def max_coeff(self):
        if not self.terms:
            return 0.0
        return max(float(np.max(np.abs(c))) for c in self.terms.values())

    def reality_residual(self):
        worst = 0.0
        for (k, l), c in self.terms.items():
            mk = tuple(-v for v in k)
            other = self.terms.get((mk, -l))
            if other is None:
                worst = max(worst, float(np.max(np.abs(c))))
                continue
            n = max(len(c), len(other))
            a = np.zeros(n, dtype=complex)
            b = np.zeros(n, dtype=complex)
            a[: len(c)] = c
            b[: len(other)] = other
            worst = max(worst, float(np.max(np.abs(b - np.conj(a)))))
        return worst

    def check_reality(self):
        scale = max(self.max_coeff(), 1.0)
        res = self.reality_residual()
        if res > REALITY_TOL * scale:
            raise RealityViolation(
                f"conjugate symmetry broken: residual {res:.3e} (scale {scale:.3e})"
            )

    def parity_residual(self, parity=None):
        """Max deviation from c_{-k,-l} = +/- c_{k,l} over stored modes."""
        parity = parity or self.parity
        if parity is None:
            return 0.0
        sign = 1.0 if parity == EVEN else -1.0
        worst = 0.0
        for (k, l), c in self.terms.items():
            mk = tuple(-v for v in k)
            other = self.terms.get((mk, -l))
            if other is None:
                worst = max(worst, float(np.max(np.abs(c))))
                continue
            n = max(len(c), len(other))
            a = np.zeros(n, dtype=complex)
            b = np.zeros(n, dtype=complex)
            a[: len(c)] = c
            b[: len(other)] = other
            worst = max(worst, float(np.max(np.abs(b - sign * a))))
        return worst

    def check_parity(self, tol=1e-12):
        if self.parity is None:
            return
        scale = max(self.max_coeff(), 1.0)
        res = self.parity_residual()
        if res > tol * scale:
            raise ParityViolation(
                f"{self.parity} tag violated: residual {res:.3e}"
            )

    # -- evaluation ---------------------------------------------------------

    def coeff(self, k, l, y=None):
        """Chebyshev coefficients (or value at y) of mode (k, l)."""
        c = self.terms.get((tuple(k), int(l)))
        if c is None:
            c = np.zeros(1, dtype=complex)
        if y is None:
            return c
        return C.chebval(np.asarray(y) / self.r, c)

    def eval(self, x, y, t):
        """Evaluate at real points; y must satisfy |y| <= r."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(np.abs(y) > self.r * (1 + 1e-12)):
            raise ActionOutOfRange(f"|y| exceeds action radius {self.r}")
        theta = np.multiply.outer(x, np.asarray(self.freq.omega))
        return self.eval_shell(theta, y, t)

    def _pack(self):
        """Mode index arrays and a padded coefficient matrix, cached."""
        if self._packed is None:
            n = len(self.terms)
            ks = np.zeros((n, self.freq.m))
            ls = np.zeros(n)
            cm = np.zeros((n, self.D_y + 1), dtype=complex)
            for i, ((k, l), c) in enumerate(self.terms.items()):
                ks[i] = k
                ls[i] = l
                cm[i, : len(c)] = c
            self._packed = (ks, ls, cm)
        return self._packed

    def eval_shell(self, theta, y, t):
        """Evaluate the shell function at angle vectors theta (..., m)."""
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(theta[..., 0], y, t).shape
        if not self.terms:
            return np.zeros(shape, dtype=complex)
        ks, ls, cm = self._pack()
        th = np.broadcast_to(theta, shape + (self.freq.m,)).reshape(-1, self.freq.m)
        uv = (np.broadcast_to(y, shape) / self.r).reshape(-1)
        tv = np.broadcast_to(t, shape).reshape(-1)
        vander = C.chebvander(uv, self.D_y)
        out = np.zeros(len(uv), dtype=complex)
        # block over modes to bound the (points x modes) temporaries
        block = max(1, 4_000_000 // max(len(uv), 1))
        for i in range(0, len(ls), block):
            sl = slice(i, i + block)
            phase = th @ ks[sl].T + np.outer(tv, ls[sl])
            out += np.einsum("pj,pj->p", vander @ cm[sl].T, np.exp(1j * phase))
        return out.reshape(shape)

    def eval_real(self, x, y, t):
        return np.real(self.eval(x, y, t))

    # -- arithmetic ---------------------------------------------------------

    def _require_compatible(self, other):
        if self.freq != other.freq:
            raise FrequencyMismatch("operands carry different frequency data")
        if (self.K_max, self.L_max, self.D_y) != (other.K_max, other.L_max, other.D_y):
            raise FrequencyMismatch("operands carry different truncation bounds")
        if self.r != other.r:
            raise FrequencyMismatch("operands carry different action radii")

    def _like(self, terms, parity):
        return QPSeries(self.freq, terms, self.K_max, self.L_max, self.D_y,
                        self.r, parity)

    def __add__(self, other):
        if np.isscalar(other):
            other = QPSeries.constant(self.freq, other, self.K_max,
                                      self.L_max, self.D_y, self.r)
        self._require_compatible(other)
        terms = {}
        for key in set(self.terms) | set(other.terms):
            a = self.terms.get(key)
            b = other.terms.get(key)
            if a is None:
                terms[key] = b
            elif b is None:
                terms[key] = a
            else:
                terms[key] = C.chebadd(a, b)
        return self._like(terms, _add_parity(self.parity, other.parity))

    __radd__ = __add__

    def __neg__(self):
        return self._like({k: -c for k, c in self.terms.items()}, self.parity)

    def __sub__(self, other):
        if np.isscalar(other):
            other = QPSeries.constant(self.freq, other, self.K_max,
                                      self.L_max, self.D_y, self.r)
        return self + (-other)

    def scale(self, a):
        """Multiply by a real scalar."""
        a = float(a)
        return self._like({k: a * c for k, c in self.terms.items()}, self.parity)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        self._require_compatible(other)
        terms = {}
        for (k1, l1), c1 in self.terms.items():
            for (k2, l2), c2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                l = l1 + l2
                if max(abs(v) for v in k) > self.K_max or abs(l) > self.L_max:
                    continue
                prod = C.chebmul(c1, c2)[: self.D_y + 1]
                key = (k, l)
                if key in terms:
                    terms[key] = C.chebadd(terms[key], prod)
                else:
                    terms[key] = prod
        return self._like(terms, _mul_parity(self.parity, other.parity))

    def __rmul__(self, other):
        if np.isscalar(other):
            return self.scale(other)
        return NotImplemented

    def mul_by_y(self):
        """Multiply by the action variable y = r * T_1(y/r)."""
        ident = np.array([0.0, self.r])
        terms = {k: C.chebmul(c, ident)[: self.D_y + 1]
                 for k, c in self.terms.items()}
        return self._like(terms, self.parity)

    def derivative(self, wrt):
        """Partial derivative; parity flips for x and t, survives for y."""
        if wrt == "x":
            omega = np.asarray(self.freq.omega)
            terms = {(k, l): 1j * float(np.dot(k, omega)) * c
                     for (k, l), c in self.terms.items()}
            parity = _flip(self.parity)
        elif wrt == "t":
            terms = {(k, l): 1j * l * c for (k, l), c in self.terms.items()}
            parity = _flip(self.parity)
        elif wrt == "y":
            terms = {}
            for key, c in self.terms.items():
                if len(c) > 1:
                    terms[key] = C.chebder(c) / self.r
            parity = self.parity
        else:
            raise ValueError(f"unknown variable {wrt!r}")
        return self._like(terms, parity)

    def rescale_action(self, new_r):
        """Re-express the coefficients on the action interval [-new_r, new_r].

        The coefficient polynomials are exact, so this is a change of basis,
        not a projection; shrinking the interval shrinks the sup bounds of
        terms that vanish at y = 0.
        """
        new_r = float(new_r)
        if new_r <= 0:
            raise ValueError("action radius must be positive")
        if new_r == self.r:
            return self
        ratio = new_r / self.r
        scalings = ratio ** np.arange(self.D_y + 1)
        terms = {}
        for key, c in self.terms.items():
            p = C.cheb2poly(c) * scalings[: len(c)]
            terms[key] = C.poly2cheb(p)
        return QPSeries(self.freq, terms, self.K_max, self.L_max, self.D_y,
                        new_r, self.parity)

    def prune(self, tol):
        """Drop conjugate mode pairs whose joint magnitude is below tol."""
        terms = {}
        for (k, l), c in self.terms.items():
            mk = tuple(-v for v in k)
            partner = self.terms.get((mk, -l))
            size = float(np.max(np.abs(c)))
            if partner is not None:
                size = max(size, float(np.max(np.abs(partner))))
            if size > tol:
                terms[(k, l)] = c
        return self._like(terms, self.parity)

    def symmetrize(self, parity=None):
        """Project exactly onto the given (or tagged) parity class."""
        parity = parity or self.parity
        if parity is None:
            return self
        sign = 1.0 if parity == EVEN else -1.0
        terms = {}
        for (k, l), c in self.terms.items():
            mk = tuple(-v for v in k)
            other = self.terms.get((mk, -l), np.zeros(1, dtype=complex))
            n = max(len(c), len(other))
            a = np.zeros(n, dtype=complex)
            b = np.zeros(n, dtype=complex)
            a[: len(c)] = c
            b[: len(other)] = other
            terms[(k, l)] = 0.5 * (a + sign * b)
        return QPSeries(self.freq, terms, self.K_max, self.L_max, self.D_y,
                        self.r, parity)

    # -- norms --------------------------------------------------------------

    def coeff_sup_bound(self, k, l):
        """Upper bound for sup |c_{k,l}(y)| over |y| <= r.

        |T_j| <= 1 on [-1, 1], so the l1 coefficient sum bounds the sup.
        """
        c = self.terms.get((tuple(k), int(l)))
        if c is None:
            return 0.0
        return float(np.sum(np.abs(c)))

    def strip_norm(self, s, r=None):
        """Weighted-l1 majorant of |f| on D(s, r); a true upper bound."""
        if s < 0:
            raise ValueError("strip half-width must be nonnegative")
        r = self.r if r is None else r
        if not 0 < r <= self.r:
            raise ValueError("norm radius must lie in (0, stored radius]")
        omega = np.asarray(self.freq.omega)
        total = 0.0
        for (k, l), c in self.terms.items():
            nu = abs(float(np.dot(k, omega)))
            sup = float(np.sum(np.abs(c)))
            total += sup * np.exp(s * (nu + abs(l)))
        return StripNorm(s=float(s), r=float(r), value=total)

    def norm(self, s=0.0):
        return self.strip_norm(s).value

    # -- composition --------------------------------------------------------

    def compose_shift(self, shift, tol=1e-8):
        """Series of (x, y, t) -> f(x + shift(x, y, t), y, t)."""
        return compose(self, shift_x=shift, tol=tol)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self):
        return {
            "omega": list(self.freq.omega),
            "gamma": self.freq.gamma,
            "K_max": self.K_max,
            "L_max": self.L_max,
            "D_y": self.D_y,
            "r": self.r,
            "parity": self.parity,
            "terms": [
                {
                    "k": list(k),
                    "l": l,
                    "cheb": [[float(v.real), float(v.imag)] for v in c],
                }
                for (k, l), c in sorted(self.terms.items())
            ],
        }

    @classmethod
    def from_json_dict(cls, doc):
        freq = FrequencyData(tuple(doc["omega"]), doc["gamma"])
        terms = {
            (tuple(entry["k"]), entry["l"]):
                np.array([complex(re, im) for re, im in entry["cheb"]])
            for entry in doc["terms"]
        }
        return cls(freq, terms, doc["K_max"], doc["L_max"], doc["D_y"],
                   doc["r"], doc["parity"])

    def __repr__(self):
        return (f"QPSeries(m={self.freq.m}, modes={len(self.terms)}, "
                f"K={self.K_max}, L={self.L_max}, D_y={self.D_y}, "
                f"r={self.r}, parity={self.parity})")


def _flip(parity):
    if parity == EVEN:
        return ODD
    if parity == ODD:
        return EVEN
    return None


def _series_kw(freq, k, l, kw):
    out = {
        "K_max": kw.get("K_max", max(16, max(abs(v) for v in k))),
        "L_max": kw.get("L_max", max(16, abs(l))),
        "D_y": kw.get("D_y", 8),
        "r": kw.get("r", 1.0),
    }
    return out


def random_series(freq, rng, n_modes, K_max=16, L_max=16, D_y=8, r=1.0,
                  parity=None, amplitude=1.0, y_degree=0):
    """Random real series with the requested parity, via mode pairs.

    Reality plus even parity forces real coefficient polynomials; reality
    plus odd parity forces imaginary ones.
    """
    terms = {}
    picked = set()
    while len(picked) < n_modes:
        k = tuple(int(v) for v in rng.integers(-K_max, K_max + 1, freq.m))
        l = int(rng.integers(-L_max, L_max + 1))
        mk = tuple(-v for v in k)
        if (k, l) in picked or (mk, -l) in picked:
            continue
        if parity == ODD and (k, l) == ((0,) * freq.m, 0):
            continue
        picked.add((k, l))
        c = amplitude * rng.standard_normal(y_degree + 1)
        c = np.asarray(c, dtype=complex)
        if parity == ODD:
            c = 1j * c
        elif parity is None:
            c = c + 1j * amplitude * rng.standard_normal(y_degree + 1)
        sign = {EVEN: 1.0, ODD: -1.0, None: None}[parity]
        if (k, l) == (mk, -l):
            if parity == ODD:
                continue
            c = c.real.astype(complex)
            terms[(k, l)] = c
            continue
        terms[(k, l)] = c
        terms[(mk, -l)] = np.conj(c) if sign is None else sign * c
    return QPSeries(freq, terms, K_max, L_max, D_y, r, parity)


# -- collocation grids ------------------------------------------------------


class Grid:
    """Oversampled shell-collocation grid for products and compositions."""

    def __init__(self, freq, K_max, L_max, D_y, r, oversample=2):
        self.freq = freq
        self.K_max = K_max
        self.L_max = L_max
        self.D_y = D_y
        self.r = r
        m = freq.m
        self.n_theta = oversample * (2 * K_max + 1) + 1
        self.n_t = oversample * (2 * L_max + 1) + 1
        self.theta_axes = [
            np.arange(self.n_theta) * (2 * np.pi / self.n_theta)
            for _ in range(m)
        ]
        self.t_axis = np.arange(self.n_t) * (2 * np.pi / self.n_t)
        q = D_y + 1
        # Chebyshev-Gauss nodes in the scaled variable u = y / r
        self.u_nodes = np.cos(np.pi * (np.arange(q) + 0.5) / q)
        self.y_nodes = r * self.u_nodes
        vander = C.chebvander(self.u_nodes, D_y)
        self.node_to_cheb = np.linalg.inv(vander)
        mesh = np.meshgrid(*self.theta_axes, self.t_axis, indexing="ij")
        self.theta_mesh = np.stack(mesh[:m], axis=-1)  # (..., m)
        self.t_mesh = mesh[m]
        self.torus_shape = self.t_mesh.shape

    def eval_series(self, f, theta=None, y=None, t=None):
        """Shell values on (possibly shifted) grid points, shape (*torus, q)."""
        if theta is None:
            theta = self.theta_mesh[..., None, :]
        if t is None:
            t = self.t_mesh[..., None]
        if y is None:
            y = self.y_nodes
        return f.eval_shell(theta, y, t)

    def expand(self, values):
        """Fourier x Chebyshev expansion of grid values.

        values has shape (*torus_shape, D_y + 1).  Returns (terms, residual)
        where residual is the max reconstruction error on the grid (it
        accounts for both index truncation and Chebyshev truncation).
        """
        m = self.freq.m
        axes = tuple(range(m + 1))
        n_torus = int(np.prod(values.shape[: m + 1]))
        spectral = np.fft.fftn(values, axes=axes) / n_torus

        k_range = np.arange(-self.K_max, self.K_max + 1)
        l_range = np.arange(-self.L_max, self.L_max + 1)
        terms = {}
        kept = np.zeros_like(spectral)
        grids = np.meshgrid(*([k_range] * m + [l_range]), indexing="ij")
        idx = tuple(g.reshape(-1) for g in grids)
        # fft bin for integer frequency j is j mod n
        bins = tuple(
            np.mod(idx[d], values.shape[d]) for d in range(m + 1)
        )
        samples = spectral[bins]  # (n_sel, q) values at Chebyshev nodes
        coeffs = samples @ self.node_to_cheb.T
        scale = max(float(np.max(np.abs(values))), 1e-300)
        for row in range(samples.shape[0]):
            c = coeffs[row]
            if np.max(np.abs(c)) <= 1e-16 * scale:
                continue
            k = tuple(int(idx[d][row]) for d in range(m))
            l = int(idx[m][row])
            terms[(k, l)] = c
            sel = tuple(b[row] for b in bins)
            kept[sel] = spectral[sel]
        recon = np.fft.ifftn(kept, axes=axes) * n_torus
        # interpolation is exact at the Chebyshev nodes, so this residual
        # measures index truncation and pruning only
        residual = float(np.max(np.abs(values - recon)))
        return terms, residual


@lru_cache(maxsize=16)
def get_grid(freq, K_max, L_max, D_y, r, oversample=2):
    return Grid(freq, K_max, L_max, D_y, r, oversample)


def compose(f, shift_x=None, shift_y=None, tol=1e-8, parity=None):
    """Series of (xi, eta, t) -> f(xi + shift_x(...), eta + shift_y(...), t).

    Both shifts are themselves quasi-periodic series in (xi, eta, t) with
    f's frequency data.  Computed by collocation on an oversampled grid and
    re-expansion; raises ShiftTooLarge when the re-expansion residual
    exceeds tol relative to the data size.
    """
    grid = get_grid(f.freq, f.K_max, f.L_max, f.D_y, f.r)
    theta = grid.theta_mesh[..., None, :]  # broadcast over y nodes
    t = grid.t_mesh[..., None]
    y = grid.y_nodes
    omega = np.asarray(f.freq.omega)

    if shift_x is not None:
        dx = shift_x.eval_shell(theta, y, t)
        _assert_real(dx, "x-shift")
        theta = theta + np.real(dx)[..., None] * omega
    if shift_y is not None:
        dy = shift_y.eval_shell(grid.theta_mesh[..., None, :], y, t)
        _assert_real(dy, "y-shift")
        y = y + np.real(dy)
        # polynomial coefficients evaluate exactly slightly outside the
        # interval; a large excursion means the shift is not admissible
        if np.max(np.abs(y)) > 1.5 * f.r:
            raise ActionOutOfRange("y-shift leaves the action domain")

    values = f.eval_shell(theta, y, t)
    terms, residual = grid.expand(values)
    scale = max(float(np.max(np.abs(values))), 1.0)
    if residual > tol * scale:
        raise ShiftTooLarge(
            f"re-expansion residual {residual:.3e} exceeds {tol:.1e} * {scale:.3e}"
        )
    out = QPSeries(f.freq, terms, f.K_max, f.L_max, f.D_y, f.r, parity=None)
    if parity is not None:
        out = out.symmetrize(parity)
        out = QPSeries(out.freq, out.terms, out.K_max, out.L_max, out.D_y,
                       out.r, parity)
    return out


def _assert_real(values, what):
    im = float(np.max(np.abs(np.imag(values))))
    scale = max(float(np.max(np.abs(values))), 1.0)
    if im > 1e-9 * scale:
        raise RealityViolation(f"{what} is not real: imag {im:.3e}")
