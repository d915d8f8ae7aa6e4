"""Reversibility-preserving KAM iteration for the quasi-periodic system

    x' = gamma + y + f(x, y, t),   y' = g(x, y, t),

with f even and g odd under (x, t) -> (-x, -t).  One step solves the
homological equations for the inverse change (u*, v*), inverts it by fixed
point iteration into the forward pair (u, v), and pushes the quadratic
remainder

    f_new = du*/dy * g_hat + du*/dx * f_hat + du*/dx * y
    g_new = dv*/dy * g_hat + dv*/dx * f_hat + dv*/dx * y

through the new variables.  Norm inequalities from the underlying theory
carry uninstantiated constants, so convergence is monitored empirically:
superlinear decay of the perturbation norms, with divergence flagged after
two consecutive increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import (
    ContractionFailure,
    DegenerateSchedule,
    DivergenceDetected,
    ResonanceDetected,
)
from .homological import PerturbationPair, TransformPair, solve_homological
from .series import EVEN, ODD, QPSeries, compose, get_grid


@dataclass(frozen=True)
class YPoly:
    """Chebyshev polynomial in the action variable on [-r, r]."""

    coeffs: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(
            self, "coeffs", np.atleast_1d(np.asarray(self.coeffs))
        )

    def eval(self, y):
        return C.chebval(np.asarray(y) / self.r, self.coeffs)

    def deriv(self):
        if len(self.coeffs) == 1:
            return YPoly(np.zeros(1), self.r)
        return YPoly(C.chebder(self.coeffs) / self.r, self.r)


# -- constants schedule ------------------------------------------------------


@dataclass(frozen=True)
class IterationSchedule:
    """Geometric-in-the-exponent schedule driving the iteration.

    eps_n = eps^((1+mu_tilde)^n), s_n = eps_n^(1/p), r_n = s_n^(m+1+mu/10),
    tau_n = eps^(-(1+mu_tilde)^(n-1) (1+m/p) mu_tilde), with p = 2m+1+mu and
    mu_tilde = mu / (100 (2 sigma + 1 + mu)) for sigma = m + mu/100.
    """

    epsilon: float
    mu: float
    m: int
    n_max: int

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if self.s(0) > 0.5:
            raise DegenerateSchedule(
                f"s_0 = {self.s(0):.4f} > 1/2; epsilon too large for p = {self.p:.3f}"
            )

    @property
    def sigma(self):
        return self.m + self.mu / 100.0

    @property
    def p(self):
        return 2 * self.m + 1 + self.mu

    @property
    def mu_tilde(self):
        return self.mu / (100.0 * (2 * self.sigma + 1 + self.mu))

    def eps(self, n):
        return self.epsilon ** ((1.0 + self.mu_tilde) ** n)

    def s(self, n):
        return self.eps(n) ** (1.0 / self.p)

    def r_action(self, n):
        return self.s(n) ** (self.m + 1 + self.mu / 10.0)

    def tau(self, n):
        expo = (1.0 + self.mu_tilde) ** (n - 1) * (1.0 + self.m / self.p) * self.mu_tilde
        return self.epsilon ** (-expo)

    def s_sub(self, n, j):
        return self.s(n) - (j / (100.0 * self.p)) * (self.s(n) - self.s(n + 1))

    def r_sub(self, n, j):
        return self.r_action(n) - (j / (100.0 * self.p)) * (
            self.r_action(n) - self.r_action(n + 1)
        )

    def to_dict(self):
        return {
            "epsilon": self.epsilon, "mu": self.mu, "m": self.m,
            "n_max": self.n_max, "p": self.p, "sigma": self.sigma,
            "mu_tilde": self.mu_tilde,
            "eps_n": [self.eps(n) for n in range(self.n_max + 1)],
            "s_n": [self.s(n) for n in range(self.n_max + 1)],
            "r_n": [self.r_action(n) for n in range(self.n_max + 1)],
        }


def schedule(epsilon, mu, m, n_max):
    return IterationSchedule(epsilon, mu, m, n_max)


# -- iteration state ---------------------------------------------------------


@dataclass(frozen=True)
class IterationState:
    n: int
    pert: PerturbationPair
    chain: tuple  # forward TransformPairs, outermost first
    norms: tuple = ()

    @classmethod
    def initial(cls, freq, K_max, L_max, D_y, r):
        zero_f = QPSeries.zero(freq, K_max, L_max, D_y, r, parity=EVEN)
        zero_g = QPSeries.zero(freq, K_max, L_max, D_y, r, parity=ODD)
        return cls(n=0, pert=PerturbationPair(zero_f, zero_g), chain=())


@dataclass(frozen=True)
class InvariantCurve:
    """Limit curve psi(x, t) = (x + dev_x, dev_y) on the section y = 0."""

    dev_x: QPSeries
    dev_y: QPSeries
    gamma: float
    deviation: float

    def eval(self, x, t):
        X = np.asarray(x, dtype=float) + np.real(self.dev_x.eval(x, 0.0, t))
        Y = np.real(self.dev_y.eval(x, 0.0, t))
        return X, Y


# -- transform inversion -----------------------------------------------------


def invert_transform(inv: TransformPair, domain=None, max_sweeps=100,
                     tol=1e-13) -> TransformPair:
    """Forward pair (u, v) with x = xi + u inverse to xi = x + u*.

    Solved by fixed-point sweeps on the collocation grid, then re-expanded.
    The compatibility identity u* + u(x + u*, y + v*, t) = 0 (and its v
    analogue) is measured on the grid and reported in the diagnostics.
    """
    if inv.direction != "inverse":
        raise ValueError("invert_transform expects an inverse-direction pair")
    us, vs = inv.u, inv.v
    slope = (us.derivative("x").norm() + us.derivative("y").norm())
    if slope >= 0.5:
        raise ContractionFailure(
            f"|du*| ~ {slope:.3f} >= 1/2; inversion contraction not guaranteed"
        )

    grid = get_grid(us.freq, us.K_max, us.L_max, us.D_y, us.r)
    omega = np.asarray(us.freq.omega)
    theta0 = grid.theta_mesh[..., None, :]
    t = grid.t_mesh[..., None]
    eta = np.broadcast_to(grid.y_nodes, grid.torus_shape + (len(grid.y_nodes),))

    dx = np.zeros(eta.shape)
    y = np.array(eta, dtype=float)
    scale = max(us.max_coeff(), vs.max_coeff(), 1.0)
    for _ in range(max_sweeps):
        theta = theta0 + dx[..., None] * omega
        new_dx = -np.real(us.eval_shell(theta, y, t))
        new_y = eta - np.real(vs.eval_shell(theta, y, t))
        delta = max(np.max(np.abs(new_dx - dx)), np.max(np.abs(new_y - y)))
        dx, y = new_dx, new_y
        if delta <= tol * scale:
            break
    else:
        raise ContractionFailure(
            f"fixed-point inversion did not converge in {max_sweeps} sweeps"
        )

    u_terms, res_u = grid.expand(dx.astype(complex))
    v_terms, res_v = grid.expand((y - eta).astype(complex))
    u = QPSeries(us.freq, u_terms, us.K_max, us.L_max, us.D_y, us.r, None)
    v = QPSeries(us.freq, v_terms, us.K_max, us.L_max, us.D_y, us.r, None)
    parity_res = max(u.parity_residual(ODD), v.parity_residual(EVEN))
    u = _retag(u.symmetrize(ODD), ODD)
    v = _retag(v.symmetrize(EVEN), EVEN)

    compat = _compat_residual(us, vs, u, v, grid)

    return TransformPair(
        u=u, v=v, direction="forward",
        diagnostics={"reexpansion": max(res_u, res_v),
                     "parity_residual": parity_res,
                     "compatibility": compat},
    )


def _compat_residual(us, vs, u, v, grid):
    """Max of |u* + u(x+u*, y+v*, t)| and the v analogue on the grid."""
    omega = np.asarray(us.freq.omega)
    theta0 = grid.theta_mesh[..., None, :]
    t = grid.t_mesh[..., None]
    y0 = np.broadcast_to(grid.y_nodes, grid.torus_shape + (len(grid.y_nodes),))
    ustar = np.real(us.eval_shell(theta0, y0, t))
    vstar = np.real(vs.eval_shell(theta0, y0, t))
    theta1 = theta0 + ustar[..., None] * omega
    y1 = y0 + vstar
    r1 = np.max(np.abs(ustar + np.real(u.eval_shell(theta1, y1, t))))
    r2 = np.max(np.abs(vstar + np.real(v.eval_shell(theta1, y1, t))))
    return float(max(r1, r2))


def _retag(f, parity):
    return QPSeries(f.freq, f.terms, f.K_max, f.L_max, f.D_y, f.r, parity)


# -- one KAM step ------------------------------------------------------------


def _pullback(chain, f_in, g_in):
    """(dPhi)^(-1) (f, g) o Phi on the collocation grid, re-expanded.

    chain lists the forward transforms outermost-first; Phi is their
    composition applied innermost-first when evaluating.
    """
    ref = f_in
    grid = get_grid(ref.freq, ref.K_max, ref.L_max, ref.D_y, ref.r)
    omega = np.asarray(ref.freq.omega)
    theta0 = grid.theta_mesh[..., None, :]
    t = grid.t_mesh[..., None]
    shape = grid.torus_shape + (len(grid.y_nodes),)
    dx = np.zeros(shape)
    y = np.broadcast_to(grid.y_nodes, shape).astype(float).copy()

    jac = np.zeros(shape + (2, 2))
    jac[..., 0, 0] = 1.0
    jac[..., 1, 1] = 1.0

    for tp in reversed(chain):  # innermost transform acts first
        theta = theta0 + dx[..., None] * omega
        u, v = tp.u, tp.v
        du_dx = np.real(u.derivative("x").eval_shell(theta, y, t))
        du_dy = np.real(u.derivative("y").eval_shell(theta, y, t))
        dv_dx = np.real(v.derivative("x").eval_shell(theta, y, t))
        dv_dy = np.real(v.derivative("y").eval_shell(theta, y, t))
        step = np.empty_like(jac)
        step[..., 0, 0] = 1.0 + du_dx
        step[..., 0, 1] = du_dy
        step[..., 1, 0] = dv_dx
        step[..., 1, 1] = 1.0 + dv_dy
        jac = step @ jac
        dx = dx + np.real(u.eval_shell(theta, y, t))
        y = y + np.real(v.eval_shell(theta, y, t))

    theta = theta0 + dx[..., None] * omega
    fv = np.real(f_in.eval_shell(theta, y, t))
    gv = np.real(g_in.eval_shell(theta, y, t))
    inv = np.linalg.inv(jac)
    df = inv[..., 0, 0] * fv + inv[..., 0, 1] * gv
    dg = inv[..., 1, 0] * fv + inv[..., 1, 1] * gv

    f_terms, _ = grid.expand(df.astype(complex))
    g_terms, _ = grid.expand(dg.astype(complex))
    f_out = QPSeries(ref.freq, f_terms, ref.K_max, ref.L_max, ref.D_y, ref.r)
    g_out = QPSeries(ref.freq, g_terms, ref.K_max, ref.L_max, ref.D_y, ref.r)
    return f_out, g_out


def kam_step(state: IterationState, incoming, freq, cert, sched,
             prune_tol=1e-13) -> IterationState:
    """One iteration: absorb the incoming dyadic piece, cancel to first
    order, and return the state with the quadratic remainder."""
    f_bar, g_bar = state.pert.f_hat, state.pert.g_hat
    diag = {}

    # restrict to the current action domain; the drift term du*/dx * y is
    # only small because r_n is
    r_cur = sched.r_action(state.n)
    f_bar = f_bar.rescale_action(r_cur)
    g_bar = g_bar.rescale_action(r_cur)

    if incoming is not None:
        f_in, g_in = incoming
        if f_in.terms or g_in.terms:
            f_in = f_in.rescale_action(r_cur)
            g_in = g_in.rescale_action(r_cur)
            if state.chain:
                f_in, g_in = _pullback(state.chain, f_in, g_in)
            f_bar = f_bar + f_in
            g_bar = g_bar + g_in

    scale = max(f_bar.max_coeff(), g_bar.max_coeff(), 1e-300)
    diag["hat_parity_residual"] = max(
        f_bar.parity_residual(EVEN), g_bar.parity_residual(ODD)
    )
    f_hat = _retag(f_bar.symmetrize(EVEN), EVEN).prune(prune_tol * scale)
    g_hat = _retag(g_bar.symmetrize(ODD), ODD).prune(prune_tol * scale)
    pert_hat = PerturbationPair(f_hat, g_hat)

    tp_inv = solve_homological(pert_hat, freq, cert)
    tp_fwd = invert_transform(tp_inv)
    diag.update({f"inv_{k}": v for k, v in tp_fwd.diagnostics.items()})
    diag["dropped_tail"] = tp_inv.diagnostics["dropped_tail"]
    diag["min_divisor"] = tp_inv.diagnostics["min_divisor"]

    us, vs = tp_inv.u, tp_inv.v
    du_dx, du_dy = us.derivative("x"), us.derivative("y")
    dv_dx, dv_dy = vs.derivative("x"), vs.derivative("y")
    F = du_dy * g_hat + du_dx * f_hat + du_dx.mul_by_y()
    G = dv_dy * g_hat + dv_dx * f_hat + dv_dx.mul_by_y()

    f_new = compose(F, shift_x=tp_fwd.u, shift_y=tp_fwd.v)
    g_new = compose(G, shift_x=tp_fwd.u, shift_y=tp_fwd.v)
    new_scale = max(f_new.max_coeff(), g_new.max_coeff(), 1e-300)
    diag["new_parity_residual"] = max(
        f_new.parity_residual(EVEN), g_new.parity_residual(ODD)
    )
    f_new = _retag(f_new, EVEN).prune(prune_tol * max(new_scale, 1e-30))
    g_new = _retag(g_new, ODD).prune(prune_tol * max(new_scale, 1e-30))
    f_new.check_parity()
    g_new.check_parity()
    f_new = f_new.rescale_action(sched.r_action(state.n + 1))
    g_new = g_new.rescale_action(sched.r_action(state.n + 1))

    n = state.n
    s_next = sched.s(n + 1) if n + 1 <= sched.n_max else sched.s(sched.n_max)
    record = {
        "n": n,
        "f_hat": f_hat.norm(), "g_hat": g_hat.norm(),
        "u_star": us.norm(), "v_star": vs.norm(),
        "u": tp_fwd.u.norm(), "v": tp_fwd.v.norm(),
        "f_bar_next": f_new.norm(s_next), "g_bar_next": g_new.norm(s_next),
        "f_bar_next_sup": f_new.norm(), "g_bar_next_sup": g_new.norm(),
        **diag,
    }
    return IterationState(
        n=n + 1,
        pert=PerturbationPair(f_new, g_new),
        chain=state.chain + (tp_fwd,),
        norms=state.norms + (record,),
    )


# -- full run ----------------------------------------------------------------


def run(initial: PerturbationPair, freq, cert, sched: IterationSchedule,
        target=1e-12, dyadic=True):
    """Iterate to the limit curve psi(x, t) = Phi_N(x, 0, t).

    With dyadic=True the input pair is decomposed into analytic pieces fed
    one per step; band-limited inputs collapse to a single piece.  Raises
    DivergenceDetected after two consecutive norm increases.
    """
    from .smoothing import dyadic_decompose

    n_max = sched.n_max
    if dyadic:
        pieces_f = dyadic_decompose(initial.f_hat, sched, n_max)
        pieces_g = dyadic_decompose(initial.g_hat, sched, n_max)
    else:
        zf = QPSeries.zero(initial.f_hat.freq, initial.f_hat.K_max,
                           initial.f_hat.L_max, initial.f_hat.D_y,
                           initial.f_hat.r, EVEN)
        zg = _retag(zf, ODD)
        pieces_f = [initial.f_hat] + [zf] * n_max
        pieces_g = [initial.g_hat] + [zg] * n_max

    ref = initial.f_hat
    state = IterationState.initial(ref.freq, ref.K_max, ref.L_max,
                                   ref.D_y, ref.r)
    grow = 0
    for n in range(n_max + 1):
        state = kam_step(state, (pieces_f[n], pieces_g[n]), freq, cert, sched)
        rec = state.norms[-1]
        if len(state.norms) >= 2:
            prev = state.norms[-2]["f_bar_next_sup"] + state.norms[-2]["g_bar_next_sup"]
            cur = rec["f_bar_next_sup"] + rec["g_bar_next_sup"]
            grow = grow + 1 if cur > prev else 0
            if grow >= 2:
                raise DivergenceDetected(
                    f"perturbation norms grew for two consecutive steps at n={n}"
                )
        if rec["f_bar_next_sup"] < target and rec["g_bar_next_sup"] < target:
            break

    curve = extract_curve(state, freq)
    diagnostics = {
        "steps": state.n,
        "norm_history": list(state.norms),
        "schedule": sched.to_dict(),
        "deviation": curve.deviation,
    }
    return curve, diagnostics


def extract_curve(state: IterationState, freq) -> InvariantCurve:
    """Evaluate the accumulated transform chain on the section y = 0."""
    ref = state.pert.f_hat
    grid = get_grid(ref.freq, ref.K_max, ref.L_max, 0, ref.r)
    omega = np.asarray(ref.freq.omega)
    theta0 = grid.theta_mesh[..., None, :]
    t = grid.t_mesh[..., None]
    shape = grid.torus_shape + (1,)
    dx = np.zeros(shape)
    y = np.zeros(shape)
    for tp in reversed(state.chain):
        theta = theta0 + dx[..., None] * omega
        dx = dx + np.real(tp.u.eval_shell(theta, y, t))
        y = y + np.real(tp.v.eval_shell(theta, y, t))

    dev_x_terms, _ = grid.expand(dx.astype(complex))
    dev_y_terms, _ = grid.expand(y.astype(complex))
    dev_x = QPSeries(ref.freq, dev_x_terms, ref.K_max, ref.L_max, 0, ref.r)
    dev_y = QPSeries(ref.freq, dev_y_terms, ref.K_max, ref.L_max, 0, ref.r)
    deviation = dev_x.norm() + dev_y.norm()
    return InvariantCurve(dev_x=dev_x, dev_y=dev_y, gamma=freq.gamma,
                          deviation=deviation)


# -- small-twist preconditioner ---------------------------------------------


def small_twist_precondition(l1: QPSeries, l2: QPSeries, gamma, freq, N,
                             sym_tol=1e-9):
    """Averaging change for the x-dependent drift of a small-twist map.

    Solves the difference equations u(x+gamma) - u(x) + h1 = 0 and
    v(x+gamma) - v(x) + h2 = 0 for the truncations h1, h2 of l1 - h, l2 to
    modes 0 < |k| < N, where h(y) is the x-mean of l1.  Inputs must satisfy
    the reversibility symmetries l1(x,y) = l1(-x-gamma,y) and
    l2(x,y) = -l2(-x-gamma,y).
    """
    k0 = (0,) * freq.m
    _check_shift_symmetry(l1, gamma, freq, +1.0, sym_tol, "l1")
    _check_shift_symmetry(l2, gamma, freq, -1.0, sym_tol, "l2")
    mean_l2 = l2.coeff(k0, 0)
    if np.max(np.abs(mean_l2)) > sym_tol * max(l2.max_coeff(), 1.0):
        raise ValueError("the symmetry of l2 forces a vanishing x-mean")

    h = YPoly(np.real(l1.coeff(k0, 0)), l1.r)

    u_terms, v_terms = {}, {}
    tail_l1 = tail_l2 = 0.0
    for (k, l), _ in {**l1.terms, **l2.terms}.items():
        if l != 0:
            raise ValueError("preconditioner inputs must be t-independent")
    for src, dst, tail_ref in ((l1, u_terms, "l1"), (l2, v_terms, "l2")):
        tail = 0.0
        for (k, l), c in src.terms.items():
            kn = max(abs(v) for v in k)
            if kn == 0:
                continue
            if kn >= N:
                tail += src.coeff_sup_bound(k, l)
                continue
            denom = np.exp(1j * np.dot(k, freq.omega) * gamma) - 1.0
            if abs(denom) < 1e-12:
                raise ResonanceDetected(
                    f"|e^(i<k,omega>gamma) - 1| = {abs(denom):.3e} at k={k}"
                )
            dst[(k, 0)] = -np.asarray(c, dtype=complex) / denom
        if tail_ref == "l1":
            tail_l1 = tail
        else:
            tail_l2 = tail

    u = QPSeries(l1.freq, u_terms, l1.K_max, l1.L_max, l1.D_y, l1.r, None)
    v = QPSeries(l2.freq, v_terms, l2.K_max, l2.L_max, l2.D_y, l2.r, None)
    u = _retag(u, ODD) if u.parity_residual(ODD) <= 1e-9 * max(u.max_coeff(), 1.0) else u
    v = _retag(v, EVEN) if v.parity_residual(EVEN) <= 1e-9 * max(v.max_coeff(), 1.0) else v

    r1 = _difference_residual(u, l1, h, gamma, freq)
    r2 = _difference_residual(v, l2, None, gamma, freq)
    residuals = {"R1": r1, "R2": r2, "tail_l1": tail_l1, "tail_l2": tail_l2}
    return h, u, v, residuals


def _shift_x(f, a, freq):
    """Series of x -> f(x + a) for constant a."""
    terms = {
        (k, l): np.asarray(c) * np.exp(1j * np.dot(k, freq.omega) * a)
        for (k, l), c in f.terms.items()
    }
    return QPSeries(f.freq, terms, f.K_max, f.L_max, f.D_y, f.r, None)


def _difference_residual(u, l, h, gamma, freq):
    """Strip norm of u(x+gamma) - u(x) + l - h."""
    res = _shift_x(u, gamma, freq) - _strip_parity(u) + _strip_parity(l)
    if h is not None:
        k0 = (0,) * freq.m
        res = res - QPSeries(
            l.freq, {(k0, 0): h.coeffs.astype(complex)},
            l.K_max, l.L_max, l.D_y, l.r,
        )
    return res.norm()


def _strip_parity(f):
    return QPSeries(f.freq, f.terms, f.K_max, f.L_max, f.D_y, f.r, None)


def _check_shift_symmetry(l, gamma, freq, sign, tol, name):
    """Coefficient form of l(x, y) = sign * l(-x - gamma, y)."""
    scale = max(l.max_coeff(), 1.0)
    for (k, kl), c in l.terms.items():
        mk = tuple(-v for v in k)
        other = l.terms.get((mk, -kl))
        # l(x) = sign * l(-x - gamma) reads c_k = sign * c_{-k} e^{i<k,w>g}
        phase = np.exp(1j * np.dot(k, freq.omega) * gamma)
        if other is None:
            if np.max(np.abs(c)) > tol * scale:
                raise ValueError(f"{name} violates the shift symmetry at k={k}")
            continue
        n = max(len(c), len(other))
        a = np.zeros(n, dtype=complex)
        b = np.zeros(n, dtype=complex)
        a[: len(c)] = c
        b[: len(other)] = other
        if np.max(np.abs(a - sign * b * phase)) > tol * scale:
            raise ValueError(f"{name} violates the shift symmetry at k={k}")
