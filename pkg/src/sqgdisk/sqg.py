"""Critical SQG on the unit disk: exponential time differencing in the eigenbasis.

Each mode obeys c' = -L c + N(c), L = lam + eps lam^2, N = -B(drift, theta). The
linear part is integrated exactly and the nonlinear part with the two-stage
ETDRK2 scheme of Cox and Matthews:

    a       = e^{-Lh} c_n + h phi1(-Lh) N(c_n, t_n)
    c_{n+1} = a + h phi2(-Lh) (N(a, t_n + h) - N(c_n, t_n))

with phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .besov import BesovSpec, DYADIC, besov_norms, eta
from .operators import advect_coeffs, dealias_grid, velocity_values
from .spectral import (
    DiskGrid,
    SpectralField,
    build_basis,
    evaluate_points,
    evaluate_points_multi,
    signed_sum_sq,
    synthesize_batch,
)


class BlowUpError(RuntimeError):
    """Raised when the sup norm exceeds the guard; ``run`` holds the partial trajectory."""

    def __init__(self, message, run=None):
        super().__init__(message)
        self.run = run


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_m: int = 24
    max_k: int = 24
    dt: float = 2e-3
    T: float = 0.5
    epsilon: float = 0.0
    dealias: float = 1.5
    cadence: int = 1
    cfl: float = 0.5
    blowup_factor: float = 10.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= self.dt:
            raise ValueError("T must be at least dt")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.dealias < 1:
            raise ValueError("dealias factor must be >= 1")
        if int(self.cadence) != self.cadence or self.cadence < 1:
            raise ValueError("cadence must be a positive integer")

    @property
    def steps(self):
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("T must be an integer multiple of dt")
        return n

    def basis(self):
        return build_basis(self.max_m, self.max_k)

    def with_(self, **kw):
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d)


def phi_functions(z):
    """phi1, phi2 at z <= 0, Taylor-expanded near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    # phi1 = sum z^k / (k+1)!, phi2 = sum z^k / (k+2)!, truncated where the next term is below 1e-17
    t1 = np.zeros_like(z)
    t2 = np.zeros_like(z)
    for k in range(8, -1, -1):
        t1 = t1 * z + 1.0 / math.factorial(k + 1)
        t2 = t2 * z + 1.0 / math.factorial(k + 2)
    p1 = np.where(small, t1, em1 / zs)
    p2 = np.where(small, t2, (em1 - zs) / zs**2)
    return p1, p2


def linear_symbol(basis, epsilon):
    return basis.lam + epsilon * basis.lam**2


@dataclass
class Trajectory:
    basis: object
    times: np.ndarray
    coeffs: np.ndarray

    def at(self, t):
        """Coefficients at time t, linear in t between samples."""
        times = self.times
        if t <= times[0]:
            return self.coeffs[0]
        if t >= times[-1]:
            return self.coeffs[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        h = times[i + 1] - times[i]
        s = (t - times[i]) / h
        if s < 1e-12:
            return self.coeffs[i]
        if s > 1 - 1e-12:
            return self.coeffs[i + 1]
        return (1 - s) * self.coeffs[i] + s * self.coeffs[i + 1]

    def field(self, i):
        return SpectralField(self.basis, self.coeffs[i])


class Stepper:
    """ETDRK2 stepper for one (basis, dt, epsilon, drift) combination."""

    def __init__(self, basis, dt, epsilon=0.0, drift=None, nonlinear=True, grid=None):
        self.basis = basis
        self.dt = dt
        self.epsilon = epsilon
        self.drift = drift
        self.nonlinear = nonlinear
        self.grid = dealias_grid(basis) if grid is None else grid
        z = -dt * linear_symbol(basis, epsilon)
        self.E = np.exp(z)
        self.p1, self.p2 = phi_functions(z)

    def N(self, c, t):
        if not self.nonlinear:
            return np.zeros_like(c)
        adv = c if self.drift is None else self.drift(t)
        return -advect_coeffs(adv, c, self.basis, self.grid)

    def step(self, c, t, n0=None):
        h = self.dt
        n0 = self.N(c, t) if n0 is None else n0
        a = self.E * c + h * self.p1 * n0
        na = self.N(a, t + h)
        out = a + h * self.p2 * (na - n0)
        if not np.all(np.isfinite(out)):
            raise BlowUpError(f"non-finite coefficients after step at t={t:.6g}")
        out[0] = out[0].real
        return out


def _drift_callable(drift):
    if drift is None:
        return None
    if isinstance(drift, Trajectory):
        return drift.at
    if isinstance(drift, SpectralField):
        c = drift.coeffs
        return lambda t: c
    if callable(drift):
        return drift
    raise TypeError("drift must be a Trajectory, SpectralField or callable")


def etd_step(theta, dt, epsilon=0.0, drift=None, t=0.0):
    """One ETDRK2 step of theta' + (Lambda + eps Lambda^2) theta + B(drift or theta, theta) = 0."""
    st = Stepper(theta.basis, dt, epsilon, _drift_callable(drift))
    return SpectralField(theta.basis, st.step(theta.coeffs, t))


# ---------------------------------------------------------------------------
# norms along trajectories


def norm_grid(basis):
    """Collocation grid refined 2x in each direction, used for sup norms."""
    return DiskGrid.for_basis(basis, refine=2.0)


def besov_series(coeffs, basis, spec, grid, chunk=8):
    coeffs = np.asarray(coeffs)
    out = np.empty(coeffs.shape[0])
    for i in range(0, coeffs.shape[0], chunk):
        out[i : i + chunk] = besov_norms(coeffs[i : i + chunk], basis, spec, DYADIC, grid)
    return out


def grid_sup_series(coeffs, basis, grid, chunk=16):
    coeffs = np.asarray(coeffs)
    out = np.empty(coeffs.shape[0])
    for i in range(0, coeffs.shape[0], chunk):
        out[i : i + chunk] = np.max(np.abs(synthesize_batch(coeffs[i : i + chunk], basis, grid)), axis=(-1, -2))
    return out


def _point_jet(c, x, y):
    """Value, gradient and Hessian of the field at one point, analytically."""
    basis = c.basis
    r = math.hypot(x, y)
    t = math.atan2(y, x)
    lam = basis.signed(basis.lam)
    v, d1, d2, lap = evaluate_points_multi(c, r, t, [(0, None), (1, -lam), (2, lam**2), (0, -(lam**2))])
    v, lap = v.real, lap.real
    hxx = 0.5 * (d2.real + lap)
    hyy = 0.5 * (lap - d2.real)
    hxy = 0.5 * d2.imag
    return v, np.array([d1.real, d1.imag]), np.array([[hxx, hxy], [hxy, hyy]])


def sup_norm(c, grid=None, candidates=3, newton_steps=5):
    """max |f| over the disk: grid maximum polished by Newton steps at the best nodes."""
    grid = norm_grid(c.basis) if grid is None else grid
    vals = synthesize_batch(c.coeffs, c.basis, grid)
    best = float(np.max(np.abs(vals)))
    if best == 0.0:
        return 0.0
    a = np.abs(vals)
    # local maxima of |f| over the 8 grid neighbours (periodic in angle)
    pad = np.pad(a, ((1, 1), (0, 0)), constant_values=-1.0)
    peak = np.ones(a.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dl in (-1, 0, 1):
            if di or dl:
                peak &= a >= np.roll(pad, dl, axis=1)[1 + di : 1 + di + a.shape[0]]
    idx = np.flatnonzero(peak)
    idx = idx[np.argsort(a.ravel()[idx])[::-1][:candidates]]
    for flat in idx:
        i, l = np.unravel_index(flat, vals.shape)
        x, y = grid.r[i] * math.cos(grid.theta[l]), grid.r[i] * math.sin(grid.theta[l])
        for _ in range(newton_steps):
            v, gr, H = _point_jet(c, x, y)
            try:
                dx = np.linalg.solve(H, gr)
            except np.linalg.LinAlgError:
                break
            xn, yn = x - dx[0], y - dx[1]
            if xn * xn + yn * yn >= 1 or np.hypot(*dx) > 0.05:
                break
            x, y = xn, yn
            if np.hypot(*dx) < 1e-13:
                break
        v = abs(evaluate_points(c, math.hypot(x, y), math.atan2(y, x)).real)
        best = max(best, v)
    return best


# ---------------------------------------------------------------------------
# runs


B0 = BesovSpec(0.0, math.inf, 1.0)
B1 = BesovSpec(1.0, math.inf, 1.0)


@dataclass
class Diagnostics:
    t: np.ndarray
    sup: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    l2: np.ndarray
    b1_integral: np.ndarray

    COLUMNS = ("t", "sup", "b0_inf1", "b1_inf1", "l2", "int_b1_inf1")

    def rows(self):
        return np.column_stack([self.t, self.sup, self.b0, self.b1, self.l2, self.b1_integral])


def diagnostics(traj, every=1, polish=True):
    basis = traj.basis
    idx = np.arange(0, len(traj.times), every)
    if idx[-1] != len(traj.times) - 1:
        idx = np.append(idx, len(traj.times) - 1)
    c = traj.coeffs[idx]
    grid = norm_grid(basis)
    if polish:
        sup = np.array([sup_norm(SpectralField(basis, ci), grid) for ci in c])
    else:
        sup = grid_sup_series(c, basis, grid)
    b0 = besov_series(c, basis, B0, grid)
    b1 = besov_series(c, basis, B1, grid)
    l2 = np.sqrt([signed_sum_sq(basis, ci) for ci in c])
    t = traj.times[idx]
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (b1[1:] + b1[:-1]))])
    return Diagnostics(t, sup, b0, b1, l2, integ)


@dataclass
class Run:
    config: SolverConfig
    trajectory: Trajectory
    nonlinear: bool = True
    drift: object = None
    diagnostics: Diagnostics | None = None
    aborted: bool = False
    message: str = ""

    @property
    def final(self):
        return self.trajectory.field(-1)


def max_speed(coeffs, basis, grid):
    ux, uy = velocity_values(coeffs, basis, grid)
    return float(np.max(np.hypot(ux, uy)))


def check_cfl(config, basis, coeffs, grid):
    speed = max_speed(coeffs, basis, grid)
    if speed > 0 and config.dt > config.cfl / (basis.lambda_max * speed):
        raise CFLError(
            f"dt={config.dt:g} exceeds the advective limit {config.cfl / (basis.lambda_max * speed):.3g} "
            f"(max speed {speed:.3g})"
        )


def integrate(theta0, config, epsilon=None, drift=None, nonlinear=True, with_diagnostics=False):
    """Integrate from t = 0 to config.T, storing every step.

    The sup norm is watched on the collocation grid after every step; growth
    beyond ``blowup_factor`` times its initial value raises BlowUpError with
    the partial run attached.
    """
    basis = theta0.basis
    eps = config.epsilon if epsilon is None else epsilon
    drift_fn = _drift_callable(drift)
    st = Stepper(basis, config.dt, eps, drift_fn, nonlinear, dealias_grid(basis, config.dealias))
    n = config.steps
    coeffs = np.empty((n + 1,) + basis.shape, dtype=complex)
    coeffs[0] = theta0.coeffs
    times = config.dt * np.arange(n + 1)
    watch = DiskGrid.for_basis(basis)
    sup0 = float(np.max(np.abs(synthesize_batch(theta0.coeffs, basis, watch))))
    if nonlinear:
        check_cfl(config, basis, theta0.coeffs if drift_fn is None else drift_fn(0.0), watch)
    run = Run(config.with_(epsilon=eps), Trajectory(basis, times, coeffs), nonlinear, drift)
    for i in range(n):
        try:
            coeffs[i + 1] = st.step(coeffs[i], times[i])
        except BlowUpError as err:
            _truncate(run, i + 1, str(err))
            raise BlowUpError(str(err), run) from None
        if (i + 1) % config.cadence == 0:
            sup = float(np.max(np.abs(synthesize_batch(coeffs[i + 1], basis, watch))))
            if sup > config.blowup_factor * max(sup0, 1e-300) and sup > 0:
                _truncate(run, i + 2, f"sup norm grew from {sup0:.3g} to {sup:.3g} by t={times[i + 1]:.4g}")
                raise BlowUpError(run.message, run)
            if nonlinear and drift_fn is None:
                check_cfl(config, basis, coeffs[i + 1], watch)
    if with_diagnostics:
        run.diagnostics = diagnostics(run.trajectory, config.cadence)
    return run


def _truncate(run, count, message):
    tr = run.trajectory
    run.trajectory = Trajectory(tr.basis, tr.times[:count], tr.coeffs[:count])
    run.aborted = True
    run.message = message
    if count > 1:
        run.diagnostics = diagnostics(run.trajectory, run.config.cadence, polish=False)


def run_direct(theta0, config, with_diagnostics=True):
    """theta' + Lambda theta + B(theta, theta) = 0 with epsilon forced to 0."""
    return integrate(theta0, config, epsilon=0.0, with_diagnostics=with_diagnostics)


def run_regularized(theta0, config, drift=None, with_diagnostics=False):
    """theta' + (Lambda + eps Lambda^2) theta + B(drift or theta, theta) = 0, eps = config.epsilon > 0."""
    if not config.epsilon > 0:
        raise ValueError("run_regularized needs epsilon > 0")
    return integrate(theta0, config, drift=drift, with_diagnostics=with_diagnostics)


def run_linear(theta0, config, epsilon=None):
    return integrate(theta0, config, epsilon=epsilon, nonlinear=False)


# ---------------------------------------------------------------------------
# Duhamel residual


def duhamel_residual(run):
    """max_n || theta_n - e^{-t_n L} theta_0 - int_0^{t_n} e^{-(t_n - s) L} N(s) ds ||_{L^2}.

    N is re-evaluated on the stored trajectory and the integral uses the
    exponential trapezoid rule (N linear in time on each step), which is
    second-order accurate, as is the integrator.
    """
    cfg = run.config
    traj = run.trajectory
    basis = traj.basis
    h = traj.times[1] - traj.times[0]
    st = Stepper(basis, h, cfg.epsilon, _drift_callable(run.drift), run.nonlinear, dealias_grid(basis, cfg.dealias))
    E, p1, p2 = st.E, st.p1, st.p2
    lin = traj.coeffs[0].copy()
    duh = np.zeros_like(lin)
    n_prev = st.N(traj.coeffs[0], traj.times[0])
    worst = 0.0
    for i in range(1, len(traj.times)):
        n_cur = st.N(traj.coeffs[i], traj.times[i])
        # int_0^h e^{-(h-s)L} [N_0 + (s/h)(N_1 - N_0)] ds = h p1 N_0 + h p2 (N_1 - N_0)
        duh = E * duh + h * p1 * n_prev + h * p2 * (n_cur - n_prev)
        lin = E * lin
        res = traj.coeffs[i] - lin - duh
        worst = max(worst, math.sqrt(signed_sum_sq(basis, res)))
        n_prev = n_cur
    return worst


# ---------------------------------------------------------------------------
# energy identity


def energy_balance(run, nodes=8):
    """Terms of ||theta(t)||^2 + 2 int_0^t <L theta, theta> ds = ||theta_0||^2.

    On each step the mode is written c(t_n + s) = e^{-Ls} w(s), and w is the
    cubic Hermite interpolant of its end values and slopes w' = e^{Ls} N, with
    N re-evaluated on the stored samples. This is exact for the linear flow.
    The dissipation integral uses Gauss-Legendre in s. Returns
    (energy, cumulative dissipation, initial energy).
    """
    from .specfun import gauss_legendre

    cfg = run.config
    traj = run.trajectory
    basis = traj.basis
    h = traj.times[1] - traj.times[0]
    L = linear_symbol(basis, cfg.epsilon)
    st = Stepper(basis, h, cfg.epsilon, _drift_callable(run.drift), run.nonlinear, dealias_grid(basis, cfg.dealias))
    rule = gauss_legendre(nodes, 0.0, 1.0)
    energy = np.array([signed_sum_sq(basis, c) for c in traj.coeffs])
    diss = np.zeros_like(energy)
    w_modes = np.ones(basis.shape)
    w_modes[1:] = 2.0
    grow = np.exp(L * h)
    n_prev = st.N(traj.coeffs[0], traj.times[0])
    for i in range(len(traj.times) - 1):
        n_next = st.N(traj.coeffs[i + 1], traj.times[i + 1])
        w0, d0 = traj.coeffs[i], h * n_prev
        w1, d1 = grow * traj.coeffs[i + 1], h * grow * n_next
        acc = 0.0
        for s, wt in zip(rule.nodes, rule.weights):
            w = (
                (2 * s**3 - 3 * s**2 + 1) * w0
                + (s**3 - 2 * s**2 + s) * d0
                + (3 * s**2 - 2 * s**3) * w1
                + (s**3 - s**2) * d1
            )
            acc += wt * np.sum(w_modes * L * np.abs(np.exp(-L * s * h) * w) ** 2)
        diss[i + 1] = diss[i] + 2.0 * h * acc
        n_prev = n_next
    return energy, diss, energy[0]


def energy_defect(run):
    energy, diss, e0 = energy_balance(run)
    if e0 == 0:
        return 0.0
    return float(np.max(np.abs(energy + diss - e0)) / e0)


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass
class IterationState:
    n: int
    trajectory: Trajectory
    D: float = float("nan")
    D_sup: float = float("nan")
    D_int: float = float("nan")


def mixed_norm(coeffs, times, basis, grid):
    """max_t ||.||_{B^0_{inf,1}} + int_0^T ||.||_{B^1_{inf,1}} dt (trapezoid)."""
    b0 = besov_series(coeffs, basis, B0, grid)
    b1 = besov_series(coeffs, basis, B1, grid)
    integ = float(np.sum(0.5 * np.diff(times) * (b1[1:] + b1[:-1])))
    return float(np.max(b0)) + integ, float(np.max(b0)), integ


def picard_sequence(theta0, config, N, grid=None):
    """theta_1 = linear flow of S_1 theta_0; theta_n solves the linear problem with drift theta_{n-1}
    and datum S_n theta_0, where S_n = eta(Lambda / 2^n)."""
    if N < 2:
        raise ValueError("need at least two iterates")
    basis = theta0.basis
    grid = DiskGrid.for_basis(basis) if grid is None else grid
    states = []
    prev = None
    for n in range(1, N + 1):
        data = SpectralField(basis, eta(basis.lam / 2.0**n) * theta0.coeffs)
        if prev is None:
            run = integrate(data, config, nonlinear=False)
        else:
            run = integrate(data, config, drift=prev.trajectory)
        st = IterationState(n, run.trajectory)
        if prev is not None:
            diff = run.trajectory.coeffs - prev.trajectory.coeffs
            st.D, st.D_sup, st.D_int = mixed_norm(diff, run.trajectory.times, basis, grid)
        states.append(st)
        prev = st
    return states


def contraction_ratios(states, floor=1e-13):
    """D_{n+1}/D_n for consecutive iterates while D_n is above the floor."""
    out = []
    for a, b in zip(states[1:], states[2:]):
        if a.D > floor and b.D > floor:
            out.append((b.n, b.D / a.D))
    return out


def auto_select_T(theta0, config, N=6, target=0.6, min_n=3, max_halvings=6):
    """Halve T until every ratio D_{n+1}/D_n with n >= min_n is at most target."""
    cfg = config
    for _ in range(max_halvings + 1):
        states = picard_sequence(theta0, cfg, N)
        ratios = [q for n, q in contraction_ratios(states) if n - 1 >= min_n]
        if ratios and max(ratios) <= target:
            return cfg, states
        steps = cfg.steps // 2
        if steps < 1:
            break
        cfg = cfg.with_(T=steps * cfg.dt)
    return cfg, states


# ---------------------------------------------------------------------------
# initial data


def smooth_datum(basis, seed=0, amplitude=1.0, scale=8.0):
    """Seeded random field with coefficients ~ exp(-lam / scale), scaled to the given sup norm."""
    rng = np.random.default_rng(seed)
    c = (rng.standard_normal(basis.shape) + 1j * rng.standard_normal(basis.shape)) * np.exp(-basis.lam / scale)
    f = SpectralField(basis, c)
    if amplitude == 0:
        return SpectralField.zeros(basis)
    return f * (amplitude / sup_norm(f))


def band_limited_datum(basis, seed=0, amplitude=1e-2, lam_max=8.0):
    """Seeded random field using only eigenvalues below lam_max."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(basis.shape) + 1j * rng.standard_normal(basis.shape)
    c = np.where(basis.lam < lam_max, c, 0.0)
    f = SpectralField(basis, c)
    return f * (amplitude / sup_norm(f))
