"""Differential and integral operators on eigen-expansions.

All derivatives are analytic. With D+ = d_x + i d_y, a real field f has
D+ f = f_x + i f_y and D+^2 f = f_xx - f_yy + 2i f_xy, while f_xx + f_yy is
the spectral Laplacian -lam^2. Each D+/D- application is a shift of the
signed Bessel order (see ``spectral``), so no 1/r factor ever appears.

The perpendicular gradient is (-d_y, d_x) and the SQG velocity is
u = grad_perp Lambda_D^{-1} theta.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .besov import psi
from .spectral import (
    DiskGrid,
    GridField,
    SpectralField,
    analyze_values,
    evaluate_points,
    synthesize_batch,
    synthesize_shifted,
)

DEALIAS = 1.5


@dataclass
class VectorGridField:
    grid: DiskGrid
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        for v in (self.x, self.y):
            if v.shape != (self.grid.nr, self.grid.ntheta) or not np.all(np.isfinite(v)):
                raise ValueError("vector components must be finite and match the grid")

    def radial(self):
        t = self.grid.theta[None, :]
        return self.x * np.cos(t) + self.y * np.sin(t)

    def azimuthal(self):
        t = self.grid.theta[None, :]
        return -self.x * np.sin(t) + self.y * np.cos(t)

    def magnitude(self):
        return np.hypot(self.x, self.y)


@dataclass
class Hessian:
    xx: GridField
    xy: GridField
    yx: GridField
    yy: GridField

    def sup_norm(self):
        return max(h.sup_norm() for h in (self.xx, self.xy, self.yx, self.yy))


@functools.lru_cache(maxsize=8)
def dealias_grid(basis, factor=DEALIAS):
    return DiskGrid.for_basis(basis).padded(factor)


def _grid_for(basis, grid):
    return dealias_grid(basis) if grid is None else grid


# ---------------------------------------------------------------------------
# batched kernels on coefficient arrays (..., M+1, K)


def signed_coeffs(coeffs):
    c = np.asarray(coeffs)
    return np.concatenate([np.conj(c[..., :0:-1, :]), c], axis=-2)


def dpm_values(coeffs, basis, grid, p, q=0, sigma=None):
    """Grid values of D+^p D-^q sigma(Lambda) f; complex."""
    lam = basis.signed(basis.lam)
    w = (-1.0) ** p * lam ** (p + q)
    if sigma is not None:
        w = w * basis.signed(sigma)
    return synthesize_shifted(signed_coeffs(coeffs) * w, p - q, basis, grid)


def gradient_values(coeffs, basis, grid, sigma=None):
    z = dpm_values(coeffs, basis, grid, 1, 0, sigma)
    return z.real, z.imag


def hessian_values(coeffs, basis, grid, sigma=None):
    """(f_xx, f_xy, f_yy) of sigma(Lambda) f."""
    z = dpm_values(coeffs, basis, grid, 2, 0, sigma)
    s = -basis.lam**2 if sigma is None else -basis.lam**2 * sigma
    lap = synthesize_batch(np.asarray(coeffs) * s, basis, grid)
    return 0.5 * (z.real + lap), 0.5 * z.imag, 0.5 * (lap - z.real)


def velocity_values(coeffs, basis, grid):
    px, py = gradient_values(coeffs, basis, grid, sigma=1.0 / basis.lam)
    return -py, px


def advect_values(f_coeffs, g_coeffs, basis, grid):
    """Pointwise (grad_perp Lambda^{-1} f . grad) g on the grid."""
    ux, uy = velocity_values(f_coeffs, basis, grid)
    gx, gy = gradient_values(g_coeffs, basis, grid)
    return ux * gx + uy * gy


def advect_coeffs(f_coeffs, g_coeffs, basis, grid=None):
    grid = _grid_for(basis, grid)
    return analyze_values(advect_values(f_coeffs, g_coeffs, basis, grid), grid, basis)


# ---------------------------------------------------------------------------
# public field-level API


def gradient(f, grid):
    fx, fy = gradient_values(f.coeffs, f.basis, grid)
    return VectorGridField(grid, fx, fy)


def perp_gradient(f, grid):
    fx, fy = gradient_values(f.coeffs, f.basis, grid)
    return VectorGridField(grid, -fy, fx)


def velocity(theta, grid):
    ux, uy = velocity_values(theta.coeffs, theta.basis, grid)
    return VectorGridField(grid, ux, uy)


def advect(f, g, grid=None):
    """B(f, g) = (grad_perp Lambda^{-1} f . grad) g, products on a 3/2-padded grid, projected."""
    return SpectralField(f.basis, advect_coeffs(f.coeffs, g.coeffs, f.basis, grid))


def advect_at_points(f, g, r, theta):
    """Unprojected B(f, g) evaluated at arbitrary points."""
    basis = f.basis
    lam = basis.signed(basis.lam)
    dpsi = evaluate_points(f, r, theta, shift=1, op_weights=-np.ones_like(lam))
    dg = evaluate_points(g, r, theta, shift=1, op_weights=-lam)
    return -dpsi.imag * dg.real + dpsi.real * dg.imag


def second_derivative_inverse(f, grid):
    """Hessian of (-Delta_D)^{-1} f."""
    xx, xy, yy = hessian_values(f.coeffs, f.basis, grid, sigma=f.basis.lam ** -2.0)
    return Hessian(GridField(grid, xx), GridField(grid, xy), GridField(grid, xy.copy()), GridField(grid, yy))


def commutator_block(j, f, g, grid=None):
    """[B(f, .), psi_j(Lambda_D)] g = B(f, psi_j g) - psi_j B(f, g)."""
    w = psi(j, f.basis.lam)
    return SpectralField(f.basis, commutator_coeffs(w, f.coeffs, g.coeffs, f.basis, grid))


def commutator_coeffs(weight, f_coeffs, g_coeffs, basis, grid=None):
    grid = _grid_for(basis, grid)
    return advect_coeffs(f_coeffs, weight * g_coeffs, basis, grid) - weight * advect_coeffs(
        f_coeffs, g_coeffs, basis, grid
    )


def resolvent_commutator_coeffs(j, f_coeffs, g_coeffs, basis, grid=None):
    """B(f, Q_j g) - Q_j B(f, g) with Q_j = (1 - 4^{-j} Delta_D)^{-1}, computed directly."""
    q = 1.0 / (1.0 + 4.0 ** (-j) * basis.lam**2)
    return commutator_coeffs(q, f_coeffs, g_coeffs, basis, grid)


def remainder_coeffs(j, f_coeffs, g_coeffs, basis, grid=None):
    """R_j(f, g) = -4^{-j} Q_j [Delta, v . grad] Q_j g with v = grad_perp Lambda^{-1} f.

    [Delta, v . grad] h = (Delta v) . grad h + 2 grad v : grad^2 h, where
    Delta v = -grad_perp(Lambda f) and
    grad v : grad^2 h = (psi_xx - psi_yy) h_xy - psi_xy (h_xx - h_yy), psi = Lambda^{-1} f.
    """
    grid = _grid_for(basis, grid)
    a = 4.0 ** (-j)
    q = 1.0 / (1.0 + a * basis.lam**2)
    h = q * np.asarray(g_coeffs)
    # -grad_perp(Lambda f) . grad h = (Lambda f)_y h_x - (Lambda f)_x h_y
    lfx, lfy = gradient_values(f_coeffs, basis, grid, sigma=basis.lam)
    hx, hy = gradient_values(h, basis, grid)
    term1 = lfy * hx - lfx * hy
    pxx, pxy, pyy = hessian_values(f_coeffs, basis, grid, sigma=1.0 / basis.lam)
    hxx, hxy, hyy = hessian_values(h, basis, grid)
    term2 = 2.0 * ((pxx - pyy) * hxy - pxy * (hxx - hyy))
    return -a * q * analyze_values(term1 + term2, grid, basis)


def remainder_Rj(j, f_low, g, grid=None):
    return SpectralField(f_low.basis, remainder_coeffs(j, f_low.coeffs, g.coeffs, f_low.basis, grid))


# ---------------------------------------------------------------------------
# Green's function of -Delta_D on the unit disk


def green_kernel(x, y):
    """G(x, y) = -(1/2pi) log|x - y| + (1/2pi) log(|x| |y - x/|x|^2|).

    Uses |x|^2 |y - x/|x|^2|^2 = |x|^2 |y|^2 - 2 x.y + 1, which is smooth at x = 0.
    Points are arrays with a trailing axis of length 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d2 = np.sum((x - y) ** 2, axis=-1)
    if np.any(d2 == 0):
        raise ValueError("Green's kernel is singular at x = y")
    if np.any(np.sum(x * x, axis=-1) >= 1) or np.any(np.sum(y * y, axis=-1) >= 1):
        raise ValueError("points must lie in the open unit disk")
    img2 = np.sum(x * x, axis=-1) * np.sum(y * y, axis=-1) - 2.0 * np.sum(x * y, axis=-1) + 1.0
    val = (np.log(img2) - np.log(d2)) / (4.0 * math.pi)
    return float(val) if np.ndim(val) == 0 else val


def green_kernel_dx1(x, y):
    """d/dx_1 of G(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d2 = np.sum((x - y) ** 2, axis=-1)
    img2 = np.sum(x * x, axis=-1) * np.sum(y * y, axis=-1) - 2.0 * np.sum(x * y, axis=-1) + 1.0
    dimg = 2.0 * x[..., 0] * np.sum(y * y, axis=-1) - 2.0 * y[..., 0]
    dd = 2.0 * (x[..., 0] - y[..., 0])
    return (dimg / img2 - dd / d2) / (4.0 * math.pi)


# ---------------------------------------------------------------------------
# boundary behaviour


def boundary_trace(f, n_theta, r_probe):
    """max over n_theta angles of |f(r, t)| for each probe radius.

    ``f`` is a SpectralField or a callable f(r, theta) on arrays.
    """
    r_probe = np.asarray(r_probe, dtype=float)
    if np.any(r_probe <= 0) or np.any(r_probe >= 1):
        raise ValueError("probe radii must lie in (0, 1)")
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(r_probe, theta, indexing="ij")
    if isinstance(f, SpectralField):
        vals = evaluate_points(f, rr, tt).real
    else:
        vals = np.asarray(f(rr, tt))
    return np.max(np.abs(vals), axis=1)
