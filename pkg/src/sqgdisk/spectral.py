"""Dirichlet-Laplacian eigenbasis on the unit disk and its functional calculus.

Modes are e_{m,k}(r, t) = N_{m,k} J_|m|(j_{|m|,k} r) exp(i m t), orthonormal in
L^2(B). A real field stores only the m >= 0 coefficients; the m < 0 ones are
conjugates. Lambda_D acts on e_{m,k} by multiplication with j_{|m|,k}.

Cartesian derivatives never go through 1/r: with D+ = d_x + i d_y and
D- = d_x - i d_y,

    D+ [J_m(lr) e^{imt}] = -l J_{m+1}(lr) e^{i(m+1)t}
    D- [J_m(lr) e^{imt}] =  l J_{m-1}(lr) e^{i(m-1)t}

for every signed integer m, so derivatives are angular-order shifts of the
same expansion.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .specfun import bessel_j_table, bessel_zeros, gauss_legendre

MAX_SHIFT = 2
GENERATORS = ("lambda", "laplacian", "viscous")


class GridSizeError(ValueError):
    pass


@dataclass(frozen=True)
class EigenMode:
    m: int
    k: int
    lam: float
    norm_const: float


class EigenBasis:
    """Truncated eigensystem: all (m, k) with |m| <= max_m, 1 <= k <= max_k."""

    def __init__(self, max_m, max_k):
        if not (0 <= max_m <= 128 and 1 <= max_k <= 128):
            raise ValueError("need 0 <= max_m <= 128 and 1 <= max_k <= 128")
        self.max_m = int(max_m)
        self.max_k = int(max_k)
        lam = np.empty((self.max_m + 1, self.max_k))
        norm = np.empty_like(lam)
        # the top order builds every lower-order chain in one pass
        bessel_zeros(self.max_m, self.max_k)
        for m in range(self.max_m + 1):
            z = bessel_zeros(m, self.max_k)
            lam[m] = z
            jn1 = bessel_j_table(m + 1, z)[m + 1]
            norm[m] = 1.0 / (np.sqrt(np.pi) * np.abs(jn1))
        lam.setflags(write=False)
        norm.setflags(write=False)
        self.lam = lam
        self.norm = norm
        self.lambda_min = float(lam.min())
        self.lambda_max = float(lam.max())

    @property
    def shape(self):
        return self.lam.shape

    @property
    def mode_count(self):
        return (2 * self.max_m + 1) * self.max_k

    def modes(self):
        return [
            EigenMode(m, k + 1, float(self.lam[abs(m), k]), float(self.norm[abs(m), k]))
            for m in range(-self.max_m, self.max_m + 1)
            for k in range(self.max_k)
        ]

    def signed(self, arr):
        """Extend an (M+1, K) array over signed m by |m| symmetry."""
        return np.concatenate([arr[:0:-1], arr], axis=0)

    def __repr__(self):
        return f"EigenBasis(max_m={self.max_m}, max_k={self.max_k})"


@functools.lru_cache(maxsize=8)
def build_basis(max_m, max_k):
    return EigenBasis(max_m, max_k)


class DiskGrid:
    """Tensor collocation grid: Gauss-Legendre in r (weights times r), uniform in angle."""

    def __init__(self, nr, ntheta):
        if nr < 2 or ntheta < 4 or ntheta % 2:
            raise GridSizeError("need nr >= 2 and an even ntheta >= 4")
        self.nr = int(nr)
        self.ntheta = int(ntheta)
        rule = gauss_legendre(self.nr, 0.0, 1.0)
        self.r = rule.nodes
        self.r_weights = rule.weights * rule.nodes
        self.theta = 2 * np.pi * np.arange(self.ntheta) / self.ntheta
        self.area_weights = np.outer(self.r_weights, np.full(self.ntheta, 2 * np.pi / self.ntheta))

    @classmethod
    def for_basis(cls, basis, refine=1.0):
        # products of two modes oscillate like exp(2 i lam_max r); Gauss-Legendre
        # resolves them once nr exceeds about 0.7 lam_max
        nr = max(2 * basis.max_k + 16, int(np.ceil(0.75 * basis.lambda_max)) + 16)
        nt = 4 * basis.max_m + 16
        return cls(int(np.ceil(refine * nr)), _even(refine * nt))

    @classmethod
    def rings(cls, radii, ntheta):
        """Evaluation-only grid on the given circles; its quadrature weights are zero."""
        g = cls(2, ntheta)
        g.r = np.asarray(radii, dtype=float)
        g.nr = g.r.size
        g.r_weights = np.zeros_like(g.r)
        g.area_weights = np.zeros((g.nr, g.ntheta))
        return g

    def padded(self, factor=1.5):
        return DiskGrid(int(np.ceil(factor * self.nr)), _even(factor * self.ntheta))

    def check_basis(self, basis):
        if self.ntheta <= 2 * (basis.max_m + MAX_SHIFT):
            raise GridSizeError(f"ntheta={self.ntheta} too small for max_m={basis.max_m}")

    def integrate(self, values):
        return float(np.sum(self.area_weights * values))

    def xy(self):
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return rr * np.cos(tt), rr * np.sin(tt)

    def __repr__(self):
        return f"DiskGrid(nr={self.nr}, ntheta={self.ntheta})"


def _even(x):
    n = int(np.ceil(x))
    return n + (n % 2)


@dataclass
class SpectralField:
    """Coefficients c[m, k-1] for m = 0..max_m; the m < 0 half is implied by conjugation."""

    basis: EigenBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != self.basis.shape:
            raise GridSizeError(f"coefficient shape {c.shape} != basis shape {self.basis.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        c[0] = c[0].real
        self.coeffs = c

    @classmethod
    def zeros(cls, basis):
        return cls(basis, np.zeros(basis.shape, dtype=complex))

    @classmethod
    def mode(cls, basis, m, k, value=1.0):
        c = np.zeros(basis.shape, dtype=complex)
        c[m, k - 1] = value
        return cls(basis, c)

    def signed(self):
        c = self.coeffs
        return np.concatenate([np.conj(c[:0:-1]), c], axis=0)

    def _like(self, coeffs):
        return SpectralField(self.basis, coeffs)

    def __add__(self, other):
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, a):
        return self._like(self.coeffs * float(a))

    __rmul__ = __mul__

    def l2_norm(self):
        return float(np.sqrt(l2_inner(self, self)))

    def restrict(self, basis):
        """Copy onto another basis, truncating or zero-padding modes."""
        out = np.zeros(basis.shape, dtype=complex)
        mm = min(basis.max_m, self.basis.max_m) + 1
        kk = min(basis.max_k, self.basis.max_k)
        out[:mm, :kk] = self.coeffs[:mm, :kk]
        return SpectralField(basis, out)


def l2_inner(f, g):
    """Real L^2(B) inner product via Parseval over signed modes."""
    prod = np.real(f.coeffs * np.conj(g.coeffs))
    return float(prod[0].sum() + 2.0 * prod[1:].sum())


def signed_sum_sq(basis, coeffs, weight=None):
    w = np.abs(coeffs) ** 2
    if weight is not None:
        w = w * weight
    return float(w[0].sum() + 2.0 * w[1:].sum())


@dataclass
class GridField:
    grid: DiskGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.nr, self.grid.ntheta):
            raise GridSizeError(f"values shape {v.shape} does not match {self.grid!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite grid values")
        self.values = v

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def lp_norm(self, p):
        if np.isinf(p):
            return self.sup_norm()
        return self.grid.integrate(np.abs(self.values) ** p) ** (1.0 / p)


# ---------------------------------------------------------------------------
# radial tables


def radial_table(basis, r, shifts=range(-MAX_SHIFT, MAX_SHIFT + 1)):
    """T[s][m + M, k, i] = N_{|m|,k} sigma_m J_{m+s}(lam_{|m|,k} r_i), signed orders.

    sigma_m = (-1)^m for m < 0 so that sigma_m J_m = J_|m|.
    """
    r = np.asarray(r, dtype=float).ravel()
    M = basis.max_m
    K = basis.max_k
    shifts = list(shifts)
    smax = max(abs(s) for s in shifts)
    tabs = {s: np.empty((2 * M + 1, K, r.size)) for s in shifts}
    # one Bessel sweep per group of orders, keeping the work array near 2^22 entries
    group = max(1, (1 << 22) // max(1, (M + smax + 1) * K * r.size))
    for a0 in range(0, M + 1, group):
        orders = np.arange(a0, min(M + 1, a0 + group))
        x = basis.lam[orders][:, :, None] * r
        jt = bessel_j_table(orders[-1] + smax, x)
        for i, a in enumerate(orders):
            nrm = basis.norm[a][:, None]

            def jsigned(p):
                return jt[p, i] if p >= 0 else (-1.0) ** p * jt[-p, i]

            for s in shifts:
                tabs[s][M + a] = nrm * jsigned(a + s)
                if a:
                    tabs[s][M - a] = (-1.0) ** a * nrm * jsigned(-a + s)
    return tabs


@functools.lru_cache(maxsize=16)
def grid_tables(basis, grid):
    grid.check_basis(basis)
    tabs = radial_table(basis, grid.r)
    for t in tabs.values():
        t.setflags(write=False)
    return tabs


# ---------------------------------------------------------------------------
# transforms


def synthesize(c, grid):
    """Evaluate a real eigen-expansion on the grid."""
    basis = c.basis
    tab = grid_tables(basis, grid)[0]
    M = basis.max_m
    radial = np.einsum("mk,mki->im", c.coeffs, tab[M:])
    spec = np.zeros((grid.nr, grid.ntheta // 2 + 1), dtype=complex)
    spec[:, : M + 1] = radial
    return GridField(grid, np.fft.irfft(spec, n=grid.ntheta, axis=1) * grid.ntheta)


def synthesize_shifted(a_signed, shift, basis, grid):
    """Complex field sum_{m,k} a[m,k] T_shift[m,k](r) exp(i (m + shift) t).

    ``a_signed`` is indexed by signed m (shape (2M+1, K), or with leading batch
    axes). Returns complex values of shape (..., nr, ntheta).
    """
    tab = grid_tables(basis, grid)[shift]
    M = basis.max_m
    radial = np.einsum("...mk,mki->...im", a_signed, tab)
    spec = np.zeros(radial.shape[:-1] + (grid.ntheta,), dtype=complex)
    orders = np.arange(-M, M + 1) + shift
    spec[..., orders % grid.ntheta] = radial
    return np.fft.ifft(spec, axis=-1) * grid.ntheta


def synthesize_batch(coeffs, basis, grid):
    """Real synthesis for a stack of coefficient arrays of shape (..., M+1, K)."""
    tab = grid_tables(basis, grid)[0]
    M = basis.max_m
    radial = np.einsum("...mk,mki->...im", coeffs, tab[M:])
    spec = np.zeros(radial.shape[:-1] + (grid.ntheta // 2 + 1,), dtype=complex)
    spec[..., : M + 1] = radial
    return np.fft.irfft(spec, n=grid.ntheta, axis=-1) * grid.ntheta


def analyze(f, basis):
    """Project grid values onto the basis: angular DFT, then radial quadrature."""
    return SpectralField(basis, analyze_values(f.values, f.grid, basis))


def analyze_values(values, grid, basis):
    """Projection for raw arrays of shape (..., nr, ntheta); returns (..., M+1, K)."""
    tab = grid_tables(basis, grid)[0]
    M = basis.max_m
    ang = np.fft.rfft(values, axis=-1)[..., : M + 1] / grid.ntheta
    # c_{m,k} = 2 pi sum_i w_i F_m(r_i) N J_m(lam r_i)
    return 2 * np.pi * np.einsum("...im,i,mki->...mk", ang, grid.r_weights, tab[M:])


def evaluate_points(c, r, theta, shift=0, op_weights=None):
    """Evaluate sum a[m,k] T_shift(r_p) exp(i(m+shift) theta_p) at scattered points.

    With shift=0 and no weights this is the field value (real part is the field).
    ``op_weights`` multiplies signed coefficients, shape (2M+1, K).
    """
    return evaluate_points_multi(c, r, theta, [(shift, op_weights)])[0]


def evaluate_points_multi(c, r, theta, ops):
    """Several (shift, op_weights) evaluations sharing one radial table."""
    basis = c.basis
    r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
    tabs = radial_table(basis, r, shifts=sorted({s for s, _ in ops}))
    a0 = c.signed()
    orders = np.arange(-basis.max_m, basis.max_m + 1)
    out = []
    for shift, w in ops:
        a = a0 if w is None else a0 * w
        radial = np.einsum("mk,mkp->mp", a, tabs[shift])
        phase = np.exp(1j * np.outer(orders + shift, theta.ravel()))
        v = np.sum(radial * phase, axis=0).reshape(r.shape)
        out.append(v if v.ndim else complex(v))
    return out


# ---------------------------------------------------------------------------
# functional calculus


def multiplier_values(sigma, basis):
    vals = np.asarray(sigma(basis.lam), dtype=float)
    if vals.shape != basis.shape:
        vals = np.broadcast_to(vals, basis.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("multiplier is not finite on the spectrum")
    return vals


def apply_multiplier(sigma, f):
    """sigma(Lambda_D) f for a real function sigma evaluated on the eigenvalues."""
    return SpectralField(f.basis, multiplier_values(sigma, f.basis) * f.coeffs)


def generator_symbol(generator, epsilon=0.0):
    if generator == "lambda":
        return lambda lam: lam
    if generator == "laplacian":
        return lambda lam: lam**2
    if generator == "viscous":
        if epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        return lambda lam: lam + epsilon * lam**2
    raise ValueError(f"unknown generator {generator!r}; expected one of {GENERATORS}")


def semigroup(t, f, generator="lambda", epsilon=0.0):
    """exp(-t g(Lambda_D)) f with g(l) = l, l^2 or l + eps l^2."""
    if t < 0:
        raise ValueError("semigroup time must be non-negative")
    g = generator_symbol(generator, epsilon)
    return apply_multiplier(lambda lam: np.exp(-t * g(lam)), f)


def resolvent_symbol(j):
    return lambda lam: 1.0 / (1.0 + 4.0 ** (-j) * lam**2)


def resolvent_scaled(j, f):
    """(1 - 2^{-2j} Delta_D)^{-1} f."""
    return apply_multiplier(resolvent_symbol(j), f)


def lambda_power(s, f):
    """Lambda_D^s f; every real s is allowed since the spectrum is bounded below."""
    return apply_multiplier(lambda lam: lam**s, f)


def random_field(basis, rng_coeffs, decay=0.0):
    """Field with given complex Gaussian coefficients scaled by lam^{-decay}.

    ``rng_coeffs`` may be larger than the basis; it is sliced, so fields built
    from one draw on nested bases agree on shared modes.
    """
    c = np.asarray(rng_coeffs)[: basis.max_m + 1, : basis.max_k]
    return SpectralField(basis, c * basis.lam ** (-decay))
