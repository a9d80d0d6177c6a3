"""Bessel functions of the first kind, their zeros, and Gauss-Legendre rules.

Everything here is self-contained numpy code. ``bessel_j_table`` is the
workhorse used by the spectral transforms: one backward-recurrence sweep
produces every order ``0..nmax`` at once for an array of arguments.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 256
MAX_ZERO_INDEX = 512
MAX_ARG = 1.0e4

# Below this argument the ascending series is used. The series sums terms of
# size up to I_0(x), so the absolute rounding error is about eps * I_0(8) ~ 5e-14.
SERIES_SWITCH = 8.0

_RESCALE_HIGH = 1.0e250
_RESCALE_FACTOR = 1.0e-250


class BesselDomainError(ValueError):
    pass


class ZeroConvergenceError(RuntimeError):
    pass


def _check_args(order, x):
    if int(order) != order or order < 0 or order > MAX_ORDER:
        raise BesselDomainError(f"unsupported order {order!r}; need integer in [0, {MAX_ORDER}]")
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > MAX_ARG):
        raise BesselDomainError(f"argument must lie in [0, {MAX_ARG:g}]")
    return int(order), x


def _series_table(nmax, x):
    """Ascending series for J_0..J_nmax at small x (x <= SERIES_SWITCH), all orders at once."""
    out = np.zeros((nmax + 1,) + x.shape)
    pos = x > 0
    out[0][~pos] = 1.0
    if not np.any(pos):
        return out
    half = 0.5 * x[pos]
    q = half * half
    n = np.arange(nmax + 1, dtype=float)[:, None]
    # leading term (x/2)^n / n!, computed in logs to underflow gracefully
    lgam = np.array([math.lgamma(k + 1) for k in range(nmax + 1)])[:, None]
    lead = np.exp(n * np.log(half) - lgam)
    term = np.ones((nmax + 1, half.size))
    total = np.ones_like(term)
    # at x <= 8 the terms (x/2)^{2k} / (k! (k+n)!) fall below 1e-20 of the sum by k = 40
    for k in range(1, 41):
        term = term * (-q) / (k * (k + n))
        total += term
    out[:, pos] = lead * total
    return out


def _miller_table(nmax, x):
    """Miller backward recurrence, normalized by J_0 + 2 sum J_2k = 1."""
    xmax = float(np.max(x))
    start = int(max(nmax, xmax) + 30 + 10.0 * xmax ** (1.0 / 3.0))
    start += start % 2
    out = np.zeros((nmax + 1,) + x.shape)
    inv = 2.0 / x
    jp1 = np.zeros_like(x)
    j = np.full_like(x, 1e-300)
    norm = np.zeros_like(x)
    for n in range(start, 0, -1):
        # j holds J_n, jp1 holds J_{n+1} (unnormalized)
        jm1 = n * inv * j - jp1
        jp1, j = j, jm1
        if n - 1 <= nmax:
            out[n - 1] = j
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * j
        if n % 4:
            continue
        # growth per step is below ~100, so checking every 4 steps cannot overflow
        big = np.abs(j) > _RESCALE_HIGH
        if np.any(big):
            j[big] *= _RESCALE_FACTOR
            jp1[big] *= _RESCALE_FACTOR
            norm[big] *= _RESCALE_FACTOR
            out[:, big] *= _RESCALE_FACTOR
    norm += j
    return out / norm


def bessel_j_table(nmax, x):
    """Return J_n(x) for n = 0..nmax as an array of shape (nmax + 1, *x.shape)."""
    nmax, x = _check_args(nmax, x)
    return _raw_table(nmax, x)


def bessel_j(order, x):
    """J_order(x) for integer order in [0, 256] and 0 <= x <= 1e4."""
    order, xa = _check_args(order, x)
    val = bessel_j_table(order, xa)[order]
    return float(val) if np.ndim(x) == 0 else val


def bessel_j_prime(order, x):
    """d/dx J_order(x), from J'_m = (J_{m-1} - J_{m+1}) / 2 and J'_0 = -J_1."""
    order, xa = _check_args(order, x)
    tab = _raw_table(order + 1, xa)
    if order == 0:
        val = -tab[1]
    else:
        val = 0.5 * (tab[order - 1] - tab[order + 1])
    return float(val) if np.ndim(x) == 0 else val


def _raw_table(nmax, x):
    # unchecked; nmax may exceed MAX_ORDER by one for derivatives
    out = np.empty((nmax + 1,) + x.shape)
    small = x <= SERIES_SWITCH
    if np.any(small):
        out[:, small] = _series_table(nmax, x[small])
    if np.any(~small):
        out[:, ~small] = _miller_table(nmax, x[~small])
    return out


# ---------------------------------------------------------------------------
# zeros


_zero_cache: dict[int, np.ndarray] = {}
_zero_lock = threading.Lock()


def _refine_zeros(order, lo, hi):
    """Safeguarded Newton on J_order, vectorized over brackets [lo, hi]."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)

    def values(x):
        tab = _raw_table(order + 1, x)
        f = tab[order]
        df = -tab[1] if order == 0 else 0.5 * (tab[order - 1] - tab[order + 1])
        return f, df

    flo, _ = values(lo)
    fhi, _ = values(hi)
    if np.any(np.sign(flo) == np.sign(fhi)):
        bad = np.flatnonzero(np.sign(flo) == np.sign(fhi))
        raise ZeroConvergenceError(f"bracket does not straddle a sign change for order {order}, indices {bad[:5]}")
    x = 0.5 * (lo + hi)
    for _ in range(100):
        f, df = values(x)
        left = np.sign(f) == np.sign(flo)
        lo = np.where(left, x, lo)
        flo = np.where(left, f, flo)
        hi = np.where(left, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / df
        ok = np.isfinite(newton) & (newton >= lo) & (newton <= hi)
        xn = np.where(ok, newton, 0.5 * (lo + hi))
        done = np.abs(xn - x) <= 1e-14 * np.abs(x)
        x = xn
        if np.all(done):
            # quadratic convergence: one more step reaches rounding level
            f, df = values(x)
            return x - f / df
    raise ZeroConvergenceError(f"zero refinement did not converge for order {order}")


def _compute_zeros(order, count, prev=None):
    if order == 0:
        k = np.arange(1, count + 1)
        beta = (k - 0.25) * np.pi
        # McMahon: j_{0,k} = beta + 1/(8 beta) - ..., always inside [beta, beta + 0.1]
        return _refine_zeros(0, beta, beta + 0.1)
    # interlacing: j_{m-1,k} < j_{m,k} < j_{m-1,k+1}
    eps = 1e-9
    return _refine_zeros(order, prev[:count] + eps, prev[1 : count + 1] - eps)


def _zeros_upto(order, count):
    z = _zero_cache.get(order)
    if z is not None and len(z) >= count:
        return z
    # order n needs count + (order - n) zeros of order n, built upward; a few
    # spare zeros avoid rebuilding the chain on the next slightly larger request
    count += 8
    base = order
    while base > 0 and len(_zero_cache.get(base - 1, ())) < count + order - base + 1:
        base -= 1
    prev = _zero_cache.get(base - 1) if base > 0 else None
    for n in range(base, order + 1):
        z = _compute_zeros(n, count + order - n, prev)
        z.setflags(write=False)
        if len(_zero_cache.get(n, ())) < len(z):
            _zero_cache[n] = z
        prev = _zero_cache[n]
    return _zero_cache[order]


def bessel_zeros(order, count):
    """First ``count`` positive zeros of J_order as a read-only array."""
    if int(order) != order or not 0 <= order <= MAX_ORDER:
        raise BesselDomainError(f"unsupported order {order!r}")
    if int(count) != count or not 1 <= count <= MAX_ZERO_INDEX:
        raise BesselDomainError(f"zero index must be in [1, {MAX_ZERO_INDEX}]")
    with _zero_lock:
        return _zeros_upto(int(order), int(count))[: int(count)]


def bessel_zero(order, k):
    """The k-th positive zero j_{order,k} of J_order."""
    return float(bessel_zeros(order, k)[k - 1])


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values):
        """Sum of weights times values at the nodes; ``values`` may be a callable or an array."""
        if callable(values):
            values = values(self.nodes)
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))


def gauss_legendre(n, a=-1.0, b=1.0):
    """n-point Gauss-Legendre rule on (a, b), by Newton on the three-term recurrence."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if not a < b:
        raise ValueError("need a < b")
    n = int(n)
    i = np.arange(1, n + 1)
    # Tricomi initial guess, descending order on (-1, 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5)) * (1 - (n - 1) / (8.0 * n**3))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        if n == 1:
            p1, p0 = x, np.ones_like(x)
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    if n == 1:
        p1, p0 = x, np.ones_like(x)
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    x = x[::-1]
    w = w[::-1]
    half = 0.5 * (b - a)
    nodes = a + half * (x + 1.0)
    return QuadratureRule(nodes=nodes, weights=w * half, order=n)
