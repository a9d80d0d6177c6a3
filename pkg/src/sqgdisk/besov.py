"""Littlewood-Paley partitions of the spectrum of Lambda_D and Besov norms.

Two families of spectral blocks are provided:

* dyadic: phi_j(l) = phi0(l / 2^j) with phi0(l) = eta(l) - eta(2 l), where eta is
  a smooth step equal to 1 on (-inf, 1] and 0 on [2, inf);
* resolvent: psi_j(l) = Q_{j+1}(l) - Q_j(l) with Q_j(l) = 1 / (1 + 4^{-j} l^2).

Both telescope: sums over j <= J are eta(l / 2^J) and Q_{J+1}(l) respectively,
which gives the low-pass operators and the exact truncation tails.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .spectral import apply_multiplier, signed_sum_sq, synthesize_batch

DYADIC = "dyadic"
RESOLVENT = "resolvent"

# The resolvent blocks decay only like 4^{-|j - log2 l|}, so the truncated
# family needs this many extra levels on each side to leave a tail below 1e-10.
RESOLVENT_MARGIN = 18


def _g(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def eta(lam):
    """Smooth step: 1 for lam <= 1, 0 for lam >= 2."""
    lam = np.asarray(lam, dtype=float)
    a = _g(2.0 - lam)
    b = _g(lam - 1.0)
    return a / (a + b)


def phi0(lam):
    """Dyadic bump supported in [1/2, 2]."""
    return eta(lam) - eta(2.0 * lam)


def psi(j, lam):
    """Resolvent block 1/(1 + 4^{-j-1} l^2) - 1/(1 + 4^{-j} l^2), in a cancellation-free form."""
    lam = np.asarray(lam, dtype=float)
    x = 4.0 ** (-j) * lam * lam
    val = 0.75 * x / ((1.0 + 0.25 * x) * (1.0 + x))
    return float(val) if val.ndim == 0 else val


def resolvent_q(j, lam):
    return 1.0 / (1.0 + 4.0 ** (-j) * np.asarray(lam, dtype=float) ** 2)


@dataclass(frozen=True)
class BesovSpec:
    s: float
    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (v >= 1 or math.isinf(v)) or math.isnan(v):
                raise ValueError(f"{name} must lie in [1, inf], got {v}")


class DyadicPartition:
    name = DYADIC

    def weight(self, j, lam):
        return phi0(np.asarray(lam, dtype=float) / 2.0**j)

    def low_pass_weight(self, j, lam):
        return eta(np.asarray(lam, dtype=float) / 2.0**j)

    def j_range(self, basis):
        return int(math.floor(math.log2(basis.lambda_min))) - 1, int(math.ceil(math.log2(basis.lambda_max)))

    def tail(self, lam, j_min, j_max):
        """1 - sum_{j_min..j_max} phi_j(lam); exactly eta(lam/2^{j_min-1}) + 1 - eta(lam/2^{j_max})."""
        lam = np.asarray(lam, dtype=float)
        return eta(lam / 2.0 ** (j_min - 1)) + (1.0 - eta(lam / 2.0**j_max))


class ResolventPartition:
    name = RESOLVENT

    def weight(self, j, lam):
        return psi(j, lam)

    def low_pass_weight(self, j, lam):
        return resolvent_q(j + 1, lam)

    def j_range(self, basis):
        return (
            int(math.floor(math.log2(basis.lambda_min))) - RESOLVENT_MARGIN,
            int(math.ceil(math.log2(basis.lambda_max))) + RESOLVENT_MARGIN,
        )

    def tail(self, lam, j_min, j_max):
        """1 - sum_{j_min..j_max} psi_j(lam) = Q_{j_min}(lam) + (1 - Q_{j_max+1}(lam))."""
        lam = np.asarray(lam, dtype=float)
        x = 4.0 ** (-(j_max + 1)) * lam * lam
        return resolvent_q(j_min, lam) + x / (1.0 + x)


def make_phi0():
    return DyadicPartition()


def get_partition(partition):
    if isinstance(partition, (DyadicPartition, ResolventPartition)):
        return partition
    if partition == DYADIC:
        return DyadicPartition()
    if partition == RESOLVENT:
        return ResolventPartition()
    raise ValueError(f"unknown partition {partition!r}")


def phi_block(j, f):
    return apply_multiplier(lambda lam: phi0(lam / 2.0**j), f)


def psi_block(j, f):
    return apply_multiplier(lambda lam: psi(j, lam), f)


def low_pass(j, f):
    """S_j = sum_{k <= j} phi_k(Lambda_D) as one multiplier eta(l / 2^j)."""
    return apply_multiplier(lambda lam: eta(lam / 2.0**j), f)


def high_pass(j, f):
    return f - low_pass(j, f)


def block_weights(partition, basis, j_min=None, j_max=None):
    part = get_partition(partition)
    lo, hi = part.j_range(basis)
    lo = lo if j_min is None else j_min
    hi = hi if j_max is None else j_max
    js = np.arange(lo, hi + 1)
    return js, np.stack([part.weight(int(j), basis.lam) for j in js])


def block_grid_values(coeffs, basis, weights, grid):
    """Synthesize every block of every field: coeffs (..., M+1, K) -> (..., nj, nr, ntheta)."""
    c = np.asarray(coeffs)[..., None, :, :] * weights
    return synthesize_batch(c, basis, grid)


def block_lp_norms(coeffs, basis, weights, p, grid=None):
    """L^p norm of each block; p = 2 uses Parseval, p = inf the grid maximum."""
    c = np.asarray(coeffs)[..., None, :, :] * weights
    if p == 2:
        w = np.abs(c) ** 2
        return np.sqrt(w[..., 0, :].sum(-1) + 2.0 * w[..., 1:, :].sum((-1, -2)))
    vals = synthesize_batch(c, basis, grid)
    if math.isinf(p):
        return np.max(np.abs(vals), axis=(-1, -2))
    return np.sum(grid.area_weights * np.abs(vals) ** p, axis=(-1, -2)) ** (1.0 / p)


def lq_sum(js, block_norms, s, q):
    """ell^q over the trailing block axis of 2^{sj} * norms."""
    a = 2.0 ** (s * np.asarray(js, dtype=float)) * block_norms
    if math.isinf(q):
        return np.max(a, axis=-1)
    return np.sum(a**q, axis=-1) ** (1.0 / q)


def besov_norms(coeffs, basis, spec, partition, grid=None):
    """Besov norms of a stack of coefficient arrays (..., M+1, K)."""
    part = get_partition(partition)
    if part.name == RESOLVENT and abs(spec.s) >= 2:
        raise ValueError("the resolvent partition defines equivalent norms only for |s| < 2")
    js, w = block_weights(part, basis)
    if js.size == 0:
        raise ValueError("empty active block range")
    return lq_sum(js, block_lp_norms(coeffs, basis, w, spec.p, grid), spec.s, spec.q)


def besov_norm(f, spec, partition=DYADIC, grid=None):
    return float(besov_norms(f.coeffs, f.basis, spec, partition, grid))


def besov_report(f, spec, partition=DYADIC, grid=None):
    """Norm record with the truncation tail of the partition over the basis spectrum."""
    part = get_partition(partition)
    j_min, j_max = part.j_range(f.basis)
    value = besov_norm(f, spec, part, grid)
    tail = float(np.max(np.abs(part.tail(f.basis.lam, j_min, j_max))))
    return {
        "s": spec.s,
        "p": _json_float(spec.p),
        "q": _json_float(spec.q),
        "partition": part.name,
        "value": value,
        "tail_bound": tail,
        "j_range": [j_min, j_max],
    }


def _json_float(x):
    return "inf" if math.isinf(x) else x


def report_json(report):
    return json.dumps(report, sort_keys=True)


def sobolev_norm(f, s):
    """H^s norm as the B^s_{2,2} norm over dyadic blocks."""
    return besov_norm(f, BesovSpec(s, 2, 2), DYADIC)


def spectral_sobolev_norm(f, s):
    """(sum lam^{2s} |c|^2)^{1/2} over signed modes."""
    return math.sqrt(signed_sum_sq(f.basis, f.coeffs, f.basis.lam ** (2 * s)))


def spectral_sobolev_norms(coeffs, basis, s):
    w = np.abs(np.asarray(coeffs)) ** 2 * basis.lam ** (2 * s)
    return np.sqrt(w[..., 0, :].sum(-1) + 2.0 * w[..., 1:, :].sum((-1, -2)))


def b0_inf1(f, grid):
    return besov_norm(f, BesovSpec(0.0, math.inf, 1.0), DYADIC, grid)


def b1_inf1(f, grid):
    return besov_norm(f, BesovSpec(1.0, math.inf, 1.0), DYADIC, grid)

