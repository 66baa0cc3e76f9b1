"""Exponent algebra and degenerate coefficient fields.

The operators studied here act on R^n x R^m and are built from two radial
coefficient profiles c_k(|x1|), k = 1, 2, that vanish like |x1|^(2*delta_k)
near the degeneracy set {x1 = 0} and grow like |x1|^(2*delta_k') at infinity.
This module holds the parameter tuple, every derived exponent used downstream
(local/global dimensions, ball-volume exponents, multiplier exponents), and
the concrete smooth representative

    c(r) = r^(2*delta) * (1 + r^2)^(deltap - delta)

which matches the two-scale power r^(2*delta, 2*deltap) within a factor
2^|deltap - delta| on both sides.

Everything here is a pure function of its arguments and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GrusinParameters",
    "DerivedExponents",
    "CoefficientField",
    "piecewise_power",
    "coefficient",
    "coefficient_profile",
    "derive_exponents",
]


def piecewise_power(a, alpha: float, alphap: float):
    """Two-scale power a^(alpha, alphap): a**alpha for a <= 1, a**alphap for a >= 1.

    Accepts a scalar or array; the base must be non-negative.  The two
    branches agree at a = 1, so the function is continuous there.
    """
    arr = np.asarray(a, dtype=float)
    if np.any(arr < 0):
        raise ValueError("piecewise_power: base must be non-negative")
    with np.errstate(divide="ignore"):
        lo = np.power(arr, alpha)
        hi = np.power(arr, alphap)
    out = np.where(arr <= 1.0, lo, hi)
    if np.isscalar(a) or arr.ndim == 0:
        return float(out)
    return out


def coefficient_profile(r, delta: float, deltap: float):
    """Radial coefficient c(r) = r^(2*delta) * (1 + r^2)^(deltap - delta).

    ``r`` is |x1| (scalar or array, non-negative).  Strictly positive for
    r > 0; vanishes at r = 0 exactly when delta > 0.
    """
    if delta < 0 or deltap < 0:
        raise ValueError("coefficient exponents must be non-negative")
    rr = np.asarray(r, dtype=float)
    if np.any(rr < 0):
        raise ValueError("coefficient_profile: radius must be non-negative")
    out = np.power(rr, 2.0 * delta) * np.power(1.0 + rr * rr, deltap - delta)
    if np.isscalar(r) or rr.ndim == 0:
        return float(out)
    return out


def coefficient(x, delta: float, deltap: float) -> float:
    """Coefficient at a point x in R^k, evaluated on |x|."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return coefficient_profile(float(np.linalg.norm(x)), delta, deltap)


@dataclass(frozen=True)
class GrusinParameters:
    """Degeneracy exponents (n, m, delta1, delta1p, delta2, delta2p).

    n >= 1 is the dimension of the x1 block carrying the degeneracy,
    m >= 0 the dimension of the x2 block (m = 0 gives the one-dimensional
    example).  The primed exponents govern behaviour at infinity.
    Constraints: delta1, delta1p in [0, 1); delta2, delta2p >= 0.
    """

    n: int
    m: int
    delta1: float = 0.0
    delta1p: float = 0.0
    delta2: float = 0.0
    delta2p: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"m must be a non-negative integer, got {self.m}")
        for name in ("delta1", "delta1p"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        for name in ("delta2", "delta2p"):
            v = getattr(self, name)
            if v < 0.0:
                raise ValueError(f"{name} must be >= 0, got {v}")

    @property
    def dim(self) -> int:
        return self.n + self.m


@dataclass(frozen=True)
class DerivedExponents:
    """All exponents derived from a parameter tuple.

    D, Dp       local/global dimension governing on-diagonal decay t^(-D/2)
                and origin-centred ball volume r^(D, Dp)
    beta, betap off-origin volume exponents |x1|^(beta, betap)
    rho, rhop   switching exponents of the block-2 quasi-distance
    gamma, gammap   block-2 large-separation exponents (distance ~ u^(1-gamma))
    sigma, sigmap   1/(1 - delta1), 1/(1 - delta1p)
    alpha, alphap   block-2 multiplier exponents
    doubling_dim    max(D, Dp), the volume-doubling exponent
    """

    D: float
    Dp: float
    beta: float
    betap: float
    rho: float
    rhop: float
    gamma: float
    gammap: float
    sigma: float
    sigmap: float
    alpha: float
    alphap: float
    doubling_dim: float


def derive_exponents(params: GrusinParameters) -> DerivedExponents:
    """Compute every derived exponent from the printed formulas."""
    n, m = params.n, params.m
    d1, d1p = params.delta1, params.delta1p
    d2, d2p = params.delta2, params.delta2p
    rho = 1.0 + d2 - d1
    rhop = 1.0 + d2p - d1p
    D = (n + m * rho) / (1.0 - d1)
    Dp = (n + m * rhop) / (1.0 - d1p)
    return DerivedExponents(
        D=D,
        Dp=Dp,
        beta=n * d1 + m * d2,
        betap=n * d1p + m * d2p,
        rho=rho,
        rhop=rhop,
        gamma=d2 / rho,
        gammap=d2p / rhop,
        sigma=1.0 / (1.0 - d1),
        sigmap=1.0 / (1.0 - d1p),
        alpha=(1.0 - d1) / rho,
        alphap=(1.0 - d1p) / rhop,
        doubling_dim=max(D, Dp),
    )


@dataclass(frozen=True)
class CoefficientField:
    """Evaluable coefficient pair (c1, c2) as radial profiles of |x1|.

    ``floor_radius`` > 0 freezes both profiles to their value at that radius
    for |x1| below it.  This is the non-degenerate comparison field used in
    the kernel-comparison experiments; the default 0.0 is the plain
    degenerate field.
    """

    params: GrusinParameters
    floor_radius: float = 0.0

    def __post_init__(self):
        if self.floor_radius < 0:
            raise ValueError("floor_radius must be >= 0")

    def _clamped(self, r):
        if self.floor_radius > 0.0:
            return np.maximum(np.asarray(r, dtype=float), self.floor_radius)
        return r

    def block1(self, r):
        """c1(|x1|) for the x1-block gradient term."""
        p = self.params
        return coefficient_profile(self._clamped(r), p.delta1, p.delta1p)

    def block2(self, r):
        """c2(|x1|) for the x2-block gradient term."""
        p = self.params
        return coefficient_profile(self._clamped(r), p.delta2, p.delta2p)

    def block(self, k: int):
        if k == 1:
            return self.block1
        if k == 2:
            return self.block2
        raise ValueError("block index must be 1 or 2")

    def singular_exponent(self, k: int) -> float:
        """Power of the r -> 0 degeneracy of block k (0 if frozen)."""
        if self.floor_radius > 0.0:
            return 0.0
        p = self.params
        return p.delta1 if k == 1 else p.delta2
