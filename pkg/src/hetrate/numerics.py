"""Special-function kernels: Gauss 2F1 on z <= 0, the interference integral,
and fractional moments of the shadowing gain."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, special

LN10_OVER_5 = math.log(10.0) / 5.0

_QUAD_RTOL = 1e-13
_QUAD_LIMIT = 400
# beyond this |z| the left half of the Euler integral is rescaled by |z|
_RESCALE_ABOVE = 4.0


@dataclass(frozen=True)
class Lognormal:
    """Shadowing gain 10**(X/10) with X ~ N(mu_db, sigma_db**2)."""

    mu_db: float = 0.0
    sigma_db: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mu_db) and math.isfinite(self.sigma_db)):
            raise ValueError("lognormal parameters must be finite")
        if self.sigma_db < 0:
            raise ValueError(f"sigma_db must be >= 0, got {self.sigma_db}")

    def quantile(self, q: float) -> float:
        """Linear-scale q-quantile of the gain."""
        return 10.0 ** ((self.mu_db + self.sigma_db * special.ndtri(q)) / 10.0)

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        # inverse-CDF transform keeps draws reproducible from the uniform stream
        return 10.0 ** ((self.mu_db + self.sigma_db * special.ndtri(u)) / 10.0)


@dataclass(frozen=True)
class Deterministic:
    """Constant shadowing gain (1.0 means no shadowing)."""

    gain: float = 1.0

    def __post_init__(self):
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise ValueError(f"gain must be finite and > 0, got {self.gain}")

    def quantile(self, q: float) -> float:
        return self.gain

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), self.gain)


ShadowingModel = Union[Lognormal, Deterministic]

NO_SHADOWING = Deterministic(1.0)


def _check_alpha(alpha: float) -> None:
    if not alpha > 2:
        raise ValueError(f"path-loss exponent must exceed 2, got {alpha}")


def fractional_moment(s: ShadowingModel, alpha: float) -> float:
    """E[X**(2/alpha)] for the shadowing gain X."""
    _check_alpha(alpha)
    if isinstance(s, Deterministic):
        return s.gain ** (2.0 / alpha)
    if isinstance(s, Lognormal):
        return math.exp(
            LN10_OVER_5 * s.mu_db / alpha + 0.5 * (LN10_OVER_5 * s.sigma_db / alpha) ** 2
        )
    raise TypeError(f"unknown shadowing model {s!r}")


def _quad(f, lo: float, hi: float, points=None) -> float:
    if hi <= lo:
        return 0.0
    if points is not None:
        points = [p for p in points if lo < p < hi] or None
    val, _ = integrate.quad(
        f, lo, hi, epsabs=0.0, epsrel=_QUAD_RTOL, limit=_QUAD_LIMIT, points=points
    )
    return val


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric 2F1(a, b; c; z) for c > b > 0 and z <= 0.

    Evaluated from the Euler integral

        B(b, c-b)**-1 * int_0^1 t**(b-1) (1-t)**(c-b-1) (1-t z)**(-a) dt.

    The unit interval is split at 1/2. On [1/2, 1] the substitution
    1-t = v**(1/(c-b)) removes the (1-t)**(c-b-1) endpoint factor. On [0, 1/2]
    the variable is rescaled to tau = t |z| when |z| is large, so the knee of
    (1 + tau)**-a sits at tau ~ 1; tau**(b-1) is removed by tau = u**(1/b) on
    [0, 1] and the long tail tau > 1 is integrated in log(tau).
    """
    if not b > 0:
        raise ValueError(f"2F1 integral form needs b > 0, got b={b}")
    if not c > b:
        raise ValueError(f"2F1 integral form needs c > b, got b={b}, c={c}")
    if not z <= 0:
        raise ValueError(f"2F1 is only supported for z <= 0, got z={z}")
    if z == 0:
        return 1.0
    d = c - b
    x = -z
    inv_b = 1.0 / b
    inv_d = 1.0 / d

    def right(v):
        s = v**inv_d  # s = 1 - t
        return (1.0 - s) ** (b - 1.0) * (1.0 + (1.0 - s) * x) ** (-a)

    right_part = inv_d * _quad(right, 0.0, 0.5**d)

    if x <= _RESCALE_ABOVE:
        def left(u):
            t = u**inv_b
            return (1.0 - t) ** (d - 1.0) * (1.0 + t * x) ** (-a)

        left_part = inv_b * _quad(left, 0.0, 0.5**b)
    else:
        def near(u):
            tau = u**inv_b
            return (1.0 - tau / x) ** (d - 1.0) * (1.0 + tau) ** (-a)

        s_hi = math.log(0.5 * x)
        # integrand of the log-tail peaks at an endpoint; factor its scale out
        scale = max(0.0, (b - a) * s_hi)

        def tail(s):
            softplus = s + math.log1p(math.exp(-s))
            return math.exp(b * s - a * softplus - scale) * (1.0 - math.exp(s) / x) ** (d - 1.0)

        log_x = math.log(x)
        near_part = inv_b * _quad(near, 0.0, 1.0)
        tail_part = _quad(tail, 0.0, s_hi)
        left_part = math.exp(-b * log_x) * near_part + math.exp(scale - b * log_x) * tail_part
    return (left_part + right_part) / special.beta(b, d)


def interference_F(T: float, alpha: float, z: float) -> float:
    """Interference functional F(T, alpha, z) at SIR threshold T and bias ratio z.

    F = 2 T z**(2/alpha - 1) / (alpha - 2) * 2F1(1, 1 - 2/alpha; 2 - 2/alpha; -T/z)
    """
    _check_alpha(alpha)
    if T < 0:
        raise ValueError(f"threshold must be >= 0, got {T}")
    if not z > 0:
        raise ValueError(f"bias ratio must be > 0, got {z}")
    if T == 0:
        return 0.0
    if math.isinf(T):
        return math.inf
    delta = 2.0 / alpha
    lead = 2.0 * T * z ** (delta - 1.0) / (alpha - 2.0)
    return lead * gauss_2f1(1.0, 1.0 - delta, 2.0 - delta, -T / z)
