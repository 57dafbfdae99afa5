"""Closed-form rate analysis of a K-tier network under biased, shadowing-aware
cell selection: selection probabilities, conditional SIR CCDF, tagged-BS load,
rate coverage, percentile rate and single-tier bias optimisation.

Tier indices are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from .model import Network, check
from .numerics import fractional_moment, interference_F

# Tagged-cell area is approximated by a size-biased gamma law with shape 3.5,
# which makes (load - 1) negative binomial with shape 3.5 + 1.
GAMMA_SHAPE = 3.5
MEAN_LOAD_SLOPE = (GAMMA_SHAPE + 1.0) / GAMMA_SHAPE  # 9/7

LOAD_TAIL_TOL = 1e-9
LOAD_N_CAP = 10_000


def _tier_index(n: Network, k: int) -> int:
    if not isinstance(k, (int, np.integer)) or not 0 <= k < n.K:
        raise IndexError(f"tier index {k} out of range for K={n.K}")
    return int(k)


def _log_weights(n: Network) -> np.ndarray:
    """log of lambda_k E[X_k^(2/a)] (B_k P_k)^(2/a) per tier."""
    delta = 2.0 / n.alpha
    db_to_ln = math.log(10.0) / 10.0
    return np.array(
        [
            math.log(t.density)
            + math.log(fractional_moment(t.shadowing, n.alpha))
            + delta * db_to_ln * (t.bias_db + t.power_db)
            for t in n.tiers
        ]
    )


def selection_probabilities(n: Network) -> np.ndarray:
    """Probability that the typical UE is served by each tier."""
    check(n)
    lw = _log_weights(n)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def selection_probability(n: Network, k: int) -> float:
    k = _tier_index(n, k)
    return float(selection_probabilities(n)[k])


class _SirKernel:
    """Conditional SIR CCDF of one serving tier, memoised over thresholds.

    With P_j the selection probabilities and z_j = B_j / B_k,

        P(SIR > T | tier k) = 1 / (1 + sum_j P_j (B_k/B_j)^(2/a) F(T, a, z_j)).
    """

    def __init__(self, n: Network, k: int, probs: Optional[np.ndarray] = None):
        self.alpha = n.alpha
        delta = 2.0 / n.alpha
        probs = selection_probabilities(n) if probs is None else probs
        bk = n.tiers[k].bias_db
        # group tiers sharing a bias ratio so F is evaluated once per ratio
        groups: Dict[float, float] = {}
        for j, t in enumerate(n.tiers):
            ratio_db = t.bias_db - bk
            groups[ratio_db] = groups.get(ratio_db, 0.0) + probs[j] * 10.0 ** (
                -delta * ratio_db / 10.0
            )
        self._terms = [(10.0 ** (r / 10.0), c) for r, c in groups.items()]
        self._cache: Dict[float, float] = {}

    def __call__(self, T: float) -> float:
        hit = self._cache.get(T)
        if hit is not None:
            return hit
        if math.isinf(T):
            val = 0.0
        else:
            s = sum(c * interference_F(T, self.alpha, z) for z, c in self._terms)
            val = 1.0 / (1.0 + s)
        self._cache[T] = val
        return val


def conditional_sir_ccdf(n: Network, k: int, T: float) -> float:
    """P(SIR > T) given that tier ``k`` serves the typical UE."""
    check(n)
    k = _tier_index(n, k)
    if T < 0:
        raise ValueError(f"SIR threshold must be >= 0, got {T}")
    return _SirKernel(n, k)(float(T))


# ---------------------------------------------------------------------------
# load on the tagged BS


@dataclass(frozen=True)
class LoadPmf:
    """P(load = n) for n = 1..len(probabilities); index 0 holds load 1."""

    probabilities: np.ndarray
    truncation_mass: float
    mean_exact: float

    @property
    def n_max(self) -> int:
        return len(self.probabilities)

    @property
    def loads(self) -> np.ndarray:
        return np.arange(1, self.n_max + 1)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probabilities)


def load_ratio(n: Network, k: int) -> float:
    """Mean number of other UEs in a tier-k cell, lambda_u P_k / lambda_k."""
    k = _tier_index(n, k)
    if n.ue_density < 0:
        raise ValueError(f"UE density must be >= 0, got {n.ue_density}")
    return n.ue_density * selection_probability(n, k) / n.tiers[k].density


def load_pmf_from_ratio(c: float, n_max: int) -> LoadPmf:
    """Load PMF for a given mean-other-UEs ratio ``c``, computed in log space."""
    if c < 0:
        raise ValueError(f"load ratio must be >= 0, got {c}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    a = GAMMA_SHAPE
    m = np.arange(n_max, dtype=float)  # load - 1
    log_p = (
        a * math.log(a)
        - special.gammaln(m + 1.0)
        + special.gammaln(m + a + 1.0)
        - special.gammaln(a)
        + special.xlogy(m, c)
        - (m + a + 1.0) * math.log(a + c)
    )
    probs = np.exp(log_p)
    if c == 0:
        tail = 0.0
    else:
        # P(load - 1 >= n_max) for the negative binomial with shape a + 1
        tail = float(special.betainc(n_max, a + 1.0, c / (a + c)))
    return LoadPmf(probs, tail, 1.0 + MEAN_LOAD_SLOPE * c)


def load_pmf(n: Network, k: int, n_max: int) -> LoadPmf:
    """Distribution of the number of UEs sharing the tagged tier-k BS."""
    return load_pmf_from_ratio(load_ratio(n, k), n_max)


def mean_load(n: Network, k: int) -> float:
    return 1.0 + MEAN_LOAD_SLOPE * load_ratio(n, k)


def _truncated_load(c: float) -> LoadPmf:
    """Load PMF cut at the smallest n whose cumulative mass reaches 1 - tol."""
    if c == 0:
        return load_pmf_from_ratio(0.0, 1)
    full = load_pmf_from_ratio(c, LOAD_N_CAP)
    # betainc-based tails avoid cancellation in 1 - cumsum
    tails = special.betainc(np.arange(1, LOAD_N_CAP + 1), GAMMA_SHAPE + 1.0, c / (GAMMA_SHAPE + c))
    hits = np.nonzero(tails <= LOAD_TAIL_TOL)[0]
    N = int(hits[0]) + 1 if hits.size else LOAD_N_CAP
    return LoadPmf(full.probabilities[:N], float(tails[N - 1]), full.mean_exact)


# ---------------------------------------------------------------------------
# rate coverage


@dataclass(frozen=True)
class RateCoverageResult:
    rate_threshold_bps: float
    coverage: float
    per_tier_contribution: Tuple[float, ...]
    truncation_bound: float


def sir_thresholds(rate: float, bandwidth_hz: float, loads: np.ndarray) -> np.ndarray:
    """SIR needed to reach ``rate`` when sharing the BS with ``loads`` UEs."""
    with np.errstate(over="ignore"):
        return np.expm1(loads * (rate / bandwidth_hz) * math.log(2.0))


class _RateModel:
    """Per-network state reused across rate thresholds."""

    def __init__(self, n: Network):
        check(n)
        self.n = n
        self.probs = selection_probabilities(n)
        self.kernels = [_SirKernel(n, k, self.probs) for k in range(n.K)]
        self.loads = [
            _truncated_load(n.ue_density * self.probs[k] / t.density)
            for k, t in enumerate(n.tiers)
        ]

    def coverage(self, rate: float) -> RateCoverageResult:
        if rate < 0:
            raise ValueError(f"rate threshold must be >= 0, got {rate}")
        if rate == 0:
            # every SIR threshold is 0, so each tier contributes its full selection mass
            return RateCoverageResult(0.0, 1.0, tuple(map(float, self.probs)), 0.0)
        W = self.n.bandwidth_hz
        contrib = []
        bound = 0.0
        for k in range(self.n.K):
            pmf = self.loads[k]
            thresholds = sir_thresholds(rate, W, pmf.loads)
            ccdf = np.array([self.kernels[k](float(T)) for T in thresholds])
            contrib.append(float(self.probs[k] * np.dot(ccdf, pmf.probabilities)))
            bound += float(self.probs[k] * pmf.truncation_mass)
        cov = min(1.0, max(0.0, math.fsum(contrib)))
        return RateCoverageResult(float(rate), cov, tuple(contrib), bound)

    def coverage_mean_load(self, rate: float) -> float:
        if rate < 0:
            raise ValueError(f"rate threshold must be >= 0, got {rate}")
        total = 0.0
        for k in range(self.n.K):
            # round the mean up; the small offset keeps exact integers from rounding past
            psi = math.ceil(self.loads[k].mean_exact - 1e-12)
            T = float(sir_thresholds(rate, self.n.bandwidth_hz, np.array([psi]))[0])
            total += self.probs[k] * self.kernels[k](T)
        return min(1.0, max(0.0, total))


def rate_coverage(n: Network, T: float) -> RateCoverageResult:
    """P(rate > T) with load and SIR treated as independent."""
    return _RateModel(n).coverage(float(T))


def rate_coverage_curve(n: Network, rates: Sequence[float]) -> List[RateCoverageResult]:
    model = _RateModel(n)
    return [model.coverage(float(r)) for r in rates]


def rate_coverage_mean_load(n: Network, T: float) -> float:
    """Rate coverage with each tier's load pinned at its mean, rounded up."""
    return _RateModel(n).coverage_mean_load(float(T))


def rate_coverage_mean_load_curve(n: Network, rates: Sequence[float]) -> List[float]:
    model = _RateModel(n)
    return [model.coverage_mean_load(float(r)) for r in rates]


# ---------------------------------------------------------------------------
# percentile rate and bias optimisation

PERCENTILE_TOL = 1e-6


def _invert(cov: Callable[[float], float], target: float, W: float) -> float:
    """Smallest-effort root of cov(T) = target for a decreasing coverage curve."""
    hi = W  # SIR threshold 1 at unit load
    while cov(hi) >= target:
        hi *= 2.0
        if hi > 1e6 * W:
            raise RuntimeError("could not bracket the percentile rate")
    root = optimize.brentq(lambda r: cov(r) - target, 0.0, hi, xtol=1e-14 * hi, rtol=1e-12)
    return root


def percentile_rate(n: Network, p: float, *, mean_load_approx: bool = False) -> float:
    """Rate exceeded by a fraction 1 - p of UEs (p = 0.05 gives the 5th percentile)."""
    if not 0 < p < 1:
        raise ValueError(f"percentile must lie in (0, 1), got {p}")
    model = _RateModel(n)
    if mean_load_approx:
        cov = model.coverage_mean_load
    else:
        cov = lambda r: model.coverage(r).coverage  # noqa: E731
    return _invert(cov, 1.0 - p, n.bandwidth_hz)


@dataclass(frozen=True)
class BiasOptimum:
    bias_db: float
    percentile_rate: float
    at_endpoint: bool
    grid_bias_db: Tuple[float, ...]
    grid_percentile_rate: Tuple[float, ...]


_TIE_RTOL = 1e-9
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def percentile_rate_vs_bias(
    n: Network, k: int, p: float, biases_db: Sequence[float], *, mean_load_approx: bool = False
) -> np.ndarray:
    k = _tier_index(n, k)
    return np.array(
        [
            percentile_rate(n.with_tier(k, bias_db=float(b)), p, mean_load_approx=mean_load_approx)
            for b in biases_db
        ]
    )


def optimal_bias(
    n: Network,
    k: int,
    p: float,
    bias_range_db: Tuple[float, float],
    *,
    step_db: float = 1.0,
    resolution_db: float = 0.05,
    mean_load_approx: bool = False,
) -> BiasOptimum:
    """Bias of tier ``k`` maximising the p-th percentile rate.

    A 1 dB grid locates the best cell, golden-section search refines it. Ties
    go to the smaller bias. ``at_endpoint`` flags a maximiser on the range edge.
    """
    k = _tier_index(n, k)
    lo, hi = map(float, bias_range_db)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"bias range must be finite with lo < hi, got {bias_range_db}")

    def f(b: float) -> float:
        return percentile_rate(n.with_tier(k, bias_db=b), p, mean_load_approx=mean_load_approx)

    grid = list(np.arange(lo, hi, step_db)) + [hi]
    values = [f(b) for b in grid]
    best = 0
    for i, v in enumerate(values):
        if v > values[best] * (1.0 + _TIE_RTOL):
            best = i
    b_best, v_best = grid[best], values[best]

    a, c = max(lo, b_best - step_db), min(hi, b_best + step_db)
    x1, x2 = c - _GOLDEN * (c - a), a + _GOLDEN * (c - a)
    f1, f2 = f(x1), f(x2)
    while c - a > resolution_db:
        if f1 >= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - _GOLDEN * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (c - a)
            f2 = f(x2)
    b_ref, v_ref = (x1, f1) if f1 >= f2 else (x2, f2)
    if v_ref > v_best * (1.0 + _TIE_RTOL):
        b_best, v_best = b_ref, v_ref

    at_endpoint = b_best - lo <= resolution_db or hi - b_best <= resolution_db
    return BiasOptimum(
        float(b_best), float(v_best), bool(at_endpoint), tuple(map(float, grid)), tuple(values)
    )
