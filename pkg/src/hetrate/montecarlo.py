"""Monte Carlo simulator for multi-tier PPP deployments.

Two geometries are supported:

* ``physical``: each tier is a PPP of its own density; every (BS, receiver)
  pair has an independent shadowing draw and the UE picks the BS with the
  largest biased long-term power B P X d**-alpha.
* ``equivalent``: each tier is a shadowing-free PPP at the effective density
  lambda E[X**(2/alpha)], and the UE picks the largest B P d**-alpha.

Realization ``i`` draws from its own generator seeded by ``(seed, i)``, and
all reductions are over integer counts, so results do not depend on chunking
or on the number of worker processes.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from .model import Network, check, effective_densities
from .numerics import Deterministic, Lognormal, ShadowingModel

log = logging.getLogger(__name__)

PHYSICAL = "physical"
EQUIVALENT = "equivalent"
MODES = (PHYSICAL, EQUIVALENT)

DEFAULT_MIN_COUNT = 200.0
WARN_MIN_COUNT = 50.0
EDGE_SHELL = 0.9
JOBS_ENV = "HETRATE_JOBS"

_LN10_10 = math.log(10.0) / 10.0
_HALF_ULP = 2.0**-54


@dataclass(frozen=True)
class SimConfig:
    realizations: int = 10_000
    seed: int = 0
    window_radius_m: Optional[float] = None
    generation_margin_quantile: float = 0.999
    mode: str = PHYSICAL
    sir_thresholds_db: Tuple[float, ...] = ()
    rate_thresholds_bps: Tuple[float, ...] = ()
    n_jobs: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "sir_thresholds_db", tuple(map(float, self.sir_thresholds_db)))
        object.__setattr__(self, "rate_thresholds_bps", tuple(map(float, self.rate_thresholds_bps)))
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.window_radius_m is not None and not self.window_radius_m > 0:
            raise ValueError("window_radius_m must be > 0")
        if not 0 < self.generation_margin_quantile < 1:
            raise ValueError("generation_margin_quantile must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class SimEstimate:
    value: float
    std_error: float
    realizations_used: int

    @classmethod
    def proportion(cls, hits: int, n: int) -> "SimEstimate":
        if n == 0:
            return cls(math.nan, math.nan, 0)
        p = hits / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n)


# ---------------------------------------------------------------------------
# random primitives


def substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    # shift the [0, 1) grid by half a step so both inverse CDFs stay finite
    return rng.random(size) + _HALF_ULP


def exponential_fading(rng: np.random.Generator, size) -> np.ndarray:
    return -np.log(_uniform_open(rng, size))


def log_shadowing(s: ShadowingModel, rng: np.random.Generator, size) -> np.ndarray:
    """Natural log of shadowing gains, by inverse CDF from uniforms."""
    if isinstance(s, Deterministic):
        return np.full(size, math.log(s.gain))
    if isinstance(s, Lognormal):
        if s.sigma_db == 0:
            return np.full(size, _LN10_10 * s.mu_db)
        return _LN10_10 * (s.mu_db + s.sigma_db * special.ndtri(_uniform_open(rng, size)))
    raise TypeError(f"unknown shadowing model {s!r}")


def sample_ppp(density: float, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on the disk of given radius centred at the origin, shape (n, 2)."""
    if density < 0 or not radius > 0:
        raise ValueError("density must be >= 0 and radius > 0")
    count = rng.poisson(density * math.pi * radius * radius) if density > 0 else 0
    if count == 0:
        return np.empty((0, 2))
    u = rng.random((count, 2))
    r = radius * np.sqrt(u[:, 0])
    theta = 2.0 * math.pi * u[:, 1]
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


# ---------------------------------------------------------------------------
# geometry of one realization


def default_window_radius(n: Network, min_count: float = DEFAULT_MIN_COUNT) -> float:
    """Radius giving every tier's effective process at least ``min_count`` points."""
    lam = min(effective_densities(n))
    return math.sqrt(min_count / (math.pi * lam))


@dataclass
class _Setup:
    net: Network
    cfg: SimConfig
    radius: float
    gen_radius: List[float]
    densities: List[float]
    log_bp: np.ndarray  # ln(B_k P_k), relative to the largest
    log_p: np.ndarray  # ln(P_k), relative to the largest
    sir_lin: np.ndarray
    need_sir: bool
    need_load: bool


def _setup(net: Network, cfg: SimConfig, need_sir: bool, need_load: bool) -> _Setup:
    check(net)
    radius = cfg.window_radius_m or default_window_radius(net)
    eff = effective_densities(net)
    least = min(eff) * math.pi * radius**2
    if least < WARN_MIN_COUNT:
        log.warning("window holds only %.1f expected points for the sparsest tier", least)
    log_p = np.array([t.power_db for t in net.tiers]) * _LN10_10
    if cfg.mode == PHYSICAL:
        densities = [t.density for t in net.tiers]
        q = cfg.generation_margin_quantile
        gen = [radius * max(1.0, t.shadowing.quantile(q)) ** (1.0 / net.alpha) for t in net.tiers]
    elif need_load:
        # Every UE must see one common geometry, so use the shadowing-free
        # network with physical densities and powers scaled by m**(alpha/2).
        densities = [t.density for t in net.tiers]
        gen = [radius] * net.K
        log_p = log_p + 0.5 * net.alpha * np.log(np.array(eff) / densities)
    else:
        # displaced process seen by the typical UE
        densities = list(eff)
        gen = [radius] * net.K
    log_bp = log_p + np.array([t.bias_db for t in net.tiers]) * _LN10_10
    return _Setup(
        net=net,
        cfg=cfg,
        radius=radius,
        gen_radius=gen,
        densities=densities,
        log_bp=log_bp - log_bp.max(),
        log_p=log_p - log_p.max(),
        sir_lin=10.0 ** (np.array(cfg.sir_thresholds_db) / 10.0),
        need_sir=need_sir,
        need_load=need_load,
    )


@dataclass
class _Deployment:
    points: np.ndarray  # (N, 2) BS positions in the simulated geometry
    tier: np.ndarray  # (N,) tier index
    tier_slices: List[slice]
    log_x: np.ndarray  # shadowing towards the typical UE (zeros in equivalent mode)


def _deploy(s: _Setup, rng: np.random.Generator) -> _Deployment:
    pts, tiers, logs, slices = [], [], [], []
    start = 0
    for k, t in enumerate(s.net.tiers):
        p = sample_ppp(s.densities[k], s.gen_radius[k], rng)
        pts.append(p)
        tiers.append(np.full(len(p), k, dtype=np.int64))
        if s.cfg.mode == PHYSICAL:
            logs.append(log_shadowing(t.shadowing, rng, len(p)))
        else:
            logs.append(np.zeros(len(p)))
        slices.append(slice(start, start + len(p)))
        start += len(p)
    return _Deployment(
        np.concatenate(pts), np.concatenate(tiers), slices, np.concatenate(logs)
    )


def _argmax_tiebreak(metric: np.ndarray, tier: np.ndarray, dist2: np.ndarray) -> int:
    best = metric.max()
    cand = np.flatnonzero(metric == best)
    if len(cand) == 1:
        return int(cand[0])
    order = np.lexsort((dist2[cand], tier[cand]))
    return int(cand[order[0]])


@dataclass
class _Outcome:
    tier: int = -1
    edge: bool = False
    sir: Optional[float] = None
    load: int = 1


def _realize(s: _Setup, rng: np.random.Generator) -> _Outcome:
    dep = _deploy(s, rng)
    out = _Outcome()
    if len(dep.points) == 0:
        return out
    alpha = s.net.alpha
    d2 = np.einsum("ij,ij->i", dep.points, dep.points)
    log_d2 = np.log(d2)
    long_term = dep.log_x - 0.5 * alpha * log_d2  # ln(X d^-alpha)
    metric = s.log_bp[dep.tier] + long_term
    t = _argmax_tiebreak(metric, dep.tier, d2)
    out.tier = int(dep.tier[t])
    # displaced distance of the server, the quantity the window is sized for
    displaced = math.sqrt(d2[t]) * math.exp(-dep.log_x[t] / alpha)
    out.edge = displaced > EDGE_SHELL * s.radius

    if s.need_sir:
        log_rx = s.log_p[dep.tier] + long_term
        rx = np.exp(log_rx - log_rx[t]) * exponential_fading(rng, len(log_rx))
        signal = rx[t]
        rx[t] = 0.0
        interference = rx.sum()
        out.sir = math.inf if interference <= 0 else signal / interference
    if s.need_load:
        out.load = 1 + _count_other_ues(s, dep, t, rng)
    return out


# stage sizes for the lazy per-UE association check in physical mode
_NEAR_STAGES = (1, 24)


def _count_other_ues(s: _Setup, dep: _Deployment, t: int, rng: np.random.Generator) -> int:
    """Number of UEs (other than the typical one) associated with BS ``t``."""
    ues = sample_ppp(s.net.ue_density, s.radius, rng)
    if len(ues) == 0:
        return 0
    alpha = s.net.alpha
    trees = [cKDTree(dep.points[sl]) if sl.stop > sl.start else None for sl in dep.tier_slices]
    if s.cfg.mode == EQUIVALENT:
        return _count_equivalent(s, dep, t, ues, trees)

    tier_t = int(dep.tier[t])
    shadow = [tr.shadowing for tr in s.net.tiers]
    d2_t = np.sum((ues - dep.points[t]) ** 2, axis=1)
    serve = s.log_bp[tier_t] + log_shadowing(shadow[tier_t], rng, len(ues)) - 0.5 * alpha * np.log(d2_t)

    # Each UE sees a fresh shadowing draw towards every BS. Draws are made
    # lazily: nearest BSs first, the full set only for UEs still in contention.
    alive = np.arange(len(ues))
    drawn: List[Tuple[np.ndarray, np.ndarray]] = []  # (UE ids, BS ids already drawn)
    prev = 0
    for k_near in _NEAR_STAGES:
        if len(alive) == 0:
            return 0
        best = np.full(len(alive), -np.inf)
        for j, sl in enumerate(dep.tier_slices):
            n_j = sl.stop - sl.start
            if trees[j] is None:
                continue
            extra = 1 if j == tier_t else 0
            kq = min(k_near + extra, n_j)
            lo = min(prev + extra if prev else 0, kq)
            if kq <= lo:
                continue
            dist, idx = trees[j].query(ues[alive], k=kq)
            dist = dist.reshape(len(alive), kq)[:, lo:]
            idx = idx.reshape(len(alive), kq)[:, lo:] + sl.start
            m = s.log_bp[j] + log_shadowing(shadow[j], rng, dist.shape) - alpha * np.log(dist)
            m[idx == t] = -np.inf
            best = np.maximum(best, m.max(axis=1))
            drawn.append((alive, idx))
        keep = serve[alive] > best
        alive = alive[keep]
        prev = k_near

    count = 0
    for u in alive:
        excluded = {t}
        for ids, idx in drawn:
            excluded.update(idx[np.searchsorted(ids, u)].tolist())
        if not any(
            _far_tier_beats(s, dep, trees[j], j, ues[u], serve[u], excluded, rng)
            for j in range(s.net.K)
        ):
            count += 1
    return count


# standard-normal level beyond which far-away shadowing draws are thinned
_TAIL_Z = 5.0
_TAIL_P = float(special.ndtr(-_TAIL_Z))


def _far_tier_beats(s, dep, tree, j, pos, serve, excluded, rng) -> bool:
    """Whether any not-yet-drawn tier-``j`` BS beats biased power ``serve`` at ``pos``.

    A BS at distance d beats ``serve`` iff its log-shadowing exceeds
    serve - ln(B P) + alpha ln d. BSs inside the radius where that level is
    below mu + _TAIL_Z sigma are drawn one by one; outside it only the rare
    tail exceedances are sampled (binomial count, then truncated-normal value).
    """
    if tree is None:
        return False
    sh = s.net.tiers[j].shadowing
    alpha = s.net.alpha
    if isinstance(sh, Lognormal):
        mu, sig = _LN10_10 * sh.mu_db, _LN10_10 * sh.sigma_db
    else:
        mu, sig = math.log(sh.gain), 0.0
    sl = dep.tier_slices[j]
    r_cut = math.exp((s.log_bp[j] + mu + _TAIL_Z * sig - serve) / alpha)
    inside = [i + sl.start for i in tree.query_ball_point(pos, r_cut)]
    inside = np.array([i for i in inside if i not in excluded], dtype=np.int64)
    if len(inside):
        d2 = np.sum((dep.points[inside] - pos) ** 2, axis=1)
        m = s.log_bp[j] + log_shadowing(sh, rng, len(inside)) - 0.5 * alpha * np.log(d2)
        if m.max() >= serve:
            return True
    if sig == 0.0:
        return False
    n_in_or_seen = len(inside) + sum(1 for i in excluded if sl.start <= i < sl.stop)
    n_out = (sl.stop - sl.start) - n_in_or_seen
    if n_out <= 0:
        return False
    hits = rng.binomial(n_out, _TAIL_P)
    if hits == 0:
        return False
    # which outside BSs exceed the tail level: uniform choice among them
    dist = np.sqrt(np.sum((dep.points[sl] - pos) ** 2, axis=1))
    out = np.flatnonzero(dist >= r_cut) + sl.start
    out = np.array([i for i in out if i not in excluded], dtype=np.int64)
    chosen = rng.choice(out, size=min(hits, len(out)), replace=False)
    z = -special.ndtri(_TAIL_P * _uniform_open(rng, len(chosen)))
    d2 = np.sum((dep.points[chosen] - pos) ** 2, axis=1)
    m = s.log_bp[j] + mu + sig * z - 0.5 * alpha * np.log(d2)
    return bool(m.max() >= serve)


def _count_equivalent(s, dep, t, ues, trees) -> int:
    alpha = s.net.alpha
    best = np.full(len(ues), -np.inf)
    best_idx = np.full(len(ues), -1)
    for j, sl in enumerate(dep.tier_slices):
        if trees[j] is None:
            continue
        dist, idx = trees[j].query(ues, k=1)
        m = s.log_bp[j] - alpha * np.log(dist)
        better = m > best
        best[better] = m[better]
        best_idx[better] = idx[better] + sl.start
    return int(np.count_nonzero(best_idx == t))


# ---------------------------------------------------------------------------
# estimators


@dataclass
class _Tally:
    served: np.ndarray  # (K,)
    edge: int
    sir_hits: np.ndarray  # (K, n_sir)
    load_hist: np.ndarray  # (K, max_load + 1)
    rate_hits: np.ndarray  # (n_rate,)

    def __iadd__(self, other: "_Tally") -> "_Tally":
        self.served += other.served
        self.edge += other.edge
        self.sir_hits += other.sir_hits
        width = max(self.load_hist.shape[1], other.load_hist.shape[1])
        hist = np.zeros((len(self.served), width), dtype=np.int64)
        hist[:, : self.load_hist.shape[1]] += self.load_hist
        hist[:, : other.load_hist.shape[1]] += other.load_hist
        self.load_hist = hist
        self.rate_hits += other.rate_hits
        return self


def _run_chunk(args) -> _Tally:
    s, lo, hi = args
    K = s.net.K
    cfg = s.cfg
    served = np.zeros(K, dtype=np.int64)
    sir_hits = np.zeros((K, len(s.sir_lin)), dtype=np.int64)
    rates = np.array(cfg.rate_thresholds_bps)
    rate_hits = np.zeros(len(rates), dtype=np.int64)
    loads: List[Tuple[int, int]] = []
    edge = 0
    W = s.net.bandwidth_hz
    for i in range(lo, hi):
        o = _realize(s, substream(cfg.seed, i))
        if o.tier < 0:
            continue
        served[o.tier] += 1
        edge += o.edge
        if o.sir is not None and len(s.sir_lin):
            sir_hits[o.tier] += o.sir > s.sir_lin
        if s.need_load:
            loads.append((o.tier, o.load))
        if len(rates) and o.sir is not None:
            rate = W / o.load * math.log2(1.0 + o.sir)
            rate_hits += rate > rates
    top = max((l for _, l in loads), default=1)
    hist = np.zeros((K, top + 1), dtype=np.int64)
    for k, l in loads:
        hist[k, l] += 1
    return _Tally(served, edge, sir_hits, hist, rate_hits)


def _n_jobs(cfg: SimConfig) -> int:
    if cfg.n_jobs is not None:
        return max(1, int(cfg.n_jobs))
    return max(1, int(os.environ.get(JOBS_ENV, "1")))


def _simulate(net: Network, cfg: SimConfig, need_sir: bool, need_load: bool) -> Tuple[_Setup, _Tally]:
    s = _setup(net, cfg, need_sir, need_load)
    jobs = _n_jobs(cfg)
    n = cfg.realizations
    n_chunks = jobs * 4 if jobs > 1 else 1
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    chunks = [(s, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if jobs == 1:
        parts = list(map(_run_chunk, chunks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_run_chunk, chunks))
    total = parts[0]
    for p in parts[1:]:
        total += p
    if total.edge:
        log.warning(
            "%d of %d realizations had the serving BS in the outer %.0f%% of the window",
            total.edge, n, 100 * (1 - EDGE_SHELL),
        )
    return s, total


def run_selection(net: Network, cfg: SimConfig) -> List[SimEstimate]:
    """Empirical probability that each tier serves the typical UE."""
    _, tally = _simulate(net, cfg, need_sir=False, need_load=False)
    n = int(tally.served.sum())
    return [SimEstimate.proportion(int(c), n) for c in tally.served]


def run_sir(net: Network, cfg: SimConfig) -> List[List[SimEstimate]]:
    """P(SIR > T | tier k serves) for each tier k and each threshold in ``cfg``."""
    _, tally = _simulate(net, cfg, need_sir=True, need_load=False)
    return [
        [SimEstimate.proportion(int(h), int(tally.served[k])) for h in tally.sir_hits[k]]
        for k in range(net.K)
    ]


@dataclass(frozen=True)
class EmpiricalLoad:
    """Histogram of the tagged-BS load for one serving tier; index n holds load n."""

    counts: np.ndarray
    realizations_used: int

    def pmf(self) -> np.ndarray:
        return self.counts / max(self.realizations_used, 1)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf())


def run_load(net: Network, cfg: SimConfig) -> List[EmpiricalLoad]:
    """Load on the tagged BS, split by the tier of that BS."""
    _, tally = _simulate(net, cfg, need_sir=False, need_load=True)
    return [EmpiricalLoad(tally.load_hist[k].copy(), int(tally.served[k])) for k in range(net.K)]


def run_rate(net: Network, cfg: SimConfig) -> List[SimEstimate]:
    """P(rate > T) with load and SIR taken jointly from the same realization."""
    if not cfg.rate_thresholds_bps:
        raise ValueError("rate estimator needs rate_thresholds_bps")
    _, tally = _simulate(net, cfg, need_sir=True, need_load=True)
    n = int(tally.served.sum())
    return [SimEstimate.proportion(int(h), n) for h in tally.rate_hits]
