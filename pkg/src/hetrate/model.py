"""Tier and network value types, validation, and the shadowing transforms.

Powers and biases are stored in dB; only their ratios ever enter a formula,
so the absolute power reference is arbitrary. Densities are per square metre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Tuple

from .numerics import NO_SHADOWING, Deterministic, Lognormal, ShadowingModel, fractional_moment


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class Tier:
    power_db: float
    density: float
    bias_db: float = 0.0
    shadowing: ShadowingModel = NO_SHADOWING

    @property
    def power(self) -> float:
        return db_to_linear(self.power_db)

    @property
    def bias(self) -> float:
        return db_to_linear(self.bias_db)


@dataclass(frozen=True)
class Network:
    alpha: float
    bandwidth_hz: float
    ue_density: float
    tiers: Tuple[Tier, ...] = field(default_factory=tuple)

    def __post_init__(self):
        # accept any sequence of tiers but store a tuple so the value stays hashable
        object.__setattr__(self, "tiers", tuple(self.tiers))

    @property
    def K(self) -> int:
        return len(self.tiers)

    def with_tier(self, k: int, **changes) -> "Network":
        """Copy with tier ``k`` (0-based) updated."""
        tiers = list(self.tiers)
        tiers[k] = replace(tiers[k], **changes)
        return replace(self, tiers=tuple(tiers))


class ValidationError(ValueError):
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(n: Network) -> List[str]:
    """Return every violated invariant as ``"<field path>: <message>"``.

    An empty list means the network is valid.
    """
    problems = []
    if not _finite(n.alpha) or not n.alpha > 2:
        problems.append(f"alpha: alpha must exceed 2 (got {n.alpha})")
    if not _finite(n.bandwidth_hz) or not n.bandwidth_hz > 0:
        problems.append(f"bandwidth_hz: must be > 0 (got {n.bandwidth_hz})")
    if not _finite(n.ue_density) or not n.ue_density >= 0:
        problems.append(f"ue_density: must be >= 0 (got {n.ue_density})")
    if len(n.tiers) < 1:
        problems.append("tiers: K >= 1 required")
    for k, t in enumerate(n.tiers):
        path = f"tiers[{k}]"
        if not _finite(t.power_db):
            problems.append(f"{path}.power_db: must be finite (got {t.power_db})")
        if not _finite(t.density) or not t.density > 0:
            problems.append(f"{path}.density: must be > 0 (got {t.density})")
        if not _finite(t.bias_db):
            problems.append(f"{path}.bias_db: must be finite (got {t.bias_db})")
        s = t.shadowing
        if isinstance(s, Lognormal):
            if not (_finite(s.sigma_db) and s.sigma_db >= 0):
                problems.append(f"{path}.shadowing.sigma_db: must be >= 0 (got {s.sigma_db})")
            if not _finite(s.mu_db):
                problems.append(f"{path}.shadowing.mu_db: must be finite (got {s.mu_db})")
        elif isinstance(s, Deterministic):
            if not (_finite(s.gain) and s.gain > 0):
                problems.append(f"{path}.shadowing.gain: must be > 0 (got {s.gain})")
        else:
            problems.append(f"{path}.shadowing: unknown model {s!r}")
    return problems


def check(n: Network) -> Network:
    """Raise ValidationError listing all violations, else return ``n``."""
    problems = validate(n)
    if problems:
        raise ValidationError(problems)
    return n


def effective_density(t: Tier, alpha: float) -> float:
    """Density of the tier after absorbing shadowing into BS displacement."""
    return t.density * fractional_moment(t.shadowing, alpha)


def effective_densities(n: Network) -> List[float]:
    return [effective_density(t, n.alpha) for t in n.tiers]


def equivalent_network(n: Network) -> Network:
    """Shadowing-free network with the same analytic behaviour.

    Each tier loses its shadowing and has its power scaled by
    E[X**(2/alpha)]**(alpha/2).
    """
    tiers = []
    for t in n.tiers:
        m = fractional_moment(t.shadowing, n.alpha)
        tiers.append(
            replace(
                t,
                power_db=t.power_db + 5.0 * n.alpha * math.log10(m),
                shadowing=NO_SHADOWING,
            )
        )
    return replace(n, tiers=tuple(tiers))
