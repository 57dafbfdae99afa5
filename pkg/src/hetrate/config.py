"""JSON network configs.

Schema::

    {"alpha": 4.0, "bandwidth_hz": 1e7, "ue_density": 1e-5,
     "tiers": [{"power_db": 43, "density": 1e-6, "bias_db": 0,
                "shadowing": {"type": "lognormal", "mu_db": 0, "sigma_db": 4}},
               ...]}

Powers are dB relative to an arbitrary reference; densities are per square
metre. ``{"type": "none"}`` means no shadowing.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Union

from .model import Network, Tier, ValidationError, validate
from .numerics import Deterministic, Lognormal

BUNDLED = ("fig1a", "fig1b", "fig2a", "fig2b", "fig2b_s48", "single_tier")


class ConfigError(ValueError):
    pass


def _shadowing_from(d: Any, path: str, problems: List[str]):
    if d is None:
        return Deterministic(1.0)
    if not isinstance(d, dict) or "type" not in d:
        problems.append(f"{path}: expected an object with a 'type' field")
        return None
    kind = d["type"]
    try:
        if kind == "none":
            return Deterministic(1.0)
        if kind == "deterministic":
            return Deterministic(float(d["gain"]))
        if kind == "lognormal":
            return Lognormal(float(d.get("mu_db", 0.0)), float(d["sigma_db"]))
    except KeyError as e:
        problems.append(f"{path}.{e.args[0]}: missing")
        return None
    except (TypeError, ValueError) as e:
        problems.append(f"{path}: {e}")
        return None
    problems.append(f"{path}.type: unknown shadowing type {kind!r}")
    return None


def network_from_dict(d: Dict[str, Any]) -> Network:
    """Build and validate a network; raises ValidationError listing every problem."""
    problems: List[str] = []
    if not isinstance(d, dict):
        raise ValidationError(["<root>: expected a JSON object"])

    def number(obj, key, path, default=None):
        if key not in obj:
            if default is not None:
                return default
            problems.append(f"{path}{key}: missing")
            return float("nan")
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            problems.append(f"{path}{key}: expected a number, got {v!r}")
            return float("nan")
        return float(v)

    alpha = number(d, "alpha", "")
    bandwidth = number(d, "bandwidth_hz", "")
    ue = number(d, "ue_density", "")
    tiers = []
    raw_tiers = d.get("tiers")
    if raw_tiers is None:
        problems.append("tiers: missing")
        raw_tiers = []
    elif not isinstance(raw_tiers, list):
        problems.append("tiers: expected a list")
        raw_tiers = []
    for k, t in enumerate(raw_tiers):
        path = f"tiers[{k}]."
        if not isinstance(t, dict):
            problems.append(f"tiers[{k}]: expected an object")
            continue
        sh = _shadowing_from(t.get("shadowing"), f"tiers[{k}].shadowing", problems)
        tiers.append(
            Tier(
                power_db=number(t, "power_db", path),
                density=number(t, "density", path),
                bias_db=number(t, "bias_db", path, default=0.0),
                shadowing=sh if sh is not None else Deterministic(1.0),
            )
        )
    net = Network(alpha, bandwidth, ue, tuple(tiers))
    # report structural problems first, then the model invariants not already covered
    fields = {p.split(":")[0] for p in problems}
    problems += [p for p in validate(net) if p.split(":")[0] not in fields]
    if problems:
        raise ValidationError(problems)
    return net


def network_to_dict(n: Network) -> Dict[str, Any]:
    tiers = []
    for t in n.tiers:
        s = t.shadowing
        if isinstance(s, Lognormal):
            sh = {"type": "lognormal", "mu_db": s.mu_db, "sigma_db": s.sigma_db}
        elif s.gain == 1.0:
            sh = {"type": "none"}
        else:
            sh = {"type": "deterministic", "gain": s.gain}
        tiers.append(
            {"power_db": t.power_db, "density": t.density, "bias_db": t.bias_db, "shadowing": sh}
        )
    return {
        "alpha": n.alpha,
        "bandwidth_hz": n.bandwidth_hz,
        "ue_density": n.ue_density,
        "tiers": tiers,
    }


def resolve(path: Union[str, Path]) -> Path:
    """A file path, or the name of a bundled config such as ``fig2a``."""
    p = Path(path)
    if p.exists() or str(path) not in BUNDLED:
        return p
    return Path(str(resources.files("hetrate") / "configs" / f"{path}.json"))


def load_config(path: Union[str, Path]) -> Network:
    p = resolve(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{p}: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return network_from_dict(data)


def dump_config(n: Network) -> str:
    return json.dumps(network_to_dict(n), indent=2) + "\n"
