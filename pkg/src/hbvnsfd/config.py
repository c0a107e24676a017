"""Scenario documents (JSON) tying parameters, initial states and schemes together."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .model import ModelParams, State
from .solvers import SchemeConfig

__all__ = ["ConfigError", "Scenario", "load_scenario", "parse_scenario", "bundled_scenarios", "OUTPUTS"]

OUTPUTS = ("trajectory", "equilibria", "comparison", "convergence", "hypotheses", "phase_portrait")

_TOP_KEYS = {
    "name", "comment", "params", "initial", "schemes", "outputs",
    "convergence", "hypotheses", "portrait", "audit",
}
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class ConfigError(ValueError):
    """Malformed scenario; the message names the offending field or line."""


@dataclass
class Scenario:
    name: str
    params: ModelParams
    initial: list
    schemes: list
    outputs: list = field(default_factory=lambda: ["trajectory"])
    comment: str = ""
    convergence: dict = field(default_factory=dict)
    hypotheses: dict = field(default_factory=dict)
    portrait: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "name": self.name,
            "params": self.params.to_dict(),
            "initial": [list(x) for x in self.initial],
            "schemes": [c.to_dict() for c in self.schemes],
            "outputs": list(self.outputs),
        }
        for key in ("comment", "convergence", "hypotheses", "portrait", "audit"):
            if getattr(self, key):
                out[key] = getattr(self, key)
        return out


def _state(value, where):
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(f"{where}: expected [S, I, R]")
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise ConfigError(f"{where}: components must be finite non-negative numbers")
    return State(*map(float, value))


def _block(doc, key, allowed):
    block = doc.get(key, {})
    if not isinstance(block, dict):
        raise ConfigError(f"{key}: expected an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{key}: unknown keys {', '.join(unknown)}")
    return block


def parse_scenario(doc):
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    for key in ("name", "params", "initial", "schemes"):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")
    name = doc["name"]
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ConfigError("name: must be a non-empty filesystem-safe identifier")
    try:
        params = ModelParams.from_dict(doc["params"])
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None

    init = doc["initial"]
    if isinstance(init, list) and init and all(isinstance(v, list) for v in init):
        initial = [_state(v, f"initial[{i}]") for i, v in enumerate(init)]
    else:
        initial = [_state(init, "initial")]

    raw = doc["schemes"]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("schemes: at least one scheme config is required")
    schemes = []
    for i, block in enumerate(raw):
        try:
            schemes.append(SchemeConfig.from_dict(block))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"schemes[{i}]: {exc}") from None

    outputs = doc.get("outputs", ["trajectory"])
    if not isinstance(outputs, list) or any(o not in OUTPUTS for o in outputs):
        raise ConfigError(f"outputs: entries must be among {', '.join(OUTPUTS)}")

    comment = doc.get("comment", "")
    if not isinstance(comment, str):
        raise ConfigError("comment: expected a string")
    return Scenario(
        name=name,
        params=params,
        initial=initial,
        schemes=schemes,
        outputs=list(outputs),
        comment=comment,
        convergence=_block(doc, "convergence", {"T", "dt_list", "scheme", "dt_ref", "x0"}),
        hypotheses=_block(doc, "hypotheses", {"S_max", "I_max", "grid_n"}),
        portrait=_block(doc, "portrait", {"box", "points", "dt", "steps"}),
        audit=_block(doc, "audit", {"quoted", "note"}),
    )


def load_scenario(path):
    """Read and validate a scenario file; JSON syntax errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_scenario(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def bundled_scenarios():
    """Name -> path of the scenario files shipped with the package."""
    root = resources.files("hbvnsfd") / "scenarios"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}
