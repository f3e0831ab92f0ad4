"""Run configuration: a YAML file with one section per concern.

Example::

    data:
      path: fixture            # or a CSV path; relative paths also tried in $XAITUNE_DATA_DIR
      split_seed: 0
    space:
      l1: [2, 10]              # raw bounds (exponents for power-of-two dims)
      activation: [ReLU, Swish]
    objective:
      mode: desirability       # loss | weighted | desirability
      weights: [1.0, 1.0]
      loss_desirability: {A: 0.1, B: 0.7, s: 1}
      consistency_desirability: {A: -1.0, B: -0.5, s: 1}
    smbo:
      init: 20
      budget: 60
      repeats: 2
      seed: 0
    attribution:
      methods: [integrated_gradients, deeplift, kernel_shap]
      ig_steps: 64
      shap_samples: 2048
      baseline: zero

Every key is validated when the file is parsed; unknown keys are errors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .desirability import DesirabilitySpec
from .doe import Dim, SearchSpace, default_space
from .errors import ConfigurationError, XaiTuneError
from .surrogate import DESettings
from .tuner import MODES, AttributionSettings, ObjectiveSpec

DEFAULTS = {
    "data": {"path": "fixture", "target": None, "split_seed": 0,
             "fractions": [0.6, 0.2, 0.2]},
    "space": {},
    "objective": {"mode": "desirability", "weights": [1.0, 1.0], "metric": "cons_spearman",
                  "absolute_ranks": False,
                  "loss_desirability": {"A": 0.1, "B": 0.7, "s": 1.0},
                  "consistency_desirability": {"A": -1.0, "B": -0.5, "s": 1.0}},
    "smbo": {"init": 20, "budget": 60, "repeats": 2, "seed": 0, "infill": "mean",
             "budget_includes_init": False,
             "de": {"population": None, "generations": 50, "F": 0.8, "CR": 0.9}},
    "attribution": {"methods": ["integrated_gradients", "deeplift", "kernel_shap"],
                    "ig_steps": 64, "shap_samples": 2048, "baseline": "zero"},
}


def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown configuration key {where}{key}")
        if isinstance(base[key], dict) and key != "space":
            if not isinstance(value, dict):
                raise ConfigurationError(f"{where}{key} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _number(v, name, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{name} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigurationError(f"{name} must be an integer, got {v!r}")
    return int(v) if integer else float(v)


def _space(block: dict) -> SearchSpace:
    if not isinstance(block, dict):
        raise ConfigurationError("space must be a mapping")
    base = default_space()
    dims = []
    for d in base.dims:
        if d.name not in block:
            dims.append(d)
            continue
        v = block[d.name]
        if d.kind == "categorical":
            if not isinstance(v, list) or any(lv not in d.levels for lv in v):
                raise ConfigurationError(
                    f"space.{d.name} must be a list of levels from {list(d.levels)}")
            dims.append(Dim(d.name, d.kind, levels=tuple(v)))
        else:
            if not isinstance(v, list) or len(v) != 2:
                raise ConfigurationError(f"space.{d.name} must be [lower, upper]")
            lo, hi = (_number(x, f"space.{d.name}") for x in v)
            if d.kind == "integer-exponent" and (int(lo) != lo or int(hi) != hi):
                raise ConfigurationError(f"space.{d.name} exponents must be integers")
            if d.name == "l1" and lo < 2:
                raise ConfigurationError("space.l1 lower exponent must be >= 2 (l1 >= 4)")
            if d.name == "dropout_p" and not (0 <= lo and hi < 1):
                raise ConfigurationError("space.dropout_p must lie within [0, 1)")
            if d.name == "lr_multiplier" and lo <= 0:
                raise ConfigurationError("space.lr_multiplier must be positive")
            dims.append(Dim(d.name, d.kind, lo, hi))
    unknown = set(block) - set(base.names)
    if unknown:
        raise ConfigurationError(f"unknown search-space dimensions {sorted(unknown)}")
    return SearchSpace(tuple(dims))


def _desirability(block, name) -> DesirabilitySpec:
    if not isinstance(block, dict) or set(block) - {"A", "B", "s"}:
        raise ConfigurationError(f"objective.{name} takes keys A, B, s")
    return DesirabilitySpec.minimize(_number(block["A"], f"{name}.A"),
                                     _number(block["B"], f"{name}.B"),
                                     _number(block.get("s", 1.0), f"{name}.s"))


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        # validate everything eagerly
        self.space, self.objective, self.attribution, self.de_settings
        s = self.raw["smbo"]
        for k in ("init", "budget", "repeats", "seed"):
            _number(s[k], f"smbo.{k}", integer=True)
        if s["init"] < 1 or s["budget"] < 0 or s["repeats"] < 1:
            raise ConfigurationError("smbo needs init >= 1, budget >= 0, repeats >= 1")
        if s["infill"] not in ("mean", "ei"):
            raise ConfigurationError("smbo.infill must be 'mean' or 'ei'")
        if not isinstance(s["budget_includes_init"], bool):
            raise ConfigurationError("smbo.budget_includes_init must be true or false")
        d = self.raw["data"]
        _number(d["split_seed"], "data.split_seed", integer=True)
        if not isinstance(d["fractions"], list) or len(d["fractions"]) != 3:
            raise ConfigurationError("data.fractions must be a list of three numbers")
        [_number(f, "data.fractions") for f in d["fractions"]]

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        if d is None:
            d = {}
        if not isinstance(d, dict):
            raise ConfigurationError("configuration must be a mapping of sections")
        return cls(_merge(DEFAULTS, d, ""))

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
        try:
            return cls.from_dict(yaml.safe_load(text))
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None

    def override(self, section: str, **values) -> "RunConfig":
        """Copy with non-``None`` values replaced (command-line flags)."""
        patch = {k: v for k, v in values.items() if v is not None}
        if not patch:
            return self
        raw = copy.deepcopy(self.raw)
        raw[section] = _merge(raw[section], patch, f"{section}.")
        return RunConfig(raw)

    @property
    def space(self) -> SearchSpace:
        return _space(self.raw["space"])

    @property
    def objective(self) -> ObjectiveSpec:
        o = self.raw["objective"]
        if o["mode"] not in MODES:
            raise ConfigurationError(f"objective.mode must be one of {MODES}")
        if not isinstance(o["weights"], list) or len(o["weights"]) != 2:
            raise ConfigurationError("objective.weights must be [w_loss, w_cons]")
        return ObjectiveSpec(o["mode"], tuple(_number(w, "objective.weights") for w in o["weights"]),
                             _desirability(o["loss_desirability"], "loss_desirability"),
                             _desirability(o["consistency_desirability"], "consistency_desirability"),
                             o["metric"], bool(o["absolute_ranks"]))

    @property
    def attribution(self) -> AttributionSettings:
        a = self.raw["attribution"]
        baseline = a["baseline"]
        if baseline in ("zero", None):
            baseline = None
        elif isinstance(baseline, list):
            baseline = [_number(v, "attribution.baseline") for v in baseline]
        else:
            raise ConfigurationError("attribution.baseline must be 'zero' or a list of numbers")
        if not isinstance(a["methods"], list):
            raise ConfigurationError("attribution.methods must be a list")
        return AttributionSettings(tuple(a["methods"]),
                                   _number(a["ig_steps"], "attribution.ig_steps", integer=True),
                                   _number(a["shap_samples"], "attribution.shap_samples", integer=True),
                                   baseline)

    @property
    def de_settings(self) -> DESettings:
        de = self.raw["smbo"]["de"]
        pop = de["population"]
        return DESettings(None if pop is None else _number(pop, "smbo.de.population", integer=True),
                          _number(de["generations"], "smbo.de.generations", integer=True),
                          _number(de["F"], "smbo.de.F"), _number(de["CR"], "smbo.de.CR"))

    @property
    def smbo(self) -> dict:
        return self.raw["smbo"]

    @property
    def data(self) -> dict:
        return self.raw["data"]

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True)


__all__ = ["RunConfig", "DEFAULTS", "XaiTuneError"]
