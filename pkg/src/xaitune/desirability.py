"""Derringer-Suich desirability functions.

Each function maps a response value onto ``[0, 1]``; several desirabilities
are combined with :func:`overall_desirability` (geometric mean).  Ramps use
closed intervals, so ``f == A`` and ``f == B`` take the interpolating branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

Kind = Literal["maximize", "minimize", "target"]


@dataclass(frozen=True)
class DesirabilitySpec:
    """Parameters of one desirability function.

    ``s`` is the steepness of the maximize/minimize ramps.  For ``target``
    the two ramps use ``s1`` (below ``t0``) and ``s2`` (above ``t0``).
    """

    kind: Kind
    A: float
    B: float
    s: float = 1.0
    t0: float | None = None
    s1: float = 1.0
    s2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("maximize", "minimize", "target"):
            raise ConfigurationError(f"unknown desirability kind {self.kind!r}")
        if not (math.isfinite(self.A) and math.isfinite(self.B)) or self.A >= self.B:
            raise ConfigurationError(f"desirability bounds need A < B, got A={self.A}, B={self.B}")
        for name in ("s", "s1", "s2"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"desirability steepness {name} must be > 0")
        if self.kind == "target":
            if self.t0 is None or not (self.A < self.t0 < self.B):
                raise ConfigurationError(
                    f"target desirability needs A < t0 < B, got t0={self.t0}"
                )

    def __call__(self, f: float) -> float:
        return desirability(f, self)

    @classmethod
    def minimize(cls, A, B, s=1.0):
        return cls("minimize", A, B, s=s)

    @classmethod
    def maximize(cls, A, B, s=1.0):
        return cls("maximize", A, B, s=s)

    @classmethod
    def target(cls, A, t0, B, s1=1.0, s2=1.0):
        return cls("target", A, B, t0=t0, s1=s1, s2=s2)


def _check_kind(spec: DesirabilitySpec, kind: str):
    if spec.kind != kind:
        raise ConfigurationError(f"expected a {kind!r} spec, got {spec.kind!r}")


def _degenerate(f) -> bool:
    if math.isfinite(f):
        return False
    logger.warning("non-finite response %r mapped to desirability 0", f)
    return True


def d_max(f: float, spec: DesirabilitySpec) -> float:
    _check_kind(spec, "maximize")
    if _degenerate(f):
        return 0.0
    if f < spec.A:
        return 0.0
    if f > spec.B:
        return 1.0
    return ((f - spec.A) / (spec.B - spec.A)) ** spec.s


def d_min(f: float, spec: DesirabilitySpec) -> float:
    _check_kind(spec, "minimize")
    if _degenerate(f):
        return 0.0
    if f < spec.A:
        return 1.0
    if f > spec.B:
        return 0.0
    return ((spec.B - f) / (spec.B - spec.A)) ** spec.s


def d_target(f: float, spec: DesirabilitySpec) -> float:
    _check_kind(spec, "target")
    if _degenerate(f):
        return 0.0
    if spec.A <= f <= spec.t0:
        return ((f - spec.A) / (spec.t0 - spec.A)) ** spec.s1
    if spec.t0 < f <= spec.B:
        return ((f - spec.B) / (spec.t0 - spec.B)) ** spec.s2
    return 0.0


_DISPATCH = {"maximize": d_max, "minimize": d_min, "target": d_target}


def desirability(f: float, spec: DesirabilitySpec) -> float:
    """Evaluate ``spec`` at ``f`` whatever its kind."""
    return _DISPATCH[spec.kind](float(f), spec)


def overall_desirability(ds: Iterable[float]) -> float:
    """Geometric mean of individual desirabilities.

    Any zero component makes the result exactly zero.

    Raises
    ------
    ConfigurationError
        If ``ds`` is empty or holds a value outside ``[0, 1]``.
    """
    ds = [float(d) for d in ds]
    if not ds:
        raise ConfigurationError("overall desirability needs at least one component")
    for d in ds:
        if not 0.0 <= d <= 1.0:
            raise ConfigurationError(f"desirability {d!r} outside [0, 1]")
    if min(ds) == 0.0:
        return 0.0
    prod = math.prod(ds)
    if prod > 0.0:
        return prod ** (1.0 / len(ds))
    # product underflowed; fall back to the mean of logs
    return math.exp(math.fsum(math.log(d) for d in ds) / len(ds))
