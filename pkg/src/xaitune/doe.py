"""Mixed hyperparameter search space and Latin hypercube initial designs.

Every dimension lives in a numeric *raw* coordinate that the surrogate sees.
:func:`realize` turns a raw vector into concrete hyperparameters: integer
exponents are rounded and raised to a power of two, categorical levels are
rounded to the nearest level index, continuous values pass through.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

KINDS = ("continuous", "integer-exponent", "categorical")


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero (``2.5 -> 3``)."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class Dim:
    name: str
    kind: str
    lower: float = 0.0
    upper: float = 1.0
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if len(self.levels) < 2:
                raise ConfigurationError(f"dimension {self.name!r} needs at least 2 levels")
            object.__setattr__(self, "levels", tuple(self.levels))
            object.__setattr__(self, "lower", 0.0)
            object.__setattr__(self, "upper", float(len(self.levels) - 1))
        elif not self.lower < self.upper:
            raise ConfigurationError(
                f"dimension {self.name!r}: lower {self.lower} must be < upper {self.upper}"
            )

    @property
    def transform(self) -> str:
        return {"continuous": "identity", "integer-exponent": "pow2",
                "categorical": "level-lookup"}[self.kind]

    def realize(self, value: float) -> Any:
        if self.kind == "continuous":
            return float(value)
        k = round_half_away(value)
        if self.kind == "integer-exponent":
            return 2 ** k
        return self.levels[k]

    def to_raw(self, concrete: Any) -> float:
        """Inverse of :meth:`realize` (exact for realizable values)."""
        if self.kind == "continuous":
            return float(concrete)
        if self.kind == "integer-exponent":
            k = int(concrete).bit_length() - 1
            if k < 0 or 2 ** k != int(concrete):
                raise ConfigurationError(f"{self.name}={concrete!r} is not a power of two")
            return float(k)
        try:
            return float(self.levels.index(concrete))
        except ValueError:
            raise ConfigurationError(f"{self.name}: unknown level {concrete!r}") from None


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dim, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate dimension names in search space")
        if not names:
            raise ConfigurationError("search space has no dimensions")

    def __len__(self):
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @property
    def lower(self) -> np.ndarray:
        return np.array([d.lower for d in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([d.upper for d in self.dims])

    @property
    def bounds(self) -> np.ndarray:
        """``(d, 2)`` array of closed raw intervals."""
        return np.column_stack([self.lower, self.upper])

    def __getitem__(self, name: str) -> Dim:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def replace(self, **bounds: tuple[float, float]) -> "SearchSpace":
        """Copy with new ``(lower, upper)`` raw bounds for the named dimensions."""
        unknown = set(bounds) - set(self.names)
        if unknown:
            raise ConfigurationError(f"unknown dimensions {sorted(unknown)}")
        dims = []
        for d in self.dims:
            if d.name in bounds:
                lo, hi = bounds[d.name]
                d = Dim(d.name, d.kind, float(lo), float(hi), d.levels)
            dims.append(d)
        return SearchSpace(tuple(dims))


ACTIVATIONS = ("ReLU", "LeakyReLU", "ELU", "Swish")
OPTIMIZERS = ("Adam", "Adamax", "SGD", "NAdam", "RAdam", "Adagrad", "RMSprop")


def default_space() -> SearchSpace:
    """The MLP hyperparameter domain used throughout the experiments."""
    return SearchSpace((
        Dim("l1", "integer-exponent", 2.0, 10.0),
        Dim("epochs", "integer-exponent", 4.0, 11.0),
        Dim("batch_size", "integer-exponent", 4.0, 10.0),
        Dim("dropout_p", "continuous", 0.0, 0.4),
        Dim("lr_multiplier", "continuous", 0.1, 5.0),
        Dim("activation", "categorical", levels=ACTIVATIONS),
        Dim("optimizer", "categorical", levels=OPTIMIZERS),
    ))


@dataclass(frozen=True)
class DesignPoint:
    raw: np.ndarray = field(compare=False)
    concrete: dict

    def __eq__(self, other):
        return (isinstance(other, DesignPoint) and self.concrete == other.concrete
                and np.array_equal(self.raw, other.raw))

    __hash__ = None


def clamp(raw: Sequence[float], space: SearchSpace) -> np.ndarray:
    """Clip ``raw`` into the space bounds, warning when anything moved."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (len(space),):
        raise ConfigurationError(f"raw vector has shape {raw.shape}, expected ({len(space)},)")
    clipped = np.clip(raw, space.lower, space.upper)
    if not np.array_equal(clipped, raw):
        moved = [n for n, a, b in zip(space.names, raw, clipped) if a != b]
        logger.warning("raw design clamped to bounds in %s", ", ".join(moved))
    return clipped


def realize(raw: Sequence[float], space: SearchSpace) -> dict:
    """Map a raw surrogate vector to a concrete hyperparameter assignment."""
    raw = clamp(raw, space)
    return {d.name: d.realize(v) for d, v in zip(space.dims, raw)}


def to_raw(concrete: dict, space: SearchSpace) -> np.ndarray:
    return np.array([d.to_raw(concrete[d.name]) for d in space.dims])


def design_point(raw: Sequence[float], space: SearchSpace) -> DesignPoint:
    raw = clamp(raw, space)
    return DesignPoint(raw, realize(raw, space))


def latin_hypercube(n: int, space: SearchSpace, seed: int) -> list[DesignPoint]:
    """Latin hypercube sample of ``n`` raw points.

    Each dimension's range is cut into ``n`` equal bins; every bin receives
    exactly one uniform draw and the bins are permuted independently per
    dimension.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigurationError(f"design size must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    d = len(space)
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    unit = (strata + rng.random((n, d))) / n
    raw = space.lower + unit * (space.upper - space.lower)
    # floating error must not push a point past the closed upper bound
    raw = np.clip(raw, space.lower, space.upper)
    return [DesignPoint(r, realize(r, space)) for r in raw]


def design_table(points: Sequence[DesignPoint], space: SearchSpace) -> tuple[list[str], list[list]]:
    """Header and rows with raw columns followed by realized columns."""
    header = [f"raw_{n}" for n in space.names] + list(space.names)
    rows = [[*map(float, p.raw), *(p.concrete[n] for n in space.names)] for p in points]
    return header, rows
