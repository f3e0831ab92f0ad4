"""Surrogate-model-based tuning of the MLP for loss and attribution consistency.

The loop follows the usual sequential model-based scheme: evaluate a Latin
hypercube design, then repeatedly fit a Kriging surrogate to the scalarized
objectives, minimize it to propose the next design and evaluate that design
on the real problem, until the evaluation budget is spent.

Three objective formulations are supported:

``loss``
    validation MSE only;
``weighted``
    ``w_loss * mse + w_cons * consistency_loss``;
``desirability``
    ``1 - D`` where ``D`` is the geometric mean of a desirability for the MSE
    and one for the consistency loss.

For Spearman-based consistency (higher is better) the consistency loss is the
negated metric; the max-diff and variance metrics are already losses.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import consistency, nn, xai
from .data import Splits
from .desirability import DesirabilitySpec, desirability, overall_desirability
from .doe import DesignPoint, SearchSpace, design_point, latin_hypercube
from .errors import ConfigurationError, NumericalError, SurrogateFitError
from .surrogate import DESettings, fit, propose_next

logger = logging.getLogger(__name__)

MODES = ("loss", "weighted", "desirability")


@dataclass(frozen=True)
class ObjectiveSpec:
    mode: str = "desirability"
    weights: tuple = (1.0, 1.0)
    loss_desirability: DesirabilitySpec = DesirabilitySpec.minimize(0.1, 0.7)
    consistency_desirability: DesirabilitySpec = DesirabilitySpec.minimize(-1.0, -0.5)
    metric: str = "cons_spearman"
    absolute_ranks: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown objective mode {self.mode!r}; choose from {MODES}")
        w = tuple(float(v) for v in self.weights)
        if len(w) != 2 or min(w) < 0 or max(w) == 0:
            raise ConfigurationError(f"weights must be two non-negatives, not both 0: {w}")
        object.__setattr__(self, "weights", w)
        if self.metric not in consistency.METRICS:
            raise ConfigurationError(f"unknown consistency metric {self.metric!r}")

    @property
    def needs_attributions(self) -> bool:
        return self.mode != "loss"

    def consistency_loss(self, cons: float) -> float:
        return -cons if self.metric == "cons_spearman" else cons

    def scalarize(self, mse: float, cons: float | None) -> float:
        if self.mode == "loss":
            return float(mse)
        if self.mode == "weighted":
            return scalarize_weighted(mse, self.consistency_loss(cons), self.weights)
        return scalarize_desirability(mse, self.consistency_loss(cons), self)

    def desirability(self, mse: float, cons: float) -> tuple[float, float, float]:
        """``(d_loss, d_consistency, D)`` for the given objective values."""
        d1 = desirability(mse, self.loss_desirability)
        d2 = desirability(self.consistency_loss(cons), self.consistency_desirability)
        return d1, d2, overall_desirability([d1, d2])


def scalarize_weighted(mse: float, cons_loss: float, weights=(1.0, 1.0)) -> float:
    """``w_loss * mse + w_cons * cons_loss``.

    ``cons_loss`` is already oriented for minimization, i.e. the negated
    Spearman consistency.
    """
    return weights[0] * mse + weights[1] * cons_loss


def scalarize_desirability(mse: float, cons_loss: float, spec: ObjectiveSpec | None = None) -> float:
    """``1 - D`` for the loss and (negated) consistency desirabilities."""
    spec = spec or ObjectiveSpec()
    d1 = desirability(mse, spec.loss_desirability)
    d2 = desirability(cons_loss, spec.consistency_desirability)
    return 1.0 - overall_desirability([d1, d2])


@dataclass
class AttributionSettings:
    methods: tuple = xai.METHODS
    ig_steps: int = xai.IG_STEPS
    shap_samples: int = xai.SHAP_SAMPLES
    baseline: Sequence[float] | None = None  # None: zero vector in standardized space

    def __post_init__(self):
        self.methods = tuple(self.methods)
        for m in self.methods:
            if m not in xai.METHODS:
                raise ConfigurationError(f"unknown attribution method {m!r}")
        if len(self.methods) < 2:
            raise ConfigurationError("consistency needs at least two attribution methods")
        if self.ig_steps < 1 or self.shap_samples < 1:
            raise ConfigurationError("ig_steps and shap_samples must be positive")


@dataclass
class RepeatResult:
    seed: int
    mse: float
    cons: float | None = None
    degenerate: bool = False
    attributions: list | None = None


@dataclass
class EvaluationRecord:
    index: int
    raw: list
    hyperparameters: dict
    repeats: list
    mse: float | None
    cons: float | None
    objective: float | None
    degenerate: bool = False
    phase: str = "init"
    best_so_far: float | None = None
    wall_time: float | None = None

    def to_json(self, timing: bool = False) -> str:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return json.dumps(_jsonable(d), sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationRecord":
        d = dict(d)
        d["repeats"] = [RepeatResult(**r) for r in d["repeats"]]
        return cls(**d)

    @property
    def point(self) -> tuple[float, float | None]:
        return self.mse, self.cons


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def derive_seed(*entropy: int) -> int:
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


def repeat_seeds(master_seed: int, design_index: int, repeats: int) -> list[int]:
    return [derive_seed(master_seed, 3, design_index, r) for r in range(repeats)]


class CallCounter:
    """Counts attribution calls so tests can check the loss-only mode."""

    def __init__(self):
        self.attribution_calls = 0


CALLS = CallCounter()


def train_model(hp: dict, splits: Splits, seed: int) -> nn.TrainResult:
    config = nn.MLPConfig.from_hyperparameters(hp, seed=seed)
    model = nn.build(config, splits.train.n_features)
    return nn.train(model, splits.train.features, splits.train.targets, config)


def attribution_rows(model, X, settings: AttributionSettings, seed: int) -> np.ndarray:
    CALLS.attribution_calls += 1
    return np.array([xai.global_attribution(model, X, m, settings.baseline, seed,
                                            settings.ig_steps, settings.shap_samples)
                     for m in settings.methods])


def evaluate_repeat(hp, splits: Splits, spec: ObjectiveSpec, seed: int,
                    attributions: AttributionSettings | None, with_attributions: bool,
                    keep: dict | None = None, split_name: str = "validation") -> RepeatResult:
    result = train_model(hp, splits, seed)
    target = getattr(splits, split_name)
    if result.degenerate:
        return RepeatResult(seed, math.nan, None, True)
    with np.errstate(over="ignore", invalid="ignore"):
        pred = nn.predict(result.model, target.features)
    val_mse = nn.mse(pred, target.targets)
    if not math.isfinite(val_mse):
        return RepeatResult(seed, math.nan, None, True)
    if keep is not None:
        keep.setdefault("models", []).append(result.model)
    if not with_attributions:
        return RepeatResult(seed, val_mse)
    try:
        E = attribution_rows(result.model, target.features, attributions or AttributionSettings(), seed)
        cons = consistency.metric(spec.metric, E, spec.absolute_ranks)
    except NumericalError as exc:
        logger.warning("attribution failed for seed %d: %s", seed, exc)
        return RepeatResult(seed, val_mse, None, True)
    return RepeatResult(seed, val_mse, cons, False, E.tolist())


def evaluate_design(point: DesignPoint, splits: Splits, spec: ObjectiveSpec, seeds: Sequence[int],
                    attributions: AttributionSettings | None = None, index: int = 0,
                    with_attributions: bool | None = None, keep: dict | None = None) -> EvaluationRecord:
    """Train, validate and explain one design, once per seed, and scalarize.

    Objectives are averaged over the repeats first; the mean MSE and mean
    consistency are then scalarized.  A repeat that diverges marks the whole
    record degenerate with ``objective=None``; the loop later substitutes a
    finite penalty.
    """
    if with_attributions is None:
        with_attributions = spec.needs_attributions
    start = time.perf_counter()
    reps = [evaluate_repeat(point.concrete, splits, spec, s, attributions, with_attributions, keep)
            for s in seeds]
    degenerate = any(r.degenerate for r in reps)
    mse = cons = objective = None
    if not degenerate:
        mse = float(np.mean([r.mse for r in reps]))
        if with_attributions:
            cons = float(np.mean([r.cons for r in reps]))
        objective = spec.scalarize(mse, cons)
    return EvaluationRecord(index, [float(v) for v in point.raw], dict(point.concrete), reps,
                            mse, cons, objective, degenerate,
                            wall_time=time.perf_counter() - start)


@dataclass
class TuningRun:
    spec: ObjectiveSpec
    space: SearchSpace
    n_init: int
    budget: int
    repeats: int
    seed: int
    records: list = field(default_factory=list)
    penalty: float | None = None
    surrogate_failures: int = 0

    @property
    def best(self) -> EvaluationRecord:
        return best_record(self.records)


def best_record(records) -> EvaluationRecord:
    if not records:
        raise ConfigurationError("no evaluation records")
    return min(records, key=lambda r: (r.objective, r.index))


def degenerate_penalty(values) -> float:
    """Finite stand-in for diverged evaluations: ten times the worst value.

    Negative worst values (possible in weighted mode) are pushed up by ten
    times their magnitude instead, so the penalty always exceeds them.
    """
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if not finite:
        return 10.0
    worst = max(finite)
    return 10.0 * worst if worst > 0 else worst + 10.0 * max(abs(worst), 1.0)


def smbo_loop(evaluate: Callable[[DesignPoint, int], EvaluationRecord], space: SearchSpace,
              n_init: int = 20, budget: int = 60, seed: int = 0,
              de_settings: DESettings = DESettings(), infill: str = "mean",
              budget_includes_init: bool = False,
              on_record: Callable[[EvaluationRecord], None] | None = None,
              run: TuningRun | None = None) -> TuningRun:
    """Sequential model-based minimization of ``evaluate`` over ``space``.

    ``evaluate(point, index)`` returns an :class:`EvaluationRecord`.  The run
    stops after ``n_init + budget`` evaluations, or ``budget`` evaluations
    when ``budget_includes_init`` is set.
    """
    if budget < 0 or n_init < 1:
        raise ConfigurationError("need n_init >= 1 and budget >= 0")
    total = budget if budget_includes_init else n_init + budget
    if budget_includes_init and budget < n_init:
        raise ConfigurationError("budget including the initial design must be >= n_init")
    if run is None:
        run = TuningRun(ObjectiveSpec(mode="loss"), space, n_init, budget, 1, seed)
    records = run.records
    best = math.inf

    def add(record: EvaluationRecord):
        nonlocal best
        if record.degenerate and run.penalty is not None:
            record.objective = run.penalty
        if record.objective is not None:
            best = min(best, record.objective)
        record.best_so_far = best if math.isfinite(best) else None
        records.append(record)
        if on_record is not None:
            on_record(record)

    init = latin_hypercube(n_init, space, derive_seed(seed, 0))
    pending = []
    for i, point in enumerate(init):
        rec = evaluate(point, i)
        rec.phase = "init"
        pending.append(rec)
    run.penalty = degenerate_penalty([r.objective for r in pending])
    for rec in pending:
        add(rec)

    for i in range(n_init, total):
        X = np.array([r.raw for r in records])
        y = np.array([r.objective for r in records])
        phase = "infill"
        try:
            model = fit(X, y, de_settings, seed=derive_seed(seed, 1, i))
            point = propose_next(model, space, derive_seed(seed, 2, i), de_settings, infill)
        except (SurrogateFitError, ConfigurationError) as exc:
            logger.warning("surrogate step %d failed (%s); using a random design", i, exc)
            run.surrogate_failures += 1
            rng = np.random.default_rng(derive_seed(seed, 4, i))
            point = design_point(space.lower + rng.random(len(space)) * (space.upper - space.lower),
                                 space)
            phase = "random"
        rec = evaluate(point, i)
        rec.phase = phase
        add(rec)
    return run


def minimize_function(fun: Callable[[np.ndarray], float], space: SearchSpace, n_init: int = 5,
                      budget: int = 15, seed: int = 0, **kwargs) -> TuningRun:
    """Run the loop on a cheap function of the raw vector (for checks and demos)."""
    def evaluate(point, index):
        value = float(fun(point.raw))
        ok = math.isfinite(value)
        return EvaluationRecord(index, [float(v) for v in point.raw], dict(point.concrete), [],
                                None, None, value if ok else None, not ok)

    return smbo_loop(evaluate, space, n_init, budget, seed, **kwargs)


def tune(splits: Splits, spec: ObjectiveSpec, space: SearchSpace, n_init: int = 20,
         budget: int = 60, repeats: int = 2, seed: int = 0,
         attributions: AttributionSettings | None = None,
         de_settings: DESettings = DESettings(), infill: str = "mean",
         budget_includes_init: bool = False,
         on_record: Callable[[EvaluationRecord], None] | None = None) -> TuningRun:
    """Tune the MLP hyperparameters on ``splits`` for the objective ``spec``.

    Only the training and validation splits are read.
    """
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    attributions = attributions or AttributionSettings()
    run = TuningRun(spec, space, n_init, budget, repeats, seed)

    def evaluate(point, index):
        return evaluate_design(point, splits, spec, repeat_seeds(seed, index, repeats),
                               attributions, index)

    return smbo_loop(evaluate, space, n_init, budget, seed, de_settings, infill,
                     budget_includes_init, on_record, run)


def evaluate_sample(points: Sequence[DesignPoint], splits: Splits, spec: ObjectiveSpec,
                    repeats: int = 1, seed: int = 0,
                    attributions: AttributionSettings | None = None,
                    on_record: Callable[[EvaluationRecord], None] | None = None) -> list:
    """Evaluate a fixed list of designs with loss and consistency (no surrogate)."""
    records = []
    for i, p in enumerate(points):
        rec = evaluate_design(p, splits, spec, repeat_seeds(seed, i, repeats), attributions, i,
                              with_attributions=True)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    return records


def final_metrics(record: EvaluationRecord, splits: Splits, spec: ObjectiveSpec,
                  attributions: AttributionSettings | None = None, keep: dict | None = None) -> dict:
    """Validation and test MSE and consistency of a record's configuration.

    The models are retrained with the record's repeat seeds (training is
    deterministic, so they equal the tuned models) and the metrics averaged
    over repeats.  This reads the test split and must only run after tuning.
    """
    attributions = attributions or AttributionSettings()
    out = {}
    for split_name in ("validation", "test"):
        reps = [evaluate_repeat(record.hyperparameters, splits, spec, r.seed, attributions, True,
                                keep if split_name == "validation" else None, split_name)
                for r in record.repeats]
        if any(r.degenerate for r in reps):
            out[split_name] = dict(mse=None, cons=None, degenerate=True)
            continue
        out[split_name] = dict(mse=float(np.mean([r.mse for r in reps])),
                               cons=float(np.mean([r.cons for r in reps])),
                               attributions=np.mean([r.attributions for r in reps], axis=0).tolist())
    if spec.mode == "desirability" and out["validation"].get("mse") is not None:
        d1, d2, D = spec.desirability(out["validation"]["mse"], out["validation"]["cons"])
        out["desirability"] = dict(d_loss=d1, d_consistency=d2, D=D, one_minus_D=1.0 - D)
    return out


def pareto_front(records, objectives: Callable | None = None) -> list:
    """Non-dominated records under minimization of ``(mse, -cons)``.

    ``objectives`` maps a record to its tuple of minimized values.  Records
    with identical objective vectors do not dominate each other, so all of
    them are kept.  The front is ordered by the first objective, then the
    second.
    """
    records = list(records)
    if not records:
        raise ConfigurationError("pareto_front needs at least one record")
    if objectives is None:
        objectives = _default_objectives
    F = np.array([objectives(r) for r in records], dtype=float)
    order = np.lexsort((F[:, 1], F[:, 0]))
    front = []
    best_f2_before = math.inf      # min f2 over strictly smaller f1
    k = 0
    while k < len(order):
        # group of equal first objective
        j = k
        while j < len(order) and F[order[j], 0] == F[order[k], 0]:
            j += 1
        group = order[k:j]
        g_min = F[group[0], 1]
        for idx in group:
            f2 = F[idx, 1]
            if f2 < best_f2_before and f2 == g_min:
                front.append(records[idx])
        best_f2_before = min(best_f2_before, g_min)
        k = j
    return front


def _default_objectives(r):
    if isinstance(r, EvaluationRecord):
        return (r.mse, -r.cons)
    return tuple(r)
