"""Kriging surrogate and the differential evolution optimizer behind it.

Differential evolution (DE/rand/1/bin) serves two purposes: it maximizes the
concentrated log-likelihood when fitting the correlation parameters and it
searches the fitted surrogate for the next infill point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import erf

from .doe import DesignPoint, SearchSpace, design_point
from .errors import ConfigurationError, SurrogateFitError

logger = logging.getLogger(__name__)

NUGGETS = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
LOG10_THETA_BOUNDS = (-3.0, 2.0)


@dataclass(frozen=True)
class DESettings:
    population: int | None = None  # None -> 10 * dims, at least 20
    generations: int = 50
    F: float = 0.8
    CR: float = 0.9

    def population_for(self, dims: int) -> int:
        return self.population if self.population is not None else max(20, 10 * dims)


def differential_evolution(
    objective: Callable,
    bounds,
    settings: DESettings = DESettings(),
    seed: int = 0,
    vectorized: bool = False,
    callback: Callable | None = None,
):
    """Minimize ``objective`` over a box with DE/rand/1/bin.

    Parameters
    ----------
    objective
        Maps a vector to a float, or an ``(n, d)`` array to ``n`` floats when
        ``vectorized`` is true.
    bounds
        Sequence of ``(lower, upper)`` pairs.
    settings
        Population size, generation count, differential weight ``F`` and
        crossover rate ``CR``.
    callback
        Called with every evaluated ``(n, d)`` batch of candidates.

    Returns
    -------
    (x, value)
        Best individual found and its objective value.

    Notes
    -----
    The update is generational: all trial vectors of a generation are built
    from the same parent population, then each trial replaces its target if
    it is no worse.  The run is a pure function of ``seed``.
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2:
        raise ConfigurationError("bounds must be a sequence of (lower, upper) pairs")
    lo, hi = bounds[:, 0], bounds[:, 1]
    if not (np.all(np.isfinite(bounds)) and np.all(lo <= hi)):
        raise ConfigurationError("bounds must be finite with lower <= upper")
    d = len(bounds)
    npop = settings.population_for(d)
    if npop < 4:
        raise ConfigurationError("DE population must be at least 4")
    if not (0 < settings.F <= 2 and 0 <= settings.CR <= 1 and settings.generations >= 0):
        raise ConfigurationError(f"invalid DE settings {settings}")

    rng = np.random.default_rng(seed)

    def evaluate(pop):
        if callback is not None:
            callback(pop)
        if vectorized:
            vals = np.asarray(objective(pop), dtype=float).reshape(len(pop))
        else:
            vals = np.array([float(objective(x)) for x in pop])
        # NaN would poison the greedy comparison
        return np.where(np.isnan(vals), np.inf, vals)

    pop = lo + rng.random((npop, d)) * (hi - lo)
    fit = evaluate(pop)
    idx = np.arange(npop)
    for _ in range(settings.generations):
        # three distinct donors per target, all different from the target
        others = np.array([rng.choice(np.delete(idx, i), 3, replace=False) for i in idx])
        a, b, c = pop[others[:, 0]], pop[others[:, 1]], pop[others[:, 2]]
        mutant = a + settings.F * (b - c)
        cross = rng.random((npop, d)) < settings.CR
        cross[idx, rng.integers(0, d, npop)] = True
        trial = np.clip(np.where(cross, mutant, pop), lo, hi)
        trial_fit = evaluate(trial)
        better = trial_fit <= fit
        pop[better] = trial[better]
        fit[better] = trial_fit[better]
    best = int(np.argmin(fit))
    return pop[best].copy(), float(fit[best])


def _correlation(XA, XB, theta):
    diff = XA[:, None, :] - XB[None, :, :]
    return np.exp(-np.einsum("abd,d->ab", diff * diff, theta))


@dataclass
class KrigingModel:
    """Ordinary Kriging with an anisotropic Gaussian kernel.

    ``y`` is stored in original units; the likelihood, ``mu`` and ``sigma2``
    refer to the internally standardized objective.
    """

    X: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    mu: float
    sigma2: float
    nugget: float
    chol: tuple | None
    y_mean: float
    y_std: float
    log_likelihood: float
    _alpha: np.ndarray | None = None
    _Rinv_one: np.ndarray | None = None
    _one_Rinv_one: float = 1.0

    @property
    def dims(self):
        return self.X.shape[1]

    def predict(self, x):
        return predict(self, x)


def concentrated_log_likelihood(X, ys, theta, nugget):
    """Concentrated log-likelihood of standardized data ``ys`` for ``theta``.

    Returns ``(value, extras)`` where ``extras`` holds the factorization and
    the generalized-least-squares estimates, or ``(-inf, None)`` when the
    correlation matrix is not numerically positive definite.
    """
    n = len(X)
    R = _correlation(X, X, theta) + nugget * np.eye(n)
    try:
        chol = cho_factor(R, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return -np.inf, None
    diag = np.diag(chol[0])
    if not np.all(diag > 0):
        return -np.inf, None
    one = np.ones(n)
    Rinv_one = cho_solve(chol, one, check_finite=False)
    one_Rinv_one = float(one @ Rinv_one)
    mu = float(Rinv_one @ ys) / one_Rinv_one
    resid = ys - mu
    alpha = cho_solve(chol, resid, check_finite=False)
    sigma2 = max(float(resid @ alpha) / n, 0.0)
    logdet = 2.0 * float(np.sum(np.log(diag)))
    if sigma2 <= 0.0:
        return -np.inf, None
    value = -0.5 * n * np.log(sigma2) - 0.5 * logdet
    return value, dict(chol=chol, mu=mu, sigma2=sigma2, alpha=alpha,
                       Rinv_one=Rinv_one, one_Rinv_one=one_Rinv_one)


def fit(X, y, de_settings: DESettings = DESettings(), seed: int = 0,
        nugget: float | None = None) -> KrigingModel:
    """Fit a Kriging model to raw design coordinates ``X`` and objectives ``y``.

    ``theta`` maximizes the concentrated log-likelihood over
    ``log10(theta)`` in ``[-3, 2]`` per dimension.  When the correlation
    matrix cannot be factorized the nugget grows by decades from ``1e-8``
    to ``1e-4`` before :class:`SurrogateFitError` is raised.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ConfigurationError(f"{len(X)} design rows but {len(y)} objective values")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ConfigurationError("Kriging needs finite designs and objective values")
    if len(np.unique(X, axis=0)) < 2:
        raise ConfigurationError("Kriging needs at least two distinct design points")
    n, d = X.shape
    y_mean, y_std = float(np.mean(y)), float(np.std(y))

    if y_std == 0.0:
        # constant data: the predictor is the constant, no likelihood to optimize
        return KrigingModel(X, y, np.ones(d), 0.0, 0.0, NUGGETS[0], None, y_mean, 1.0,
                            0.0, np.zeros(n), None, 1.0)
    ys = (y - y_mean) / y_std

    nuggets = NUGGETS if nugget is None else (nugget,)
    for ng in nuggets:
        def neg_ll(log_theta, ng=ng):
            return -concentrated_log_likelihood(X, ys, 10.0 ** log_theta, ng)[0]

        log_theta, best = differential_evolution(neg_ll, [LOG10_THETA_BOUNDS] * d,
                                                 de_settings, seed=seed)
        if np.isfinite(best):
            theta = 10.0 ** log_theta
            value, ex = concentrated_log_likelihood(X, ys, theta, ng)
            if ex is not None:
                if ng > NUGGETS[0]:
                    logger.info("Kriging fit needed nugget %.0e", ng)
                return KrigingModel(X, y, theta, ex["mu"], ex["sigma2"], ng, ex["chol"],
                                    y_mean, y_std, value, ex["alpha"], ex["Rinv_one"],
                                    ex["one_Rinv_one"])
        logger.info("correlation matrix singular at nugget %.0e", ng)
    raise SurrogateFitError(f"correlation matrix not positive definite up to nugget {nuggets[-1]:.0e}")


def predict(model: KrigingModel, x):
    """Predicted mean and variance at one point or an ``(n, d)`` batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dims:
        raise ConfigurationError(f"expected {model.dims} coordinates, got {x.shape[1]}")
    if model.chol is None:
        mean = np.full(len(x), model.y_mean)
        var = np.zeros(len(x))
    else:
        r = _correlation(x, model.X, model.theta)
        # the nugget belongs to the covariance at zero lag, so data are honored exactly
        r[(x[:, None, :] == model.X[None, :, :]).all(axis=2)] += model.nugget
        mean_s = model.mu + r @ model._alpha
        Rinv_r = cho_solve(model.chol, r.T, check_finite=False)
        u = 1.0 - r @ model._Rinv_one
        var_s = model.sigma2 * (1.0 + model.nugget - np.sum(r.T * Rinv_r, axis=0)
                                + u * u / model._one_Rinv_one)
        mean = model.y_mean + model.y_std * mean_s
        var = np.maximum(var_s, 0.0) * model.y_std ** 2
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def expected_improvement(model: KrigingModel, x, y_best):
    mean, var = predict(model, np.atleast_2d(x))
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (y_best - mean) / sd
        pdf = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
        cdf = 0.5 * (1 + erf(z / np.sqrt(2)))
        ei = (y_best - mean) * cdf + sd * pdf
    return np.where(sd > 0, ei, np.maximum(y_best - mean, 0.0))


def propose_next(model: KrigingModel, space: SearchSpace, seed: int = 0,
                 de_settings: DESettings = DESettings(), infill: str = "mean") -> DesignPoint:
    """Next design: minimizer of the predicted mean (or maximizer of EI).

    A proposal that coincides exactly with an evaluated point is shifted by
    one cell width, ``range / n_evaluated``, along a random dimension.
    """
    if infill == "mean":
        def obj(P):
            return predict(model, P)[0]
    elif infill == "ei":
        y_best = float(np.min(model.y))

        def obj(P):
            return -expected_improvement(model, P, y_best)
    else:
        raise ConfigurationError(f"unknown infill criterion {infill!r}")

    x, _ = differential_evolution(obj, space.bounds, de_settings, seed=seed, vectorized=True)
    if np.any(np.all(model.X == x, axis=1)):
        rng = np.random.default_rng([seed, 1])
        k = int(rng.integers(len(space)))
        width = (space.upper[k] - space.lower[k]) / len(model.X)
        step = width if x[k] + width <= space.upper[k] else -width
        x = x.copy()
        x[k] += step
        logger.info("proposal duplicated an evaluated point; moved %s by %+.4g",
                    space.names[k], step)
    return design_point(x, space)
