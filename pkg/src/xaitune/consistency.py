"""Agreement metrics across the rows of an attribution matrix.

``E[i, j]`` is the global attribution of feature ``j`` by method ``i``.
Lower is more consistent for :func:`cons_max_diff` and :func:`cons_var`;
higher is more consistent for :func:`cons_spearman`.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

METRICS = ("cons_spearman", "cons_max_diff", "cons_var")


def _matrix(E) -> np.ndarray:
    E = getattr(E, "values", E)
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.ndim != 2 or E.shape[0] < 2:
        raise ConfigurationError("consistency metrics need at least two attribution rows")
    if not np.all(np.isfinite(E)):
        raise ConfigurationError("attribution matrix holds non-finite values")
    return E


def cons_max_diff(E) -> float:
    """Sum over features of the largest pairwise absolute disagreement."""
    E = _matrix(E)
    return float(np.sum(E.max(axis=0) - E.min(axis=0)))


def cons_var(E) -> float:
    """Sum over features of the population variance across methods."""
    E = _matrix(E)
    # centring on the first row makes identical rows give exactly 0
    return float(np.sum((E - E[0]).var(axis=0)))


def spearman_rho(a, b, absolute: bool = False) -> float:
    """Spearman rank correlation with average ranks for ties.

    Computed as the Pearson correlation of the rank vectors, which equals
    ``1 - 6 sum(d**2) / (m (m**2 - 1))`` when no values are tied.  If either
    vector is constant the correlation is undefined; 0 is returned and a
    warning logged.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) != len(b) or len(a) < 2:
        raise ConfigurationError("spearman_rho needs two vectors of equal length >= 2")
    if absolute:
        a, b = np.abs(a), np.abs(b)
    ra, rb = rankdata(a) - (len(a) + 1) / 2, rankdata(b) - (len(b) + 1) / 2
    denom = np.sqrt(np.dot(ra, ra) * np.dot(rb, rb))
    if denom == 0.0:
        logger.warning("spearman_rho: all-tied input, correlation defined as 0")
        return 0.0
    return float(np.clip(np.dot(ra, rb) / denom, -1.0, 1.0))


def cons_spearman(E, absolute: bool = False) -> float:
    """Mean Spearman correlation over all unordered pairs of methods.

    ``absolute=True`` ranks attribution magnitudes instead of signed values.
    """
    E = _matrix(E)
    if absolute:
        E = np.abs(E)
    R = rankdata(E, axis=1)
    R -= R.mean(axis=1, keepdims=True)
    # centred ranks are half-integers, so these sums are exact
    ss = np.einsum("ij,ij->i", R, R)
    if np.any(ss == 0.0):
        logger.warning("spearman_rho: all-tied input, correlation defined as 0")
        ss = np.where(ss == 0.0, np.inf, ss)
    C = np.clip((R @ R.T) / np.sqrt(np.outer(ss, ss)), -1.0, 1.0)
    return float(np.mean(C[np.triu_indices(len(E), 1)]))


def all_metrics(E, absolute: bool = False) -> dict:
    return {"cons_spearman": cons_spearman(E, absolute),
            "cons_max_diff": cons_max_diff(E),
            "cons_var": cons_var(E)}


def metric(name: str, E, absolute: bool = False) -> float:
    if name == "cons_spearman":
        return cons_spearman(E, absolute)
    if name == "cons_max_diff":
        return cons_max_diff(E)
    if name == "cons_var":
        return cons_var(E)
    raise ConfigurationError(f"unknown consistency metric {name!r}; choose from {METRICS}")
