"""Local feature attributions and their aggregation into global profiles.

Three attribution methods are implemented against a single baseline input:

* Integrated Gradients (midpoint Riemann sum along the straight path),
* DeepLIFT with the Rescale rule,
* KernelSHAP (weighted least squares on masked inputs).

:func:`exact_shapley` enumerates every coalition and serves as the oracle for
KernelSHAP in the tests.  All functions accept a single input vector or an
``(n, m)`` batch; a batch returns one attribution row per input row.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import ConfigurationError, IngestionError, NumericalError

logger = logging.getLogger(__name__)

METHODS = ("integrated_gradients", "deeplift", "kernel_shap")
METHOD_LABELS = {"integrated_gradients": "IntegratedGradients", "deeplift": "DeepLIFT",
                 "kernel_shap": "KernelSHAP"}
IG_STEPS = 64
SHAP_SAMPLES = 2048
MAX_ENUMERATED_FEATURES = 12
MAX_EXACT_FEATURES = 16
RESCALE_EPS = 1e-7
CHUNK_ROWS = 8192  # rows per forward pass when inputs are expanded


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x, x.ndim == 1


def _baseline(baseline, m):
    if baseline is None:
        return np.zeros(m)
    b = np.asarray(baseline, dtype=float).ravel()
    if b.shape != (m,):
        raise ConfigurationError(f"baseline has {b.size} entries, inputs have {m} features")
    return b


def _evaluate(model, X):
    """Model outputs for a large batch, in chunks."""
    out = np.empty(len(X))
    for s in range(0, len(X), CHUNK_ROWS):
        out[s:s + CHUNK_ROWS] = np.asarray(model(X[s:s + CHUNK_ROWS]), dtype=float).ravel()
    return out


def _gradient(model, X):
    if isinstance(model, nn.MLPModel):
        return nn.input_gradient(model, X)
    if hasattr(model, "gradient"):
        return np.asarray(model.gradient(X), dtype=float)
    raise ConfigurationError("integrated gradients needs an MLPModel or a model with .gradient")


def integrated_gradients(model, x, baseline=None, steps: int = IG_STEPS):
    """Path-integrated gradients with the midpoint rule ``alpha_k = (k - 0.5) / steps``."""
    if steps < 1:
        raise ConfigurationError("integrated gradients needs steps >= 1")
    X, single = _as_batch(x)
    b = _baseline(baseline, X.shape[1])
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    delta = X - b
    avg = np.empty_like(X)
    rows_per_chunk = max(1, CHUNK_ROWS // steps)
    for s in range(0, len(X), rows_per_chunk):
        d = delta[s:s + rows_per_chunk]
        path = b + alphas[:, None, None] * d[None, :, :]
        g = _gradient(model, path.reshape(-1, X.shape[1]))
        avg[s:s + rows_per_chunk] = g.reshape(steps, len(d), X.shape[1]).mean(axis=0)
    out = delta * avg
    return out[0] if single else out


def deeplift(model: nn.MLPModel, x, baseline=None):
    """DeepLIFT Rescale attributions for an :class:`~xaitune.nn.MLPModel`.

    Each nonlinearity passes on the multiplier
    ``(a(z) - a(z')) / (z - z')``; where ``|z - z'| < 1e-7`` the derivative at
    the midpoint is used instead.  Attributions sum to ``f(x) - f(x')``.
    """
    if not isinstance(model, nn.MLPModel):
        raise ConfigurationError("DeepLIFT needs an MLPModel")
    X, single = _as_batch(x)
    b = _baseline(baseline, X.shape[1])
    out = np.empty_like(X)
    for s in range(0, len(X), CHUNK_ROWS):
        out[s:s + CHUNK_ROWS] = _deeplift_batch(model, X[s:s + CHUNK_ROWS], b)
    return out[0] if single else out


def _deeplift_batch(model, X, b):
    zs, zrefs = [], []
    a, a_ref = X, b[None, :]
    last = len(model.weights) - 1
    for k, (W, bias) in enumerate(zip(model.weights, model.biases)):
        z, z_ref = a @ W + bias, a_ref @ W + bias
        if k < last:
            zs.append(z)
            zrefs.append(z_ref)
            a, a_ref = nn.activate(model.activation, z), nn.activate(model.activation, z_ref)
    mult = np.ones((len(X), 1))
    for k in range(last, -1, -1):
        mult = mult @ model.weights[k].T
        if k > 0:
            z, z_ref = zs[k - 1], zrefs[k - 1]
            dz = z - z_ref
            near = np.abs(dz) < RESCALE_EPS
            with np.errstate(divide="ignore", invalid="ignore"):
                secant = (nn.activate(model.activation, z)
                          - nn.activate(model.activation, z_ref)) / dz
            tangent = nn.activate_grad(model.activation, 0.5 * (z + z_ref))
            mult = mult * np.where(near, tangent, secant)
    return mult * (X - b)


def _masked_outputs(model, X, b, masks):
    """``f`` on every row of ``X`` with features outside each mask set to ``b``.

    Returns an ``(n_rows, n_masks)`` array.
    """
    masks = masks.astype(float)
    out = np.empty((len(X), len(masks)))
    rows_per_chunk = max(1, CHUNK_ROWS // len(masks))
    for s in range(0, len(X), rows_per_chunk):
        x = X[s:s + rows_per_chunk]
        inputs = masks[None, :, :] * x[:, None, :] + (1.0 - masks[None, :, :]) * b
        out[s:s + len(x)] = _evaluate(model, inputs.reshape(-1, X.shape[1])).reshape(len(x), -1)
    return out


def shapley_kernel_weight(m: int, size: int) -> float:
    """Shapley kernel ``(m - 1) / (C(m, |S|) |S| (m - |S|))`` for proper coalitions."""
    return (m - 1) / (math.comb(m, size) * size * (m - size))


def enumerate_coalitions(m: int) -> np.ndarray:
    """All ``2**m - 2`` proper, non-empty coalitions as a boolean matrix."""
    codes = np.arange(1, 2 ** m - 1)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def sample_coalitions(m: int, samples: int, rng) -> np.ndarray:
    """Coalitions drawn with probability proportional to the Shapley kernel.

    The size is drawn with weight ``(m - 1) / (s (m - s))`` and the members
    uniformly, so the regression that follows needs no further weights.
    """
    sizes = np.arange(1, m)
    p = (m - 1) / (sizes * (m - sizes))
    p = p / p.sum()
    drawn = rng.choice(sizes, size=samples, p=p)
    Z = np.zeros((samples, m), dtype=bool)
    for r, s in enumerate(drawn):
        Z[r, rng.choice(m, size=s, replace=False)] = True
    return Z


def kernel_shap(model, x, baseline=None, samples: int = SHAP_SAMPLES, seed: int = 0):
    """KernelSHAP values under single-baseline masking.

    With ``m <= 12`` features every proper coalition is enumerated and the
    result equals the exact Shapley values (``samples`` and ``seed`` are then
    unused).  Otherwise ``samples`` coalitions are drawn from a generator
    seeded with ``seed``.  The efficiency constraint
    ``sum(phi) = f(x) - f(x')`` is imposed exactly by eliminating the last
    coefficient.
    """
    X, single = _as_batch(x)
    m = X.shape[1]
    if m < 1:
        raise ConfigurationError("kernel SHAP needs at least one feature")
    b = _baseline(baseline, m)
    f0 = float(_evaluate(model, b[None, :])[0])
    delta = _evaluate(model, X) - f0
    if m == 1:
        phi = delta[:, None]
        return phi[0] if single else phi

    if m <= MAX_ENUMERATED_FEATURES:
        Z = enumerate_coalitions(m)
        w = np.array([shapley_kernel_weight(m, s) for s in Z.sum(axis=1)])
    else:
        if samples < m:
            raise NumericalError(f"kernel SHAP needs at least {m} samples for {m} features")
        Z = sample_coalitions(m, samples, np.random.default_rng(seed))
        w = np.ones(len(Z))

    y = _masked_outputs(model, X, b, Z) - f0          # (n, K)
    Zf = Z.astype(float)
    A = Zf[:, :-1] - Zf[:, -1:]                        # (K, m-1)
    rhs = y - Zf[:, -1][None, :] * delta[:, None]      # (n, K)
    AtW = A.T * w
    gram = AtW @ A
    if np.linalg.matrix_rank(gram) < m - 1:
        raise NumericalError("kernel SHAP regression is singular; increase the sample count")
    coef = np.linalg.solve(gram, AtW @ rhs.T).T        # (n, m-1)
    phi = np.column_stack([coef, delta - coef.sum(axis=1)])
    return phi[0] if single else phi


def exact_shapley(model, x, baseline=None):
    """Brute-force Shapley values over all ``2**m`` coalitions (``m <= 16``)."""
    X, single = _as_batch(x)
    m = X.shape[1]
    if m > MAX_EXACT_FEATURES:
        raise ConfigurationError(f"exact Shapley values limited to {MAX_EXACT_FEATURES} features")
    b = _baseline(baseline, m)
    codes = np.arange(2 ** m)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(bool)
    v = _masked_outputs(model, X, b, masks)            # (n, 2**m)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(k) for k in range(m + 1)]
    phi = np.zeros_like(X)
    for i in range(m):
        without = codes[(codes >> i) & 1 == 0]
        s = sizes[without]
        weights = np.array([fact[k] * fact[m - k - 1] for k in s]) / fact[m]
        phi[:, i] = (v[:, without | (1 << i)] - v[:, without]) @ weights
    return phi[0] if single else phi


def local_attributions(model, X, method: str, baseline=None, seed: int = 0,
                       ig_steps: int = IG_STEPS, shap_samples: int = SHAP_SAMPLES):
    if method == "integrated_gradients":
        return integrated_gradients(model, X, baseline, ig_steps)
    if method == "deeplift":
        return deeplift(model, X, baseline)
    if method == "kernel_shap":
        return kernel_shap(model, X, baseline, shap_samples, seed)
    raise ConfigurationError(f"unknown attribution method {method!r}; choose from {METHODS}")


def global_attribution(model, X, method: str, baseline=None, seed: int = 0,
                       ig_steps: int = IG_STEPS, shap_samples: int = SHAP_SAMPLES,
                       max_excluded: float = 0.05) -> np.ndarray:
    """Mean local attribution per feature over the rows of ``X``.

    Rows whose attribution is not finite are dropped.  If more than
    ``max_excluded`` of the rows are dropped the method is considered failed
    for this model and :class:`NumericalError` is raised.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ConfigurationError("global attribution needs at least one row")
    if isinstance(model, nn.MLPModel):
        model.eval()
    with np.errstate(over="ignore", invalid="ignore"):
        local = local_attributions(model, X, method, baseline, seed, ig_steps, shap_samples)
    ok = np.all(np.isfinite(local), axis=1)
    excluded = int(len(ok) - ok.sum())
    if excluded:
        logger.warning("%s: %d of %d local attributions non-finite", method, excluded, len(ok))
    if excluded > max_excluded * len(ok) or not ok.any():
        raise NumericalError(f"{method} failed: {excluded} of {len(ok)} rows non-finite")
    return local[ok].mean(axis=0)


@dataclass
class AttributionMatrix:
    """Global attributions, one row per method and one column per feature."""

    values: np.ndarray
    methods: list
    features: list

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.methods), len(self.features)):
            raise ConfigurationError("attribution matrix shape does not match its labels")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("attribution matrix holds non-finite values")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", *self.features])
            for name, row in zip(self.methods, self.values):
                w.writerow([name, *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path) -> "AttributionMatrix":
        path = Path(path)
        if not path.is_file():
            raise IngestionError(f"{path}: no such file")
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if len(rows) < 2 or rows[0][0] != "method":
            raise IngestionError(f"{path}: expected a header starting with 'method'")
        try:
            values = [[float(v) for v in r[1:]] for r in rows[1:]]
        except ValueError as exc:
            raise IngestionError(f"{path}: {exc}") from None
        if any(len(v) != len(rows[0]) - 1 for v in values):
            raise IngestionError(f"{path}: ragged attribution table")
        return cls(np.array(values), [r[0] for r in rows[1:]], rows[0][1:])


def attribution_matrix(model, X, feature_names, methods=METHODS, baseline=None, seed: int = 0,
                       ig_steps: int = IG_STEPS, shap_samples: int = SHAP_SAMPLES) -> AttributionMatrix:
    rows = [global_attribution(model, X, m, baseline, seed, ig_steps, shap_samples)
            for m in methods]
    return AttributionMatrix(np.array(rows), [METHOD_LABELS.get(m, m) for m in methods],
                             list(feature_names))

