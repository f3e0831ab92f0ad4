import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import rankdata, spearmanr

from xaitune.consistency import (all_metrics, cons_max_diff, cons_spearman, cons_var, metric,
                                 spearman_rho)
from xaitune.errors import ConfigurationError


def test_max_diff_fixture():
    assert cons_max_diff([[0.1, 0.9], [0.3, 0.4]]) == pytest.approx(0.7, abs=1e-12)


def test_var_fixture():
    assert cons_var([[1, 2], [3, 4]]) == pytest.approx(2.0, abs=1e-12)


def test_identical_rows():
    E = np.tile([0.3, -0.1, 0.8], (3, 1))
    assert cons_max_diff(E) == 0
    assert cons_var(E) == 0
    assert cons_spearman(E) == 1


def test_spearman_examples():
    assert spearman_rho([0.2, 0.5, 0.9], [0.1, 0.6, 1.2]) == 1
    assert spearman_rho([1, 2, 3], [3, 2, 1]) == -1
    assert spearman_rho([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)


def test_cons_spearman_examples():
    assert cons_spearman([[1, 2, 3], [3, 2, 1]]) == -1
    E = np.array([[1, 2, 3, 4], [4, 3, 2, 1], [2, 4, 1, 3]], dtype=float)
    rhos = [spearman_rho(E[0], E[1]), spearman_rho(E[0], E[2]), spearman_rho(E[1], E[2])]
    assert rhos == pytest.approx([-1, 0, 0])
    assert cons_spearman(E) == pytest.approx(-1 / 3)


def test_ties_use_average_ranks():
    a, b = [1, 1, 2, 3], [1, 2, 2, 5]
    assert spearman_rho(a, b) == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)


def test_all_tied_is_zero(caplog):
    assert spearman_rho([1, 1, 1], [1, 2, 3]) == 0.0
    assert "all-tied" in caplog.text


def test_absolute_ranks():
    E = [[1, -3, 2], [1, 3, 2]]
    assert cons_spearman(E) < 1
    assert cons_spearman(E, absolute=True) == 1


def test_errors():
    with pytest.raises(ConfigurationError):
        cons_var([[1, 2]])
    with pytest.raises(ConfigurationError):
        cons_max_diff([[1, np.nan], [1, 2]])
    with pytest.raises(ConfigurationError):
        metric("cons_kendall", [[1, 2], [2, 1]])
    with pytest.raises(ConfigurationError):
        spearman_rho([1, 2], [1, 2, 3])


def test_all_metrics_keys():
    res = all_metrics([[0.1, 0.9], [0.3, 0.4]])
    assert set(res) == {"cons_spearman", "cons_max_diff", "cons_var"}


def test_random_range():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        E = rng.normal(size=(rng.integers(2, 5), rng.integers(2, 9)))
        assert -1 <= cons_spearman(E) <= 1


matrices = st.integers(2, 4).flatmap(
    lambda n: st.integers(2, 8).flatmap(
        lambda m: arrays(float, (n, m), elements=st.floats(-10, 10, allow_nan=False))))


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_scipy_oracle(E):
    for i in range(len(E)):
        for k in range(i + 1, len(E)):
            with warnings.catch_warnings():
                # constant rows are expected here; scipy returns nan for them
                warnings.simplefilter("ignore")
                ref = spearmanr(E[i], E[k]).statistic
            got = spearman_rho(E[i], E[k])
            if np.isnan(ref):
                assert got == 0.0
            else:
                assert got == pytest.approx(ref, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(matrices, st.integers(0, 2**32 - 1))
def test_invariances(E, seed):
    rng = np.random.default_rng(seed)
    base = all_metrics(E)
    perm = rng.permutation(E.shape[1])
    for k, v in all_metrics(E[:, perm]).items():
        assert v == pytest.approx(base[k], abs=1e-12)
    # strictly increasing transform of one row keeps the ranks
    F = E.copy()
    F[0] = np.exp(F[0] / 5) * 3 + 1
    # floating point may merge nearly equal values; the property needs a strict map
    assume(np.array_equal(rankdata(F[0]), rankdata(E[0])))
    assert cons_spearman(F) == pytest.approx(base["cons_spearman"], abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_zero_iff_identical(E):
    identical = bool(np.all(E == E[0]))
    assert cons_max_diff(E) >= 0 and cons_var(E) >= 0
    assert (cons_max_diff(E) == 0) == identical
    assert (cons_var(E) == 0) == identical or cons_var(E) < 1e-300


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_one_iff_same_ordering(m, n, seed):
    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    E = np.array([np.sort(rng.random(m))[np.argsort(order)] for _ in range(n)])
    assert cons_spearman(E) == pytest.approx(1.0, abs=1e-12)
    E[1] = E[1][::-1]
    assert cons_spearman(E) < 1
